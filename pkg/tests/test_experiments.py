import json
import pickle

import numpy as np
import pytest

from wavemgt.basis import DomainSpec, SpectralField, build_basis
from wavemgt.cli import main
from wavemgt.dynamics import InitialData, initial_state, integrate
from wavemgt.errors import IntegrationBlowup, ValidationError
from wavemgt.experiments.config import load_config, parse_profile
from wavemgt.experiments.fdsolver import FDSolver, compare, initial_nodal_state
from wavemgt.experiments.output import read_csv, verify_manifest, write_csv
from wavemgt.experiments.runners import run
from wavemgt.params import ModelParams

BASE = {
    "params": {"tau": 1.0, "b": 2.0, "alpha": 0.5, "gamma": 2.5},
    "domain": {"length": float(np.pi), "n_modes": 16},
}

ENERGY_COLUMNS = ["t", "E", "kin_u", "kin_w", "kin_vt", "pot_u", "pot_w", "coupling",
                  "potentialF", "dissipated", "residual", "Q_alpha", "I_alpha", "J_alpha",
                  "Linf_u"]


def cfg(**sections):
    return {**json.loads(json.dumps(BASE)), "plots": False, **sections}


def write_cfg(tmp_path, raw, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(raw))
    return str(p)


class TestConfig:
    def test_unknown_key_rejected(self):
        raw = cfg(time={"dt": 0.01, "T": 1.0, "stride": 2})
        with pytest.raises(ValidationError, match="'stride' was unexpected"):
            load_config(raw)

    def test_param_invariants_checked(self):
        raw = cfg()
        raw["params"]["alpha"] = 1.2
        with pytest.raises(ValidationError, match="lambda_1 violated: 1.2 >= 1"):
            load_config(raw)

    def test_kind_mismatch(self):
        with pytest.raises(ValidationError, match="declares experiment"):
            load_config(cfg(experiment="spectrum"), kind="simulate")

    def test_seed_override_and_defaults(self):
        c = load_config(cfg(seed=4), kind="simulate", seed=9)
        assert c.seed == 9
        assert c.time["snapshot_stride"] == 10
        assert c["cross"]["fd_nodes"] == 257

    def test_odd_stride(self):
        with pytest.raises(ValidationError, match="even"):
            load_config(cfg(time={"snapshot_stride": 3}))

    def test_bad_json(self, tmp_path):
        p = tmp_path / "x.json"
        p.write_text("{not json")
        with pytest.raises(ValidationError, match="not valid JSON"):
            load_config(str(p))


@pytest.fixture(scope="module")
def b8():
    return build_basis(DomainSpec(np.pi, 8))


class TestProfiles:
    def test_mode(self, b8):
        np.testing.assert_array_equal(parse_profile("mode(3, 0.5)", b8), 0.5 * np.eye(8)[2])

    def test_sum_of_strings(self, b8):
        c = parse_profile(["mode(1, 1)", "mode(1, 2)", "mode(2, -1)"], b8)
        np.testing.assert_array_equal(c[:3], [3, -1, 0])

    def test_coefficient_list(self, b8):
        np.testing.assert_array_equal(parse_profile(list(range(8)), b8), np.arange(8.0))

    def test_gauss_is_projected(self, b8):
        c = parse_profile("gauss(1.5707963267948966, 0.3, 1.0)", b8)
        # symmetric about the midpoint: even modes vanish
        np.testing.assert_allclose(c[1::2], 0, atol=1e-12)
        assert c[0] > 0

    @pytest.mark.parametrize("bad", ["mode(9, 1)", "mode(1.5, 1)", "wave(1, 1)",
                                     "gauss(1, 0, 1)", "mode(a, b)", [1.0, 2.0]])
    def test_rejected(self, b8, bad):
        with pytest.raises(ValidationError):
            parse_profile(bad, b8)


class TestOutput:
    def test_csv_roundtrip(self, tmp_path):
        cols = {"t": [0.0, 0.1], "x": [1 / 3, -2e-300], "flag": [True, False]}
        write_csv(tmp_path / "a.csv", cols)
        back = read_csv(tmp_path / "a.csv")
        assert back["x"][0] == 1 / 3 and back["x"][1] == -2e-300
        assert list(back["flag"]) == [1.0, 0.0]
        assert (tmp_path / "a.csv").read_text().splitlines()[0] == "t,x,flag"

    def test_csv_lengths_checked(self, tmp_path):
        with pytest.raises(ValueError):
            write_csv(tmp_path / "a.csv", {"a": [1, 2], "b": [1]})

    def test_blowup_pickles(self):
        exc = pickle.loads(pickle.dumps(IntegrationBlowup("boom", 1.5, None)))
        assert str(exc) == "boom" and exc.time == 1.5


class TestFDSolver:
    def test_zero_data(self, params16):
        fd = FDSolver(params16, 65)
        t, Y = fd.integrate(np.zeros((5, 63)), 0.1, 0.01)
        assert not np.any(Y)

    def test_linear_closed_form(self, dom16, basis16):
        # alpha = 0, f off: u_k(t) = a cos(k t) exactly; spectral error << FD error
        p = ModelParams(tau=1.0, b=2.0, alpha=0.0, gamma=2.5, domain=dom16, source=False)
        z = np.zeros(16)
        u0 = SpectralField.mode(16, 2, 0.3).coeffs + SpectralField.mode(16, 3, 0.1).coeffs
        data = InitialData(u0, z, z, z, z)
        T, dt = 1.0, 1e-3
        spec = integrate(data, T, dt, p, basis16, snapshot_stride=100)
        fd = FDSolver(p, 129)
        ft, fY = fd.integrate(initial_nodal_state(fd, initial_state(data, p).as_array()), T, dt, 100)
        exact = np.outer(np.cos(2 * spec.t), u0 * (np.arange(1, 17) == 2)) \
            + np.outer(np.cos(3 * spec.t), u0 * (np.arange(1, 17) == 3))
        spec_err = np.max(np.abs(spec.states[:, 0, :] - exact))
        fd_err = np.max(np.abs(fd.restrict(fY[:, 0, :], 16) - exact))
        assert spec_err < 1e-10
        assert fd_err > 1e-6
        assert spec_err < 1e-3 * fd_err

    def test_misaligned_snapshots(self, params16):
        fd = FDSolver(params16, 33)
        with pytest.raises(ValidationError, match="aligned"):
            compare(np.array([0.0, 1.0]), np.zeros((2, 5, 16)), np.array([0.0, 0.5]),
                    np.zeros((2, 5, 31)), fd, 16)


class TestRunners:
    def test_simulate_zero_data(self, tmp_path):
        raw = cfg(time={"dt": 0.01, "T": 1.0, "snapshot_stride": 10}, well={"d_hat": 1.88})
        res = run(load_config(raw, kind="simulate"), tmp_path)
        assert res.passed
        e = read_csv(tmp_path / "energy.csv")
        assert list(e) == ENERGY_COLUMNS
        assert all(not np.any(v) for k, v in e.items() if k != "t")
        assert np.all(read_csv(tmp_path / "monitor.csv")["I_alpha_positive"] == 1)
        assert verify_manifest(tmp_path)

    def test_simulate_stable_data_and_rerun(self, tmp_path):
        raw = cfg(initial={"u0": "mode(1, 0.2)", "v1": "mode(1, 0.1)"},
                  time={"dt": 0.01, "T": 4.0, "snapshot_stride": 10}, well={"d_hat": 1.88},
                  plots=True)
        a, b = tmp_path / "a", tmp_path / "b"
        ra = run(load_config(raw, kind="simulate"), a)
        run(load_config(raw, kind="simulate"), b)
        assert ra.passed and ra.report["initially_stable"]
        m = read_csv(a / "monitor.csv")
        assert np.all(m["I_alpha_positive"] == 1)
        for name in ("energy.csv", "monitor.csv", "snapshots.csv", "report.json",
                     "energy.svg", "monitor.svg"):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name
        man = json.loads((a / "manifest.json").read_text())
        assert set(man["files"]) >= {"energy.csv", "monitor.csv", "report.json"}
        assert man["status"] == "passed" and man["config"] == raw

    def test_spectrum_small(self, tmp_path):
        raw = cfg(spectrum={"lambda_min": 1e4, "lambda_max": 1e8, "n_lambda": 21,
                            "exact_modes": 8})
        res = run(load_config(raw, kind="spectrum"), tmp_path)
        assert res.passed, res.checks
        assert (tmp_path / "spectrum_exact.csv").exists()

    def test_parallel_jobs_match_serial(self, tmp_path):
        raw = cfg(initial={"u0": "mode(1, 0.2)", "v1": "mode(2, 0.1)"},
                  time={"dt": 0.01, "T": 2.0, "snapshot_stride": 10},
                  dependence={"deltas": [1e-4, 1e-5, 0.0]})
        run(load_config(raw, kind="continuous-dependence"), tmp_path / "s", jobs=1)
        run(load_config(raw, kind="continuous-dependence"), tmp_path / "p", jobs=2)
        for name in ("difference_energy.csv", "report.json"):
            assert (tmp_path / "s" / name).read_bytes() == (tmp_path / "p" / name).read_bytes()
        rep = json.loads((tmp_path / "s" / "report.json").read_text())
        assert rep["runs"][-1]["trivial"] and rep["runs"][-1]["Z_max"] == 0

    def test_decay_rejects_uncoupled(self):
        raw = cfg(initial={"u0": "mode(1, 0.1)"})
        raw["params"]["alpha"] = 0.0
        with pytest.raises(ValidationError, match="0 < \\|alpha\\|"):
            run(load_config(raw, kind="decay-study"), "/nonexistent/never-created")


class TestCli:
    def test_exit_ok(self, tmp_path, capsys):
        p = write_cfg(tmp_path, cfg(time={"dt": 0.01, "T": 0.2, "snapshot_stride": 2},
                                    well={"d_hat": 1.88}))
        assert main(["simulate", "--config", p, "--out", str(tmp_path / "o")]) == 0
        assert "simulate: passed" in capsys.readouterr().out

    def test_exit_validation(self, tmp_path, capsys):
        raw = cfg()
        raw["params"]["alpha"] = 1.2
        p = write_cfg(tmp_path, raw)
        assert main(["simulate", "--config", p, "--out", str(tmp_path / "o")]) == 2
        assert "1.2 >= 1" in capsys.readouterr().err
        assert main(["decay", "--config", str(tmp_path / "missing.json"),
                     "--out", str(tmp_path / "o")]) == 2

    def test_exit_numerical(self, tmp_path):
        raw = cfg(initial={"u0": "mode(1, 8.0)"}, time={"dt": 0.01, "T": 10.0},
                  well={"d_hat": 1.0})
        raw["params"].update(alpha=0.0, gamma=4.0)
        p = write_cfg(tmp_path, raw)
        assert main(["simulate", "--config", p, "--out", str(tmp_path / "o")]) == 3
        rep = json.loads((tmp_path / "o" / "report.json").read_text())
        assert rep["status"] == "blowup" and "last_finite_state" in rep
        assert verify_manifest(tmp_path / "o")

    def test_exit_checks_failed(self, tmp_path):
        raw = cfg(initial={"u0": "mode(1, 0.2)"}, time={"dt": 0.00025, "T": 0.1,
                                                         "snapshot_stride": 40},
                  cross={"fd_nodes": 65, "tol": 1e-12, "refine": False})
        p = write_cfg(tmp_path, raw)
        assert main(["cross-validate", "--config", p, "--out", str(tmp_path / "o")]) == 4
        man = json.loads((tmp_path / "o" / "manifest.json").read_text())
        assert man["exit_code"] == 4 and man["status"] == "failed-checks"

    def test_log_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("WAVEMGT_LOG", "debug")
        p = write_cfg(tmp_path, cfg(time={"dt": 0.01, "T": 0.2, "snapshot_stride": 2},
                                    well={"d_hat": 1.88}))
        assert main(["simulate", "--config", p, "--out", str(tmp_path / "o"), "--seed", "2"]) == 0
        assert json.loads((tmp_path / "o" / "manifest.json").read_text())["seed"] == 2
