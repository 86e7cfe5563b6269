"""Experiment drivers. Each writes its files into a RunDirectory and returns a RunResult.

Pass/fail checks are listed per run in ``report["checks"]``; a run passes
when every check does. Numerical failures (blowup) are reported with the
last finite snapshots and exit code 3.
"""
from __future__ import annotations

import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from ..basis import to_physical
from ..dynamics import (
    InitialData,
    difference_energy,
    energy,
    energy_residual,
    initial_state,
    integrate,
    u_subsystem_energy,
    well_monitor,
)
from ..errors import IntegrationBlowup, ValidationError
from ..modal import decoupled_factorization_error, eigenvalue_sweep, sweep
from ..nonlinearity import (
    calibrate,
    check_absorption,
    check_field_absorption,
    sobolev_constant_bound,
)
from ..well import (
    SearchConfig,
    functionals_batch,
    local_positivity_radius,
    well_depth_lower,
    well_depth_sweep,
)
from . import plotting
from .config import RunConfig
from .fdsolver import FDSolver, compare, initial_nodal_state
from .output import RunDirectory

log = logging.getLogger(__name__)

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_ACCEPTANCE = 0, 2, 3, 4


@dataclass
class RunResult:
    kind: str
    report: dict
    exit_code: int = EXIT_OK
    files: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.exit_code == EXIT_OK

    @property
    def checks(self) -> dict:
        return self.report.get("checks", {})


def _finish(kind, rd: RunDirectory, report: dict, report_name="report.json") -> RunResult:
    checks = report.setdefault("checks", {})
    report["passed"] = bool(all(checks.values()))
    rd.json(report_name, report)
    code = EXIT_OK if report["passed"] else EXIT_ACCEPTANCE
    return RunResult(kind, report, code, list(rd.files))


def _blowup(kind, rd: RunDirectory, exc: IntegrationBlowup, extra=None) -> RunResult:
    report = {"status": "blowup", "message": str(exc), "failure_time": exc.time,
              "passed": False, **(extra or {})}
    traj = exc.records
    if traj is not None and hasattr(traj, "states") and len(traj.t):
        report["last_finite_t"] = float(traj.t[-1])
        report["last_finite_state"] = traj.states[-1]
    rd.json("report.json", report)
    return RunResult(kind, report, EXIT_NUMERICAL, list(rd.files))


def parallel_map(fn, items, jobs: int = 1):
    """Ordered map; independent items run in worker processes when jobs > 1."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as ex:
        return list(ex.map(fn, items))


# --------------------------------------------------------------------------
# shared helpers
# --------------------------------------------------------------------------

def initial_energy(data: InitialData, params, basis) -> float:
    return energy(initial_state(data, params), params, basis).total


def quick_depth(params, basis, seed=0, modes=(1, 2, 4), restarts=4) -> float:
    """Cheap upper estimate of the well depth, used when no d_hat is given."""
    ests = well_depth_sweep(params, basis, modes,
                            SearchConfig(restarts=restarts, seed=seed, maxiter=2000))
    return min(e.upper for e in ests)


def _scaled(data: InitialData, s: float) -> InitialData:
    return InitialData(*(s * f.coeffs for f in (data.u0, data.u1, data.v0, data.v1, data.v2)))


def scale_to_energy(data: InitialData, target: float, params, basis) -> InitialData:
    """Rescale ``data`` so that E(0) equals ``target`` (smallest such factor)."""
    f = lambda s: initial_energy(_scaled(data, s), params, basis) - target
    hi = 1.0
    while f(hi) < 0:
        hi *= 2.0
        if hi > 1e8:
            raise ValidationError("cannot reach the requested initial energy")
    return _scaled(data, brentq(f, 0.0, hi, xtol=1e-15, rtol=1e-13))


def random_stable_data(params, basis, rng, d_hat, fraction=(0.1, 0.8), n_active=None,
                       v_data=True, max_tries=50) -> InitialData:
    """Random smooth data with I_alpha(0) > 0 and E(0) = fraction * d_hat.

    Coefficients decay like 1/k^2 on the first ``n_active`` modes; the
    fraction is drawn uniformly from the given interval.
    """
    N = basis.n_modes
    K = min(n_active or N, N)
    k = np.arange(1, N + 1, dtype=float)
    mask = (k <= K).astype(float)
    for _ in range(max_tries):
        c = [rng.standard_normal(N) * mask / k**2 for _ in range(5)]
        if not v_data:
            c[2:] = [np.zeros(N)] * 3
        data = scale_to_energy(InitialData(*c), rng.uniform(*fraction) * d_hat, params, basis)
        fn = functionals_batch(data.u0.coeffs[None], data.v0.coeffs[None] + params.tau
                               * data.v1.coeffs[None], params, basis)
        if fn["I"][0] > 0 and initial_energy(data, params, basis) < d_hat:
            return data
    raise ValidationError("could not draw stable-set data; lower the energy fraction")


def _steps(T, dt):
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * T or n % 2:
        raise ValidationError(f"T/dt must be an even integer: T={T}, dt={dt}")
    return n


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------

def simulate_columns(traj, params, basis, d_hat):
    """The energy CSV contract and the monitor CSV columns for one trajectory."""
    mon = well_monitor(traj, params, basis, d_hat)
    e = traj.energy
    U = traj.states[:, 0, :]
    linf = np.max(np.abs(to_physical(U, basis)), axis=1) if len(U) else np.zeros(0)
    energy_cols = {
        "t": traj.t, "E": e["total"], "kin_u": e["kin_u"], "kin_w": e["kin_w"],
        "kin_vt": e["kin_vt"], "pot_u": e["pot_u"], "pot_w": e["pot_w"],
        "coupling": e["coupling"], "potentialF": e["potentialF"],
        "dissipated": e["dissipated"], "residual": energy_residual(traj),
        "Q_alpha": mon.Q, "I_alpha": mon.I, "J_alpha": mon.J, "Linf_u": linf,
    }
    # the origin belongs to the stable set, so it counts as I_alpha_positive
    monitor_cols = {
        "t": traj.t,
        "I_alpha": mon.I,
        "J_alpha": mon.J,
        "I_alpha_positive": (mon.I > 0) | mon.origin,
        "J_below_d_hat": mon.J < d_hat,
        "uniform_quantity": mon.uniform_quantity,
        "uniform_bound": np.full(traj.t.size, mon.uniform_bound),
    }
    return energy_cols, monitor_cols, mon


def run_simulate(cfg: RunConfig, rd: RunDirectory, jobs: int = 1) -> RunResult:
    P, B, tm = cfg.params, cfg.basis, cfg.time
    d_hat = cfg["well"].get("d_hat")
    d_source = "config"
    if d_hat is None:
        d_hat, d_source = quick_depth(P, B, cfg.seed), "quick-search"
    try:
        traj = integrate(cfg.initial, tm["T"], tm["dt"], P, B,
                         snapshot_stride=tm["snapshot_stride"])
    except IntegrationBlowup as exc:
        if exc.records is not None:
            ecols, mcols, _ = simulate_columns(exc.records, P, B, d_hat)
            rd.csv("energy.csv", ecols)
            rd.csv("monitor.csv", mcols)
        return _blowup("simulate", rd, exc)
    ecols, mcols, mon = simulate_columns(traj, P, B, d_hat)
    rd.csv("energy.csv", ecols)
    rd.csv("monitor.csv", mcols)
    snap = {"t": traj.t}
    for i, name in enumerate(("u", "p", "w", "m", "q")):
        for k in range(B.n_modes):
            snap[f"{name}_{k + 1}"] = traj.states[:, i, k]
    rd.csv("snapshots.csv", snap)

    dE = np.diff(ecols["E"])
    checks = {"energy_nonincreasing": bool(np.all(dE <= 1e-9))}
    if mon.initially_stable:
        checks["I_alpha_positive"] = bool(np.all(mcols["I_alpha_positive"]))
        checks["uniform_bound"] = mon.uniform_ok
    report = {
        "d_hat": d_hat, "d_hat_source": d_source,
        "E0": float(ecols["E"][0]), "E_T": float(ecols["E"][-1]),
        "dissipated_T": float(ecols["dissipated"][-1]),
        "max_residual": float(np.max(np.abs(ecols["residual"]))),
        "max_energy_increase": float(max(dE.max(), 0.0)) if dE.size else 0.0,
        "initially_stable": mon.initially_stable,
        "first_I_nonpositive": mon.first_I_nonpositive,
        "first_J_above_d_hat": mon.first_J_above,
        "uniform_bound": mon.uniform_bound,
        "max_uniform_quantity": float(np.max(mon.uniform_quantity)),
        "note": mon.note,
        "checks": checks,
    }
    if cfg.plots:
        plotting.energy_figure(rd.file("energy.svg"), traj.t, ecols["E"],
                               ecols["dissipated"], ecols["residual"])
        plotting.monitor_figure(rd.file("monitor.svg"), traj.t, mon.I, mon.J, d_hat)
    return _finish("simulate", rd, report)


# --------------------------------------------------------------------------
# energy audit
# --------------------------------------------------------------------------

def _audit_level(args):
    data, T, dt, params, stride = args
    traj = integrate(data, T, dt, params, snapshot_stride=stride)
    return {"dt": dt, "max_residual": float(np.max(np.abs(energy_residual(traj)))),
            "dissipated_T": float(traj.energy["dissipated"][-1]),
            "max_energy_increase": float(max(np.max(np.diff(traj.energy["total"])), 0.0)),
            "t": traj.t, "residual": energy_residual(traj)}


def run_energy_audit(cfg: RunConfig, rd: RunDirectory, jobs: int = 1) -> RunResult:
    P, tm, au = cfg.params, cfg.time, cfg["audit"]
    levels = int(au["levels"])
    if levels < 2:
        raise ValidationError("audit.levels >= 2 required to fit an order")
    dts = [tm["dt"] / 2**i for i in range(levels)]
    for dt in dts:
        _steps(tm["T"], dt)
    args = [(cfg.initial, tm["T"], dt, P, tm["snapshot_stride"] * 2**i)
            for i, dt in enumerate(dts)]
    try:
        res = parallel_map(_audit_level, args, jobs)
    except IntegrationBlowup as exc:
        return _blowup("energy-audit", rd, exc, {"dts": dts})
    r = np.array([x["max_residual"] for x in res])
    tiny = np.maximum(r, 1e-300)
    pair_orders = np.log2(tiny[:-1] / tiny[1:])
    fitted = float(np.polyfit(np.log(dts), np.log(tiny), 1)[0])
    at_floor = bool(np.all(r <= au["floor"]))
    checks = {"order_or_floor": bool(fitted >= au["min_order"] or at_floor)}
    if cfg.initial.has_v_data() or (P.alpha != 0 and np.any(cfg.initial.u0.coeffs)):
        checks["dissipated_positive"] = bool(all(x["dissipated_T"] > 0 for x in res))
    rd.csv("audit.csv", {"dt": dts, "max_residual": r,
                         "dissipated_T": [x["dissipated_T"] for x in res],
                         "max_energy_increase": [x["max_energy_increase"] for x in res]})
    report = {
        "dts": dts, "max_residual": r, "pair_orders": pair_orders, "fitted_order": fitted,
        "min_order": au["min_order"], "floor": au["floor"], "at_floor": at_floor,
        "dissipated_T": [x["dissipated_T"] for x in res], "checks": checks,
    }
    if cfg.plots:
        plotting.series_figure(rd.file("residual.svg"), res[0]["t"],
                               {f"dt={x['dt']:.3g}": np.abs(x["residual"]) + 1e-300
                                for x in res}, logy=True)
    return _finish("energy-audit", rd, report)


# --------------------------------------------------------------------------
# spectrum
# --------------------------------------------------------------------------

SPECTRUM_TOL = {"re_slope": 0.05, "im_slope": 0.05, "prefactor_rel": 0.02,
                "residual": 1e-6, "factorization": 1e-9}


def run_spectrum(cfg: RunConfig, rd: RunDirectory, jobs: int = 1) -> RunResult:
    P, sp = cfg.params, cfg["spectrum"]
    if P.alpha == 0:
        raise ValidationError("spectrum sweep needs alpha != 0 for the wave-branch law")
    lams = np.geomspace(sp["lambda_min"], sp["lambda_max"], int(sp["n_lambda"]))
    near_resonant = P.b - P.tau < 1e-2 * P.tau
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = sweep(lams, P)
    table = res.table()
    rd.csv("spectrum.csv", {k: [row[k] for row in table] for k in table[0]})
    fit = dict(res.fit)
    fit["factorization_error"] = decoupled_factorization_error(lams, P)
    tol = SPECTRUM_TOL
    if fit["n_fit"] >= 2:
        checks = {
            "re_slope": abs(fit["re_slope"] + 2) <= tol["re_slope"],
            "im_slope": abs(fit["im_slope"] + 1.5) <= tol["im_slope"],
            "re_prefactor": abs(fit["re_prefactor"] / fit["re_prefactor_predicted"] - 1)
            <= tol["prefactor_rel"],
            "residuals": fit["max_residual"] <= tol["residual"],
            "factorization": fit["factorization_error"] <= tol["factorization"],
        }
    else:
        checks = {"enough_fit_points": False}
    report = {"fit": fit, "tolerances": tol, "all_roots_stable_observed": fit["all_stable"],
              "note": "root stability is an observation over the sweep, not a claim"}
    if near_resonant:
        report["warning"] = "b is close to tau: expansion not uniform, acceptance not applied"
        checks = {}
    report["checks"] = checks
    if sp.get("exact_modes"):
        ex = eigenvalue_sweep(P.domain, P, int(sp["exact_modes"])).table()
        rd.csv("spectrum_exact.csv", {k: [row[k] for row in ex] for k in ex[0]})
    if cfg.plots:
        col = lambda k: np.array([row[k] for row in table])
        plotting.spectrum_figure(rd.file("spectrum.svg"), col("lambda"), col("re_wave"),
                                 col("re_pred"), col("im_defect"), col("im_pred"))
    return _finish("spectrum", rd, report)


# --------------------------------------------------------------------------
# well depth
# --------------------------------------------------------------------------

def _best_constants(params, basis, eta, ratio, eps=None, n_eps=24):
    """Calibrated constants maximizing the depth radius over an eps scan.

    ``ratio`` is the smallness bound on eps / (lambda_1 c_alpha).
    """
    C_S = sobolev_constant_bound(params.gamma + eta, basis)
    cap = ratio * params.lambda1 * params.c_alpha
    grid = [eps] if eps is not None else list(np.geomspace(cap * 1e-3, cap, n_eps))
    best = None
    for e in grid:
        if e > cap * (1 + 1e-12):
            raise ValidationError(
                f"eps/(lambda_1 c_alpha) <= {ratio:g} violated ({e / (cap / ratio):.4g}); "
                f"use eps <= {cap:.4g}")
        c = calibrate(float(e), eta, params.gamma, C_S_eta=C_S)
        r = local_positivity_radius(c, params) if ratio <= 0.25 else well_depth_lower(c, params)
        if best is None or r > best[1]:
            best = (c, r)
    return best[0]


def _rho_samples(params, basis, rho0, n, rng, K=8):
    """n in-ball points with Q <= rho0 and the out-of-ball ray scan."""
    N = basis.n_modes
    K = min(K, N)
    lam = basis.eigenvalues
    k = np.arange(1, N + 1, dtype=float)
    U = np.zeros((n, N))
    W = np.zeros((n, N))
    U[:, :K] = rng.standard_normal((n, K)) / k[:K]
    W[:, :K] = rng.standard_normal((n, K)) / k[:K]
    Q1 = (U * U) @ lam + (W * W) @ lam + 2 * params.alpha * np.sum(U * W, 1)
    target = rho0 * rng.uniform(0.0, 1.0, n)
    s = np.sqrt(target / Q1)[:, None]
    U, W = U * s, W * s
    fn = functionals_batch(U, W, params, basis)
    in_ok = fn["I"] >= 0.25 * fn["Q"] - 1e-10 * np.maximum(fn["Q"], 1e-300)
    # out of the ball: walk each direction outward until I < Q/4
    scales = np.geomspace(1.0, 1e16, 161)[1:]
    witness = None
    for i in range(n):
        d = U[i] / np.sqrt(target[i] / rho0), W[i] / np.sqrt(target[i] / rho0)
        Us, Ws = np.outer(np.sqrt(scales), d[0]), np.outer(np.sqrt(scales), d[1])
        f = functionals_batch(Us, Ws, params, basis)
        bad = np.flatnonzero(f["I"] < 0.25 * f["Q"])
        if bad.size:
            j = bad[0]
            witness = {"Q": float(f["Q"][j]), "I": float(f["I"][j]), "Q_over_rho0": float(scales[j])}
            break
    return U, W, fn, in_ok, witness


def run_welldepth(cfg: RunConfig, rd: RunDirectory, jobs: int = 1) -> RunResult:
    P, B, we = cfg.params, cfg.basis, cfg["well"]
    modes = sorted(set(int(k) for k in we["modes"]))
    search = SearchConfig(restarts=int(we["restarts"]), seed=cfg.seed)
    t0 = time.perf_counter()
    ests = well_depth_sweep(P, B, modes, search)
    uppers = [e.upper for e in ests]
    monotone = all(b <= a + 1e-6 for a, b in zip(uppers, uppers[1:]))
    eta = float(we["eta"])
    eps = we.get("eps")
    c_low = _best_constants(P, B, eta, 0.5, eps)
    lower = well_depth_lower(c_low, P)
    c_rho = _best_constants(P, B, eta, 0.25, None if eps is None else min(
        eps, 0.25 * P.lambda1 * P.c_alpha))
    rho0 = local_positivity_radius(c_rho, P)

    scan = np.logspace(-8, 3, 100_000)
    absorption = {}
    for name, c in (("lower", c_low), ("rho0", c_rho)):
        pt = check_absorption(scan, P.gamma, c)
        absorption[name] = {"eps": c.eps, "eta": c.eta, "C_eps": c.C_eps, "C_S_eta": c.C_S_eta,
                            "delta": c.delta, **pt.as_dict()}

    rng = np.random.default_rng(cfg.seed)
    U, W, fn, in_ok, witness = _rho_samples(P, B, rho0, int(we["rho_samples"]), rng)
    wit = np.zeros((min(5, len(ests[-1].witnesses)), B.n_modes))
    for row, w in zip(wit, ests[-1].witnesses):
        row[:len(w["phi"])] = w["lam"] * np.asarray(w["phi"])
    field_rep = check_field_absorption(list(U) + list(wit), P.gamma, c_low, B)
    best = ests[-1]
    upper = min(uppers)
    rows = {"K": modes, "upper": uppers, "n_witnesses": [len(e.witnesses) for e in ests],
            "discarded": [e.discarded for e in ests]}
    rd.csv("well_depth.csv", rows)
    checks = {
        "lower_positive": lower > 0,
        "lower_le_upper": lower <= upper,
        "K_monotone": monotone,
        "rho0_in_ball": bool(np.all(in_ok)),
        "rho0_out_of_ball_violation": witness is not None,
        "absorption_scan": all(a["passed"] for a in absorption.values()),
        "absorption_fields": field_rep.passed,
    }
    report = {
        "upper": upper, "lower": lower, "rho0": rho0,
        "K_table": [{"K": K, "upper": u} for K, u in zip(modes, uppers)],
        "witnesses": best.as_dict()["witnesses"][:5],
        "absorption": absorption, "field_absorption": field_rep.as_dict(),
        "rho0_samples": {"n": int(in_ok.size), "min_I_minus_quarter_Q":
                         float(np.min(fn["I"] - 0.25 * fn["Q"])),
                         "out_of_ball_witness": witness},
        "search": {"restarts": search.restarts, "seed": search.seed},
        "checks": checks,
    }
    log.info("well depth: upper %.6g lower %.3g rho0 %.3g (%.1fs)", upper, lower, rho0,
             time.perf_counter() - t0)
    if cfg.plots:
        plotting.xy_figure(rd.file("well_depth.svg"), {"upper": (modes, uppers)}, "K",
                           "upper estimate", logx=True)
    return _finish("well-depth", rd, report)


# --------------------------------------------------------------------------
# decay study
# --------------------------------------------------------------------------

def _window_rates(t, E, window):
    """Least-squares slope of log E over consecutive windows of length ``window``."""
    out = []
    start = 0.0
    while start + window <= t[-1] + 1e-9:
        m = (t >= start - 1e-12) & (t <= start + window + 1e-12) & (E > 0)
        if m.sum() >= 2:
            out.append({"t0": start, "t1": start + window,
                        "rate": float(np.polyfit(t[m], np.log(E[m]), 1)[0])})
        start += window
    return out


def _decay_run(args):
    data, T, dt, params, stride = args
    tr = integrate(data, T, dt, params, snapshot_stride=stride)
    return {"t": tr.t, "E": tr.energy["total"], "E_u": u_subsystem_energy(tr),
            "dissipated": tr.energy["dissipated"]}


def decay_horizon(cfg: RunConfig) -> float:
    """decay.T, or 200 periods of the first mode rounded to whole step pairs."""
    dt = cfg.time["dt"]
    T = cfg["decay"].get("T")
    if T is None:
        T = 200 * 2 * math.pi / math.sqrt(cfg.params.lambda1)
    return 2 * dt * max(1, round(T / (2 * dt)))


def run_decay_study(cfg: RunConfig, rd: RunDirectory, jobs: int = 1) -> RunResult:
    P, B, de, tm = cfg.params, cfg.basis, cfg["decay"], cfg.time
    if P.alpha == 0:
        raise ValidationError("decay study requires 0 < |alpha| < lambda_1 "
                              "(conditional decay hypothesis); alpha = 0 given")
    T, dt = decay_horizon(cfg), tm["dt"]
    stride = tm["snapshot_stride"]
    k_hi = int(de["high_mode"])
    if not 2 <= k_hi <= B.n_modes:
        raise ValidationError(f"decay.high_mode must lie in 2..{B.n_modes}")
    d_hat = cfg["well"].get("d_hat") or quick_depth(P, B, cfg.seed)
    E0 = initial_energy(cfg.initial, P, B)
    fn0 = functionals_batch(cfg.initial.u0.coeffs[None],
                            (cfg.initial.v0.coeffs + P.tau * cfg.initial.v1.coeffs)[None], P, B)
    stable0 = bool(fn0["I"][0] > 0 and E0 < d_hat)
    if not stable0:
        raise ValidationError(f"decay study needs stable-set data: I(0)={fn0['I'][0]:.4g}, "
                              f"E(0)={E0:.4g}, d_hat={d_hat:.4g}")

    def mode_data(k):
        c = np.zeros(B.n_modes)
        c[k - 1] = 1.0
        z = np.zeros(B.n_modes)
        return scale_to_energy(InitialData(c, z, z, z, z), de["energy"], P, B)

    d1, dk = mode_data(1), mode_data(k_hi)
    control = P.with_(alpha=0.0)
    jobs_args = [(cfg.initial, T, dt, P, stride), (d1, T, dt, P, stride),
                 (dk, T, dt, P, stride), (d1, T, dt, control, stride)]
    try:
        main, r1, rk, ctl = parallel_map(_decay_run, jobs_args, jobs)
    except IntegrationBlowup as exc:
        return _blowup("decay-study", rd, exc)
    ratio = lambda r: float(r["E"][-1] / r["E"][0]) if r["E"][0] != 0 else float("nan")
    ctl_ratio = float(ctl["E_u"][-1] / ctl["E_u"][0])
    ctl_tol = float(de.get("control_tol", 1e-5))
    rd.csv("decay.csv", {"t": main["t"], "E": main["E"], "E_mode1": r1["E"],
                         f"E_mode{k_hi}": rk["E"], "E_u_control": ctl["E_u"]})
    window = float(de["window"])
    checks = {
        "energy_decreased": ratio(main) < 1,
        "high_mode_slower": ratio(rk) > ratio(r1),
        "control_no_u_decay": abs(ctl_ratio - 1) <= ctl_tol,
    }
    report = {
        "T": T, "dt": dt, "d_hat": d_hat,
        "E_ratio": ratio(main),
        "equal_energy": de["energy"],
        "E_ratio_mode1": ratio(r1), f"E_ratio_mode{k_hi}": ratio(rk),
        "control_u_energy_ratio": ctl_ratio, "control_tol": ctl_tol,
        "window_rates": {"main": _window_rates(main["t"], main["E"], window),
                         "mode1": _window_rates(r1["t"], r1["E"], window),
                         f"mode{k_hi}": _window_rates(rk["t"], rk["E"], window)},
        "note": "qualitative: sign and ordering checks only, no uniform rate is claimed",
        "checks": checks,
    }
    if cfg.plots:
        plotting.series_figure(rd.file("decay.svg"), main["t"],
                               {"E (config data)": main["E"], "E mode 1": r1["E"],
                                f"E mode {k_hi}": rk["E"]}, logy=True)
    return _finish("decay-study", rd, report)


# --------------------------------------------------------------------------
# continuous dependence
# --------------------------------------------------------------------------

def _dependence_run(args):
    data, T, dt, params, stride = args
    tr = integrate(data, T, dt, params, snapshot_stride=stride)
    return tr.t, tr.states


def gronwall_fit(t, Z):
    """Empirical constants of Z(t) <= K exp(C t) Z(0).

    C_sup = sup_{t>0} log(Z/Z0)/t (envelope 1 by construction); the fitted
    C is the least-squares slope of log(Z/Z0) and K the smallest envelope
    valid with it.
    """
    r = Z / Z[0]
    m = t > 0
    C_sup = float(np.max(np.log(r[m]) / t[m]))
    C_fit, _ = np.polyfit(t, np.log(r), 1)
    K = float(np.max(r * np.exp(-C_fit * t)))
    return {"C": C_sup, "C_fit": float(C_fit), "envelope": K}


def run_continuous_dependence(cfg: RunConfig, rd: RunDirectory, jobs: int = 1) -> RunResult:
    P, B, dep, tm = cfg.params, cfg.basis, cfg["dependence"], cfg.time
    N = B.n_modes
    direction = dep.get("direction")
    if direction is None:
        rng = np.random.default_rng(cfg.seed)
        k = np.arange(1, N + 1, dtype=float)
        direction = InitialData(*(rng.standard_normal(N) / k**2 for _ in range(5)))
    base = cfg.initial
    deltas = [float(d) for d in dep["deltas"]]
    datas = [base] + [InitialData(*(getattr(base, f).coeffs + d * getattr(direction, f).coeffs
                                     for f in ("u0", "u1", "v0", "v1", "v2"))) for d in deltas]
    args = [(d, tm["T"], tm["dt"], P, tm["snapshot_stride"]) for d in datas]
    try:
        runs = parallel_map(_dependence_run, args, jobs)
    except IntegrationBlowup as exc:
        return _blowup("continuous-dependence", rd, exc)
    t, Y0 = runs[0]
    cols = {"t": t}
    per = []
    equiv_ok = True
    env_max = float(dep.get("envelope_max", 10.0))
    for d, (_, Y) in zip(deltas, runs[1:]):
        de = difference_energy(Y, Y0, P, B)
        Z = de["Z"]
        scale = np.maximum(de["upper"], 1e-300)
        equiv = bool(np.all(de["lower"] <= Z + 1e-12 * scale)
                     and np.all(Z <= de["upper"] + 1e-12 * scale))
        equiv_ok &= equiv
        cols[f"Z_delta_{d:g}"] = Z
        if Z[0] == 0:
            per.append({"delta": d, "trivial": True, "Z_max": float(np.max(Z)),
                        "equivalence": equiv})
            continue
        per.append({"delta": d, "trivial": False, "Z0": float(Z[0]), **gronwall_fit(t, Z),
                    "equivalence": equiv})
    rd.csv("difference_energy.csv", cols)
    live = [p for p in per if not p["trivial"]]
    Cs = [p["C"] for p in live]
    spread = (float((max(Cs) - min(Cs)) / max(abs(c) for c in Cs))
              if len(Cs) >= 2 and max(abs(c) for c in Cs) > 0 else 0.0)
    checks = {
        "trivial_zero": all(p["Z_max"] == 0 for p in per if p["trivial"]),
        "envelope": all(p["envelope"] <= env_max for p in live),
        "C_stable": spread <= float(dep["spread"]),
        "equivalence": equiv_ok,
    }
    report = {"runs": per, "C_spread": spread, "spread_tol": dep["spread"],
              "envelope_max": env_max, "checks": checks}
    if cfg.plots and live:
        plotting.series_figure(rd.file("difference_energy.svg"), t,
                               {k: v / v[0] for k, v in cols.items()
                                if k != "t" and v[0] > 0}, logy=True)
    return _finish("continuous-dependence", rd, report)


# --------------------------------------------------------------------------
# cross validation
# --------------------------------------------------------------------------

def _cross_pair(args):
    """Spectral and FD trajectories at one (nodes, dt) level, aligned in time."""
    data, params, basis, nodes, dt, T, stride = args
    spec = integrate(data, T, dt, params, basis, snapshot_stride=stride)
    fd = FDSolver(params, nodes)
    Y0 = initial_nodal_state(fd, initial_state(data, params).as_array())
    ft, fY = fd.integrate(Y0, T, dt, stride)
    return {"nodes": nodes, "dt": dt, **compare(spec.t, spec.states, ft, fY, fd, basis.n_modes)}


def run_cross_validate(cfg: RunConfig, rd: RunDirectory, jobs: int = 1) -> RunResult:
    P, B, cr, tm = cfg.params, cfg.basis, cfg["cross"], cfg.time
    nodes = int(cr["fd_nodes"])
    if B.n_modes > 32:
        raise ValidationError(f"cross-validation expects N <= 32, got {B.n_modes}")
    levels = [(nodes, tm["dt"], tm["snapshot_stride"])]
    if cr["refine"]:
        levels.append((2 * (nodes - 1) + 1, tm["dt"] / 2, 2 * tm["snapshot_stride"]))
    if any(n > 513 for n, _, _ in levels):
        raise ValidationError(f"cross-validation grid limited to 513 nodes, "
                              f"requested {[n for n, _, _ in levels]}")
    for n, dt, _ in levels:
        _steps(tm["T"], dt)
        ceil = FDSolver(P, n).stability_ceiling()
        if dt > ceil:
            raise ValidationError(f"dt <= FD stability ceiling violated: {dt:g} > {ceil:g}")
    args = [(cfg.initial, P, B, n, dt, tm["T"], s) for n, dt, s in levels]
    try:
        res = parallel_map(_cross_pair, args, jobs)
    except IntegrationBlowup as exc:
        return _blowup("cross-validate", rd, exc)
    disc = [max(r["u"], r["w"]) for r in res]
    rd.csv("cross.csv", {"fd_nodes": [r["nodes"] for r in res], "dt": [r["dt"] for r in res],
                         "disc_u": [r["u"] for r in res], "disc_w": [r["w"] for r in res]})
    tol = float(cr["tol"])
    band = cr.get("order_band", [1.5, 2.5])
    checks = {"agreement": disc[0] <= tol}
    report = {"levels": res, "tol": tol, "discrepancy": disc[0],
              "tol_basis": f"max-over-time L2, N={B.n_modes}, {nodes} nodes, dt={tm['dt']:g}"}
    if len(res) > 1:
        if disc[0] == 0:
            order = float("nan")
            checks["refinement_order"] = disc[1] == 0
        else:
            order = float(np.log2(disc[0] / max(disc[1], 1e-300)))
            checks["refinement_order"] = band[0] <= order <= band[1]
        report["orders"] = {k: (float(np.log2(res[0][k] / res[1][k])) if res[1][k] > 0
                                else float("nan")) for k in ("u", "w")}
        report["refinement_order"] = order
        report["order_band"] = band
    report["checks"] = checks
    return _finish("cross-validate", rd, report)


RUNNERS = {
    "simulate": run_simulate,
    "energy-audit": run_energy_audit,
    "spectrum": run_spectrum,
    "well-depth": run_welldepth,
    "decay-study": run_decay_study,
    "continuous-dependence": run_continuous_dependence,
    "cross-validate": run_cross_validate,
}


def run(cfg: RunConfig, out, jobs: int = 1) -> RunResult:
    """Run ``cfg`` into the directory ``out`` and write the manifest."""
    rd = RunDirectory(out, cfg.raw, cfg.kind, cfg.seed)
    try:
        result = RUNNERS[cfg.kind](cfg, rd, jobs)
    except ValidationError as exc:
        rd.finish("validation-error", EXIT_VALIDATION, str(exc))
        raise
    status = {EXIT_OK: "passed", EXIT_ACCEPTANCE: "failed-checks",
              EXIT_NUMERICAL: "numerical-failure"}[result.exit_code]
    rd.finish(status, result.exit_code)
    return result
