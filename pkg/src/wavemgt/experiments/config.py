"""JSON run configuration: schema validation, defaults, initial profiles."""
from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from ..basis import Basis, DomainSpec, build_basis, from_physical
from ..dynamics import InitialData
from ..errors import ValidationError
from ..params import ModelParams

KINDS = ("simulate", "spectrum", "well-depth", "energy-audit", "cross-validate",
         "decay-study", "continuous-dependence")

DEFAULTS = {
    "time": {"dt": 1e-3, "T": 10.0, "snapshot_stride": 10},
    "well": {"modes": [1, 2, 4, 8], "restarts": 50, "eta": 0.5, "rho_samples": 100},
    "spectrum": {"lambda_min": 1e4, "lambda_max": 1e8, "n_lambda": 41},
    "audit": {"levels": 3, "min_order": 3.5, "floor": 1e-10},
    "decay": {"high_mode": 8, "energy": 0.01, "window": 20.0, "control_tol": 1e-5},
    "dependence": {"deltas": [1e-4, 1e-5], "spread": 0.2, "envelope_max": 10.0},
    "cross": {"fd_nodes": 257, "tol": 1e-3, "refine": True, "order_band": [1.5, 2.5]},
}


def load_schema() -> dict:
    text = resources.files(__package__).joinpath("config.schema.json").read_text()
    return json.loads(text)


@dataclass
class RunConfig:
    raw: dict
    kind: str | None
    params: ModelParams
    basis: Basis
    initial: InitialData
    seed: int
    plots: bool
    sections: dict = field(default_factory=dict)

    def __getitem__(self, section):
        return self.sections[section]

    @property
    def time(self):
        return self.sections["time"]


_CALL = re.compile(r"^\s*(mode|gauss)\s*\(([^)]*)\)\s*$")


def parse_profile(spec, basis: Basis) -> np.ndarray:
    """Coefficients for a profile string, coefficient list, list of strings, or None."""
    N = basis.n_modes
    if spec is None:
        return np.zeros(N)
    if isinstance(spec, str):
        m = _CALL.match(spec)
        if not m:
            raise ValidationError(f"unrecognized profile {spec!r}")
        try:
            args = [float(a) for a in m.group(2).split(",")]
        except ValueError:
            raise ValidationError(f"non-numeric profile arguments in {spec!r}") from None
        if m.group(1) == "mode":
            if len(args) != 2 or args[0] != int(args[0]):
                raise ValidationError(f"mode(k, amp) expects an integer k: {spec!r}")
            k = int(args[0])
            if not 1 <= k <= N:
                raise ValidationError(f"mode index {k} outside 1..{N}")
            c = np.zeros(N)
            c[k - 1] = args[1]
            return c
        if len(args) != 3 or args[1] <= 0:
            raise ValidationError(f"gauss(center, width, amp) expects width > 0: {spec!r}")
        return _project_gauss(*args, basis=basis)
    if isinstance(spec, list) and all(isinstance(s, str) for s in spec):
        return sum((parse_profile(s, basis) for s in spec), np.zeros(N))
    c = np.asarray(spec, dtype=float)
    if c.shape != (N,):
        raise ValidationError(f"coefficient list has {c.size} entries, expected {N}")
    return c


def _project_gauss(center, width, amp, basis: Basis) -> np.ndarray:
    fine = build_basis(DomainSpec(basis.domain.length, basis.n_modes,
                                  max(16 * basis.n_modes, 512)))
    x = fine.nodes
    return from_physical(amp * np.exp(-(((x - center) / width) ** 2)), fine).coeffs


def parse_initial(section, basis) -> InitialData:
    section = section or {}
    return InitialData(*(parse_profile(section.get(k), basis) for k in ("u0", "u1", "v0", "v1", "v2")))


def load_config(source, kind: str | None = None, seed: int | None = None) -> RunConfig:
    """Validate a config (path, JSON text or dict) and build the run objects.

    Every invariant is checked here, before any computation starts.
    """
    if isinstance(source, dict):
        raw = copy.deepcopy(source)
    else:
        p = Path(source)
        try:
            raw = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from None
        except OSError as exc:
            raise ValidationError(f"cannot read config: {exc}") from None
    try:
        jsonschema.validate(raw, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(x) for x in exc.absolute_path) or "<root>"
        raise ValidationError(f"config invalid at {where}: {exc.message}") from None

    declared = raw.get("experiment")
    if kind is not None and declared is not None and declared != kind:
        raise ValidationError(f"config declares experiment {declared!r}, command runs {kind!r}")
    kind = kind or declared

    d = raw["domain"]
    domain = DomainSpec(float(d["length"]), int(d["n_modes"]), d.get("n_grid"))
    pr = raw["params"]
    params = ModelParams(tau=float(pr["tau"]), b=float(pr["b"]), alpha=float(pr["alpha"]),
                         gamma=float(pr["gamma"]), domain=domain, dim=pr.get("dim"),
                         source=pr.get("source", True))
    basis = build_basis(domain)
    initial = parse_initial(raw.get("initial"), basis)

    sections = {}
    for name, defaults in DEFAULTS.items():
        sections[name] = {**defaults, **raw.get(name, {})}
    if "direction" in raw.get("dependence", {}):
        sections["dependence"]["direction"] = parse_initial(raw["dependence"]["direction"], basis)

    t = sections["time"]
    if not (t["dt"] > 0 and t["T"] > 0):
        raise ValidationError(f"dt > 0 and T > 0 required: dt={t['dt']}, T={t['T']}")
    if t["snapshot_stride"] < 2 or t["snapshot_stride"] % 2:
        raise ValidationError(f"snapshot_stride must be even and >= 2: {t['snapshot_stride']}")
    sp = sections["spectrum"]
    if not 1 <= sp["lambda_min"] < sp["lambda_max"] <= 1e8:
        raise ValidationError("spectrum range must satisfy 1 <= lambda_min < lambda_max <= 1e8")
    if any(k < 1 for k in sections["well"]["modes"]):
        raise ValidationError("well.modes entries must be >= 1")
    if any(dl < 0 for dl in sections["dependence"]["deltas"]):
        raise ValidationError("dependence.deltas must be >= 0")

    return RunConfig(raw=raw, kind=kind, params=params, basis=basis, initial=initial,
                     seed=int(seed if seed is not None else raw.get("seed", 0)),
                     plots=bool(raw.get("plots", True)), sections=sections)
