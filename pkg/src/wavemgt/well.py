"""Coupled potential-well functionals and well-depth estimates.

For a configuration pair (u, w):

    Q = |grad u|^2 + |grad w|^2 + 2 alpha (u, w)
    I = Q - int |u|^g ln|u|
    J = Q/2 - (1/g) int |u|^g ln|u| + (1/g^2) |u|_g^g

The Nehari set is {I = 0} minus the origin and the well depth d is the
infimum of J there. Along a ray (lam phi, lam psi) with Q(phi, psi) = Q0,

    I(lam) = lam^2 Q0 - lam^g (A ln lam + B),   A = |phi|_g^g,
                                                B = int |phi|^g ln|phi|,

which is what ``ray_scale_root`` solves.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .basis import Basis, SpectralField, coeffs_of, to_physical
from .errors import ValidationError
from .nonlinearity import AbsorptionConstants
from .params import ModelParams

log = logging.getLogger(__name__)

STABLE = "stable-interior"
ORIGIN = "origin"
NEHARI = "nehari-boundary"
OUTSIDE = "outside"


@dataclass(frozen=True)
class WellFunctionals:
    Q: float
    I: float
    J: float
    lgamma_term: float
    gamma_norm: float


def _log_integrals(u_coeffs, gamma, basis):
    """(int |u|^g ln|u|, int |u|^g) for one or many coefficient rows."""
    u = np.abs(to_physical(u_coeffs, basis))
    nz = u >= 1e-300
    ug = np.where(nz, u, 0.0) ** gamma
    lg = ug * np.log(np.where(nz, u, 1.0))
    return lg @ basis.weights, ug @ basis.weights


def functionals(u, w, params: ModelParams, basis: Basis) -> WellFunctionals:
    cu, cw = coeffs_of(u), coeffs_of(w)
    lam = basis.eigenvalues
    Q = float(lam @ (cu * cu) + lam @ (cw * cw) + 2 * params.alpha * (cu @ cw))
    lg, gn = _log_integrals(cu, params.gamma, basis)
    g = params.gamma
    return WellFunctionals(Q=Q, I=Q - lg, J=0.5 * Q - lg / g + gn / g**2,
                           lgamma_term=float(lg), gamma_norm=float(gn))


def functionals_batch(U, W, params: ModelParams, basis: Basis) -> dict:
    """Vectorized ``functionals`` over rows of coefficient arrays."""
    U, W = np.atleast_2d(U), np.atleast_2d(W)
    lam = basis.eigenvalues
    Q = (U * U) @ lam + (W * W) @ lam + 2 * params.alpha * np.einsum("ij,ij->i", U, W)
    lg, gn = _log_integrals(U, params.gamma, basis)
    g = params.gamma
    return {"Q": Q, "I": Q - lg, "J": 0.5 * Q - lg / g + gn / g**2,
            "lgamma_term": lg, "gamma_norm": gn}


# --------------------------------------------------------------------------
# Nehari ray
# --------------------------------------------------------------------------

@dataclass
class RayRoot:
    lam: float
    crossings: list
    Q0: float
    A: float
    B: float


def _ray_g(lam, Q0, A, B, gamma):
    return lam**2 * Q0 - lam**gamma * (A * np.log(lam) + B)


_SCAN_CACHE = {}


def _scan_grid(lo, hi, n):
    key = (lo, hi, n)
    if key not in _SCAN_CACHE:
        _SCAN_CACHE[key] = np.linspace(math.log(lo), math.log(hi), n)
    return _SCAN_CACHE[key]


def _ray_solve(Q0, A, B, gamma, lo=1e-6, hi=1e6, n_scan=121, rtol=1e-12):
    """All +/- crossings of the ray function in (lo, hi), each polished.

    Works with h(mu) = lam^(-gamma) g(lam) at mu = ln(lam), which has the
    same sign as g and stays O(1) across the bracket.
    """
    e = 2.0 - gamma
    h = lambda m: Q0 * math.exp(e * m) - A * m - B
    t = _scan_grid(lo, hi, n_scan)
    hv = Q0 * np.exp(e * t) - A * t - B
    roots = []
    for i in np.flatnonzero((hv[:-1] > 0) & (hv[1:] <= 0)):
        a, b = float(t[i]), float(t[i + 1])
        # bisection to a loose bracket, then secant polish
        while b - a > 1e-4:
            m = 0.5 * (a + b)
            if h(m) > 0:
                a = m
            else:
                b = m
        x0, x1 = a, b
        f0, f1 = h(x0), h(x1)
        for _ in range(50):
            if f1 == f0:
                break
            x2 = x1 - f1 * (x1 - x0) / (f1 - f0)
            x0, f0 = x1, f1
            x1, f1 = x2, h(x2)
            if abs(x1 - x0) <= rtol or f1 == 0:
                break
        roots.append(math.exp(x1))
    return roots


def ray_scale_root(phi, psi, params: ModelParams, basis: Basis):
    """Scale lam* > 0 putting (lam* phi, lam* psi) on the Nehari set.

    Returns a RayRoot (``lam`` is the first +/- crossing, ``crossings`` all
    of them) or None when no sign change is found in (1e-6, 1e6).
    """
    cphi, cpsi = coeffs_of(phi), coeffs_of(psi)
    if not np.any(cphi):
        raise ValidationError("phi = 0: the ray never meets the Nehari set")
    fn = functionals(cphi, cpsi, params, basis)
    roots = _ray_solve(fn.Q, fn.gamma_norm, fn.lgamma_term, params.gamma)
    if not roots:
        return None
    return RayRoot(lam=roots[0], crossings=roots, Q0=fn.Q, A=fn.gamma_norm, B=fn.lgamma_term)


def _nehari_J(lam, Q0, A, gamma):
    # on the Nehari set lam^g (A ln lam + B) = lam^2 Q0
    return (0.5 - 1.0 / gamma) * lam**2 * Q0 + lam**gamma * A / gamma**2


# --------------------------------------------------------------------------
# Well depth
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SearchConfig:
    n_modes: int = 8
    restarts: int = 50
    seed: int = 0
    coupled: bool = True
    maxiter: int = 4000
    xatol: float = 1e-8
    fatol: float = 1e-12


@dataclass
class WellDepthEstimate:
    upper: float
    lower: float | None = None
    rho0: float | None = None
    witnesses: list = field(default_factory=list)
    discarded: int = 0
    n_modes: int = 0

    def consistent(self) -> bool:
        return self.upper > 0 and (self.lower is None or 0 < self.lower <= self.upper)

    def as_dict(self):
        return {
            "upper": self.upper, "lower": self.lower, "rho0": self.rho0,
            "n_modes": self.n_modes, "discarded": self.discarded,
            "consistent": self.consistent(),
            "witnesses": [
                {"phi": list(map(float, w["phi"])), "psi": list(map(float, w["psi"])),
                 "lam": w["lam"], "J": w["J"]}
                for w in self.witnesses
            ],
        }


class _RayObjective:
    """J at the Nehari point of the direction encoded by ``x``."""

    def __init__(self, params, basis, K, coupled):
        self.params, self.basis, self.K, self.coupled = params, basis, K, coupled
        self.lam = basis.eigenvalues[:K]
        self.S = basis.synthesis[:, :K]
        self.discarded = 0

    def split(self, x):
        phi = x[: self.K]
        psi = x[self.K:] if self.coupled else np.zeros(self.K)
        return phi, psi

    def nehari_point(self, x):
        phi, psi = self.split(np.asarray(x, dtype=float))
        Q = self.lam @ (phi * phi) + self.lam @ (psi * psi) + 2 * self.params.alpha * (phi @ psi)
        if not np.any(phi) or Q <= 0:
            return None
        s = 1.0 / np.sqrt(Q)
        phi, psi = phi * s, psi * s
        u = np.abs(self.S @ phi)
        nz = u >= 1e-300
        ug = np.where(nz, u, 0.0) ** self.params.gamma
        A = float(self.basis.weights @ ug)
        B = float(self.basis.weights @ (ug * np.log(np.where(nz, u, 1.0))))
        roots = _ray_solve(1.0, A, B, self.params.gamma)
        if not roots:
            return None
        Js = [_nehari_J(r, 1.0, A, self.params.gamma) for r in roots]
        i = int(np.argmin(Js))
        return phi, psi, roots[i], Js[i]

    def __call__(self, x):
        pt = self.nehari_point(x)
        if pt is None:
            self.discarded += 1
            return np.inf
        return pt[3]


def well_depth_upper(params: ModelParams, basis: Basis, search: SearchConfig = SearchConfig(),
                     warm_starts=()) -> WellDepthEstimate:
    """Upper estimate of the well depth by multistart Nelder-Mead over directions.

    Directions live in the first ``search.n_modes`` modes (both components
    unless ``coupled`` is False) and are normalized to Q = 1 before the ray
    is solved. ``warm_starts`` are extra starting directions, padded or cut
    to the current mode count; a search started from a coarser optimum
    therefore never ends above it.
    """
    K = min(search.n_modes, basis.n_modes)
    obj = _RayObjective(params, basis, K, search.coupled)
    dim = 2 * K if search.coupled else K
    rng = np.random.default_rng(search.seed)
    starts = []
    for ws in warm_starts:
        phi, psi = (np.asarray(v, dtype=float) for v in ws)
        x = np.zeros(dim)
        n = min(K, phi.size)
        x[:n] = phi[:n]
        if search.coupled:
            m = min(K, psi.size)
            x[K:K + m] = psi[:m]
        starts.append(x)
    # first random start is the ground-state-like direction e_1
    e1 = np.zeros(dim)
    e1[0] = 1.0
    starts.append(e1)
    decay = np.arange(1, K + 1, dtype=float)
    decay = np.concatenate([decay, decay]) if search.coupled else decay
    while len(starts) < search.restarts + len(warm_starts):
        starts.append(rng.standard_normal(dim) / decay)

    witnesses = []
    for x0 in starts:
        if not np.isfinite(obj(x0)):
            continue
        res = minimize(obj, x0, method="Nelder-Mead",
                       options={"xatol": search.xatol, "fatol": search.fatol,
                                "maxiter": search.maxiter * max(1, dim // 4),
                                "adaptive": dim > 4})
        pt = obj.nehari_point(res.x)
        if pt is None:
            continue
        phi, psi, lam, J = pt
        witnesses.append({"phi": phi, "psi": psi, "lam": float(lam), "J": float(J)})
    if not witnesses:
        raise ValidationError("no direction reached the Nehari set")
    witnesses.sort(key=lambda w: w["J"])
    log.debug("well depth K=%d best J=%.12g (%d witnesses)", K, witnesses[0]["J"], len(witnesses))
    return WellDepthEstimate(upper=witnesses[0]["J"], witnesses=witnesses,
                             discarded=obj.discarded, n_modes=K)


def well_depth_sweep(params, basis, modes=(1, 2, 4, 8), search: SearchConfig = SearchConfig()):
    """Nested searches over growing mode counts, each warm-started from the last."""
    out = []
    warm = []
    for K in modes:
        cfg = SearchConfig(**{**search.__dict__, "n_modes": K})
        est = well_depth_upper(params, basis, cfg, warm_starts=warm)
        out.append(est)
        warm = [(w["phi"], w["psi"]) for w in est.witnesses[:3]]
    return out


def _tilde_C(consts: AbsorptionConstants, params: ModelParams) -> float:
    p = params.gamma + consts.eta
    return consts.C_S_eta * consts.C_eps * params.c_alpha ** (-p / 2)


def _radius(consts, params):
    p = params.gamma + consts.eta
    return (1.0 / (2.0 * _tilde_C(consts, params))) ** (2.0 / (p - 2.0))


def well_depth_lower(consts: AbsorptionConstants, params: ModelParams) -> float:
    """Constructive lower bound ((g-2)/(2g)) c0 on the well depth."""
    ratio = consts.eps / (params.lambda1 * params.c_alpha)
    if ratio > 0.5:
        raise ValidationError(
            f"eps/(lambda_1 c_alpha) <= 1/2 violated ({ratio:.4g}); recalibrate with "
            f"eps <= {0.5 * params.lambda1 * params.c_alpha:.4g}"
        )
    c0 = _radius(consts, params)
    return (params.gamma - 2) / (2 * params.gamma) * c0


def local_positivity_radius(consts: AbsorptionConstants, params: ModelParams) -> float:
    """rho0 such that Q <= rho0 implies I >= Q/4."""
    ratio = consts.eps / (params.lambda1 * params.c_alpha)
    if ratio > 0.25:
        raise ValidationError(
            f"eps/(lambda_1 c_alpha) <= 1/4 violated ({ratio:.4g}); recalibrate with "
            f"eps <= {0.25 * params.lambda1 * params.c_alpha:.4g}"
        )
    return _radius(consts, params)


def classify(u, w, energy_now, est: WellDepthEstimate, params: ModelParams, basis: Basis,
             tol: float = 1e-9) -> str:
    """Membership label relative to the estimated depth ``est.upper``.

    Only certified against the upper estimate: a point labelled
    stable-interior may still have J in [d, d_hat).
    """
    cu, cw = coeffs_of(u), coeffs_of(w)
    if not (np.any(cu) or np.any(cw)):
        return ORIGIN
    fn = functionals(cu, cw, params, basis)
    if abs(fn.I) <= tol * max(1.0, fn.Q):
        return NEHARI
    level = fn.J if energy_now is None else max(fn.J, energy_now)
    if fn.I > 0 and level < est.upper:
        return STABLE
    return OUTSIDE
