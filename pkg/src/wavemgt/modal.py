"""Modal characteristic quintic of the linearized system and its roots.

For a Dirichlet eigenvalue lam the modal roots are the zeros of

    P(s) = (s^2 + lam)(tau s^3 + s^2 + b lam s + lam) - alpha^2 (1 + tau s)

Two of them (the wave pair) sit next to +/- i sqrt(lam); at high frequency
their real part behaves like -alpha^2 / (2 (b - tau) lam^2), which is far
below the resolution of Im s itself for lam >~ 1e6. Wave roots are
therefore carried as anchor + offset, s = sigma i sqrt(lam) + delta, and
Newton's method is run on delta with s^2 + lam expanded around the anchor.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

log = logging.getLogger(__name__)

_SPLIT = 134217729.0  # 2**27 + 1


def _two_square(a):
    """Exact a*a = hi + lo (Dekker)."""
    hi = a * a
    c = _SPLIT * a
    ah = c - (c - a)
    al = a - ah
    lo = ((ah * ah - hi) + 2 * ah * al) + al * al
    return hi, lo


def sqrt_with_error(lam):
    """omega = fl(sqrt(lam)) and e = lam - omega^2 to full precision."""
    omega = float(np.sqrt(lam))
    hi, lo = _two_square(omega)
    return omega, (lam - hi) - lo


@dataclass(frozen=True)
class CharPoly:
    """Expanded coefficients c_0..c_5 (ascending powers) plus the factored data."""

    coeffs: np.ndarray
    lambda_k: float
    tau: float
    b: float
    alpha: float

    def expanded(self, s):
        return np.polynomial.polynomial.polyval(s, self.coeffs)

    def factored(self, s):
        s = np.asarray(s, dtype=complex)
        lam, tau, b, a2 = self.lambda_k, self.tau, self.b, self.alpha**2
        return (s * s + lam) * (tau * s**3 + s * s + b * lam * s + lam) - a2 * (1 + tau * s)

    def scale(self, s):
        """Sum |c_j| |s|^j, the natural size of P near s."""
        r = np.abs(np.asarray(s, dtype=complex))
        return np.polynomial.polynomial.polyval(r, np.abs(self.coeffs))


def char_poly(lambda_k: float, params) -> CharPoly:
    if not lambda_k > 0:
        raise ValidationError(f"lambda_k > 0 violated: {lambda_k}")
    tau, b, al = params.tau, params.b, params.alpha
    lam = float(lambda_k)
    c = np.array([
        lam * lam - al * al,
        b * lam * lam - al * al * tau,
        2.0 * lam,
        (b + tau) * lam,
        1.0,
        tau,
    ])
    return CharPoly(coeffs=c, lambda_k=lam, tau=tau, b=b, alpha=al)


def _companion_roots(poly: CharPoly) -> np.ndarray:
    # s = omega z balances the coefficients (all O(1) in z for large lam)
    omega = np.sqrt(poly.lambda_k)
    cz = poly.coeffs * omega ** np.arange(6)
    cz = cz / cz[-1]
    C = np.zeros((5, 5))
    C[1:, :-1] = np.eye(4)
    C[:, -1] = -cz[:-1]
    return np.linalg.eigvals(C).astype(complex) * omega


@dataclass
class PolishedRoot:
    root: complex
    anchor_sign: int           # +1/-1 when expanded around +/- i sqrt(lam), 0 otherwise
    offset: complex            # root - anchor_sign * i * sqrt(lam), exact anchor
    residual: float            # |P(root)| / scale
    converged: bool


def polish_root(poly: CharPoly, r0: complex, anchor_sign: int | None = None,
                max_iter: int = 20) -> PolishedRoot:
    """Newton on the factored form, expanded around the nearest wave anchor."""
    lam, tau, b, a2 = poly.lambda_k, poly.tau, poly.b, poly.alpha**2
    omega, e = sqrt_with_error(lam)
    if anchor_sign is None:
        sgn = 1 if r0.imag >= 0 else -1
        anchor_sign = sgn if abs(r0 - sgn * 1j * omega) < 0.25 * omega else 0
    a = anchor_sign * 1j * omega
    # s^2 + lam = (a^2 + lam) + 2 a d + d^2 with a^2 + lam = e (0 if no anchor)
    base = e if anchor_sign else lam
    d = complex(r0) - a
    converged = False
    for _ in range(max_iter):
        s = a + d
        S2 = base + (2 * a + d) * d
        C = tau * s**3 + s * s + b * lam * s + lam
        P = S2 * C - a2 * (1 + tau * s)
        dP = 2 * s * C + S2 * (3 * tau * s * s + 2 * s + b * lam) - a2 * tau
        if P == 0:
            converged = True
            break
        if dP == 0:
            break
        step = P / dP
        d -= step
        if abs(step) <= 4e-16 * max(abs(d), abs(s) * 1e-300, 1e-300) or abs(step) < 1e-300:
            converged = True
            break
    s = a + d
    S2 = base + (2 * a + d) * d
    C = tau * s**3 + s * s + b * lam * s + lam
    P = S2 * C - a2 * (1 + tau * s)
    res = abs(P) / float(poly.scale(s))
    if not converged and res <= 1e-12:
        converged = True
    # offset relative to the exact anchor sqrt(lam) = omega + e/(2 omega) + ...
    offset = d - anchor_sign * 1j * (e / (2 * omega)) if anchor_sign else d
    return PolishedRoot(root=complex(s), anchor_sign=anchor_sign, offset=complex(offset),
                        residual=float(res), converged=converged)


def poly_roots(poly: CharPoly, return_details: bool = False):
    """All five roots: companion-matrix eigenvalues, then Newton polish."""
    if poly.coeffs[-1] == 0:
        raise ValidationError("leading coefficient must be nonzero")
    details = [polish_root(poly, r) for r in _companion_roots(poly)]
    for d in details:
        if not d.converged:
            log.warning("root polish did not converge at lambda=%g: %s", poly.lambda_k, d.root)
    roots = np.array([d.root for d in details])
    return (roots, details) if return_details else roots


def classify_branches(roots, lambda_k: float):
    """Split roots into the wave pair (nearest +/- i sqrt(lam)) and the MGT triple.

    Returns (wave_pair, mgt_roots, ambiguous) with wave_pair ordered (+, -).
    """
    roots = np.asarray(roots, dtype=complex)
    omega = np.sqrt(lambda_k)
    chosen, ambiguous = [], False
    for sgn in (1, -1):
        avail = [i for i in range(roots.size) if i not in chosen]
        dist = np.array([abs(roots[i] - sgn * 1j * omega) for i in avail])
        order = sorted(range(len(avail)), key=lambda j: (dist[j], abs(roots[avail[j]].real)))
        if len(order) > 1 and abs(dist[order[1]] - dist[order[0]]) <= 1e-12:
            ambiguous = True
        chosen.append(avail[order[0]])
    wave = roots[chosen]
    mgt = np.delete(roots, chosen)
    return wave, mgt, ambiguous


def asymptotic_prediction(lambda_k: float, params, sigma: int, form: str = "gap") -> complex:
    """Three-term wave-branch expansion.

    ``form="gap"`` uses b - tau directly, ``form="speed"`` writes it as
    tau (c_mgt^2 - c_w^2) with c_w = 1 and c_mgt = sqrt(b/tau).
    """
    tau, b, al = params.tau, params.b, params.alpha
    if not b > tau:
        raise ValidationError(f"b > tau required for the expansion: b={b}, tau={tau}")
    if form == "gap":
        gap = b - tau
    elif form == "speed":
        c_w, c_mgt = 1.0, np.sqrt(b / tau)
        gap = tau * (c_mgt**2 - c_w**2)
    else:
        raise ValueError(f"unknown form {form!r}")
    lam = float(lambda_k)
    return complex(-al**2 / (2 * gap * lam**2),
                   sigma * np.sqrt(lam) - sigma * al**2 * tau / (2 * gap * lam**1.5))


def predicted_offset(lambda_k, params, sigma) -> complex:
    """Prediction minus the anchor, free of cancellation."""
    tau, b, al = params.tau, params.b, params.alpha
    gap = b - tau
    lam = float(lambda_k)
    return complex(-al**2 / (2 * gap * lam**2), -sigma * al**2 * tau / (2 * gap * lam**1.5))


@dataclass
class ModalRecord:
    lambda_k: float
    roots: np.ndarray
    wave_pair: np.ndarray
    mgt_roots: np.ndarray
    wave_offsets: np.ndarray   # offsets of the wave pair from +/- i sqrt(lam)
    predicted: np.ndarray | None
    residuals: np.ndarray
    flags: list = field(default_factory=list)

    @property
    def flagged(self) -> bool:
        return bool(self.flags)

    @property
    def real_defect(self) -> float:
        """Re of the upper wave root (equal to the lower one by symmetry)."""
        return float(self.wave_offsets[0].real)

    @property
    def imag_defect(self) -> float:
        """|Im s_wave| - sqrt(lam) for the upper wave root."""
        return float(self.wave_offsets[0].imag)


def modal_record(lambda_k: float, params) -> ModalRecord:
    poly = char_poly(lambda_k, params)
    roots, details = poly_roots(poly, return_details=True)
    wave, mgt, ambiguous = classify_branches(roots, lambda_k)
    flags = []
    if ambiguous:
        flags.append("ambiguous-classification")
    if not all(d.converged for d in details):
        flags.append("polish-not-converged")
    offsets = []
    for sgn, r in zip((1, -1), wave):
        pr = polish_root(poly, r, anchor_sign=sgn)
        offsets.append(pr.offset)
    offsets = np.array(offsets)
    if abs(offsets[0] - np.conj(offsets[1])) > 1e-8 * max(abs(offsets[0]), 1e-300) + 1e-300:
        flags.append("wave-pair-not-conjugate")
    predicted = None
    if params.alpha != 0 and params.b > params.tau:
        predicted = np.array([asymptotic_prediction(lambda_k, params, s) for s in (1, -1)])
    return ModalRecord(lambda_k=float(lambda_k), roots=roots, wave_pair=wave, mgt_roots=mgt,
                       wave_offsets=offsets, predicted=predicted,
                       residuals=np.array([d.residual for d in details]), flags=flags)


@dataclass
class SweepResult:
    records: list
    fit: dict
    params: object = None

    def table(self):
        """Rows of plain floats, one per lambda."""
        rows = []
        for r in self.records:
            pred = (predicted_offset(r.lambda_k, self.params, 1) if r.predicted is not None
                    else complex("nan"))
            rows.append({
                "lambda": r.lambda_k,
                "re_wave": r.real_defect,
                "im_defect": r.imag_defect,
                "re_pred": pred.real,
                "im_pred": pred.imag,
                "max_residual": float(np.max(r.residuals)),
                "max_re_root": float(np.max(r.roots.real)),
                "flagged": int(r.flagged),
            })
        return rows


def _fit_loglog(x, y):
    A = np.vstack([np.log(x), np.ones_like(x)]).T
    slope, icpt = np.linalg.lstsq(A, np.log(y), rcond=None)[0]
    return float(slope), float(np.exp(icpt))


def sweep(lambdas, params, top_decade: bool = True) -> SweepResult:
    """Modal records over a lambda grid with the asymptotic-law fit.

    The fit uses the last decade of the grid: slope of log|Re s_wave| and of
    log|Im defect| against log lambda, and the prefactors |Re s| lam^2 and
    |Im defect| lam^(3/2) averaged there.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.min() < 1 or lambdas.max() > 1e8 * (1 + 1e-12):
        raise ValidationError("sweep range must lie within [1, 1e8]")
    if params.b - params.tau < 1e-2 * params.tau:
        warnings.warn("b is close to tau: the wave-branch expansion is not uniform there",
                      RuntimeWarning)
    records = []
    for lam in lambdas:
        records.append(modal_record(lam, params))
    sel = [r for r in records
           if not r.flagged and (not top_decade or r.lambda_k >= lambdas.max() / 10 * (1 - 1e-12))]
    fit = {"n_fit": len(sel), "n_flagged": sum(r.flagged for r in records)}
    if len(sel) >= 2 and params.alpha != 0:
        lam = np.array([r.lambda_k for r in sel])
        re = np.array([abs(r.real_defect) for r in sel])
        im = np.array([abs(r.imag_defect) for r in sel])
        fit["re_slope"], _ = _fit_loglog(lam, re)
        fit["im_slope"], _ = _fit_loglog(lam, im)
        fit["re_prefactor"] = float(np.mean(re * lam**2))
        fit["im_prefactor"] = float(np.mean(im * lam**1.5))
        gap = params.b - params.tau
        fit["re_prefactor_predicted"] = params.alpha**2 / (2 * gap)
        fit["im_prefactor_predicted"] = params.alpha**2 * params.tau / (2 * gap)
        fit["max_residual"] = float(max(np.max(r.residuals) for r in records))
    fit["all_stable"] = bool(all(np.all(r.roots.real < 0) for r in records))
    return SweepResult(records=records, fit=fit, params=params)


def eigenvalue_sweep(domain, params, k_max: int | None = None) -> SweepResult:
    """Same as ``sweep`` at the exact Dirichlet eigenvalues of an interval."""
    k = np.arange(1, (k_max or domain.n_modes) + 1)
    return sweep((k * np.pi / domain.length) ** 2, params)


def hausdorff(a, b) -> float:
    d = np.abs(np.asarray(a)[:, None] - np.asarray(b)[None, :])
    return float(max(d.min(axis=0).max(), d.min(axis=1).max()))


def decoupled_factorization_error(lambdas, params) -> float:
    """Largest Hausdorff distance between the alpha = 0 roots and the factor roots.

    At alpha = 0 the quintic splits into s^2 + lam (roots +/- i sqrt(lam))
    and the cubic tau s^3 + s^2 + b lam s + lam, whose roots are taken from
    numpy independently of the companion solve used here.
    """
    from types import SimpleNamespace

    p0 = SimpleNamespace(tau=params.tau, b=params.b, alpha=0.0)
    worst = 0.0
    for lam in np.asarray(lambdas, dtype=float):
        r = poly_roots(char_poly(lam, p0))
        w = np.sqrt(lam)
        ref = np.concatenate([[1j * w, -1j * w],
                              np.roots([params.tau, 1.0, params.b * lam, lam])])
        worst = max(worst, hausdorff(r, ref))
    return worst
