"""Time evolution of the coupled wave / MGT system in (u, u_t, w, w_t, v_t).

With w = v + tau v_t the system reads

    u_tt - Lap u + alpha w = f(u)
    w_tt - Lap w - (b - tau) Lap v_t + alpha u = 0
    w_t  = v_t + tau v_tt

and is advanced as the first-order Galerkin system in the state
(u, p, w, m, q) = (u, u_t, w, w_t, v_t):

    u' = p,  p' = Lap u - alpha w + P f(u),
    w' = m,  m' = Lap w + (b - tau) Lap q - alpha u,
    q' = (m - q) / tau.

The energy

    E = |p|^2/2 + |m|^2/2 + tau (b - tau)/2 |grad q|^2
        + |grad u|^2/2 + |grad w|^2/2 + alpha (u, w) - int F(u)

satisfies E(t) + (b - tau) int_0^t |grad q|^2 = E(0) for the semi-discrete
system exactly, because int F(u) uses the same grid quadrature as P f(u).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields

import numpy as np

from .basis import Basis, SpectralField, build_basis, coeffs_of
from .errors import IntegrationBlowup, ValidationError
from .params import ModelParams

log = logging.getLogger(__name__)

FIELDS = ("u", "p", "w", "m", "q")


@dataclass(frozen=True, eq=False)
class SystemState:
    u: SpectralField
    p: SpectralField
    w: SpectralField
    m: SpectralField
    q: SpectralField
    t: float = 0.0

    def __post_init__(self):
        sizes = {len(getattr(self, k)) for k in FIELDS}
        if len(sizes) != 1:
            raise ValidationError(f"state fields have different sizes: {sorted(sizes)}")
        if self.t < 0:
            raise ValidationError(f"t >= 0 violated: {self.t}")

    def as_array(self) -> np.ndarray:
        return np.stack([getattr(self, k).coeffs for k in FIELDS])

    @classmethod
    def from_array(cls, Y, t=0.0) -> "SystemState":
        return cls(*(SpectralField(row) for row in Y), t=float(t))


def reconstruct_v(state: SystemState, params: ModelParams) -> SpectralField:
    return state.w - params.tau * state.q


@dataclass(frozen=True, eq=False)
class InitialData:
    u0: SpectralField
    u1: SpectralField
    v0: SpectralField
    v1: SpectralField
    v2: SpectralField

    def __post_init__(self):
        for k in ("u0", "u1", "v0", "v1", "v2"):
            v = getattr(self, k)
            if not isinstance(v, SpectralField):
                object.__setattr__(self, k, SpectralField(v))
        sizes = {len(getattr(self, k)) for k in ("u0", "u1", "v0", "v1", "v2")}
        if len(sizes) != 1:
            raise ValidationError(f"initial fields have different sizes: {sorted(sizes)}")

    @classmethod
    def zeros(cls, n):
        z = np.zeros(n)
        return cls(z, z, z, z, z)

    def has_v_data(self) -> bool:
        return any(np.any(getattr(self, k).coeffs) for k in ("v0", "v1", "v2"))


@dataclass(frozen=True)
class EnergyBreakdown:
    kin_u: float
    kin_w: float
    kin_vt: float
    pot_u: float
    pot_w: float
    coupling: float
    potentialF: float
    total: float
    dissipated: float = 0.0


def initial_state(data: InitialData, params: ModelParams) -> SystemState:
    n = params.domain.n_modes
    if len(data.u0) != n:
        raise ValidationError(f"initial data has {len(data.u0)} modes, domain has {n}")
    tau = params.tau
    return SystemState(
        u=data.u0, p=data.u1,
        w=data.v0 + tau * data.v1,
        m=data.v1 + tau * data.v2,
        q=data.v1, t=0.0,
    )


class Rhs:
    """Right-hand side on raw (5, N) arrays, with the grid work precomputed."""

    def __init__(self, params: ModelParams, basis: Basis):
        self.params, self.basis = params, basis
        self.lam = np.asarray(basis.eigenvalues)
        self.S = np.ascontiguousarray(basis.synthesis)
        self.A = np.ascontiguousarray(basis.analysis)
        self.g2 = params.gamma - 2.0
        self.alpha, self.tau, self.bt = params.alpha, params.tau, params.b - params.tau
        self.source = params.source

    def source_term(self, u):
        if not self.source:
            return np.zeros_like(u)
        x = self.S @ u
        a = np.abs(x)
        nz = a >= 1e-300
        fx = np.zeros_like(x)
        an = a[nz]
        fx[nz] = an**self.g2 * x[nz] * np.log(an)
        return self.A @ fx

    def __call__(self, Y):
        u, p, w, m, q = Y
        lam = self.lam
        out = np.empty_like(Y)
        out[0] = p
        out[1] = -lam * u - self.alpha * w + self.source_term(u)
        out[2] = m
        out[3] = -lam * w - self.bt * lam * q - self.alpha * u
        out[4] = (m - q) / self.tau
        return out


def rhs(state: SystemState, params: ModelParams, basis: Basis) -> SystemState:
    """Time derivative of ``state`` packaged as a SystemState (t carried over)."""
    return SystemState.from_array(Rhs(params, basis)(state.as_array()), t=state.t)


def _rk4(F, Y, dt):
    k1 = F(Y)
    k2 = F(Y + 0.5 * dt * k1)
    k3 = F(Y + 0.5 * dt * k2)
    k4 = F(Y + dt * k3)
    return Y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check_dt(dt, params):
    if not dt > 0:
        raise ValidationError(f"dt > 0 violated: {dt}")
    ceiling = params.stability_ceiling()
    if dt > ceiling:
        raise ValidationError(f"dt <= stability ceiling violated: {dt:g} > {ceiling:g}")


def step_rk4(state: SystemState, dt: float, params: ModelParams, basis: Basis) -> SystemState:
    _check_dt(dt, params)
    Y = _rk4(Rhs(params, basis), state.as_array(), dt)
    if not np.all(np.isfinite(Y)):
        raise IntegrationBlowup(f"non-finite state after step from t={state.t:g}", state.t)
    return SystemState.from_array(Y, t=state.t + dt)


def _energy_arrays(Y, params, basis):
    """Energy summands for a stack of states of shape (..., 5, N)."""
    Y = np.asarray(Y)
    lam = basis.eigenvalues
    u, p, w, m, q = (Y[..., i, :] for i in range(5))
    tau, bt, g = params.tau, params.b - params.tau, params.gamma
    out = {
        "kin_u": 0.5 * np.sum(p * p, axis=-1),
        "kin_w": 0.5 * np.sum(m * m, axis=-1),
        "kin_vt": 0.5 * tau * bt * np.sum(lam * q * q, axis=-1),
        "pot_u": 0.5 * np.sum(lam * u * u, axis=-1),
        "pot_w": 0.5 * np.sum(lam * w * w, axis=-1),
        "coupling": params.alpha * np.sum(u * w, axis=-1),
    }
    if params.source:
        x = np.abs(u @ basis.synthesis.T)
        nz = x >= 1e-300
        xg = np.where(nz, x, 0.0) ** g
        Fx = xg * np.log(np.where(nz, x, 1.0)) / g - xg / g**2
        out["potentialF"] = Fx @ basis.weights
    else:
        out["potentialF"] = np.zeros_like(out["kin_u"])
    out["total"] = (out["kin_u"] + out["kin_w"] + out["kin_vt"] + out["pot_u"]
                    + out["pot_w"] + out["coupling"] - out["potentialF"])
    return out


def energy(state: SystemState, params: ModelParams, basis: Basis,
           dissipated: float = 0.0) -> EnergyBreakdown:
    e = _energy_arrays(state.as_array(), params, basis)
    return EnergyBreakdown(**{k: float(v) for k, v in e.items()}, dissipated=float(dissipated))


def dissipation_rate(Y, params, basis) -> float:
    """(b - tau) |grad v_t|^2 for one state array."""
    q = Y[4]
    return (params.b - params.tau) * float(np.dot(basis.eigenvalues, q * q))


ENERGY_KEYS = ("total", "kin_u", "kin_w", "kin_vt", "pot_u", "pot_w", "coupling",
               "potentialF", "dissipated")


@dataclass
class Trajectory:
    """Snapshots and energy records of one integration."""

    params: ModelParams
    dt: float
    t: np.ndarray
    states: np.ndarray                      # (n_snap, 5, N)
    energy: dict                            # key -> (n_snap,) array, see ENERGY_KEYS
    status: str = "ok"
    failure_time: float | None = None

    def __len__(self):
        return self.t.size

    def state(self, i) -> SystemState:
        return SystemState.from_array(self.states[i], t=self.t[i])

    def breakdown(self, i) -> EnergyBreakdown:
        return EnergyBreakdown(**{k: float(self.energy[k][i]) for k in ENERGY_KEYS})


def integrate(data: InitialData, T: float, dt: float, params: ModelParams,
              basis: Basis | None = None, observers=(), snapshot_stride: int = 2,
              ) -> Trajectory:
    """Fixed-step RK4 integration with exact energy bookkeeping.

    ``T / dt`` must be an even integer and ``snapshot_stride`` even: the
    dissipation integral is accumulated with composite Simpson over pairs of
    accepted steps, so it is available at even step counts only.
    Observers are called as ``obs(state, breakdown)`` at every snapshot.
    On non-finite values an IntegrationBlowup is raised whose ``records``
    attribute is the partial Trajectory.
    """
    if basis is None:
        basis = build_basis(params.domain)
    if not T > 0:
        raise ValidationError(f"T > 0 violated: {T}")
    _check_dt(dt, params)
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * T:
        raise ValidationError(f"T/dt must be an integer: T={T}, dt={dt}")
    if n_steps % 2 or snapshot_stride % 2 or snapshot_stride < 2:
        raise ValidationError(
            f"step count ({n_steps}) and snapshot_stride ({snapshot_stride}) must be even"
        )
    F = Rhs(params, basis)
    Y = initial_state(data, params).as_array()

    snaps_t, snaps_Y, snaps_D = [], [], []

    def record(step, Y, D):
        snaps_t.append(step * dt)
        snaps_Y.append(Y.copy())
        snaps_D.append(D)
        if observers:
            st = SystemState.from_array(Y, t=step * dt)
            br = energy(st, params, basis, D)
            for obs in observers:
                obs(st, br)

    def finish(status, failure_time=None):
        states = np.array(snaps_Y).reshape(-1, 5, basis.n_modes)
        e = _energy_arrays(states, params, basis)
        e["dissipated"] = np.array(snaps_D, dtype=float)
        return Trajectory(params=params, dt=dt, t=np.array(snaps_t), states=states,
                          energy=e, status=status, failure_time=failure_time)

    D = 0.0
    r0 = dissipation_rate(Y, params, basis)
    record(0, Y, D)
    for pair in range(n_steps // 2):
        with np.errstate(over="ignore", invalid="ignore"):
            Y1 = _rk4(F, Y, dt)
            Y2 = _rk4(F, Y1, dt)
        if not (np.all(np.isfinite(Y1)) and np.all(np.isfinite(Y2))):
            t_fail = 2 * pair * dt
            log.warning("integration blew up after t=%g", t_fail)
            traj = finish("blowup", t_fail)
            raise IntegrationBlowup(f"non-finite state after t={t_fail:g}", t_fail, traj)
        r1 = dissipation_rate(Y1, params, basis)
        r2 = dissipation_rate(Y2, params, basis)
        D += dt / 3.0 * (r0 + 4.0 * r1 + r2)
        Y, r0 = Y2, r2
        step = 2 * (pair + 1)
        if step % snapshot_stride == 0 or step == n_steps:
            record(step, Y, D)
    return finish("ok")


def energy_residual(traj: Trajectory) -> np.ndarray:
    """r(t) = E(t) + dissipated(t) - E(0)."""
    E = traj.energy["total"]
    return E + traj.energy["dissipated"] - E[0]


@dataclass
class MonitorReport:
    t: np.ndarray
    Q: np.ndarray
    I: np.ndarray
    J: np.ndarray
    uniform_quantity: np.ndarray
    uniform_bound: float
    d_hat: float
    origin: np.ndarray
    first_I_nonpositive: float | None
    first_J_above: float | None
    initially_stable: bool
    note: str = "membership certified only relative to the upper depth estimate d_hat"

    @property
    def flagged(self) -> bool:
        return self.first_I_nonpositive is not None or self.first_J_above is not None

    @property
    def uniform_ok(self) -> bool:
        return bool(np.all(self.uniform_quantity <= self.uniform_bound * (1 + 1e-12) + 1e-300))


def uniform_bound_constant(E0: float, params: ModelParams) -> float:
    """Constant bounding the a-priori quantity from the initial energy.

    In the stable set E >= |p|^2/2 + |m|^2/2 + tau(b-tau)/2 |grad q|^2
    + k (|grad u|^2 + |grad w|^2) + |u|_g^g / g^2 with
    k = (g-2) c_alpha / (2g), so the sum of the six terms is at most
    E(0) / min(1/2, tau(b-tau)/2, k, 1/g^2).
    """
    g = params.gamma
    k = (g - 2) * params.c_alpha / (2 * g)
    return E0 / min(0.5, 0.5 * params.tau * (params.b - params.tau), k, 1.0 / g**2)


def well_monitor(traj: Trajectory, params: ModelParams, basis: Basis, d_hat: float,
                 tol: float = 0.0) -> MonitorReport:
    """Per-snapshot potential-well functionals and stable-set flags."""
    from .well import functionals_batch

    U, W = traj.states[:, 0, :], traj.states[:, 2, :]
    fn = functionals_batch(U, W, params, basis)
    lam = basis.eigenvalues
    P, M, Qv = traj.states[:, 1, :], traj.states[:, 3, :], traj.states[:, 4, :]
    quantity = (np.sum(P * P, 1) + np.sum(M * M, 1) + (Qv * Qv) @ lam
                + (U * U) @ lam + (W * W) @ lam + fn["gamma_norm"])
    origin = ~(np.any(U != 0, axis=1) | np.any(W != 0, axis=1))
    bad_I = (fn["I"] <= tol) & ~origin
    bad_J = fn["J"] >= d_hat
    first = lambda mask: float(traj.t[np.argmax(mask)]) if mask.any() else None
    E0 = float(traj.energy["total"][0])
    init_stable = bool(origin[0] or (fn["I"][0] > 0 and fn["J"][0] < d_hat))
    return MonitorReport(
        t=traj.t, Q=fn["Q"], I=fn["I"], J=fn["J"], uniform_quantity=quantity,
        uniform_bound=uniform_bound_constant(max(E0, 0.0), params), d_hat=d_hat,
        origin=origin, first_I_nonpositive=first(bad_I), first_J_above=first(bad_J),
        initially_stable=init_stable,
    )


def u_subsystem_energy(traj: Trajectory) -> np.ndarray:
    """|u_t|^2/2 + |grad u|^2/2 - int F(u); conserved when alpha = 0."""
    e = traj.energy
    return e["kin_u"] + e["pot_u"] - e["potentialF"]


def difference_energy(Ya, Yb, params: ModelParams, basis: Basis) -> dict:
    """Difference energy Z of two state stacks and its two-sided norm bounds.

    With (z, y, r) the differences of (u, w, v),

        Z = |z_t|^2/2 + |y_t|^2/2 + tau(b-tau)/2 |grad r_t|^2
            + |grad z|^2/2 + |grad y|^2/2 + alpha (z, y),

    and coercivity of the coupled quadratic form gives
    N_lo <= Z <= N_hi with the component norms weighted by c_alpha/2 and
    (2 - c_alpha)/2 respectively.
    """
    d = np.asarray(Ya) - np.asarray(Yb)
    lam = basis.eigenvalues
    z, zt, y, yt, rt = (d[..., i, :] for i in range(5))
    kin = (0.5 * np.sum(zt * zt, -1) + 0.5 * np.sum(yt * yt, -1)
           + 0.5 * params.tau * (params.b - params.tau) * np.sum(lam * rt * rt, -1))
    grad = np.sum(lam * z * z, -1) + np.sum(lam * y * y, -1)
    Z = kin + 0.5 * grad + params.alpha * np.sum(z * y, -1)
    ca = params.c_alpha
    return {"Z": Z, "lower": kin + 0.5 * ca * grad, "upper": kin + 0.5 * (2 - ca) * grad}
