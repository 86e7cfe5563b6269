"""Second-order finite differences for the same five-field system.

Used only as an independent check on the spectral solver: uniform grid on
[0, L] with ``n_nodes`` points including the two Dirichlet boundary nodes,
centered three-point Laplacian, pointwise source, RK4 in time.
"""
from __future__ import annotations

import numpy as np

from ..basis import Basis
from ..errors import IntegrationBlowup, ValidationError
from ..nonlinearity import f_eval
from ..params import ModelParams


class FDSolver:
    def __init__(self, params: ModelParams, n_nodes: int):
        if n_nodes < 3:
            raise ValidationError(f"need at least 3 nodes, got {n_nodes}")
        self.params = params
        L = params.domain.length
        self.M = n_nodes - 1
        self.h = L / self.M
        self.x = self.h * np.arange(1, self.M)

    def sample(self, coeffs) -> np.ndarray:
        """Nodal values of a sine series at the interior nodes."""
        c = np.asarray(coeffs, dtype=float)
        L = self.params.domain.length
        k = np.arange(1, c.shape[-1] + 1)
        E = np.sqrt(2.0 / L) * np.sin(np.outer(self.x, k) * np.pi / L)
        return c @ E.T

    def restrict(self, values, n_modes: int) -> np.ndarray:
        """Trapezoid projection of nodal values onto the first sine modes."""
        L = self.params.domain.length
        k = np.arange(1, n_modes + 1)
        E = np.sqrt(2.0 / L) * np.sin(np.outer(self.x, k) * np.pi / L)
        return self.h * (np.asarray(values) @ E)

    def lap(self, v):
        out = -2.0 * v
        out[1:] += v[:-1]
        out[:-1] += v[1:]
        return out / self.h**2

    def rhs(self, Y):
        P = self.params
        u, p, w, m, q = Y
        src = f_eval(u, P.gamma) if P.source else 0.0
        return np.stack([
            p,
            self.lap(u) - P.alpha * w + src,
            m,
            self.lap(w) + (P.b - P.tau) * self.lap(q) - P.alpha * u,
            (m - q) / P.tau,
        ])

    def stability_ceiling(self) -> float:
        lam_max = 4.0 / self.h**2
        return 1.0 / np.sqrt(lam_max * max(1.0, self.params.b / self.params.tau))

    def integrate(self, Y0, T, dt, stride=1):
        """Returns (times, nodal states of shape (n_snap, 5, M-1))."""
        if dt > self.stability_ceiling():
            raise ValidationError(
                f"dt <= FD stability ceiling violated: {dt:g} > {self.stability_ceiling():g}"
            )
        n = int(round(T / dt))
        Y = np.array(Y0, dtype=float)
        ts, out = [0.0], [Y.copy()]
        for i in range(1, n + 1):
            k1 = self.rhs(Y)
            k2 = self.rhs(Y + 0.5 * dt * k1)
            k3 = self.rhs(Y + 0.5 * dt * k2)
            k4 = self.rhs(Y + dt * k3)
            Y = Y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(Y)):
                raise IntegrationBlowup(f"FD solver blew up after t={(i - 1) * dt:g}",
                                        (i - 1) * dt, (np.array(ts), np.array(out)))
            if i % stride == 0 or i == n:
                ts.append(i * dt)
                out.append(Y.copy())
        return np.array(ts), np.array(out)


def initial_nodal_state(solver: FDSolver, state_coeffs) -> np.ndarray:
    """Sample a (5, N) spectral state on the FD nodes."""
    return solver.sample(np.asarray(state_coeffs))


def compare(spec_t, spec_states, fd_t, fd_states, solver: FDSolver, n_modes: int):
    """Max-over-time L2 discrepancy of u and w after restricting FD to n_modes."""
    if spec_t.size != fd_t.size or np.max(np.abs(spec_t - fd_t)) > 1e-9:
        raise ValidationError("spectral and FD snapshots are not aligned in time")
    du = solver.restrict(fd_states[:, 0, :], n_modes) - spec_states[:, 0, :]
    dw = solver.restrict(fd_states[:, 2, :], n_modes) - spec_states[:, 2, :]
    return {
        "u": float(np.max(np.linalg.norm(du, axis=1))),
        "w": float(np.max(np.linalg.norm(dw, axis=1))),
    }
