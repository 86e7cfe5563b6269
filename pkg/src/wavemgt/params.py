from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .basis import DomainSpec
from .errors import ValidationError
from .nonlinearity import LogSource


@dataclass(frozen=True)
class ModelParams:
    """Physical and coupling constants plus the discretized domain.

    ``dim`` declares the space dimension the constants are meant for; the
    upper bound on gamma is enforced only when it is given. ``source=False``
    switches the logarithmic term off (used by the linear oracles).
    """

    tau: float
    b: float
    alpha: float
    gamma: float
    domain: DomainSpec
    dim: int | None = None
    source: bool = True

    def __post_init__(self):
        if not self.tau > 0:
            raise ValidationError(f"tau > 0 violated: {self.tau}")
        if not self.b > self.tau:
            raise ValidationError(f"b > tau violated: {self.b} <= {self.tau}")
        l1 = self.domain.lambda1
        if not abs(self.alpha) < l1:
            raise ValidationError(
                f"|alpha| < lambda_1 violated: {abs(self.alpha):g} >= {l1:g}"
            )
        LogSource(self.gamma, self.dim)

    @property
    def lambda1(self) -> float:
        return self.domain.lambda1

    @property
    def c_alpha(self) -> float:
        """Coercivity constant 1 - |alpha|/lambda_1."""
        return 1.0 - abs(self.alpha) / self.lambda1

    @property
    def src(self) -> LogSource:
        return LogSource(self.gamma, self.dim)

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def stability_ceiling(self, c: float = 1.0) -> float:
        """Largest explicit RK4 step the solver accepts."""
        lam_n = (self.domain.n_modes * np.pi / self.domain.length) ** 2
        return c / np.sqrt(lam_n * max(1.0, self.b / self.tau))
