"""Sigma points and the unscented transform, plus the measurement update built on them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatchError, SingularInnovationError
from .gaussian import GaussianBelief, psd_sqrt, symmetrize

MAX_INNOVATION_COND = 1e14

MeasurementFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class UTParams:
    """Scaled unscented-transform tuning (alpha, beta, kappa)."""

    alpha: float = 1.0
    beta: float = 2.0
    kappa: float = 0.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")

    def lam(self, J: int) -> float:
        return self.alpha**2 * (J + self.kappa) - J

    def check(self, J: int) -> None:
        if J + self.lam(J) <= 0:
            raise ValueError(f"J + lambda must be positive; got {J + self.lam(J)} for J={J}")


def default_params(J: int) -> UTParams:
    """alpha=1, beta=2, kappa=max(0, 3-J): nonnegative weights at every dimension."""
    if J < 1:
        raise ValueError(f"dimension must be positive, got {J}")
    return UTParams(alpha=1.0, beta=2.0, kappa=float(max(0, 3 - J)))


@dataclass(frozen=True, eq=False)
class SigmaPointSet:
    points: np.ndarray  # (2J+1, J)
    wm: np.ndarray
    wc: np.ndarray

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def mean(self) -> np.ndarray:
        return self.wm @ self.points

    def cov(self) -> np.ndarray:
        dev = self.points - self.mean()
        return symmetrize((self.wc[:, None] * dev).T @ dev)


def generate(mu: np.ndarray, C: np.ndarray, p: UTParams | None = None) -> SigmaPointSet:
    mu = np.asarray(mu, dtype=float).reshape(-1)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    J = mu.size
    if C.shape != (J, J):
        raise DimensionMismatchError(f"mean has dimension {J} but cov has shape {C.shape}")
    p = default_params(J) if p is None else p
    p.check(J)

    lam = p.lam(J)
    L = psd_sqrt(C)
    spread = np.sqrt(J + lam) * L.T  # row i is the scaled i-th column of L
    points = np.empty((2 * J + 1, J))
    points[0] = mu
    points[1 : J + 1] = mu + spread
    points[J + 1 :] = mu - spread

    wm = np.full(2 * J + 1, 1.0 / (2.0 * (J + lam)))
    wc = wm.copy()
    wm[0] = lam / (J + lam)
    wc[0] = wm[0] + (1.0 - p.alpha**2 + p.beta)
    return SigmaPointSet(points, wm, wc)


def unscented_transform(
    s: SigmaPointSet, H: MeasurementFn, batched: bool = False
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Push sigma points through H; return (mu_y, C_y, C_xy).

    With ``batched=True``, H is called once on the (2J+1, J) array of points
    and must return one row per point.
    """
    if batched:
        Y = np.asarray(H(s.points), dtype=float)
        Y = Y.reshape(len(s), -1)
    else:
        outputs = [np.atleast_1d(np.asarray(H(x), dtype=float)).reshape(-1) for x in s.points]
        m = outputs[0].size
        if any(y.size != m for y in outputs):
            sizes = sorted({y.size for y in outputs})
            raise DimensionMismatchError(f"H returned outputs of differing lengths {sizes}")
        Y = np.vstack(outputs)

    mu_y = s.wm @ Y
    dy = Y - mu_y
    dx = s.points - s.wm @ s.points
    weighted = s.wc[:, None] * dy
    C_y = symmetrize(weighted.T @ dy)
    C_xy = dx.T @ weighted
    return mu_y, C_y, C_xy


def moment_update(
    prior: GaussianBelief,
    mu_y: np.ndarray,
    C_y: np.ndarray,
    C_xy: np.ndarray,
    Cn: np.ndarray,
    z: np.ndarray,
) -> GaussianBelief:
    """Linear-MMSE update from (approximate) joint moments of state and measurement."""
    z = np.atleast_1d(np.asarray(z, dtype=float)).reshape(-1)
    Cn = np.atleast_2d(np.asarray(Cn, dtype=float))
    if Cn.shape != C_y.shape or z.size != mu_y.size:
        raise DimensionMismatchError(
            f"measurement dimension {mu_y.size} does not match z ({z.size}) / Cn {Cn.shape}"
        )
    S = symmetrize(C_y + Cn)
    if not np.all(np.isfinite(S)) or np.linalg.cond(S) > MAX_INNOVATION_COND:
        raise SingularInnovationError("innovation covariance is numerically singular")
    # K = C_xy S^-1, computed as a solve against the symmetric S
    K = np.linalg.solve(S, C_xy.T).T
    mean = prior.mean + K @ (z - mu_y)
    cov = prior.cov - K @ S @ K.T
    return GaussianBelief(mean, cov)


def sp_measurement_update(
    prior: GaussianBelief,
    H: MeasurementFn,
    Cn: np.ndarray,
    z: np.ndarray,
    p: UTParams | None = None,
) -> GaussianBelief:
    s = generate(prior.mean, prior.cov, p)
    mu_y, C_y, C_xy = unscented_transform(s, H)
    return moment_update(prior, mu_y, C_y, C_xy, Cn, z)
