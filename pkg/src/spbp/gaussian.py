"""Dense Gaussian-belief primitives.

Everything here works on small dense matrices (a dozen or so rows). Beliefs are
immutable: arrays are copied on construction and flagged read-only, so one
belief object can be handed to many neighbors without defensive copies.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatchError, EmptyInputError, NotPSDError, OutOfBoundsError

SYMMETRY_TOL = 1e-12


def symmetrize(C: np.ndarray) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    return 0.5 * (C + C.T)


def psd_floor(C: np.ndarray) -> float:
    """Most negative eigenvalue still accepted as rounding noise for `C`."""
    d = C.shape[0]
    return -1e-9 * max(1.0, float(np.trace(C)) / max(d, 1))


@dataclass(frozen=True, eq=False)
class GaussianBelief:
    """Mean vector and symmetric PSD covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float)
        if cov.ndim == 0:
            cov = cov.reshape(1, 1)
        if cov.shape != (mean.size, mean.size):
            raise DimensionMismatchError(
                f"mean has dimension {mean.size} but cov has shape {cov.shape}"
            )
        cov = symmetrize(cov)
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    def is_psd(self) -> bool:
        if self.dim == 0:
            return True
        return bool(np.linalg.eigvalsh(self.cov).min() >= psd_floor(self.cov))

    def allclose(self, other: "GaussianBelief", rtol: float = 1e-10, atol: float = 1e-12) -> bool:
        return (
            self.dim == other.dim
            and np.allclose(self.mean, other.mean, rtol=rtol, atol=atol)
            and np.allclose(self.cov, other.cov, rtol=rtol, atol=atol)
        )

    def __repr__(self) -> str:
        return f"GaussianBelief(mean={self.mean.tolist()}, cov={self.cov.tolist()})"


@dataclass(frozen=True)
class IndexRange:
    """Half-open slice [offset, offset + length) into a stacked vector."""

    offset: int
    length: int

    def __post_init__(self):
        if self.offset < 0:
            raise ValueError(f"offset must be nonnegative, got {self.offset}")
        if self.length < 1:
            raise ValueError(f"length must be positive, got {self.length}")

    @property
    def stop(self) -> int:
        return self.offset + self.length

    @property
    def slice(self) -> slice:
        return slice(self.offset, self.stop)

    def shifted(self, by: int) -> "IndexRange":
        return IndexRange(self.offset + by, self.length)


def default_pivot_tol(C: np.ndarray) -> float:
    d = C.shape[0]
    return 1e-12 * max(1.0, float(np.trace(C)) / d)


def _pivoting_cholesky(C: np.ndarray, tol: float) -> np.ndarray | None:
    """Column Cholesky that zeroes columns whose pivot falls in [-tol, tol].

    Returns None when a pivot is below -tol.
    """
    d = C.shape[0]
    L = np.zeros_like(C)
    for j in range(d):
        row = L[j, :j]
        pivot = C[j, j] - row @ row
        if pivot < -tol:
            return None
        if pivot <= tol:
            continue
        root = np.sqrt(pivot)
        L[j, j] = root
        if j + 1 < d:
            L[j + 1 :, j] = (C[j + 1 :, j] - L[j + 1 :, :j] @ row) / root
    return L


def psd_sqrt(C: np.ndarray, pivot_tol: float | None = None) -> np.ndarray:
    """Lower-triangular L with L @ L.T == C, tolerating singular PSD input.

    Zero-variance directions (anchor locations, for instance) produce zero
    columns instead of a factorization failure. If a pivot is significantly
    negative, the factorization is retried once on ``C + pivot_tol * I``.
    """
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {C.shape}")
    C = symmetrize(C)
    if C.shape[0] == 0:
        return np.zeros((0, 0))
    tol = default_pivot_tol(C) if pivot_tol is None else float(pivot_tol)

    L = _pivoting_cholesky(C, tol)
    if L is None:
        L = _pivoting_cholesky(C + tol * np.eye(C.shape[0]), tol)
    if L is None:
        raise NotPSDError(f"matrix is not positive semidefinite (pivot below -{tol:.3g})")
    return L


def block_diag(blocks: Sequence[np.ndarray]) -> np.ndarray:
    if len(blocks) == 0:
        raise EmptyInputError("block_diag needs at least one block")
    mats = [np.atleast_2d(np.asarray(b, dtype=float)) for b in blocks]
    for m in mats:
        if m.shape[0] != m.shape[1]:
            raise DimensionMismatchError(f"block of shape {m.shape} is not square")
    n = sum(m.shape[0] for m in mats)
    out = np.zeros((n, n))
    at = 0
    for m in mats:
        k = m.shape[0]
        out[at : at + k, at : at + k] = m
        at += k
    return out


def extract_marginal(b: GaussianBelief, r: IndexRange) -> GaussianBelief:
    if r.stop > b.dim:
        raise OutOfBoundsError(f"range [{r.offset}, {r.stop}) exceeds dimension {b.dim}")
    s = r.slice
    return GaussianBelief(b.mean[s], b.cov[s, s])


def stack_beliefs(beliefs: Sequence[GaussianBelief]) -> GaussianBelief:
    """Joint of independent beliefs: stacked means, block-diagonal covariance."""
    if len(beliefs) == 0:
        raise EmptyInputError("need at least one belief to stack")
    return GaussianBelief(
        np.concatenate([b.mean for b in beliefs]),
        block_diag([b.cov for b in beliefs]),
    )
