"""Reference inference used to check the sigma-point machinery.

Nothing here imports the sigma-point or engine modules: the exact solver is a
joint Gaussian conditioning, and the Monte Carlo estimator is plain
self-normalized importance sampling with the prior as proposal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DegenerateWeightsError, DimensionMismatchError, SingularSystemError
from .gaussian import GaussianBelief

MIN_SAMPLES = 10_000
MIN_ESS = 10.0


@dataclass
class LinearTerm:
    """One pairwise observation z = A_k x_k + A_l x_l + n, n ~ N(0, noise_cov)."""

    A_k: np.ndarray
    A_l: np.ndarray
    noise_cov: np.ndarray


@dataclass
class LinearPairModel:
    priors: Sequence[GaussianBelief]
    terms: dict[tuple[int, int], LinearTerm] = field(default_factory=dict)

    @property
    def offsets(self) -> list[int]:
        out, at = [], 0
        for b in self.priors:
            out.append(at)
            at += b.dim
        return out

    @property
    def total_dim(self) -> int:
        return sum(b.dim for b in self.priors)


def exact_gaussian_marginals(
    model: LinearPairModel, observations: Mapping[tuple[int, int], np.ndarray]
) -> list[GaussianBelief]:
    """Exact per-node posteriors of a linear-Gaussian pairwise model.

    Node ids are 1-based indices into ``model.priors``. Conditioning is done
    on the stacked joint in covariance form, so zero-variance priors are fine.
    """
    offsets = model.offsets
    n = model.total_dim
    mu = np.concatenate([b.mean for b in model.priors])
    C = np.zeros((n, n))
    for b, o in zip(model.priors, offsets):
        C[o : o + b.dim, o : o + b.dim] = b.cov

    rows, zs, noises = [], [], []
    for (k, l), term in model.terms.items():
        if (k, l) not in observations:
            continue
        A_k = np.atleast_2d(term.A_k)
        A_l = np.atleast_2d(term.A_l)
        m = A_k.shape[0]
        A = np.zeros((m, n))
        ok, ol = offsets[k - 1], offsets[l - 1]
        if A_k.shape[1] != model.priors[k - 1].dim or A_l.shape[1] != model.priors[l - 1].dim:
            raise DimensionMismatchError(f"term ({k}, {l}) does not match node dimensions")
        A[:, ok : ok + A_k.shape[1]] = A_k
        A[:, ol : ol + A_l.shape[1]] = A_l
        rows.append(A)
        zs.append(np.atleast_1d(np.asarray(observations[(k, l)], dtype=float)))
        noises.append(np.atleast_2d(term.noise_cov))

    if rows:
        A = np.vstack(rows)
        z = np.concatenate(zs)
        R = np.zeros((A.shape[0], A.shape[0]))
        at = 0
        for Rk in noises:
            R[at : at + Rk.shape[0], at : at + Rk.shape[0]] = Rk
            at += Rk.shape[0]
        S = A @ C @ A.T + R
        if np.linalg.cond(S) > 1e14:
            raise SingularSystemError("observation covariance of the joint model is singular")
        gain = np.linalg.solve(S, A @ C).T
        mu = mu + gain @ (z - A @ mu)
        C = C - gain @ S @ gain.T

    return [GaussianBelief(mu[o : o + b.dim], C[o : o + b.dim, o : o + b.dim]) for b, o in zip(model.priors, offsets)]


@dataclass
class MCEstimate:
    means: list[np.ndarray]
    std_errors: list[np.ndarray]
    ess: float


def mc_posterior_mean(
    priors: Sequence[GaussianBelief],
    pair_fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
    noise: Mapping[tuple[int, int], np.ndarray] | float,
    observations: Mapping[tuple[int, int], np.ndarray],
    num_samples: int = 1_000_000,
    seed: int = 0,
) -> MCEstimate:
    """Posterior means by importance sampling from the independent priors.

    ``pair_fn(a, b)`` must broadcast over a leading sample axis, i.e. accept
    arrays of shape (N, d) and return (N,) or (N, m). ``noise`` is either a
    scalar variance shared by all observations or a per-edge covariance.
    """
    if num_samples < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {num_samples}")
    rng = np.random.default_rng(seed)
    samples = []
    for b in priors:
        z = rng.standard_normal((num_samples, b.dim))
        # eigh-based square root: valid for singular priors as well
        w, V = np.linalg.eigh(b.cov)
        root = V * np.sqrt(np.clip(w, 0.0, None))
        samples.append(b.mean + z @ root.T)

    log_w = np.zeros(num_samples)
    for (k, l), z_obs in observations.items():
        y = np.asarray(pair_fn(samples[k - 1], samples[l - 1]), dtype=float).reshape(num_samples, -1)
        z_obs = np.atleast_1d(np.asarray(z_obs, dtype=float))
        if np.isscalar(noise):
            R = float(noise) * np.eye(z_obs.size)
        else:
            R = np.atleast_2d(np.asarray(noise[(k, l)], dtype=float))
        resid = z_obs - y
        log_w -= 0.5 * np.einsum("ni,ij,nj->n", resid, np.linalg.inv(R), resid)

    log_w -= log_w.max()
    w = np.exp(log_w)
    w /= w.sum()
    ess = 1.0 / float(np.sum(w**2))
    if ess < MIN_ESS:
        raise DegenerateWeightsError(f"effective sample size {ess:.2f} below {MIN_ESS}")

    means, errors = [], []
    for x in samples:
        m = w @ x
        # delta-method standard error of a self-normalized estimator
        se = np.sqrt(np.sum((w[:, None] ** 2) * (x - m) ** 2, axis=0))
        means.append(m)
        errors.append(se)
    return MCEstimate(means=means, std_errors=errors, ess=ess)
