"""Decentralized cooperative self-localization of moving sensors.

Mobile sensors follow a constant-velocity model and measure their distance to
every other sensor; anchors sit at known locations. At every time step each
mobile sensor predicts its belief forward and then runs a few rounds of sigma
point belief propagation with the others.
"""

from __future__ import annotations

import dataclasses
import enum
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Iterator, Mapping

import numpy as np

from .engine import run_iteration
from .errors import ConfigError, EmptyLogsError, UpdateFailedError
from .factor_graph import (
    Edge,
    NodeSpec,
    PairFn,
    Schedule,
    SymmetrizeMode,
    Variant,
    build_graph,
    init_messages,
    symmetrize_observation,
)
from .gaussian import GaussianBelief, IndexRange, psd_sqrt

LOCATION = IndexRange(0, 2)
VELOCITY = IndexRange(2, 2)


def payload_size(d: int) -> int:
    """Reals needed to send a d-dimensional mean and the upper triangle of its covariance."""
    return d * (d + 3) // 2


def reals_in(message: GaussianBelief) -> int:
    d = message.dim
    return d + d * (d + 1) // 2


@dataclass(frozen=True, eq=False)
class MotionModel:
    G: np.ndarray
    W: np.ndarray
    sigma_u2: float

    def __post_init__(self):
        G = np.asarray(self.G, dtype=float)
        W = np.asarray(self.W, dtype=float)
        if G.shape != (4, 4) or W.shape != (4, 2):
            raise ValueError(f"expected G 4x4 and W 4x2, got {G.shape} and {W.shape}")
        if self.sigma_u2 < 0:
            raise ValueError("sigma_u2 must be nonnegative")
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "W", W)

    @property
    def process_cov(self) -> np.ndarray:
        return self.sigma_u2 * self.W @ self.W.T

    def propagate(self, x: np.ndarray, u: np.ndarray | None = None) -> np.ndarray:
        x = self.G @ np.asarray(x, dtype=float)
        if u is not None:
            x = x + self.W @ u
        return x


def default_motion_model(sigma_u2: float = 1e-4) -> MotionModel:
    """Constant-velocity model with unit sampling interval."""
    G = np.array(
        [
            [1.0, 0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, 1.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    W = np.array([[0.5, 0.0], [0.0, 0.5], [1.0, 0.0], [0.0, 1.0]])
    return MotionModel(G, W, sigma_u2)


def range_measurement(a: np.ndarray, b: np.ndarray, noise: float = 0.0) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))) + noise


def _distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.asarray(a) - np.asarray(b), axis=-1)


RANGE_FN = PairFn(_distance, out_dim=1, symmetric=True, vectorized=True)


def predict_belief(b: GaussianBelief, m: MotionModel) -> GaussianBelief:
    if b.dim != 4:
        raise ValueError(f"expected a 4-D belief, got dimension {b.dim}")
    return GaussianBelief(m.G @ b.mean, m.G @ b.cov @ m.G.T + m.process_cov)


DEFAULT_INITIAL_STATES = ((0.0, 0.0, 0.2, 1.0), (25.0, 50.0, 0.5, -0.8), (50.0, 0.0, -1.0, 0.4))
DEFAULT_ANCHORS = ((0.0, 25.0), (50.0, 25.0))
DEFAULT_C0 = (
    (1.0, 0.0, 0.0, 0.0),
    (0.0, 1.0, 0.0, 0.0),
    (0.0, 0.0, 0.01, 0.0),
    (0.0, 0.0, 0.0, 0.01),
)


@dataclass(frozen=True)
class ScenarioConfig:
    num_mobile: int = 3
    num_anchor: int = 2
    field_size: float = 50.0
    sigma_n2: float = 1.0
    sigma_u2: float = 1e-4
    T: int = 50
    P: int = 2
    initial_states: tuple[tuple[float, ...], ...] = DEFAULT_INITIAL_STATES
    anchor_locations: tuple[tuple[float, ...], ...] = DEFAULT_ANCHORS
    C0: tuple[tuple[float, ...], ...] = DEFAULT_C0
    seed: int = 0
    variant: str = Variant.SPAWN.value
    runs: int = 1000
    symmetrize: str = SymmetrizeMode.AVERAGE.value

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("num_mobile", "num_anchor"):
            if getattr(self, name) < 0:
                raise ConfigError(name, "must be nonnegative")
        for name in ("T", "P", "runs"):
            if getattr(self, name) < 1:
                raise ConfigError(name, "must be at least 1")
        if self.seed < 0:
            raise ConfigError("seed", "must be nonnegative")
        if self.field_size <= 0:
            raise ConfigError("field_size", "must be positive")
        if self.sigma_n2 < 0:
            raise ConfigError("sigma_n2", "must be nonnegative")
        if self.sigma_u2 < 0:
            raise ConfigError("sigma_u2", "must be nonnegative")
        if len(self.initial_states) != self.num_mobile:
            raise ConfigError("initial_states", f"expected {self.num_mobile} entries, got {len(self.initial_states)}")
        if any(len(x) != 4 for x in self.initial_states):
            raise ConfigError("initial_states", "each state needs 4 values (x1, x2, v1, v2)")
        if len(self.anchor_locations) != self.num_anchor:
            raise ConfigError("anchor_locations", f"expected {self.num_anchor} entries, got {len(self.anchor_locations)}")
        if any(len(a) != 2 for a in self.anchor_locations):
            raise ConfigError("anchor_locations", "each location needs 2 values")
        C0 = np.asarray(self.C0, dtype=float)
        if C0.shape != (4, 4) or not np.allclose(C0, C0.T):
            raise ConfigError("C0", "must be a symmetric 4x4 matrix")
        if np.linalg.eigvalsh(C0).min() < -1e-12:
            raise ConfigError("C0", "must be positive semidefinite")
        try:
            Variant(self.variant)
        except ValueError:
            raise ConfigError("variant", f"unknown variant {self.variant!r}") from None
        try:
            SymmetrizeMode(self.symmetrize)
        except ValueError:
            raise ConfigError("symmetrize", f"unknown mode {self.symmetrize!r}") from None

    @property
    def num_sensors(self) -> int:
        return self.num_mobile + self.num_anchor

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        for key in ("initial_states", "anchor_locations", "C0"):
            out[key] = [list(row) for row in out[key]]
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ScenarioConfig":
        """Build a config from plain data; missing keys take the built-in defaults."""
        if data is None:
            data = {}
        if not isinstance(data, Mapping):
            raise ConfigError("<root>", "expected a mapping of settings")
        known = {f.name: f for f in dataclasses.fields(cls)}
        kwargs: dict[str, Any] = {}
        for key, value in data.items():
            if key not in known:
                raise ConfigError(str(key), "unknown setting")
            kwargs[key] = _coerce(key, value, known[key].default)
        if "C0" in kwargs and np.ndim(kwargs["C0"]) == 1:
            kwargs["C0"] = tuple(tuple(row) for row in np.diag(kwargs["C0"]).tolist())
        if "initial_states" in kwargs and "num_mobile" not in kwargs:
            kwargs["num_mobile"] = len(kwargs["initial_states"])
        if "anchor_locations" in kwargs and "num_anchor" not in kwargs:
            kwargs["num_anchor"] = len(kwargs["anchor_locations"])
        return cls(**kwargs)


def _coerce(key: str, value: Any, default: Any) -> Any:
    try:
        if isinstance(default, bool):
            raise TypeError
        if isinstance(default, int):
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise TypeError
            return int(value)
        if isinstance(default, float):
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if isinstance(default, str):
            if not isinstance(value, str):
                raise TypeError
            return value
        if isinstance(default, tuple):
            if key == "C0" and all(isinstance(v, (int, float)) for v in value):
                return tuple(float(v) for v in value)
            return tuple(tuple(float(v) for v in row) for row in value)
    except (TypeError, ValueError):
        pass
    raise ConfigError(key, f"invalid value {value!r}")


@dataclass
class CommLedger:
    """Reals broadcast per (run, time, iteration, sensor), plus one-off anchor broadcasts."""

    reals: np.ndarray  # (runs, T, P, K), times 1..T, iterations 1..P
    setup_reals: np.ndarray  # (runs, K)

    def per_iteration(self, sensor: int) -> np.ndarray:
        return self.reals[:, :, :, sensor - 1]


@dataclass
class ScenarioLog:
    config: ScenarioConfig
    truth: np.ndarray  # (runs, T, M, 4)
    mean: np.ndarray  # (runs, T, M, 4)
    cov: np.ndarray  # (runs, T, M, 4, 4)
    ledger: CommLedger
    sigma_points: np.ndarray  # (runs, T, P, M)

    @property
    def errors(self) -> np.ndarray:
        return self.mean - self.truth

    @property
    def location_error(self) -> np.ndarray:
        return np.linalg.norm(self.errors[..., LOCATION.slice], axis=-1)

    @property
    def velocity_error(self) -> np.ndarray:
        return np.linalg.norm(self.errors[..., VELOCITY.slice], axis=-1)

    def records(self) -> Iterator[tuple]:
        """One row per (run, time, mobile sensor), times starting at 1."""
        loc, vel = self.location_error, self.velocity_error
        iu = np.triu_indices(4)
        runs, T, M = self.truth.shape[:3]
        for r in range(runs):
            for t in range(T):
                for m in range(M):
                    yield (
                        r,
                        t + 1,
                        m + 1,
                        *self.truth[r, t, m],
                        *self.mean[r, t, m],
                        *self.cov[r, t, m][iu],
                        loc[r, t, m],
                        vel[r, t, m],
                    )


@dataclass
class _RunResult:
    truth: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    reals: np.ndarray
    setup_reals: np.ndarray
    sigma_points: np.ndarray


def _run_once(cfg: ScenarioConfig, run: int, use_measurements: bool) -> _RunResult:
    rng = np.random.default_rng([cfg.seed, run])
    motion = default_motion_model(cfg.sigma_u2)
    M, A, K = cfg.num_mobile, cfg.num_anchor, cfg.num_sensors
    mode = SymmetrizeMode(cfg.symmetrize)
    schedule = Schedule(Variant(cfg.variant), cfg.P)
    C0 = np.asarray(cfg.C0, dtype=float)
    anchors = [np.asarray(a, dtype=float) for a in cfg.anchor_locations]
    noise_sd = np.sqrt(cfg.sigma_n2)
    input_sd = np.sqrt(cfg.sigma_u2)

    L0 = psd_sqrt(C0)
    truth = [np.asarray(x, dtype=float) for x in cfg.initial_states]
    beliefs = [GaussianBelief(x + L0 @ rng.standard_normal(4), C0) for x in truth]
    anchor_nodes = [NodeSpec(2, LOCATION, GaussianBelief(a, np.zeros((2, 2))), is_anchor=True) for a in anchors]

    out = _RunResult(
        truth=np.zeros((cfg.T, M, 4)),
        mean=np.zeros((cfg.T, M, 4)),
        cov=np.zeros((cfg.T, M, 4, 4)),
        reals=np.zeros((cfg.T, cfg.P, K), dtype=int),
        setup_reals=np.zeros(K, dtype=int),
        sigma_points=np.zeros((cfg.T, cfg.P, M), dtype=int),
    )
    # anchors announce their location once, before tracking starts
    for a in range(A):
        out.setup_reals[M + a] = anchors[a].size

    for i in range(cfg.T):
        truth = [motion.propagate(x, input_sd * rng.standard_normal(2)) for x in truth]
        locations = [x[LOCATION.slice] for x in truth] + anchors
        z = {
            (k, l): range_measurement(locations[k], locations[l], noise_sd * rng.standard_normal())
            for k in range(M)
            for l in range(K)
            if l != k
        }
        beliefs = [predict_belief(b, motion) for b in beliefs]

        if use_measurements and K > 1:
            edges = []
            for k in range(M):
                for l in range(k + 1, K):
                    if l < M:
                        obs, rule = symmetrize_observation(z[(k, l)], z[(l, k)], mode)
                        cov = rule(np.array([[cfg.sigma_n2]]))
                    else:
                        obs, cov = np.array([z[(k, l)]]), np.array([[cfg.sigma_n2]])
                    edges.append(Edge(k + 1, l + 1, cov, obs))
            nodes = [NodeSpec(4, LOCATION, b) for b in beliefs] + anchor_nodes
            graph = build_graph(nodes, edges, RANGE_FN)
            store = init_messages(graph, schedule.variant)
            for p in range(cfg.P):
                for k in range(M):
                    if graph.neighbors[k + 1]:
                        sent = store.message(k + 1, graph.neighbors[k + 1][0])
                        out.reals[i, p, k] = reals_in(sent)
                try:
                    store = run_iteration(graph, store, schedule)
                except UpdateFailedError as exc:
                    raise exc.with_context(run=run, time=i + 1) from exc.__cause__
                for k in range(M):
                    out.sigma_points[i, p, k] = store.sigma_point_counts[k + 1]
            beliefs = [store.beliefs[k + 1] for k in range(M)]

        for k in range(M):
            out.truth[i, k] = truth[k]
            out.mean[i, k] = beliefs[k].mean
            out.cov[i, k] = beliefs[k].cov
    return out


def run_scenario(
    cfg: ScenarioConfig, *, use_measurements: bool = True, workers: int = 1
) -> ScenarioLog:
    """Simulate ``cfg.runs`` independent runs; run r draws from the stream seeded by (seed, r).

    With ``use_measurements=False`` the beliefs are only predicted forward,
    which gives the prediction-only baseline on exactly the same trajectories.
    """
    if workers > 1 and cfg.runs > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(_run_once, [cfg] * cfg.runs, range(cfg.runs), [use_measurements] * cfg.runs)
            )
    else:
        results = [_run_once(cfg, r, use_measurements) for r in range(cfg.runs)]

    return ScenarioLog(
        config=cfg,
        truth=np.stack([r.truth for r in results]),
        mean=np.stack([r.mean for r in results]),
        cov=np.stack([r.cov for r in results]),
        ledger=CommLedger(
            reals=np.stack([r.reals for r in results]),
            setup_reals=np.stack([r.setup_reals for r in results]),
        ),
        sigma_points=np.stack([r.sigma_points for r in results]),
    )


class Component(str, enum.Enum):
    LOCATION = "location"
    VELOCITY = "velocity"
    BOTH = "both"


def rmse(logs: ScenarioLog, component: Component | str = Component.LOCATION) -> np.ndarray:
    """Root-mean-square error per time step, averaged over runs and mobile sensors."""
    if logs.truth.size == 0:
        raise EmptyLogsError("no logged states")
    component = Component(component)
    err = logs.errors
    if component is Component.LOCATION:
        err = err[..., LOCATION.slice]
    elif component is Component.VELOCITY:
        err = err[..., VELOCITY.slice]
    sq = np.sum(err**2, axis=-1)  # (runs, T, M)
    return np.sqrt(sq.mean(axis=(0, 2)))
