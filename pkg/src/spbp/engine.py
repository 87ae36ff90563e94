"""Sigma point belief propagation on pairwise factor graphs.

A node's update works in the composite space of its own full state stacked
with the shared substates of its neighbors. The composite prior is the
block-diagonal joint of the node prior and the incoming messages; one
sigma-point measurement update against all incident observations yields the
composite belief, and the node's block of it is the new marginal belief.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionMismatchError, SPBPError, UpdateFailedError
from .factor_graph import Graph, MessageStore, Schedule, Variant, broadcast_messages, init_messages
from .gaussian import GaussianBelief, IndexRange, block_diag, extract_marginal, stack_beliefs
from .sigma_points import UTParams, default_params, generate, moment_update, unscented_transform

ParamsFor = Callable[[int], UTParams]


@dataclass(frozen=True)
class CompositeLayout:
    """Where each node's entry sits in a composite vector.

    ``order[0]`` is the node being updated (full state); the remaining
    entries are neighbors (shared substates).
    """

    order: tuple[int, ...]
    ranges: tuple[IndexRange, ...]
    total_dim: int

    def range_of(self, node: int) -> IndexRange:
        return self.ranges[self.order.index(node)]


@dataclass(frozen=True, eq=False)
class CompositeObservation:
    h: Callable[[np.ndarray], np.ndarray]
    noise_cov: np.ndarray
    obs: np.ndarray

    @property
    def dim(self) -> int:
        return self.obs.size


def compose_prior(
    own: GaussianBelief,
    incoming: Sequence[GaussianBelief],
    ids: Sequence[int] | None = None,
) -> tuple[GaussianBelief, CompositeLayout]:
    """Stack a node prior with incoming messages treated as independent.

    ``ids`` names the entries (own id first); defaults to 0, 1, 2, ...
    """
    entries = [own, *incoming]
    ids = tuple(range(len(entries))) if ids is None else tuple(ids)
    if len(ids) != len(entries):
        raise DimensionMismatchError(f"{len(ids)} ids for {len(entries)} composite entries")
    ranges, at = [], 0
    for b in entries:
        ranges.append(IndexRange(at, b.dim))
        at += b.dim
    layout = CompositeLayout(order=ids, ranges=tuple(ranges), total_dim=at)
    return stack_beliefs(entries), layout


def composite_observation(graph: Graph, layout: CompositeLayout) -> CompositeObservation:
    """Stack the observations between ``layout.order[0]`` and each neighbor entry."""
    k = layout.order[0]
    own_shared = graph.node(k).shared.shifted(layout.ranges[0].offset).slice
    terms = []
    for l, r in zip(layout.order[1:], layout.ranges[1:]):
        edge = graph.edge(k, l)
        fn = graph.pair_fn_for(edge)
        reps = edge.obs.size // fn.out_dim
        terms.append((edge, fn, reps, r.slice, k == edge.k))

    def h(x: np.ndarray) -> np.ndarray:
        # accepts one composite vector or a stack of them, one per row
        X = np.atleast_2d(x)
        out = [np.zeros((X.shape[0], 0))]
        for _, fn, reps, nb, own_first in terms:
            a, b = X[:, own_shared], X[:, nb]
            y = fn.batch(a, b) if own_first else fn.batch(b, a)
            out.append(np.tile(y, (1, reps)) if reps > 1 else y)
        Y = np.concatenate(out, axis=1)
        return Y[0] if np.ndim(x) == 1 else Y

    if not terms:
        return CompositeObservation(h, np.zeros((0, 0)), np.zeros(0))
    return CompositeObservation(
        h=h,
        noise_cov=block_diag([t[0].noise_cov for t in terms]),
        obs=np.concatenate([t[0].obs for t in terms]),
    )


def update_composite(
    prior_composite: GaussianBelief,
    cobs: CompositeObservation,
    params: UTParams | None = None,
) -> tuple[GaussianBelief, int]:
    """Sigma-point update of the composite belief; also returns the sigma-point count."""
    if cobs.dim == 0:
        return prior_composite, 0
    J = prior_composite.dim
    s = generate(prior_composite.mean, prior_composite.cov, params or default_params(J))
    mu_y, C_y, C_xy = unscented_transform(s, cobs.h, batched=True)
    posterior = moment_update(prior_composite, mu_y, C_y, C_xy, cobs.noise_cov, cobs.obs)
    return posterior, len(s)


def update_belief(
    prior_composite: GaussianBelief,
    layout: CompositeLayout,
    cobs: CompositeObservation,
    params: UTParams | None = None,
) -> GaussianBelief:
    if prior_composite.dim != layout.total_dim:
        raise DimensionMismatchError(
            f"composite prior has dimension {prior_composite.dim}, layout expects {layout.total_dim}"
        )
    posterior, _ = update_composite(prior_composite, cobs, params)
    return extract_marginal(posterior, layout.ranges[0])


def _incoming(store: MessageStore, receiver: int, senders: Sequence[int]) -> list[GaussianBelief]:
    return [store.message(l, receiver) for l in senders]


def node_belief(
    graph: Graph, k: int, store: MessageStore, params_for: ParamsFor = default_params
) -> tuple[GaussianBelief, int]:
    """New belief of node k from the messages in ``store``, plus sigma-point count."""
    spec = graph.node(k)
    nbrs = graph.neighbors[k]
    if spec.is_anchor or not nbrs:
        return spec.prior, 0
    prior, layout = compose_prior(spec.prior, _incoming(store, k, nbrs), (k, *nbrs))
    posterior, n_points = update_composite(
        prior, composite_observation(graph, layout), params_for(layout.total_dim)
    )
    return extract_marginal(posterior, layout.ranges[0]), n_points


def extrinsic_message(
    l: int, k: int, graph: Graph, store: MessageStore, params_for: ParamsFor = default_params
) -> GaussianBelief:
    """Message from l to k over l's shared substate, excluding everything k sent."""
    graph.edge(k, l)  # raises unless adjacent
    spec = graph.node(l)
    others = tuple(m for m in graph.neighbors[l] if m != k)
    if spec.is_anchor or not others:
        return spec.shared_prior()
    prior, layout = compose_prior(spec.prior, _incoming(store, l, others), (l, *others))
    posterior, _ = update_composite(
        prior, composite_observation(graph, layout), params_for(layout.total_dim)
    )
    return extract_marginal(posterior, spec.shared.shifted(layout.ranges[0].offset))


def run_iteration(
    graph: Graph,
    store: MessageStore,
    schedule: Schedule | None = None,
    params_for: ParamsFor = default_params,
) -> MessageStore:
    """One synchronous round: every output is computed from ``store`` only."""
    variant = schedule.variant if schedule is not None else store.variant
    p = store.iteration + 1
    beliefs: dict[int, GaussianBelief] = {}
    counts: dict[int, int] = {}
    for k in graph.ids:
        try:
            beliefs[k], counts[k] = node_belief(graph, k, store, params_for)
        except SPBPError as exc:
            raise UpdateFailedError(f"belief update failed: {exc}", node=k, iteration=p) from exc

    if variant is Variant.SPAWN:
        messages = broadcast_messages(graph, beliefs)
    else:
        messages = {}
        for l, k in graph.directed_pairs():
            try:
                messages[(l, k)] = extrinsic_message(l, k, graph, store, params_for)
            except SPBPError as exc:
                raise UpdateFailedError(
                    f"message {l}->{k} failed: {exc}", node=l, iteration=p
                ) from exc
    return MessageStore(
        iteration=p, variant=variant, beliefs=beliefs, messages=messages, sigma_point_counts=counts
    )


def run(
    graph: Graph,
    schedule: Schedule,
    params_for: ParamsFor = default_params,
    store: MessageStore | None = None,
) -> MessageStore:
    """Run ``schedule.iterations`` rounds starting from the prior messages."""
    store = init_messages(graph, schedule.variant) if store is None else store
    for _ in range(schedule.iterations):
        store = run_iteration(graph, store, schedule, params_for)
    return store
