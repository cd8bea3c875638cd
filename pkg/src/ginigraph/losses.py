"""The three training objectives and their differentiable surrogates.

- utility: mean binary cross-entropy of node logits on an index set, computed
  through softplus so large logits cannot overflow.
- smoothness: the similarity-weighted Laplacian quadratic form
  sum_pairs w ||z_i - z_j||_2^2 (gradient 2 L Z, accumulated sparsely).
- tail surrogates: smooth stand-ins that focus on the largest pairwise gaps
  instead of their mean (softmax weighting with a temperature, or the mean of
  the top fraction of gaps).
- group welfare: a Nash-social-welfare style penalty on per-group smoothness
  traces; each ordered pair (g, h) contributes -(t_g/t_h - 1)(t_h/t_g - 1),
  which is (r - 1)^2 / r >= 0 for the ratio r, zero iff the traces match.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .errors import ContractError, DomainError
from .graph import GroupPartition, SimilaritySet

Array = np.ndarray

TRACE_FLOOR = 1e-8


def utility_loss(logits: Tensor, labels: Array, index: Array, tape: Tape) -> Tensor:
    """Mean BCE over index: y softplus(-z) + (1 - y) softplus(z)."""
    index = np.asarray(index, dtype=np.int64)
    if index.size == 0:
        raise ContractError("utility loss over an empty index set")
    y = np.asarray(labels, dtype=np.float64)[index]
    if np.any((y != 0.0) & (y != 1.0)):
        raise DomainError("utility loss needs binary labels on the index set")
    z = ad.gather_rows(logits, index)
    y_pos = tape.leaf(y[:, None], "y")
    y_neg = tape.leaf((1.0 - y)[:, None], "1-y")
    terms = ad.add(
        ad.hadamard(y_pos, ad.softplus(ad.scale(z, -1.0))),
        ad.hadamard(y_neg, ad.softplus(z)),
    )
    return ad.mean_all(terms)


def smoothness_loss(z: Tensor, similarity: SimilaritySet) -> Tensor:
    """Laplacian quadratic form over the similarity pairs, as a tape scalar."""
    rows, cols, weights = similarity.pair_arrays()
    return ad.quadratic_pair_form(z, rows, cols, weights)


def pair_gap_tensor(z: Tensor, similarity: SimilaritySet) -> Tensor:
    """Column of euclidean gaps ||z_i - z_j||_2 over the stored pairs."""
    rows, cols, _ = similarity.pair_arrays()
    if rows.size == 0:
        raise ContractError("similarity set has no pairs")
    diff = ad.subtract(ad.gather_rows(z, rows), ad.gather_rows(z, cols))
    return ad.sqrt(ad.row_sum(ad.hadamard(diff, diff)))


def surrogate_loss(
    z: Tensor,
    similarity: SimilaritySet,
    mode: str,
    temperature: float = 1.0,
    fraction: float = 0.05,
) -> Tensor:
    """Smooth emphasis on the worst pairwise gaps.

    softmax: sum_p softmax(gap/temperature)_p * gap_p, a soft maximum that
    approaches the largest gap as temperature -> 0.
    topk: mean of the ceil(fraction * P) largest gaps; the selection is made
    on forward values, the selected gaps stay differentiable.
    """
    gaps = pair_gap_tensor(z, similarity)
    p = gaps.shape[0]
    if mode == "softmax":
        if temperature <= 0:
            raise ContractError("temperature must be positive")
        weights = ad.segment_softmax(
            ad.scale(gaps, 1.0 / temperature), np.zeros(p, dtype=np.int64), 1
        )
        return ad.sum_all(ad.hadamard(weights, gaps))
    if mode == "topk":
        if not 0 < fraction <= 1:
            raise ContractError("fraction must be in (0, 1]")
        k = max(1, math.ceil(fraction * p))
        largest = np.argsort(-gaps.values[:, 0], kind="stable")[:k]
        return ad.mean_all(ad.gather_rows(gaps, largest))
    raise ContractError(f"unknown surrogate mode '{mode}' (softmax or topk)")


# ---------------------------------------------------------------------------
# Group welfare
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GroupContext:
    """Per-group membership and restricted similarity, precomputed once."""

    members: tuple[Array, ...]
    sims: tuple[SimilaritySet, ...]

    @property
    def m(self) -> int:
        return len(self.members)


def group_context(similarity: SimilaritySet, partition: GroupPartition) -> GroupContext:
    if partition.group_ids.size != similarity.n:
        raise ContractError("partition size must match the similarity set")
    members = tuple(partition.members(g) for g in range(partition.m))
    sims = tuple(similarity.restrict(mem) for mem in members)
    return GroupContext(members=members, sims=sims)


def group_trace_tensors(z: Tensor, ctx: GroupContext) -> list[Tensor]:
    """Per-group smoothness traces with a small floor, as 1x1 tensors."""
    traces = []
    for mem, sim in zip(ctx.members, ctx.sims):
        zg = ad.gather_rows(z, mem)
        rows, cols, weights = sim.pair_arrays()
        traces.append(ad.add_const(ad.quadratic_pair_form(zg, rows, cols, weights), TRACE_FLOOR))
    return traces


def group_welfare_loss(z: Tensor, ctx: GroupContext) -> Tensor:
    """Nash-welfare penalty on trace ratios, averaged over ordered group pairs."""
    if ctx.m < 2:
        raise ContractError("group welfare needs at least two groups")
    traces = group_trace_tensors(z, ctx)
    total: Tensor | None = None
    for i in range(ctx.m):
        for j in range(ctx.m):
            if i == j:
                continue
            forward = ad.add_const(ad.divide(traces[i], traces[j]), -1.0)
            backward = ad.add_const(ad.divide(traces[j], traces[i]), -1.0)
            term = ad.hadamard(forward, backward)
            total = term if total is None else ad.add(total, term)
    return ad.scale(total, -1.0 / (ctx.m * (ctx.m - 1)))


def nswp_value(values) -> float:
    """Plain-number version of the group welfare penalty (for audits/oracles).

    Unlike the tape path, no floor is added: callers pass positive statistics
    directly, so (2, 1) -> 0.5 holds exactly.
    """
    vals = [float(v) for v in values]
    m = len(vals)
    if m < 2:
        raise ContractError("need at least two groups")
    if min(vals) <= 0:
        raise DomainError("group statistics must be positive")
    total = 0.0
    for i in range(m):
        for j in range(m):
            if i != j:
                total += (vals[i] / vals[j] - 1.0) * (vals[j] / vals[i] - 1.0)
    return -total / (m * (m - 1))


def combine_losses(terms: list[Tensor], betas) -> Tensor:
    """Weighted sum beta_1 L_1 + ... over matching lists."""
    if len(terms) != len(betas) or not terms:
        raise ContractError("terms and betas must align and be nonempty")
    total = ad.scale(terms[0], float(betas[0]))
    for term, beta in zip(terms[1:], betas[1:]):
        total = ad.add(total, ad.scale(term, float(beta)))
    return total
