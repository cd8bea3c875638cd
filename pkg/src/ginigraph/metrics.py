"""Fairness and utility metrics for embedding matrices.

All fairness quantities are driven by a SimilaritySet: only stored pairs
contribute, weighted by their similarity. Conventions:

- individual unfairness (IF) is the similarity-weighted sum of squared
  euclidean gaps over unordered pairs, i.e. the Laplacian quadratic form
  Tr(Z^T L Z); it is reported raw and only divided by 1000 at presentation.
- the embedding Gini normalizes the similarity-weighted L1 gaps by twice the
  population total mass, so it is scale invariant and sits in [0, 1].
- group disparity (GDIF) of two nonnegative statistics is max(a/b, b/a) with
  a tiny floor on both sides; it is >= 1 with equality iff the statistics match.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import ContractError, DomainError
from .graph import GroupPartition, SimilaritySet

Array = np.ndarray

RATIO_FLOOR = 1e-12


def _pair_gaps(similarity: SimilaritySet, z: Array, order: int) -> tuple[Array, Array]:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] != similarity.n:
        raise ContractError("embeddings must be (n, c) matching the similarity set")
    diff = z[similarity.rows] - z[similarity.cols]
    if order == 1:
        gaps = np.sum(np.abs(diff), axis=1)
    else:
        gaps = np.sqrt(np.sum(diff * diff, axis=1))
    return gaps, similarity.weights


def trace_form(similarity: SimilaritySet, z: Array) -> float:
    """Tr(Z^T L Z) = sum over unordered pairs of w * ||z_i - z_j||_2^2."""
    gaps, w = _pair_gaps(similarity, z, order=2)
    return float(np.sum(w * gaps * gaps))


def individual_unfairness(similarity: SimilaritySet, z: Array) -> float:
    """Alias for the Laplacian quadratic form, reported as "IF"."""
    return trace_form(similarity, z)


def embedding_gini(similarity: SimilaritySet, z: Array) -> float:
    """Similarity-weighted Gini coefficient of pairwise embedding gaps.

    Over ordered pairs: sum_ij S_ij ||z_i - z_j||_1 / (2 n sum_i ||z_i||_1),
    computed from the unordered storage. Scale invariant; 0 iff all connected
    pairs coincide. Raises DomainError when the embedding has no mass.
    """
    z = np.asarray(z, dtype=np.float64)
    total_mass = float(np.sum(np.abs(z)))
    if total_mass == 0.0:
        raise DomainError("Gini undefined for an all-zero embedding")
    gaps, w = _pair_gaps(similarity, z, order=1)
    return float(np.sum(w * gaps) / (similarity.n * total_mass))


def lipschitz_constant(
    similarity: SimilaritySet, z: Array, delta: float = 1e-6
) -> float:
    """max over stored pairs of ||z_i - z_j||_1 / d_ij with d_ij = 1/(w_ij + delta).

    Equals max w-adjusted L1 gap; 0.0 when the set has no pairs.
    """
    if delta < 0:
        raise DomainError("delta must be nonnegative")
    gaps, w = _pair_gaps(similarity, z, order=1)
    if gaps.size == 0:
        return 0.0
    return float(np.max(gaps * (w + delta)))


def gdif(a: float, b: float) -> float:
    """Disparity ratio max(a/b, b/a) of two nonnegative statistics (floored)."""
    if a < 0 or b < 0:
        raise DomainError("gdif expects nonnegative statistics")
    a = max(float(a), RATIO_FLOOR)
    b = max(float(b), RATIO_FLOOR)
    return max(a / b, b / a)


def average_gdif(values) -> float:
    """Mean disparity ratio over ordered group pairs: needs at least 2 groups."""
    values = [float(v) for v in values]
    m = len(values)
    if m < 2:
        raise ContractError("average_gdif needs at least two groups")
    total = 0.0
    for i in range(m):
        for j in range(m):
            if i != j:
                total += gdif(values[i], values[j])
    return total / (m * (m - 1))


def group_traces(
    similarity: SimilaritySet, z: Array, partition: GroupPartition
) -> list[float]:
    """Per-group Laplacian quadratic form over the group-restricted similarity."""
    z = np.asarray(z, dtype=np.float64)
    if partition.group_ids.size != similarity.n:
        raise ContractError("partition size must match the similarity set")
    return [
        trace_form(similarity.restrict(members), z[members])
        for members in (partition.members(g) for g in range(partition.m))
    ]


def group_ginis(
    similarity: SimilaritySet, z: Array, partition: GroupPartition
) -> list[float]:
    """Per-group embedding Gini over the group-restricted similarity."""
    z = np.asarray(z, dtype=np.float64)
    if partition.group_ids.size != similarity.n:
        raise ContractError("partition size must match the similarity set")
    return [
        embedding_gini(similarity.restrict(members), z[members])
        for members in (partition.members(g) for g in range(partition.m))
    ]


def tail_fraction(similarity: SimilaritySet, z: Array, epsilon: float) -> float:
    """Fraction of stored pairs whose L2 gap is at least epsilon."""
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    gaps, _ = _pair_gaps(similarity, z, order=2)
    if gaps.size == 0:
        return 0.0
    return float(np.mean(gaps >= epsilon))


def tail_bound(similarity: SimilaritySet, z: Array, epsilon: float) -> float:
    """Markov bound mean(gap)/epsilon on the tail fraction."""
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    gaps, _ = _pair_gaps(similarity, z, order=2)
    if gaps.size == 0:
        return 0.0
    return float(np.mean(gaps) / epsilon)


# ---------------------------------------------------------------------------
# Utility metrics
# ---------------------------------------------------------------------------


def rank_auc(scores: Array, labels: Array) -> float:
    """Area under the ROC curve via average ranks; ties count half.

    Requires both classes present.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ContractError("scores and labels must align")
    pos = labels == 1
    neg = labels == 0
    n_pos, n_neg = int(pos.sum()), int(neg.sum())
    if n_pos == 0 or n_neg == 0:
        raise DomainError("AUC needs both classes present")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def f1_score(scores: Array, labels: Array, threshold: float = 0.5) -> float:
    """F1 of thresholded scores against binary labels (0.0 when degenerate)."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    pred = scores >= threshold
    tp = int(np.sum(pred & (labels == 1)))
    fp = int(np.sum(pred & (labels == 0)))
    fn = int(np.sum(~pred & (labels == 1)))
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else 2.0 * tp / denom


def equal_opportunity_gap(
    scores: Array, labels: Array, group_ids: Array, threshold: float = 0.5
) -> float | None:
    """Largest true-positive-rate gap between groups, in percentage points.

    Groups without positive examples are skipped with a warning; None when
    fewer than two groups remain.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    group_ids = np.asarray(group_ids).ravel()
    rates = []
    for g in np.unique(group_ids):
        mask = (group_ids == g) & (labels == 1)
        if not np.any(mask):
            warnings.warn(f"group {g} has no positives; excluded from EO")
            continue
        rates.append(float(np.mean(scores[mask] >= threshold)))
    if len(rates) < 2:
        warnings.warn("EO undefined: fewer than two groups with positives")
        return None
    return 100.0 * (max(rates) - min(rates))


# ---------------------------------------------------------------------------
# Report container
# ---------------------------------------------------------------------------

REPORT_FIELDS = (
    "auc",
    "f1",
    "eo",
    "individual_unfairness",
    "gini",
    "gd_trace",
    "gd_gini",
    "a_gdif",
    "lipschitz",
)


@dataclass
class MetricsReport:
    """One audited embedding: utility, individual fairness, group fairness.

    Utility fields are None when no scores/labels were supplied; group fields
    are None when the partition has fewer than two groups.
    """

    auc: float | None
    f1: float | None
    eo: float | None
    individual_unfairness: float
    gini: float | None
    gd_trace: float | None
    gd_gini: float | None
    a_gdif: float | None
    lipschitz: float
    group_sizes: tuple[int, ...] = ()
    group_traces: tuple[float, ...] = ()
    group_ginis: tuple[float, ...] = ()
    warnings: tuple[str, ...] = field(default=())

    def to_json_dict(self) -> dict:
        out = {name: getattr(self, name) for name in REPORT_FIELDS}
        out["group_sizes"] = list(self.group_sizes)
        out["group_traces"] = list(self.group_traces)
        out["group_ginis"] = list(self.group_ginis)
        out["warnings"] = list(self.warnings)
        return out

    def to_csv_row(self, thousands: bool = False) -> list[str]:
        """Fixed-order row; thousands divides IF by 1000 for presentation."""
        row = []
        for name in REPORT_FIELDS:
            value = getattr(self, name)
            if value is None:
                row.append("")
                continue
            if thousands and name == "individual_unfairness":
                value = value / 1000.0
            row.append(f"{value:.6g}")
        return row


def compute_report(
    z: Array,
    similarity: SimilaritySet,
    partition: GroupPartition | None,
    scores: Array | None = None,
    labels: Array | None = None,
    threshold: float = 0.5,
    delta: float = 1e-6,
) -> MetricsReport:
    """Assemble the full audit for one embedding matrix."""
    z = np.asarray(z, dtype=np.float64)
    notes: list[str] = []
    auc = f1 = eo = None
    if scores is not None and labels is not None:
        labeled = np.asarray(labels) >= 0
        s, y = np.asarray(scores)[labeled], np.asarray(labels)[labeled]
        try:
            auc = rank_auc(s, y)
        except DomainError as exc:
            notes.append(str(exc))
        f1 = f1_score(s, y, threshold)
        if partition is not None:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                eo = equal_opportunity_gap(
                    s, y, partition.group_ids[labeled], threshold
                )
            notes.extend(str(c.message) for c in caught)
    if_value = individual_unfairness(similarity, z)
    zero_mass = float(np.sum(np.abs(z))) == 0.0
    if zero_mass:
        gini = None
        notes.append("zero-mass embedding: Gini metrics skipped")
    else:
        gini = embedding_gini(similarity, z)
    lip = lipschitz_constant(similarity, z, delta)
    gd_trace = gd_gini = a_gdif = None
    sizes: tuple[int, ...] = ()
    traces: tuple[float, ...] = ()
    ginis: tuple[float, ...] = ()
    if partition is not None and partition.m >= 2:
        traces = tuple(group_traces(similarity, z, partition))
        sizes = tuple(int(s) for s in partition.sizes())
        gd_trace = average_gdif(traces)
        if not zero_mass:
            try:
                ginis = tuple(group_ginis(similarity, z, partition))
                gd_gini = average_gdif(ginis)
                a_gdif = gd_gini
            except DomainError as exc:
                notes.append(f"group Gini skipped: {exc}")
    elif partition is not None:
        notes.append("single-group partition: group disparity metrics skipped")
    return MetricsReport(
        auc=auc,
        f1=f1,
        eo=eo,
        individual_unfairness=if_value,
        gini=gini,
        gd_trace=gd_trace,
        gd_gini=gd_gini,
        a_gdif=a_gdif,
        lipschitz=lip,
        group_sizes=sizes,
        group_traces=traces,
        group_ginis=ginis,
        warnings=tuple(notes),
    )
