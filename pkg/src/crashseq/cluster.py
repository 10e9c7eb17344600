"""Weighted k-medoid clustering, quality indices, and the per-k sweep.

k_medoids is PAM: a deterministic greedy BUILD initialization followed by
best-improvement SWAP iterations until no medoid/non-medoid exchange
strictly lowers the weighted cost. Quality indices (weighted average
silhouette width, Hubert's Gamma, point-biserial correlation, Hubert's C)
treat each observation pair with weight w_i*w_j. Ties always resolve to
the lowest index so every run is reproducible.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from crashseq.seqdist import DissimMatrix

logger = logging.getLogger(__name__)

_SWEEP_INDEX_NAMES = ("asw_w", "hg", "pbc", "hc")


class KTooLarge(Exception):
    def __init__(self, k: int, n: int):
        self.k, self.n = k, n
        super().__init__(f"k={k} exceeds the number of sequences n={n}")


class GroupTooSmall(Exception):
    def __init__(self, config: str, size: int, k_min: int):
        self.config = config
        super().__init__(f"config {config} has {size} sequences, fewer than k_min={k_min}")


@dataclass
class Partition:
    """k-medoid result: medoid indices, per-point cluster, weighted cost."""

    k: int
    medoids: tuple[int, ...]
    assignment: np.ndarray
    total_cost: float

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == cluster)


@dataclass
class QualityIndices:
    asw_w: float
    hg: float
    pbc: float
    hc: float

    def as_dict(self) -> dict[str, float]:
        return {"asw_w": self.asw_w, "hg": self.hg, "pbc": self.pbc, "hc": self.hc}


@dataclass
class QualityReport:
    """Index values per k plus z-standardized curves across the sweep."""

    ks: tuple[int, ...]
    indices: dict[str, np.ndarray]
    zscores: dict[str, np.ndarray]
    degenerate: bool

    def rows(self):
        for pos, k in enumerate(self.ks):
            row = {"k": k}
            for name in _SWEEP_INDEX_NAMES:
                row[name] = float(self.indices[name][pos])
                row[name + "_z"] = float(self.zscores[name][pos])
            yield row


def _as_square(matrix) -> np.ndarray:
    if isinstance(matrix, DissimMatrix):
        return matrix.square()
    D = np.asarray(matrix, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError("distance matrix must be square")
    return D


def _check_weights(weights, n) -> np.ndarray:
    if weights is None:
        return np.ones(n)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (n,):
        raise ValueError(f"need {n} weights, got shape {w.shape}")
    if (w <= 0).any():
        raise ValueError("weights must be positive")
    return w


def _build(D: np.ndarray, w: np.ndarray, k: int) -> list[int]:
    medoids = [int(np.argmin(D @ w))]
    dmin = D[medoids[0]].copy()
    while len(medoids) < k:
        reduction = np.maximum(dmin[None, :] - D, 0.0) @ w
        reduction[medoids] = -np.inf
        nxt = int(np.argmax(reduction))
        medoids.append(nxt)
        np.minimum(dmin, D[nxt], out=dmin)
    return medoids


def _swap(D: np.ndarray, w: np.ndarray, medoids: list[int], max_iter: int = 1000):
    n = D.shape[0]
    medoids = sorted(medoids)
    k = len(medoids)
    for _ in range(max_iter):
        med = np.asarray(medoids)
        Dm = D[:, med]
        pos = np.argmin(Dm, axis=1)
        d1 = Dm[np.arange(n), pos]
        if k > 1:
            part = np.partition(Dm, 1, axis=1)
            d2 = part[:, 1]
        else:
            d2 = np.full(n, np.inf)
        cost = float(w @ d1)
        cand = np.setdiff1d(np.arange(n), med, assume_unique=False)
        if cand.size == 0:
            return medoids, cost
        Dc = D[:, cand]
        gain = np.minimum(Dc - d1[:, None], 0.0) * w[:, None]
        total_gain = gain.sum(axis=0)
        repl = (np.minimum(Dc, d2[:, None]) - d1[:, None]) * w[:, None]
        onehot = np.zeros((k, n))
        onehot[pos, np.arange(n)] = 1.0
        delta = total_gain[None, :] - onehot @ gain + onehot @ repl
        flat = int(np.argmin(delta))
        best = float(delta.flat[flat])
        tol = 1e-9 * max(1.0, abs(cost))
        if best >= -tol:
            return medoids, cost
        c_star, h_star = divmod(flat, cand.size)
        medoids[c_star] = int(cand[h_star])
        medoids = sorted(medoids)
        new_cost = float(w @ np.min(D[:, medoids], axis=1))
        if new_cost > cost + tol:  # SWAP must never increase the cost
            raise AssertionError(f"swap increased cost {cost} -> {new_cost}")
    logger.warning("swap phase hit the iteration cap (%d)", max_iter)
    return medoids, float(w @ np.min(D[:, medoids], axis=1))


def _finalize(D: np.ndarray, w: np.ndarray, medoids: list[int]) -> Partition:
    n = D.shape[0]
    med = np.asarray(sorted(medoids))
    assignment = np.argmin(D[:, med], axis=1)
    assignment[med] = np.arange(len(med))  # medoids always own their cluster
    total = float(w @ D[np.arange(n), med[assignment]])
    return Partition(len(med), tuple(int(m) for m in med), assignment, total)


def k_medoids(matrix, weights=None, k: int = 2, seed=None, n_starts: int = 1) -> Partition:
    """Weighted PAM over a precomputed dissimilarity matrix.

    The first start uses the deterministic BUILD initialization; extra
    starts (n_starts > 1) use seeded random medoid sets, best final cost
    wins.
    """
    D = _as_square(matrix)
    n = D.shape[0]
    w = _check_weights(weights, n)
    if not 1 <= k <= n:
        raise KTooLarge(k, n)
    starts = [_build(D, w, k)]
    if n_starts > 1:
        rng = np.random.default_rng(seed)
        for _ in range(n_starts - 1):
            starts.append(list(rng.choice(n, size=k, replace=False)))
    best: Partition | None = None
    for init in starts:
        medoids, _ = _swap(D, w, init)
        part = _finalize(D, w, medoids)
        if best is None or part.total_cost < best.total_cost:
            best = part
    return best


def _condensed(matrix, D: np.ndarray) -> np.ndarray:
    if isinstance(matrix, DissimMatrix):
        return matrix.values
    return D[np.triu_indices(D.shape[0], k=1)]


def quality_indices(matrix, weights, partition: Partition) -> QualityIndices:
    """ASW_w, HG, PBC, HC for one partition."""
    D = _as_square(matrix)
    n = D.shape[0]
    w = _check_weights(weights, n)
    labels = np.asarray(partition.assignment)
    k = partition.k
    if np.bincount(labels, minlength=k).min() == 0:
        raise ValueError("every cluster must be non-empty")

    # weighted silhouette
    member_w = np.zeros((n, k))
    member_w[np.arange(n), labels] = w
    sums = D @ member_w
    cluster_w = member_w.sum(axis=0)
    own = sums[np.arange(n), labels]
    own_den = cluster_w[labels] - w
    a = np.divide(own, own_den, out=np.zeros(n), where=own_den > 0)
    if k > 1:
        means = sums / cluster_w[None, :]
        means[np.arange(n), labels] = np.inf
        b = means.min(axis=1)
        denom = np.maximum(a, b)
        sil = np.divide(b - a, denom, out=np.zeros(n), where=denom > 0)
        sil[own_den <= 0] = 0.0  # weight-singleton cluster
        asw = float((w @ sil) / w.sum())
    else:
        asw = 0.0

    iu = np.triu_indices(n, k=1)
    dist = _condensed(matrix, D)
    pair_w = w[iu[0]] * w[iu[1]]
    between = labels[iu[0]] != labels[iu[1]]

    pbc = _weighted_pearson(dist, between.astype(np.float64), pair_w)
    hg = _hubert_gamma(dist, pair_w, between)
    hc = _hubert_c(dist, pair_w, between)
    return QualityIndices(asw, hg, pbc, hc)


def _weighted_pearson(x, y, w) -> float:
    if w.size == 0:
        return 0.0
    total = w.sum()
    mx = (w @ x) / total
    my = (w @ y) / total
    cov = (w @ ((x - mx) * (y - my))) / total
    vx = (w @ ((x - mx) ** 2)) / total
    vy = (w @ ((y - my) ** 2)) / total
    if vx <= 0 or vy <= 0:
        return 0.0
    return float(cov / np.sqrt(vx * vy))


def _hubert_gamma(dist, pair_w, between) -> float:
    wd, wwt = dist[~between], pair_w[~between]
    bd, bwt = dist[between], pair_w[between]
    if wd.size == 0 or bd.size == 0:
        return 0.0
    order = np.argsort(bd, kind="stable")
    bd_sorted = bd[order]
    cum = np.concatenate(([0.0], np.cumsum(bwt[order])))
    total_b = cum[-1]
    below = cum[np.searchsorted(bd_sorted, wd, side="left")]
    up_to = cum[np.searchsorted(bd_sorted, wd, side="right")]
    s_plus = float(wwt @ (total_b - up_to))  # within strictly smaller than between
    s_minus = float(wwt @ below)
    denom = s_plus + s_minus
    return (s_plus - s_minus) / denom if denom > 0 else 0.0


def _hubert_c(dist, pair_w, between) -> float:
    within_mass = float(pair_w[~between].sum())
    if within_mass <= 0 or dist.size == 0:
        return 0.0
    s_w = float(pair_w[~between] @ dist[~between])
    order = np.argsort(dist, kind="stable")
    s_min = _mass_sum(dist[order], pair_w[order], within_mass)
    rev = order[::-1]
    s_max = _mass_sum(dist[rev], pair_w[rev], within_mass)
    if s_max <= s_min:
        return 0.0
    return (s_w - s_min) / (s_max - s_min)


def _mass_sum(d_sorted, w_sorted, mass) -> float:
    """Weighted sum of the first `mass` worth of distances."""
    cum = np.cumsum(w_sorted)
    stop = int(np.searchsorted(cum, mass, side="left"))
    full = float(w_sorted[:stop] @ d_sorted[:stop])
    prev = float(cum[stop - 1]) if stop > 0 else 0.0
    if stop < len(d_sorted):
        full += (mass - prev) * float(d_sorted[stop])
    return full


def k_sweep(matrix, weights=None, ks: Sequence[int] = range(2, 26), seed=None,
            n_starts: int = 1) -> QualityReport:
    """Run k_medoids per k and z-standardize each index curve across the sweep."""
    D = _as_square(matrix)
    n = D.shape[0]
    w = _check_weights(weights, n)
    ks = tuple(int(k) for k in ks)
    if not ks:
        raise ValueError("empty k range")
    if min(ks) < 2 or max(ks) > n - 1:
        raise KTooLarge(max(ks), n)
    values = {name: np.zeros(len(ks)) for name in _SWEEP_INDEX_NAMES}
    for pos, k in enumerate(ks):
        part = k_medoids(D, w, k, seed=seed, n_starts=n_starts)
        q = quality_indices(matrix if isinstance(matrix, DissimMatrix) else D, w, part)
        for name, value in q.as_dict().items():
            values[name][pos] = value
    zscores = {}
    degenerate = len(ks) < 2
    for name, series in values.items():
        sd = series.std()
        if sd > 0 and len(ks) > 1:
            zscores[name] = (series - series.mean()) / sd
        else:
            zscores[name] = np.zeros(len(ks))
            degenerate = True
    return QualityReport(ks, values, zscores, degenerate)


def k_auto(report: QualityReport) -> int:
    """Extension heuristic: k maximizing mean(z_ASW + z_HG + z_PBC - z_HC)."""
    score = (
        report.zscores["asw_w"] + report.zscores["hg"] + report.zscores["pbc"]
        - report.zscores["hc"]
    ) / 4.0
    return report.ks[int(np.argmax(score))]


@dataclass
class ConfigTypes:
    """Sequence types of one crash configuration."""

    config: str
    partition: Partition
    labels: tuple[str, ...]
    medoid_ids: dict[str, str]
    shares: dict[str, float]
    assignment_by_id: dict[str, str]
    too_small: bool = False


def cluster_by_config(
    matrices: Mapping[str, DissimMatrix],
    weights: Mapping[str, np.ndarray],
    k_by_config: Mapping[str, int],
    k_min: int = 2,
    seed=None,
    n_starts: int = 1,
) -> dict[str, ConfigTypes]:
    """Cluster each crash configuration independently.

    Cluster labels are the lowercased configuration letter plus a 1-based
    rank, ranked by the medoid's first appearance in the input. Groups
    smaller than k_min collapse to a single type.
    """
    out: dict[str, ConfigTypes] = {}
    for config in sorted(matrices):
        matrix = matrices[config]
        n = matrix.n
        if n == 0:
            raise ValueError(f"config {config} has no sequences")
        w = _check_weights(weights.get(config), n)
        too_small = n < k_min
        if too_small:
            logger.warning("%s", GroupTooSmall(config, n, k_min))
            k = 1
        else:
            k = min(int(k_by_config.get(config, 1)), n)
        part = k_medoids(matrix, w, max(k, 1), seed=seed, n_starts=n_starts)
        labels = tuple(f"{config.lower()}{c + 1}" for c in range(part.k))
        total_w = float(w.sum())
        shares = {}
        medoid_ids = {}
        assignment_by_id = {}
        for c, label in enumerate(labels):
            members = part.members(c)
            shares[label] = float(w[members].sum()) / total_w
            medoid_ids[label] = matrix.ids[part.medoids[c]]
            for i in members:
                assignment_by_id[matrix.ids[int(i)]] = label
        out[config] = ConfigTypes(
            config, part, labels, medoid_ids, shares, assignment_by_id, too_small
        )
    return out
