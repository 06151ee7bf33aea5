"""Chart quality metrics against reference positions.

Four scores, all computed from pairwise distances in the reference space
and the chart: trustworthiness and continuity (rank-based neighborhood
preservation, higher is better), Kruskal stress with an optimal scale
factor (lower is better), and Rajski distance (an information-theoretic
distance estimated from a joint histogram of pair distances, lower is
better).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from ._pairs import decode_pair_indices, n_pairs, sample_pair_indices

DEFAULT_HISTOGRAM_BINS = 128
DEFAULT_MAX_PAIRS = 1_000_000
DEFAULT_NEIGHBOR_FRACTION = 0.05


@dataclass(frozen=True)
class MetricReport:
    """The four chart-quality scores plus the estimator settings used."""

    trustworthiness: float
    continuity: float
    kruskal_stress: float
    rajski_distance: float
    n_samples: int
    neighborhood_k: int
    histogram_bins: int
    pairs_used: int

    def as_text(self) -> str:
        """Flat key=value lines, one metric or setting per line."""
        lines = [
            f"trustworthiness={self.trustworthiness:.6f}",
            f"continuity={self.continuity:.6f}",
            f"kruskal_stress={self.kruskal_stress:.6f}",
            f"rajski_distance={self.rajski_distance:.6f}",
            f"n_samples={self.n_samples}",
            f"neighborhood_k={self.neighborhood_k}",
            f"histogram_bins={self.histogram_bins}",
            f"pairs_used={self.pairs_used}",
        ]
        return "\n".join(lines) + "\n"

    @staticmethod
    def csv_header() -> str:
        return ("label,trustworthiness,continuity,kruskal_stress,rajski_distance,"
                "n_samples,neighborhood_k,histogram_bins,pairs_used")

    def as_csv_row(self, label: str) -> str:
        return (f"{label},{self.trustworthiness:.6f},{self.continuity:.6f},"
                f"{self.kruskal_stress:.6f},{self.rajski_distance:.6f},"
                f"{self.n_samples},{self.neighborhood_k},{self.histogram_bins},"
                f"{self.pairs_used}")


def _coerce_points(name: str, pts, dims: tuple[int, ...]) -> np.ndarray:
    arr = np.asarray(pts, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] not in dims:
        raise ValueError(f"{name} must have shape (n, {' or '.join(map(str, dims))}), "
                         f"got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def _check_pair(gt, chart) -> tuple[np.ndarray, np.ndarray]:
    gt = _coerce_points("reference positions", gt, (2, 3))
    chart = _coerce_points("chart positions", chart, (2,))
    if gt.shape[0] != chart.shape[0]:
        raise ValueError(f"point counts differ: {gt.shape[0]} vs {chart.shape[0]}")
    if gt.shape[0] < 3:
        raise ValueError("metrics need at least 3 points")
    return gt, chart


def _neighbor_ranks(dist: np.ndarray) -> np.ndarray:
    """ranks[i, j] = 1-based position of j among i's neighbors; 0 for j == i.

    Distance ties break toward the lower index; a point is always its own
    rank-0 neighbor even when other distances are exactly zero.
    """
    d = dist.copy()
    np.fill_diagonal(d, -np.inf)
    order = np.argsort(d, axis=1, kind="stable")
    n = d.shape[0]
    ranks = np.empty((n, n), dtype=np.int32)
    rows = np.arange(n)[:, None]
    ranks[rows, order] = np.arange(n, dtype=np.int32)[None, :]
    return ranks


def _neighbor_k_bound(n: int) -> int:
    # normalizer n*k*(2n - 3k - 1) must stay positive
    return (2 * n - 2) // 3


def _check_k(n: int, k: int) -> int:
    k = int(k)
    if not 1 <= k <= _neighbor_k_bound(n):
        raise ValueError(
            f"neighborhood size must satisfy 1 <= k <= {(_neighbor_k_bound(n))} "
            f"for n={n}, got {k}"
        )
    return k


def default_neighbor_k(n: int) -> int:
    """Default neighborhood size: 5% of the points, clamped to valid range."""
    return max(1, min(int(DEFAULT_NEIGHBOR_FRACTION * n), _neighbor_k_bound(n)))


def _tw_ct(gt: np.ndarray, chart: np.ndarray, k: int) -> tuple[float, float]:
    n = gt.shape[0]
    gt_ranks = _neighbor_ranks(cdist(gt, gt))
    ch_ranks = _neighbor_ranks(cdist(chart, chart))
    norm = 2.0 / (n * k * (2 * n - 3 * k - 1))
    intruders = (ch_ranks >= 1) & (ch_ranks <= k) & (gt_ranks > k)
    tw = 1.0 - norm * float((gt_ranks[intruders] - k).sum())
    missing = (gt_ranks >= 1) & (gt_ranks <= k) & (ch_ranks > k)
    ct = 1.0 - norm * float((ch_ranks[missing] - k).sum())
    return tw, ct


def trustworthiness(gt, chart, k: int) -> float:
    """Penalty for chart neighbors that are not reference neighbors.

    1 is perfect; each point j inside i's chart k-neighborhood but outside
    its reference k-neighborhood costs rank_ref(i, j) - k, normalized by
    the worst case.
    """
    gt, chart = _check_pair(gt, chart)
    k = _check_k(gt.shape[0], k)
    return _tw_ct(gt, chart, k)[0]


def continuity(gt, chart, k: int) -> float:
    """Penalty for reference neighbors missing from the chart neighborhood.

    Role-swapped counterpart of :func:`trustworthiness`: points inside the
    reference k-neighborhood but outside the chart one cost their chart
    rank excess.
    """
    gt, chart = _check_pair(gt, chart)
    k = _check_k(gt.shape[0], k)
    return _tw_ct(gt, chart, k)[1]


def _pair_distances(gt: np.ndarray, chart: np.ndarray, max_pairs: int,
                    seed: int) -> tuple[np.ndarray, np.ndarray, int]:
    """Distances of up to ``max_pairs`` sample pairs, full set when it fits."""
    n = gt.shape[0]
    total = n_pairs(n)
    if total <= max_pairs:
        iu = np.triu_indices(n, k=1)
        pairs = np.stack(iu, axis=1)
    else:
        rng = np.random.default_rng(seed)
        flat = sample_pair_indices(rng, total, max_pairs)
        pairs = decode_pair_indices(flat, n)
    dg = np.linalg.norm(gt[pairs[:, 0]] - gt[pairs[:, 1]], axis=1)
    dc = np.linalg.norm(chart[pairs[:, 0]] - chart[pairs[:, 1]], axis=1)
    return dg, dc, pairs.shape[0]


def kruskal_stress(gt, chart, max_pairs: int = DEFAULT_MAX_PAIRS,
                   seed: int = 0) -> float:
    """Scale-invariant stress between reference and chart distances.

    The chart distances are rescaled by the closed-form least-squares
    factor beta = sum(d * d_hat) / sum(d_hat^2) before comparing, so any
    global scaling of the chart scores identically.
    """
    gt, chart = _check_pair(gt, chart)
    dg, dc, _ = _pair_distances(gt, chart, max_pairs, seed)
    denom = float(np.sum(dg * dg))
    if denom == 0.0:
        raise ValueError("reference positions are all identical; stress undefined")
    scale_sq = float(np.sum(dc * dc))
    if scale_sq == 0.0:
        warnings.warn("chart collapsed to a point; stress is maximal", stacklevel=2)
        return 1.0
    beta = float(np.sum(dg * dc)) / scale_sq
    resid = dg - beta * dc
    return float(np.sqrt(np.sum(resid * resid) / denom))


def rajski_distance(gt, chart, bins: int = DEFAULT_HISTOGRAM_BINS,
                    max_pairs: int = DEFAULT_MAX_PAIRS, seed: int = 0) -> float:
    """Information-theoretic distance between the two pair-distance
    distributions, in [0, 1]; 0 means fully dependent.

    Estimated as 1 - I(X;Y)/H(X,Y) from an equal-width 2-D histogram of
    (reference distance, chart distance) pairs.
    """
    gt, chart = _check_pair(gt, chart)
    bins = int(bins)
    if bins < 2:
        raise ValueError(f"need at least 2 histogram bins, got {bins}")
    dg, dc, _ = _pair_distances(gt, chart, max_pairs, seed)
    joint, _, _ = np.histogram2d(dg, dc, bins=bins)
    p = joint / joint.sum()
    nz = p > 0.0
    h_joint = -float(np.sum(p[nz] * np.log(p[nz])))
    if h_joint == 0.0:
        warnings.warn("pair-distance histogram has a single occupied cell; "
                      "treating the charts as fully dependent", stacklevel=2)
        return 0.0
    px = p.sum(axis=1)
    py = p.sum(axis=0)
    outer = np.outer(px, py)
    mi = float(np.sum(p[nz] * np.log(p[nz] / outer[nz])))
    mi = max(mi, 0.0)
    return float(np.clip(1.0 - mi / h_joint, 0.0, 1.0))


def compute_all(gt, chart, k: int | None = None,
                bins: int = DEFAULT_HISTOGRAM_BINS,
                max_pairs: int = DEFAULT_MAX_PAIRS, seed: int = 0) -> MetricReport:
    """All four scores with shared settings; k defaults to 5% of n."""
    gt, chart = _check_pair(gt, chart)
    n = gt.shape[0]
    k = default_neighbor_k(n) if k is None else _check_k(n, k)
    tw, ct = _tw_ct(gt, chart, k)
    _, _, used = _pair_distances(gt, chart, max_pairs, seed)
    return MetricReport(
        trustworthiness=tw,
        continuity=ct,
        kruskal_stress=kruskal_stress(gt, chart, max_pairs, seed),
        rajski_distance=rajski_distance(gt, chart, bins, max_pairs, seed),
        n_samples=n,
        neighborhood_k=k,
        histogram_bins=bins,
        pairs_used=used,
    )
