"""Delay-profile dissimilarities, neighbor graphs, and geodesic distances.

The angle-delay-profile (ADP) dissimilarity compares two samples tap by
tap within each access point's antenna group: each tap contributes one
minus the squared normalized inner product of the tap's antenna vectors,
so co-located samples score near zero and unrelated ones near the tap
count.  Short-range ADP values are then extended to long range by running
shortest paths over a k-nearest-neighbor graph.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as _sparse_dijkstra

from .csi import DelayDomainCsi

DISCONNECTED_SCALE = 1.5


@dataclass(frozen=True)
class DissimilarityMatrix:
    """Symmetric nonnegative dissimilarities with a zero diagonal."""

    values: np.ndarray
    kind: str = "adp"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError(f"dissimilarity matrix must be square, got {values.shape}")
        if not np.isfinite(values).all():
            raise ValueError("dissimilarity matrix contains non-finite values")
        if (values < 0.0).any():
            raise ValueError("dissimilarities must be nonnegative")
        if values.size:
            if float(np.abs(values - values.T).max()) > 1e-12:
                raise ValueError("dissimilarity matrix must be symmetric")
            if float(np.abs(np.diag(values)).max()) != 0.0:
                raise ValueError("dissimilarity matrix must have a zero diagonal")
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class KnnGraph:
    """Undirected weighted neighbor graph in edge-list form.

    Built by connecting each node to its k nearest neighbors and taking
    the union over directions, so every node keeps at least k incident
    edges.  ``rows``/``cols`` hold each undirected edge once with
    rows[e] < cols[e].
    """

    n: int
    k: int
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        cols = np.asarray(self.cols, dtype=np.int64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if not (rows.shape == cols.shape == weights.shape) or rows.ndim != 1:
            raise ValueError("rows, cols, weights must be 1-D arrays of equal length")
        if rows.size and ((rows < 0).any() or (cols >= self.n).any() or (rows >= cols).any()):
            raise ValueError("edges must satisfy 0 <= rows[e] < cols[e] < n")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "weights", weights)

    @property
    def n_edges(self) -> int:
        return self.rows.size

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        np.add.at(deg, self.rows, 1)
        np.add.at(deg, self.cols, 1)
        return deg

    def to_csr(self) -> csr_matrix:
        ij = np.concatenate([self.rows, self.cols])
        ji = np.concatenate([self.cols, self.rows])
        w = np.concatenate([self.weights, self.weights])
        return csr_matrix((w, (ij, ji)), shape=(self.n, self.n))


def _tap_stack(x) -> tuple[np.ndarray, tuple[tuple[int, int], ...]]:
    """Coerce a DelayDomainCsi (or raw (B, C) array) to taps plus AP spans."""
    if isinstance(x, DelayDomainCsi):
        taps = x.taps
        spans = x.ap_spans or ((0, taps.shape[0]),)
        return taps, spans
    taps = np.asarray(x, dtype=np.complex128)
    if taps.ndim != 2:
        raise ValueError(f"expected (antennas, taps) matrix, got shape {taps.shape}")
    return taps, ((0, taps.shape[0]),)


def adp_dissimilarity(a, b) -> float:
    """Angle-delay-profile dissimilarity between two delay-domain samples.

    For each access point's antenna span and each delay tap, compares the
    tap's antenna vectors u, v via 1 - |<u, v>|^2 / (|u|^2 |v|^2).  Taps
    where either vector is zero contribute the maximal value 1.  The
    result is the sum over taps and access points, in [0, n_ap * C].
    """
    ta, spans_a = _tap_stack(a)
    tb, spans_b = _tap_stack(b)
    if ta.shape != tb.shape:
        raise ValueError(f"tap shapes differ: {ta.shape} vs {tb.shape}")
    if spans_a != spans_b:
        raise ValueError("samples have different AP partitions")
    total = 0.0
    for lo, hi in spans_a:
        u = ta[lo:hi]
        v = tb[lo:hi]
        inner = np.abs(np.sum(np.conj(u) * v, axis=0)) ** 2
        pu = np.sum(np.abs(u) ** 2, axis=0)
        pv = np.sum(np.abs(v) ** 2, axis=0)
        den = pu * pv
        ratio = np.zeros_like(den)
        np.divide(inner, den, out=ratio, where=den > 0.0)
        np.clip(ratio, 0.0, 1.0, out=ratio)
        total += float(np.sum(1.0 - ratio))
    return total


def adp_matrix(taps: np.ndarray, ap_spans=None) -> DissimilarityMatrix:
    """All-pairs ADP dissimilarities for a (n, B, C) tap stack.

    Equivalent to calling :func:`adp_dissimilarity` on every pair but
    computed with one Gram matrix per access point and tap.
    """
    taps = np.asarray(taps, dtype=np.complex128)
    if taps.ndim != 3:
        raise ValueError(f"expected a (n, B, C) stack, got shape {taps.shape}")
    n, b, c = taps.shape
    spans = tuple(ap_spans) if ap_spans else ((0, b),)
    out = np.zeros((n, n))
    for lo, hi in spans:
        for tau in range(c):
            x = np.ascontiguousarray(taps[:, lo:hi, tau])
            gram = x @ x.conj().T
            power = np.real(np.diag(gram)).copy()
            num = np.abs(gram) ** 2
            den = np.outer(power, power)
            ratio = np.zeros_like(num)
            np.divide(num, den, out=ratio, where=den > 0.0)
            np.clip(ratio, 0.0, 1.0, out=ratio)
            out += 1.0 - ratio
    out = 0.5 * (out + out.T)
    np.clip(out, 0.0, None, out=out)
    np.fill_diagonal(out, 0.0)
    return DissimilarityMatrix(values=out, kind="adp")


def build_knn_graph(dmat: DissimilarityMatrix | np.ndarray, k: int) -> KnnGraph:
    """Connect each node to its k nearest neighbors under the given
    dissimilarities and symmetrize by union.

    Neighbor ties are broken toward lower node index (stable order).
    Requires 1 <= k <= n - 1.
    """
    values = dmat.values if isinstance(dmat, DissimilarityMatrix) else np.asarray(dmat)
    n = values.shape[0]
    k = int(k)
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must satisfy 1 <= k <= n-1, got k={k} for n={n}")
    order = np.argsort(values, axis=1, kind="stable")
    pairs = set()
    for i in range(n):
        picked = 0
        for j in order[i]:
            if j == i:
                continue
            pairs.add((min(i, int(j)), max(i, int(j))))
            picked += 1
            if picked == k:
                break
    if pairs:
        edges = np.array(sorted(pairs), dtype=np.int64)
        rows, cols = edges[:, 0], edges[:, 1]
        weights = values[rows, cols]
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
        weights = np.zeros(0)
    return KnnGraph(n=n, k=k, rows=rows, cols=cols, weights=weights)


def geodesic_all_pairs(graph: KnnGraph) -> DissimilarityMatrix:
    """Shortest-path distances between all node pairs of a neighbor graph.

    Runs Dijkstra from every source over the undirected graph.  Pairs in
    different components get 1.5x the largest finite distance, with a
    warning, so downstream consumers always see finite values.
    """
    if graph.weights.size and (graph.weights < 0.0).any():
        raise ValueError("graph has negative edge weights")
    dist = _sparse_dijkstra(graph.to_csr(), directed=False)
    infinite = ~np.isfinite(dist)
    np.fill_diagonal(infinite, False)
    if infinite.any():
        off_diag = ~np.eye(graph.n, dtype=bool)
        finite_vals = dist[off_diag & np.isfinite(dist)]
        finite_max = float(finite_vals.max()) if finite_vals.size else 0.0
        fill = DISCONNECTED_SCALE * finite_max
        dist[infinite] = fill
        warnings.warn(
            f"neighbor graph is disconnected: {int(infinite.sum()) // 2} node pairs "
            f"assigned fallback distance {fill:.6g}",
            stacklevel=2,
        )
    dist = np.minimum(dist, dist.T)
    np.fill_diagonal(dist, 0.0)
    return DissimilarityMatrix(values=dist, kind="geodesic")
