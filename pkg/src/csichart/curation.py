"""Bounded core memory over streaming CSI and its curation strategies.

The memory holds at most M samples.  Both strategies insert unconditionally
while filling.  Once full, the random strategy replaces a random slot with a
fixed update probability; the similarity strategy admits a new sample only
when it is less similar to the memory than the two most mutually similar
stored samples are to each other, and then evicts one of that pair.

An M x M cosine-similarity cache is maintained incrementally so each offer
costs one matrix-vector product plus O(M) bookkeeping.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .csi import (
    DEFAULT_C_TAPS,
    CsiMatrix,
    DelayDomainCsi,
    cosine_similarity,
    extract_feature,
    to_delay_domain,
)


class CurationAction(Enum):
    INSERTED_WHILE_FILLING = "inserted_while_filling"
    REPLACED = "replaced"
    DISCARDED = "discarded"


@dataclass(frozen=True)
class CurationDecision:
    """Outcome of offering one sample to the memory.

    ``observed_max_sim_to_memory`` is populated only by the similarity
    strategy once the memory is full: it is the maximum similarity between
    the offered sample and any stored sample at decision time.
    """

    action: CurationAction
    slot_index: int | None = None
    observed_max_sim_to_memory: float | None = None


@dataclass(frozen=True)
class RandosConfig:
    """Random curation: replace a random slot with probability p_update."""

    p_update: float = 0.5
    replacement_pmf: np.ndarray | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_update <= 1.0:
            raise ValueError(f"p_update must lie in [0, 1], got {self.p_update}")
        if self.replacement_pmf is not None:
            pmf = np.asarray(self.replacement_pmf, dtype=np.float64)
            if pmf.ndim != 1:
                raise ValueError("replacement_pmf must be a 1-D probability vector")
            if (pmf < 0.0).any() or abs(float(pmf.sum()) - 1.0) > 1e-9:
                raise ValueError("replacement_pmf must be nonnegative and sum to 1")
            object.__setattr__(self, "replacement_pmf", pmf)


@dataclass(frozen=True)
class SimsConfig:
    """Similarity curation: evict one endpoint of the most similar stored pair."""

    p_tiebreak: float = 0.5
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_tiebreak <= 1.0:
            raise ValueError(f"p_tiebreak must lie in [0, 1], got {self.p_tiebreak}")


@dataclass
class _Record:
    """Internal ingest bundle: one validated sample ready for a slot."""

    entries: np.ndarray | None
    taps: np.ndarray
    feature: np.ndarray
    arrival: int
    timestamp: float
    position: np.ndarray | None


class CoreMemory:
    """Fixed-capacity store of curated samples with a similarity cache.

    Payload per slot: the feature vector, the truncated delay taps, the
    arrival index and timestamp, the reference position when known, and
    (unless ``store_full_csi=False``) the raw CSI matrix so curated data
    can later be re-featurized under different settings.

    The cache invariants maintained incrementally and checkable via
    :func:`rebuild_cache_bruteforce`:

    - ``sim_cache[i, j]`` equals the absolute cosine similarity of the
      stored features of slots i and j, with a zero diagonal;
    - ``max_pair`` is the lexicographically first pair attaining the
      maximum off-diagonal cache value.
    """

    def __init__(self, capacity: int, c_taps: int = DEFAULT_C_TAPS,
                 store_full_csi: bool = True):
        capacity = int(capacity)
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        c_taps = int(c_taps)
        if c_taps < 1:
            raise ValueError(f"c_taps must be >= 1, got {c_taps}")
        self.capacity = capacity
        self.c_taps = c_taps
        self.store_full_csi = store_full_csi
        self.count = 0
        self.n_antennas: int | None = None
        self.n_subcarriers: int | None = None
        self.ap_spans: tuple[tuple[int, int], ...] | None = None
        self.position_dim: int | None = None
        self._features: np.ndarray | None = None
        self._taps: np.ndarray | None = None
        self._entries: np.ndarray | None = None
        self._arrival: np.ndarray | None = None
        self._timestamps: np.ndarray | None = None
        self._positions: np.ndarray | None = None
        self._has_position: np.ndarray | None = None
        self._sim: np.ndarray | None = None
        self._row_max: np.ndarray | None = None
        self._row_argmax: np.ndarray | None = None
        self._max_pair: tuple[int, int, float] | None = None

    # -- payload views -------------------------------------------------

    @property
    def feature_dim(self) -> int | None:
        return None if self._features is None else self._features.shape[1]

    @property
    def features(self) -> np.ndarray:
        """Stored feature rows, shape (count, feature_dim)."""
        if self._features is None:
            return np.zeros((0, 0))
        return self._features[: self.count]

    @property
    def taps(self) -> np.ndarray:
        """Stored delay taps, shape (count, B, C)."""
        if self._taps is None:
            return np.zeros((0, 0, 0), dtype=np.complex128)
        return self._taps[: self.count]

    @property
    def csi_entries(self) -> np.ndarray | None:
        """Stored raw CSI, shape (count, B, W), or None in features-only mode."""
        if self._entries is None:
            return None
        return self._entries[: self.count]

    @property
    def arrival_indices(self) -> np.ndarray:
        if self._arrival is None:
            return np.zeros(0, dtype=np.int64)
        return self._arrival[: self.count]

    @property
    def timestamps(self) -> np.ndarray:
        if self._timestamps is None:
            return np.zeros(0)
        return self._timestamps[: self.count]

    def positions(self) -> tuple[np.ndarray, np.ndarray]:
        """Stored positions as (coords, mask); coords rows without a known
        position are NaN and excluded by the mask."""
        if self._positions is None:
            return np.zeros((0, 0)), np.zeros(0, dtype=bool)
        dim = self.position_dim or 0
        return self._positions[: self.count, :dim], self._has_position[: self.count].copy()

    @property
    def sim_cache(self) -> np.ndarray:
        """View of the maintained similarity cache, shape (count, count)."""
        if self._sim is None:
            return np.zeros((0, 0))
        return self._sim[: self.count, : self.count]

    @property
    def max_pair(self) -> tuple[int, int, float] | None:
        """(k, l, value) for the most similar stored pair; None if count < 2."""
        return self._max_pair

    def row_max_sims(self) -> np.ndarray:
        """Per-slot maximum similarity to the rest of the memory (count >= 2)."""
        if self.count < 2:
            return np.zeros(self.count)
        return self._row_max[: self.count].copy()

    # -- ingest --------------------------------------------------------

    def prepare_record(self, sample: CsiMatrix, feature=None, taps=None,
                       position=None) -> _Record:
        """Validate a sample against the memory and featurize it.

        ``feature`` and ``taps`` may carry precomputed values from a batch
        extraction stage; they must match what the sample itself yields.
        Raises :class:`~csichart.csi.ZeroFeatureError` for samples with an
        undefined feature direction.
        """
        if self.n_antennas is not None:
            if sample.n_antennas != self.n_antennas or sample.n_subcarriers != self.n_subcarriers:
                raise ValueError(
                    f"sample shape ({sample.n_antennas}, {sample.n_subcarriers}) does not "
                    f"match memory shape ({self.n_antennas}, {self.n_subcarriers})"
                )
            if sample.ap_spans != self.ap_spans:
                raise ValueError("sample AP partition does not match the memory's")
        if taps is None:
            taps = to_delay_domain(sample, self.c_taps).taps
        else:
            taps = np.asarray(taps, dtype=np.complex128)
            if taps.shape != (sample.n_antennas, self.c_taps):
                raise ValueError(f"precomputed taps have shape {taps.shape}")
        if feature is None:
            feature = extract_feature(
                DelayDomainCsi(taps=taps, sample_index=sample.sample_index)
            ).values
        else:
            feature = np.asarray(getattr(feature, "values", feature), dtype=np.float64)
            if feature.shape != (sample.n_antennas * self.c_taps,):
                raise ValueError(f"precomputed feature has shape {feature.shape}")
        if position is not None:
            position = np.asarray(getattr(position, "coords", position), dtype=np.float64)
        timestamp = np.nan if sample.timestamp is None else float(sample.timestamp)
        return _Record(
            entries=sample.entries if self.store_full_csi else None,
            taps=taps,
            feature=feature,
            arrival=int(sample.sample_index),
            timestamp=timestamp,
            position=position,
        )

    def _ensure_allocated(self, sample: CsiMatrix, rec: _Record):
        if self._features is not None:
            return
        b, w = sample.n_antennas, sample.n_subcarriers
        m = self.capacity
        self.n_antennas, self.n_subcarriers = b, w
        self.ap_spans = sample.ap_spans
        self._features = np.zeros((m, b * self.c_taps))
        self._taps = np.zeros((m, b, self.c_taps), dtype=np.complex128)
        if self.store_full_csi:
            self._entries = np.zeros((m, b, w), dtype=np.complex128)
        self._arrival = np.zeros(m, dtype=np.int64)
        self._timestamps = np.full(m, np.nan)
        self._positions = np.full((m, 3), np.nan)
        self._has_position = np.zeros(m, dtype=bool)
        self._sim = np.zeros((m, m))
        self._row_max = np.full(m, -1.0)
        self._row_argmax = np.full(m, -1, dtype=np.int64)

    def _write_payload(self, slot: int, rec: _Record):
        self._features[slot] = rec.feature
        self._taps[slot] = rec.taps
        if self._entries is not None:
            self._entries[slot] = rec.entries
        self._arrival[slot] = rec.arrival
        self._timestamps[slot] = rec.timestamp
        if rec.position is not None:
            if self.position_dim is None:
                self.position_dim = rec.position.size
            if rec.position.size != self.position_dim:
                raise ValueError(
                    f"position dimension {rec.position.size} does not match "
                    f"the memory's {self.position_dim}"
                )
            self._positions[slot] = np.nan
            self._positions[slot, : rec.position.size] = rec.position
            self._has_position[slot] = True
        else:
            self._positions[slot] = np.nan
            self._has_position[slot] = False

    def sims_to(self, feature: np.ndarray) -> np.ndarray:
        """Similarities of a unit-norm feature against all stored features."""
        sims = self.features @ feature
        np.abs(sims, out=sims)
        np.clip(sims, 0.0, 1.0, out=sims)
        return sims

    def _append(self, rec: _Record):
        j = self.count
        self._write_payload(j, rec)
        if j >= 1:
            sims = self._features[:j] @ rec.feature
            np.abs(sims, out=sims)
            np.clip(sims, 0.0, 1.0, out=sims)
            self._sim[j, :j] = sims
            self._sim[:j, j] = sims
            top = int(np.argmax(sims))
            self._row_max[j] = sims[top]
            self._row_argmax[j] = top
            improved = sims > self._row_max[:j]
            self._row_max[:j][improved] = sims[improved]
            self._row_argmax[:j][improved] = j
        self.count = j + 1
        self._refresh_max_pair()

    def _replace(self, slot: int, rec: _Record, sims_to_old: np.ndarray):
        n = self.count
        col = sims_to_old.astype(np.float64, copy=True)
        col[slot] = 0.0
        self._write_payload(slot, rec)
        self._sim[slot, :n] = col
        self._sim[:n, slot] = col
        self._row_max[slot], self._row_argmax[slot] = self._row_extreme(slot)
        others = np.arange(n) != slot
        improved = others & (col > self._row_max[:n])
        self._row_max[:n][improved] = col[improved]
        self._row_argmax[:n][improved] = slot
        # Rows whose recorded max lived in the rewritten column and shrank
        # can no longer trust the cached value; recompute those rows.
        stale = others & (self._row_argmax[:n] == slot) & (col < self._row_max[:n])
        if stale.any():
            rows = np.flatnonzero(stale)
            block = self._sim[rows, :n].copy()
            block[np.arange(rows.size), rows] = -np.inf
            self._row_max[rows] = block.max(axis=1)
            self._row_argmax[rows] = block.argmax(axis=1)
        self._refresh_max_pair()

    def _row_extreme(self, i: int) -> tuple[float, int]:
        row = self._sim[i, : self.count].copy()
        row[i] = -np.inf
        j = int(np.argmax(row))
        return float(row[j]), j

    def _refresh_max_pair(self):
        n = self.count
        if n < 2:
            self._max_pair = None
            return
        rm = self._row_max[:n]
        value = float(rm.max())
        k = int(np.argmax(rm))
        row = self._sim[k, :n].copy()
        row[k] = -np.inf
        l = int(np.argmax(row == value))
        self._max_pair = (k, l, value)


def offer_randos(mem: CoreMemory, sample: CsiMatrix, cfg: RandosConfig,
                 rng: np.random.Generator, *, position=None, feature=None,
                 taps=None) -> CurationDecision:
    """Offer a sample under the random strategy.

    While filling, the sample is always inserted.  Once full, with
    probability ``p_update`` a slot drawn from ``replacement_pmf``
    (uniform when unset) is overwritten; otherwise the sample is
    discarded.  ``rng`` must be a persistent generator owned by the
    caller: one draw decides update-vs-discard, a second picks the slot.
    """
    rec = mem.prepare_record(sample, feature=feature, taps=taps, position=position)
    mem._ensure_allocated(sample, rec)
    if mem.count < mem.capacity:
        mem._append(rec)
        return CurationDecision(CurationAction.INSERTED_WHILE_FILLING,
                               slot_index=mem.count - 1)
    pmf = cfg.replacement_pmf
    if pmf is not None and pmf.size != mem.capacity:
        raise ValueError(
            f"replacement_pmf has {pmf.size} entries for capacity {mem.capacity}"
        )
    if rng.random() >= cfg.p_update:
        return CurationDecision(CurationAction.DISCARDED)
    if pmf is None:
        slot = int(rng.integers(mem.capacity))
    else:
        slot = int(rng.choice(mem.capacity, p=pmf))
    mem._replace(slot, rec, mem.sims_to(rec.feature))
    return CurationDecision(CurationAction.REPLACED, slot_index=slot)


def offer_sims(mem: CoreMemory, sample: CsiMatrix, cfg: SimsConfig,
               rng: np.random.Generator, *, position=None, feature=None,
               taps=None) -> CurationDecision:
    """Offer a sample under the min-max-similarity strategy.

    Once full, let s be the maximum similarity between the offered sample
    and the memory and (k, l) the most similar stored pair.  The sample is
    admitted only when s is strictly below that pair's similarity, in
    which case slot k is overwritten with probability ``p_tiebreak`` and
    slot l otherwise.  The memory's most-similar-pair value therefore
    never increases across accepted updates.
    """
    if mem.capacity < 2:
        raise ValueError("similarity curation needs capacity >= 2")
    rec = mem.prepare_record(sample, feature=feature, taps=taps, position=position)
    mem._ensure_allocated(sample, rec)
    if mem.count < mem.capacity:
        mem._append(rec)
        return CurationDecision(CurationAction.INSERTED_WHILE_FILLING,
                               slot_index=mem.count - 1)
    sims = mem.sims_to(rec.feature)
    s = float(sims.max())
    k, l, pair_sim = mem.max_pair
    if s < pair_sim:
        slot = k if rng.random() < cfg.p_tiebreak else l
        mem._replace(slot, rec, sims)
        return CurationDecision(CurationAction.REPLACED, slot_index=slot,
                               observed_max_sim_to_memory=s)
    return CurationDecision(CurationAction.DISCARDED,
                           observed_max_sim_to_memory=s)


def memory_snapshot(mem: CoreMemory) -> list[tuple[int, np.ndarray | None, float]]:
    """Summarize the memory for reporting.

    Returns one (arrival_index, position-or-None, max_sim) tuple per
    stored sample in slot order, where max_sim is the sample's maximum
    similarity to the rest of the memory (0.0 for a singleton memory).
    """
    out = []
    coords, mask = mem.positions()
    row_max = mem.row_max_sims()
    for i in range(mem.count):
        pos = coords[i].copy() if mask.size and mask[i] else None
        out.append((int(mem.arrival_indices[i]), pos, float(row_max[i])))
    return out


def rebuild_cache_bruteforce(mem: CoreMemory) -> CoreMemory:
    """Recompute the similarity cache of a copy of ``mem`` from scratch.

    Uses pairwise calls to :func:`~csichart.csi.cosine_similarity` in
    explicit loops, independent of the incremental maintenance path, so
    the two can be compared entrywise.  The input memory is not modified.
    """
    clone = copy.deepcopy(mem)
    n = clone.count
    if clone._sim is None:
        return clone
    sim = np.zeros_like(clone._sim)
    for i in range(n):
        fi = clone._features[i]
        for j in range(i + 1, n):
            v = cosine_similarity(fi, clone._features[j])
            sim[i, j] = v
            sim[j, i] = v
    clone._sim = sim
    clone._row_max = np.full(clone.capacity, -1.0)
    clone._row_argmax = np.full(clone.capacity, -1, dtype=np.int64)
    for i in range(n):
        best, arg = -1.0, -1
        for j in range(n):
            if j != i and sim[i, j] > best:
                best, arg = sim[i, j], j
        clone._row_max[i] = best
        clone._row_argmax[i] = arg
    if n < 2:
        clone._max_pair = None
        return clone
    best = (-1.0, -1, -1)
    for i in range(n):
        for j in range(i + 1, n):
            if sim[i, j] > best[0]:
                best = (sim[i, j], i, j)
    clone._max_pair = (best[1], best[2], float(best[0]))
    return clone
