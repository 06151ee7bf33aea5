"""CSI sample types and delay-domain feature extraction.

A CSI sample is a complex matrix of channel estimates over receive
antennas and OFDM subcarriers.  Features are formed by transforming each
antenna's frequency response to the delay domain, keeping the leading
taps, taking entrywise magnitudes, and scaling the stacked vector to
unit Euclidean norm.  The absolute cosine similarity between two such
features is the primitive that drives core-memory curation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_C_TAPS = 16


class ZeroFeatureError(ValueError):
    """Raised for a sample whose truncated delay-domain magnitude is all zero."""


def _normalize_spans(ap_spans, n_antennas: int) -> tuple[tuple[int, int], ...]:
    """Validate access-point antenna spans: contiguous, ordered, covering."""
    spans = tuple((int(a), int(b)) for a, b in ap_spans)
    cursor = 0
    for a, b in spans:
        if a != cursor or b <= a:
            raise ValueError(f"ap_spans must partition [0, {n_antennas}) in order, got {spans}")
        cursor = b
    if cursor != n_antennas:
        raise ValueError(f"ap_spans cover [0, {cursor}) but sample has {n_antennas} antennas")
    return spans


@dataclass(frozen=True)
class CsiMatrix:
    """One CSI sample: complex entries indexed antenna x subcarrier.

    Parameters
    ----------
    entries : ndarray
        Complex matrix of shape (n_antennas, n_subcarriers).  All entries
        must be finite.
    sample_index : int
        Arrival index of the sample within its stream.
    timestamp : float, optional
        Capture time in seconds.
    ap_spans : tuple of (start, stop), optional
        Contiguous antenna index ranges, one per access point, partitioning
        the antenna axis.  ``None`` means a single access point.
    """

    entries: np.ndarray
    sample_index: int = 0
    timestamp: float | None = None
    ap_spans: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.complex128)
        if entries.ndim != 2 or entries.shape[0] < 1 or entries.shape[1] < 1:
            raise ValueError(f"CSI entries must be a 2-D matrix, got shape {entries.shape}")
        if not np.isfinite(entries).all():
            raise ValueError("CSI entries contain non-finite values")
        object.__setattr__(self, "entries", entries)
        if self.ap_spans is not None:
            object.__setattr__(
                self, "ap_spans", _normalize_spans(self.ap_spans, entries.shape[0])
            )

    @property
    def n_antennas(self) -> int:
        return self.entries.shape[0]

    @property
    def n_subcarriers(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class DelayDomainCsi:
    """Truncated delay-domain form of a sample: antenna x tap complex matrix."""

    taps: np.ndarray
    sample_index: int = 0
    ap_spans: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.complex128)
        if taps.ndim != 2 or taps.shape[0] < 1 or taps.shape[1] < 1:
            raise ValueError(f"delay-domain taps must be a 2-D matrix, got shape {taps.shape}")
        object.__setattr__(self, "taps", taps)
        if self.ap_spans is not None:
            object.__setattr__(self, "ap_spans", _normalize_spans(self.ap_spans, taps.shape[0]))

    @property
    def n_antennas(self) -> int:
        return self.taps.shape[0]

    @property
    def n_taps(self) -> int:
        return self.taps.shape[1]


@dataclass(frozen=True)
class CsiFeature:
    """Nonnegative unit-norm feature vector used for similarity and charting."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size < 1:
            raise ValueError(f"feature must be a 1-D vector, got shape {values.shape}")
        if not np.isfinite(values).all():
            raise ValueError("feature contains non-finite values")
        if (values < 0.0).any():
            raise ValueError("feature entries must be nonnegative")
        norm = float(np.linalg.norm(values))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"feature must have unit norm, got {norm!r}")
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class GroundTruthPosition:
    """Reference position tied to a sample index, 2-D or 3-D, meters."""

    coords: np.ndarray
    sample_index: int = 0

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.ndim != 1 or coords.size not in (2, 3):
            raise ValueError(f"position must have 2 or 3 coordinates, got shape {coords.shape}")
        if not np.isfinite(coords).all():
            raise ValueError("position contains non-finite values")
        object.__setattr__(self, "coords", coords)


def to_delay_domain(sample: CsiMatrix, c_taps: int = DEFAULT_C_TAPS) -> DelayDomainCsi:
    """Transform a sample to the delay domain and keep the leading taps.

    Applies the inverse DFT with 1/W normalization along the subcarrier
    axis of each antenna and truncates to the first ``c_taps`` delay taps.

    Parameters
    ----------
    sample : CsiMatrix
    c_taps : int
        Number of leading taps to keep; must satisfy 1 <= c_taps <= W.

    Returns
    -------
    DelayDomainCsi
    """
    c_taps = int(c_taps)
    if c_taps < 1:
        raise ValueError(f"c_taps must be >= 1, got {c_taps}")
    if c_taps > sample.n_subcarriers:
        raise ValueError(
            f"c_taps={c_taps} exceeds the {sample.n_subcarriers} available subcarriers"
        )
    taps = np.fft.ifft(sample.entries, axis=1)[:, :c_taps]
    return DelayDomainCsi(
        taps=taps, sample_index=sample.sample_index, ap_spans=sample.ap_spans
    )


def extract_feature(dd: DelayDomainCsi) -> CsiFeature:
    """Build the unit-norm magnitude feature from truncated delay taps.

    Tap magnitudes are stacked antenna-major (all taps of antenna 0, then
    antenna 1, ...) and the stacked vector is scaled to unit Euclidean
    norm.  Raises :class:`ZeroFeatureError` when every tap is zero, since
    the feature direction is then undefined.
    """
    mags = np.abs(dd.taps).ravel()
    norm = float(np.linalg.norm(mags))
    if norm == 0.0:
        raise ZeroFeatureError(
            f"sample {dd.sample_index}: all truncated delay taps are zero"
        )
    return CsiFeature(values=mags / norm)


def cosine_similarity(a, b) -> float:
    """Absolute cosine similarity between two feature vectors, clipped to [0, 1].

    Accepts :class:`CsiFeature` instances or plain 1-D arrays.  Raises
    ``ValueError`` on zero-norm input or mismatched dimensions.
    """
    va = np.asarray(getattr(a, "values", a), dtype=np.float64)
    vb = np.asarray(getattr(b, "values", b), dtype=np.float64)
    if va.shape != vb.shape:
        raise ValueError(f"feature dimensions differ: {va.shape} vs {vb.shape}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity of a zero-norm feature is undefined")
    sim = abs(float(np.dot(va, vb))) / (na * nb)
    return min(sim, 1.0)


def delay_taps_batch(entries: np.ndarray, c_taps: int = DEFAULT_C_TAPS) -> np.ndarray:
    """Batch form of :func:`to_delay_domain` for a (n, B, W) stack."""
    entries = np.asarray(entries, dtype=np.complex128)
    if entries.ndim != 3:
        raise ValueError(f"expected a (n, B, W) stack, got shape {entries.shape}")
    c_taps = int(c_taps)
    if not 1 <= c_taps <= entries.shape[2]:
        raise ValueError(f"c_taps={c_taps} out of range for W={entries.shape[2]}")
    return np.fft.ifft(entries, axis=2)[:, :, :c_taps]


def feature_rows(taps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batch form of :func:`extract_feature` for a (n, B, C) tap stack.

    Returns ``(features, valid)`` where ``features`` is (n, B*C) float64
    with unit-norm rows and ``valid`` marks rows whose tap magnitudes were
    not identically zero.  Invalid rows are left as zeros; callers decide
    whether to drop or reject them.
    """
    taps = np.asarray(taps)
    if taps.ndim != 3:
        raise ValueError(f"expected a (n, B, C) stack, got shape {taps.shape}")
    mags = np.abs(taps).reshape(taps.shape[0], -1)
    norms = np.linalg.norm(mags, axis=1)
    valid = norms > 0.0
    out = np.zeros_like(mags)
    np.divide(mags, norms[:, None], out=out, where=valid[:, None])
    return out, valid
