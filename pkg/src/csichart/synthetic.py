"""Synthetic multipoint CSI streams with ground-truth positions.

A single transmitter moves along a polyline through a square area
observed by several multi-antenna access points.  Each sample's channel
is a sum of the line-of-sight ray and one ray per scatterer; a ray with
total path length r contributes gain/r times a frequency-dependent phase
exp(-j 2 pi f_w tau) across the subcarrier grid, plus circular complex
Gaussian noise scaled relative to the sample's RMS level.

The per-ray accumulation dominates generation cost, so it runs in a
compiled kernel (`numba`) with a pure-numpy twin kept as the reference
implementation for testing.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .csi import CsiMatrix
from .recordio import StreamItem

SPEED_OF_LIGHT = 299_792_458.0
_CHUNK = 256  # noise draws are chunk-aligned so slicing stays reproducible


@dataclass(frozen=True)
class Scatterer:
    """Point scatterer: 3-D position in meters and a unitless gain."""

    position: tuple[float, float, float]
    gain: float


def _default_scatterers() -> tuple[Scatterer, ...]:
    return (
        Scatterer(position=(-5.0, -4.0, 1.5), gain=0.8),
        Scatterer(position=(6.0, 3.0, 1.5), gain=0.7),
        Scatterer(position=(-2.0, 6.0, 1.5), gain=0.6),
    )


def _default_waypoints() -> tuple[tuple[float, float], ...]:
    # corner-to-corner L through the 20 m x 20 m area
    return ((-8.0, 8.0), (8.0, 8.0), (8.0, -8.0))


def _default_ap_layout() -> tuple[tuple[tuple[float, float, float], tuple[float, float, float]], ...]:
    # (center, array axis) per access point, one at each area edge
    return (
        ((-10.0, 0.0, 2.5), (0.0, 1.0, 0.0)),
        ((0.0, 10.0, 2.5), (1.0, 0.0, 0.0)),
        ((10.0, 0.0, 2.5), (0.0, 1.0, 0.0)),
        ((0.0, -10.0, 2.5), (1.0, 0.0, 0.0)),
    )


@dataclass(frozen=True)
class SyntheticScenario:
    """Geometry and radio parameters of a synthetic capture."""

    ap_layout: tuple = field(default_factory=_default_ap_layout)
    antennas_per_ap: int = 8
    waypoints: tuple = field(default_factory=_default_waypoints)
    ue_height: float = 1.0
    speed: float = 0.2
    sample_rate: float = 109.375
    carrier_frequency: float = 1.272e9
    bandwidth: float = 50e6
    n_subcarriers: int = 1024
    noise_std: float = 0.01
    scatterers: tuple = field(default_factory=_default_scatterers)
    min_distance: float = 0.1

    def __post_init__(self):
        if self.antennas_per_ap < 1 or self.n_subcarriers < 1:
            raise ValueError("antennas_per_ap and n_subcarriers must be >= 1")
        if self.speed <= 0.0 or self.sample_rate <= 0.0:
            raise ValueError("speed and sample_rate must be > 0")
        if len(self.waypoints) < 2:
            raise ValueError("trajectory needs at least 2 waypoints")
        if self.noise_std < 0.0:
            raise ValueError("noise_std must be >= 0")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    @property
    def n_aps(self) -> int:
        return len(self.ap_layout)

    @property
    def n_antennas(self) -> int:
        return self.n_aps * self.antennas_per_ap

    @property
    def ap_spans(self) -> tuple[tuple[int, int], ...]:
        g = self.antennas_per_ap
        return tuple((i * g, (i + 1) * g) for i in range(self.n_aps))

    def antenna_positions(self) -> np.ndarray:
        """All antenna coordinates, shape (n_antennas, 3), AP-major, with
        half-wavelength spacing along each AP's array axis."""
        spacing = 0.5 * self.wavelength
        out = np.zeros((self.n_antennas, 3))
        g = self.antennas_per_ap
        for a, (center, axis) in enumerate(self.ap_layout):
            center = np.asarray(center, dtype=np.float64)
            axis = np.asarray(axis, dtype=np.float64)
            axis = axis / np.linalg.norm(axis)
            offsets = (np.arange(g) - (g - 1) / 2.0) * spacing
            out[a * g:(a + 1) * g] = center[None, :] + offsets[:, None] * axis[None, :]
        return out

    def trajectory_length(self) -> float:
        pts = np.asarray(self.waypoints, dtype=np.float64)
        return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())

    def n_samples(self) -> int:
        duration = self.trajectory_length() / self.speed
        # epsilon guards the duration*rate product against a last-ulp
        # shortfall when the rate was derived from a target sample count
        return int(np.floor(duration * self.sample_rate + 1e-9)) + 1

    def positions_at(self, indices: np.ndarray) -> np.ndarray:
        """Ground-plane UE positions for sample indices, shape (n, 2)."""
        pts = np.asarray(self.waypoints, dtype=np.float64)
        seg = np.diff(pts, axis=0)
        seg_len = np.linalg.norm(seg, axis=1)
        cum = np.concatenate([[0.0], np.cumsum(seg_len)])
        s = np.minimum(np.asarray(indices, dtype=np.float64) / self.sample_rate
                       * self.speed, cum[-1])
        seg_idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
        frac = (s - cum[seg_idx]) / seg_len[seg_idx]
        return pts[seg_idx] + frac[:, None] * seg[seg_idx]


def default_scenario(n_samples: int | None = None, n_subcarriers: int = 1024,
                     antennas_per_ap: int = 8, noise_std: float = 0.01,
                     **overrides) -> SyntheticScenario:
    """The standard scenario, optionally rescaled.

    ``n_samples`` adjusts the sample rate so the trajectory yields that
    many samples; the other arguments shrink the radio dimensions for
    fast runs without changing the geometry.
    """
    scenario = SyntheticScenario(n_subcarriers=n_subcarriers,
                                 antennas_per_ap=antennas_per_ap,
                                 noise_std=noise_std, **overrides)
    if n_samples is not None:
        if n_samples < 2:
            raise ValueError("n_samples must be >= 2")
        duration = scenario.trajectory_length() / scenario.speed
        scenario = replace(scenario, sample_rate=(n_samples - 1) / duration)
    return scenario


@njit(cache=True)
def _accumulate_rays(delays, amps, fc, df, n_subcarriers, out, power):  # pragma: no cover
    # phase recurrence along the subcarrier axis, unrolled four wide so
    # the serial complex-multiply chains overlap; per-(sample, antenna)
    # signal power falls out of the same cache-hot pass
    n, b, p = delays.shape
    half = n_subcarriers * 0.5
    for s in range(n):
        for a in range(b):
            for k in range(p):
                tau = delays[s, a, k]
                amp = amps[s, a, k]
                ph0 = -2.0 * np.pi * (fc - half * df) * tau
                cur = amp * (np.cos(ph0) + 1j * np.sin(ph0))
                ang = -2.0 * np.pi * df * tau
                step = np.cos(ang) + 1j * np.sin(ang)
                step4 = (step * step) * (step * step)
                c0 = cur
                c1 = cur * step
                c2 = c1 * step
                c3 = c2 * step
                w = 0
                while w + 4 <= n_subcarriers:
                    out[s, a, w] += c0
                    out[s, a, w + 1] += c1
                    out[s, a, w + 2] += c2
                    out[s, a, w + 3] += c3
                    c0 *= step4
                    c1 *= step4
                    c2 *= step4
                    c3 *= step4
                    w += 4
                while w < n_subcarriers:
                    out[s, a, w] += c0
                    c0 *= step
                    w += 1
            acc = 0.0
            for w in range(n_subcarriers):
                v = out[s, a, w]
                acc += v.real * v.real + v.imag * v.imag
            power[s, a] = acc
    return out


@njit(cache=True)
def _apply_noise(out, draws, scale):  # pragma: no cover
    # out (n, b, w) c128, draws (n, b, w, 2) f32, scale (n,) f64
    n, b, w = out.shape
    for s in range(n):
        g = scale[s]
        for a in range(b):
            for k in range(w):
                out[s, a, k] += complex(g * draws[s, a, k, 0],
                                        g * draws[s, a, k, 1])


def _accumulate_rays_reference(delays, amps, fc, df, n_subcarriers):
    """Pure-numpy twin of the compiled kernel, used as its test oracle.

    Returns ``(out, power)`` matching the kernel's output array and its
    per-(sample, antenna) summed signal power.
    """
    w = np.arange(n_subcarriers)
    freqs = fc + (w - n_subcarriers * 0.5) * df
    phase = np.exp(-2j * np.pi * delays[..., None] * freqs[None, None, None, :])
    out = np.sum(amps[..., None] * phase, axis=2)
    return out, np.sum(np.abs(out) ** 2, axis=-1)


class SyntheticStream:
    """Iterable stream of :class:`StreamItem` over a synthetic scenario.

    Same ``seed`` means a bitwise-identical stream; ``start``/``stop``
    slice by absolute sample index without changing the delivered values
    because noise draws are keyed on (seed, chunk).
    """

    def __init__(self, scenario: SyntheticScenario, seed: int = 0,
                 start: int = 0, stop: int | None = None):
        self.scenario = scenario
        self.seed = int(seed)
        total = scenario.n_samples()
        self.total_records = total
        self.start = int(start)
        self.stop = total if stop is None else min(int(stop), total)
        if not 0 <= self.start <= self.stop:
            raise ValueError(f"bad sample range [{self.start}, {self.stop})")
        self.n_antennas = scenario.n_antennas
        self.n_subcarriers = scenario.n_subcarriers
        self.has_positions = True
        self.position_dim = 2
        self.ap_spans = scenario.ap_spans
        self._antennas = scenario.antenna_positions()
        self._warned_clamp = False

    @property
    def n_samples(self) -> int:
        return self.stop - self.start

    def __len__(self) -> int:
        return self.n_samples

    def _ray_geometry(self, ue: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Total path lengths and gains per (sample, antenna, ray)."""
        sc = self.scenario
        ants = self._antennas
        n = ue.shape[0]
        rays = 1 + len(sc.scatterers)
        dist = np.empty((n, ants.shape[0], rays))
        gain = np.empty(rays)
        dist[:, :, 0] = np.linalg.norm(ue[:, None, :] - ants[None, :, :], axis=2)
        gain[0] = 1.0
        for k, scat in enumerate(sc.scatterers, start=1):
            q = np.asarray(scat.position, dtype=np.float64)
            leg_in = np.linalg.norm(ue - q[None, :], axis=1)
            leg_out = np.linalg.norm(ants - q[None, :], axis=1)
            dist[:, :, k] = leg_in[:, None] + leg_out[None, :]
            gain[k] = scat.gain
        clamped = dist < sc.min_distance
        if clamped.any():
            dist = np.maximum(dist, sc.min_distance)
            if not self._warned_clamp:
                warnings.warn(
                    f"{int(clamped.sum())} ray paths shorter than "
                    f"{sc.min_distance} m were clamped", stacklevel=3)
                self._warned_clamp = True
        amps = gain[None, None, :] / dist
        return dist, amps

    def _chunk(self, lo: int, hi: int):
        """Synthesize absolute samples [lo, hi) as arrays."""
        sc = self.scenario
        idx = np.arange(lo, hi)
        pos2d = sc.positions_at(idx)
        ue = np.column_stack([pos2d, np.full(idx.size, sc.ue_height)])
        dist, amps = self._ray_geometry(ue)
        delays = dist / SPEED_OF_LIGHT
        df = sc.bandwidth / sc.n_subcarriers
        out = np.zeros((idx.size, self._antennas.shape[0], sc.n_subcarriers),
                       dtype=np.complex128)
        power = np.empty((idx.size, self._antennas.shape[0]))
        _accumulate_rays(delays, amps, sc.carrier_frequency, df,
                         sc.n_subcarriers, out, power)
        if sc.noise_std > 0.0:
            # SFC64 + float32 draws: the contract is per-chunk determinism
            # keyed by (seed, chunk start), not any particular bit stream
            rng = np.random.Generator(
                np.random.SFC64(np.random.SeedSequence([self.seed, lo])))
            draws = rng.standard_normal(out.shape + (2,), dtype=np.float32)
            rms = np.sqrt(power.sum(axis=1) / (out.shape[1] * out.shape[2]))
            _apply_noise(out, draws, (sc.noise_std / np.sqrt(2.0)) * rms)
        timestamps = idx / sc.sample_rate
        return idx, timestamps, pos2d, out

    def __iter__(self):
        spans = self.ap_spans
        first_chunk = (self.start // _CHUNK) * _CHUNK
        for lo in range(first_chunk, self.stop, _CHUNK):
            # always synthesize the whole chunk: a stop-clipped noise draw
            # would shift the RNG stream and break slice invariance
            hi = min(lo + _CHUNK, self.total_records)
            idx, ts, pos, entries = self._chunk(lo, hi)
            for r in range(idx.size):
                if not self.start <= idx[r] < self.stop:
                    continue
                csi = CsiMatrix(entries=entries[r], sample_index=int(idx[r]),
                                timestamp=float(ts[r]), ap_spans=spans)
                yield StreamItem(csi=csi, position=pos[r].copy())