"""Adaptive spectral band decomposition with a partition-of-unity filter bank.

The half spectrum [0, pi] is segmented by detecting the largest local maxima
of the magnitude spectrum and placing interior boundaries at midpoints of
adjacent maxima. Each band gets a raised-cosine bandpass filter; adjacent
filters crossfade so that the gains sum to one at every bin, which makes the
band components add back to the input exactly. This is a partition of unity,
not a tight frame: sum of gains is 1, sum of squared gains is not.

Bin j of an n_bins half spectrum is assigned the normalized frequency
pi * j / (n_bins - 1).
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True, eq=False)
class Boundaries:
    """Band edges on [0, pi]: omegas[0] = 0, omegas[-1] = pi, strictly increasing."""

    omegas: np.ndarray

    def __post_init__(self) -> None:
        om = np.array(self.omegas, dtype=np.float64, copy=True)
        if om.ndim != 1 or om.size < 2:
            raise ValueError("Boundaries: need at least [0, pi]")
        if om[0] != 0.0 or abs(om[-1] - np.pi) > 1e-12:
            raise ValueError("Boundaries: first edge must be 0 and last pi")
        if not np.all(np.diff(om) > 0.0):
            raise ValueError("Boundaries: edges must be strictly increasing")
        om.flags.writeable = False
        object.__setattr__(self, "omegas", om)

    @property
    def n_bands(self) -> int:
        return int(self.omegas.size - 1)


@dataclass(frozen=True, eq=False)
class FilterBank:
    """Per-band gains over the half-spectrum bins, rows summing to one."""

    filters: np.ndarray  # (n_bands, n_bins), values in [0, 1]
    boundaries: Boundaries
    gamma: float  # effective transition ratio after clamping

    def __post_init__(self) -> None:
        f = np.array(self.filters, dtype=np.float64, copy=True)
        if f.ndim != 2 or f.shape[0] != self.boundaries.n_bands:
            raise ValueError("FilterBank: filters must be (n_bands, n_bins)")
        f.flags.writeable = False
        object.__setattr__(self, "filters", f)

    @property
    def n_bands(self) -> int:
        return int(self.filters.shape[0])

    @property
    def n_bins(self) -> int:
        return int(self.filters.shape[1])


@dataclass(frozen=True, eq=False)
class BandComponents:
    """Stacked time-domain band signals, one row per band."""

    components: np.ndarray  # (n_bands, length)

    def __post_init__(self) -> None:
        c = np.array(self.components, dtype=np.float64, copy=True)
        if c.ndim != 2:
            raise ValueError("BandComponents: expected a (n_bands, length) array")
        c.flags.writeable = False
        object.__setattr__(self, "components", c)

    @property
    def n_bands(self) -> int:
        return int(self.components.shape[0])


def bin_frequencies(n_bins: int) -> np.ndarray:
    """Normalized frequency of each half-spectrum bin, linear on [0, pi]."""
    if n_bins < 2:
        raise ValueError("bin_frequencies: need at least 2 bins")
    return np.linspace(0.0, np.pi, n_bins)


def _detect_boundaries_batch(signals: np.ndarray, n_bands: int) -> tuple[np.ndarray, int]:
    """Boundary edges (N, n_bands + 1) for each row of signals.

    Peak detection runs on the magnitude spectrum of the mean-removed row
    (the DC bin would otherwise dominate). Strict local maxima only, DC and
    Nyquist excluded; ties broken toward the lower frequency. Rows with too
    few maxima are completed by halving the widest band; the second return
    value counts such rows.
    """
    x = np.asarray(signals, dtype=np.float64)
    n, t = x.shape
    if t < 2 * n_bands:
        raise ValueError(f"detect_boundaries: signal length {t} < 2 * n_bands = {2 * n_bands}")
    omegas = np.empty((n, n_bands + 1))
    omegas[:, 0] = 0.0
    omegas[:, -1] = np.pi
    if n_bands == 1:
        return omegas, 0

    mag = np.abs(np.fft.rfft(x - x.mean(axis=1, keepdims=True), axis=1))
    n_bins = mag.shape[1]
    freqs = bin_frequencies(n_bins)
    # Strict interior maxima; a plateau never counts.
    is_max = np.zeros_like(mag, dtype=bool)
    if n_bins >= 3:
        is_max[:, 1:-1] = (mag[:, 1:-1] > mag[:, :-2]) & (mag[:, 1:-1] > mag[:, 2:])
    score = np.where(is_max, mag, -np.inf)
    # Stable sort on the negated score keeps equal magnitudes in bin order,
    # which is exactly the lower-frequency tie break.
    order = np.argsort(-score, axis=1, kind="stable")
    n_found = is_max.sum(axis=1)

    n_fallback = 0
    for i in range(n):
        k = min(n_bands, int(n_found[i]))
        peaks = np.sort(order[i, :k])
        edges = [0.0]
        edges.extend(0.5 * (freqs[peaks[:-1]] + freqs[peaks[1:]]))
        edges.append(np.pi)
        if k < n_bands:
            n_fallback += 1
            while len(edges) < n_bands + 1:
                widths = np.diff(edges)
                w = int(np.argmax(widths))
                edges.insert(w + 1, 0.5 * (edges[w] + edges[w + 1]))
        omegas[i, :] = edges
    return omegas, n_fallback


def detect_boundaries(signal: np.ndarray, n_bands: int) -> Boundaries:
    """Segment [0, pi] into n_bands bands adapted to one signal's spectrum.

    Keeps the n_bands largest-magnitude strict local maxima and places the
    n_bands - 1 interior boundaries at midpoints of adjacent kept maxima.
    If the spectrum offers fewer maxima, the widest band is subdivided until
    the count is reached and a warning is emitted.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("detect_boundaries: expected a 1-d signal")
    if n_bands < 1:
        raise ValueError("detect_boundaries: n_bands must be >= 1")
    omegas, n_fallback = _detect_boundaries_batch(x[None, :], n_bands)
    if n_fallback:
        warnings.warn(
            f"detect_boundaries: fewer than {n_bands} spectral maxima, "
            "padded by subdividing the widest band",
            stacklevel=2,
        )
    return Boundaries(omegas[0])


def max_transition_ratio(omegas: np.ndarray) -> np.ndarray:
    """Largest feasible gamma per boundary row: min over adjacent edge pairs
    of (w_hi - w_lo) / (w_hi + w_lo). Keeps raised-cosine transitions of
    half-width gamma * omega_b from overlapping each other or the segment ends.
    """
    om = np.atleast_2d(np.asarray(omegas, dtype=np.float64))
    lo, hi = om[:, :-1], om[:, 1:]
    ratio = (hi - lo) / (hi + lo)
    return ratio.min(axis=1)


def _build_filters_batch(
    omegas: np.ndarray, n_bins: int, gamma: float | None
) -> tuple[np.ndarray, np.ndarray, int]:
    """Filter tensors (N, n_bands, n_bins) for each boundary row.

    Band b is the difference of two cumulative rising edges, so the rows of
    each bank telescope to one at every bin. gamma None means half of the
    feasible maximum per row; an explicit gamma is clamped down per row when
    infeasible (count of clamped rows returned). gamma 0 gives hard masks
    with the convention that a bin exactly on a boundary joins the upper band.
    """
    om = np.asarray(omegas, dtype=np.float64)
    n, b_edges = om.shape
    n_bands = b_edges - 1
    freqs = bin_frequencies(n_bins)

    feasible = max_transition_ratio(om)
    n_clamped = 0
    if gamma is None:
        gam = 0.5 * feasible
    else:
        if gamma < 0.0:
            raise ValueError(f"build_filter_bank: gamma must be >= 0, got {gamma}")
        gam = np.full(n, float(gamma))
        over = gam > feasible
        n_clamped = int(over.sum())
        gam = np.where(over, feasible, gam)

    # Cumulative edges: ups[:, 0] = 1 (no lower edge for band 1), ups[:, B] = 0
    # (band B runs through pi). Interior edge k rises from 0 to 1 around
    # omega_k over half-width gam * omega_k.
    ups = np.empty((n, n_bands + 1, n_bins))
    ups[:, 0, :] = 1.0
    ups[:, n_bands, :] = 0.0
    for k in range(1, n_bands):
        center = om[:, k][:, None]
        width = (gam * om[:, k])[:, None]
        f = freqs[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.clip((f - (center - width)) / (2.0 * width), 0.0, 1.0)
        hard = (f >= center).astype(np.float64)
        edge = np.where(width > 0.0, 0.5 * (1.0 - np.cos(np.pi * s)), hard)
        ups[:, k, :] = edge
    filters = ups[:, :-1, :] - ups[:, 1:, :]
    return filters, gam, n_clamped


def build_filter_bank(
    boundaries: Boundaries, n_bins: int, gamma: float | None = None
) -> FilterBank:
    """Raised-cosine partition-of-unity bank over n_bins half-spectrum bins.

    gamma is the transition half-width as a fraction of the boundary
    frequency. None picks half of the feasible maximum; a value above the
    feasible maximum is clamped down with a warning; zero yields hard masks.
    """
    filters, gam, n_clamped = _build_filters_batch(boundaries.omegas[None, :], n_bins, gamma)
    if n_clamped:
        warnings.warn(
            f"build_filter_bank: gamma {gamma} infeasible for these boundaries, "
            f"clamped to {gam[0]:.6g}",
            stacklevel=2,
        )
    return FilterBank(filters=filters[0], boundaries=boundaries, gamma=float(gam[0]))


def _apply_filters(signals: np.ndarray, filters: np.ndarray) -> np.ndarray:
    """Band components (N, n_bands, T) of signals (N, T) under filters (N, n_bands, n_bins)."""
    spec = np.fft.rfft(signals, axis=-1)
    return np.fft.irfft(spec[:, None, :] * filters, n=signals.shape[-1], axis=-1)


def decompose(signal: np.ndarray, bank: FilterBank) -> BandComponents:
    """Split a signal into additive band components via the given bank.

    The bank must have been built for this signal length. A single-band bank
    is the identity and short-circuits to a copy of the input.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("decompose: expected a 1-d signal")
    n_bins = x.size // 2 + 1
    if n_bins != bank.n_bins:
        raise ValueError(
            f"decompose: signal of length {x.size} has {n_bins} spectrum bins, "
            f"bank was built for {bank.n_bins}"
        )
    if bank.n_bands == 1:
        return BandComponents(x[None, :])
    return BandComponents(_apply_filters(x[None, :], bank.filters[None, :, :])[0])


def decompose_windows(
    signals: np.ndarray, n_bands: int, gamma: float | None = None
) -> np.ndarray:
    """Per-window decomposition of stacked signals (N, T) into (N, n_bands, T).

    Each row gets its own boundaries and bank, matching detect_boundaries +
    build_filter_bank + decompose row by row. Fallback subdivision warnings
    are aggregated into one message.
    """
    x = np.asarray(signals, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("decompose_windows: expected a (N, T) array")
    if n_bands == 1:
        return x[:, None, :].copy()
    omegas, n_fallback = _detect_boundaries_batch(x, n_bands)
    if n_fallback:
        warnings.warn(
            f"decompose_windows: {n_fallback} of {x.shape[0]} windows had fewer than "
            f"{n_bands} spectral maxima, padded by subdividing the widest band",
            stacklevel=2,
        )
    n_bins = x.shape[1] // 2 + 1
    filters, _, _ = _build_filters_batch(omegas, n_bins, gamma)
    return _apply_filters(x, filters)


def decompose_with_bank(signals: np.ndarray, bank: FilterBank) -> np.ndarray:
    """Batch variant of decompose with one shared bank; returns (N, n_bands, T)."""
    x = np.atleast_2d(np.asarray(signals, dtype=np.float64))
    if x.shape[1] // 2 + 1 != bank.n_bins:
        raise ValueError("decompose_with_bank: signal length does not match the bank")
    if bank.n_bands == 1:
        return x[:, None, :].copy()
    return _apply_filters(x, bank.filters[None, :, :])


def reconstruct(components: BandComponents | np.ndarray) -> np.ndarray:
    """Sum the band components back into one signal."""
    c = components.components if isinstance(components, BandComponents) else np.asarray(components)
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 2:
        raise ValueError("reconstruct: expected (n_bands, length) components")
    return c.sum(axis=0)


def filter_bank_rows(bank: FilterBank) -> list[tuple]:
    """Debug rows (bin index, frequency, gain per band) for CSV export."""
    freqs = bin_frequencies(bank.n_bins)
    rows = []
    for j in range(bank.n_bins):
        rows.append((j, float(freqs[j])) + tuple(float(g) for g in bank.filters[:, j]))
    return rows


def write_filter_bank_csv(bank: FilterBank, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin", "omega"] + [f"gain_band{b + 1}" for b in range(bank.n_bands)])
        for row in filter_bank_rows(bank):
            writer.writerow([row[0]] + [repr(v) for v in row[1:]])
