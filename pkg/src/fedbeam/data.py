"""Beam traffic ingestion, synthetic generation, windowing, and scaling.

Each beam is an hourly series of uplink/downlink volumes plus the share of
traffic in four application categories.  The CSV schema is:

    hour,downlink,uplink,communication,streaming,cloud_services,system_updates

with hour a 0-based consecutive integer and the four shares fractions that
sum to 1.  Share sums off by more than 1e-3 are rejected with their line
number; smaller deviations are renormalized.  Rejecting (rather than
dropping rows) keeps the consecutive-timestamp invariant intact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, IngestionError

CATEGORIES = ("communication", "streaming", "cloud_services", "system_updates")
CSV_HEADER = "hour,downlink,uplink," + ",".join(CATEGORIES)

# Rows may miss an exact share sum by this much before they are rejected.
SHARE_SUM_TOLERANCE = 1e-3


@dataclass(frozen=True)
class TrafficRecord:
    """One hour of one beam: volumes plus category shares."""

    timestamp: int
    downlink: float
    uplink: float
    shares: np.ndarray


@dataclass(frozen=True)
class BeamSeries:
    beam_id: str
    records: tuple[TrafficRecord, ...]

    def __len__(self) -> int:
        return len(self.records)

    def volumes(self) -> np.ndarray:
        """(n, 2) array of [downlink, uplink] per hour."""
        return np.array([[r.downlink, r.uplink] for r in self.records], dtype=np.float64)

    def shares_matrix(self) -> np.ndarray:
        return np.array([r.shares for r in self.records], dtype=np.float64)


@dataclass(frozen=True)
class WindowedSample:
    """Features are the last W hours as [dl_t, ul_t] pairs, oldest first."""

    features: np.ndarray
    target: np.ndarray


@dataclass(frozen=True)
class Scaler:
    """Per-feature min-max ranges, fit on training features only."""

    feature_min: np.ndarray
    feature_max: np.ndarray


def _parse_share(raw: str, column: str, line_no: int) -> float:
    try:
        value = float(raw)
    except ValueError as exc:
        raise IngestionError(f"line {line_no}: {column} is not a number: {raw!r}") from exc
    if not math.isfinite(value):
        raise IngestionError(f"line {line_no}: {column} is not finite: {raw!r}")
    return value


def load_csv(path: str, beam_id: str | None = None) -> BeamSeries:
    """Read and validate one beam CSV."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise IngestionError(f"{path}: file is empty")
    if lines[0].strip() != CSV_HEADER:
        raise IngestionError(
            f"{path}: header must be exactly {CSV_HEADER!r}, got {lines[0]!r}"
        )
    records = []
    for i, line in enumerate(lines[1:]):
        line_no = i + 2
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != 7:
            raise IngestionError(
                f"{path} line {line_no}: expected 7 columns, got {len(fields)}"
            )
        try:
            hour = int(fields[0])
        except ValueError as exc:
            raise IngestionError(
                f"{path} line {line_no}: hour is not an integer: {fields[0]!r}"
            ) from exc
        if hour != len(records):
            raise IngestionError(
                f"{path} line {line_no}: hour {hour} breaks the 0-based "
                f"consecutive sequence (expected {len(records)})"
            )
        downlink = _parse_share(fields[1], "downlink", line_no)
        uplink = _parse_share(fields[2], "uplink", line_no)
        if downlink < 0 or uplink < 0:
            raise IngestionError(f"{path} line {line_no}: volumes must be non-negative")
        shares = np.array(
            [_parse_share(fields[3 + j], CATEGORIES[j], line_no) for j in range(4)],
            dtype=np.float64,
        )
        if np.any(shares < -SHARE_SUM_TOLERANCE) or np.any(shares > 1 + SHARE_SUM_TOLERANCE):
            raise IngestionError(
                f"{path} line {line_no}: shares must lie in [0, 1], got {shares.tolist()}"
            )
        shares = np.clip(shares, 0.0, 1.0)
        total = float(shares.sum())
        if abs(total - 1.0) > SHARE_SUM_TOLERANCE:
            raise IngestionError(
                f"{path} line {line_no}: shares sum to {total:.6f}, "
                f"outside 1 +/- {SHARE_SUM_TOLERANCE}"
            )
        shares = shares / total
        records.append(TrafficRecord(hour, downlink, uplink, shares))
    if not records:
        raise IngestionError(f"{path}: no data rows")
    name = beam_id if beam_id is not None else path
    return BeamSeries(name, tuple(records))


def render_csv(series: BeamSeries) -> str:
    """Serialize a series back to the CSV schema, byte-stable."""
    lines = [CSV_HEADER]
    for r in series.records:
        cells = [str(r.timestamp), repr(float(r.downlink)), repr(float(r.uplink))]
        cells.extend(repr(float(s)) for s in r.shares)
        lines.append(",".join(cells))
    lines.append("")
    return "\n".join(lines)


@dataclass(frozen=True)
class BeamProfile:
    """Shape of one synthetic beam's diurnal traffic."""

    index: int
    base_downlink: float
    base_uplink: float
    downlink_swing: float
    uplink_swing: float
    peak_hour: float
    volume_noise: float
    share_noise: float


def default_profiles(n_beams: int) -> list[BeamProfile]:
    """Distinct per-beam offsets so beams differ in scale and phase."""
    if n_beams < 1:
        raise ConfigurationError(f"n_beams must be >= 1, got {n_beams}")
    profiles = []
    for i in range(n_beams):
        profiles.append(
            BeamProfile(
                index=i,
                base_downlink=100.0 + 40.0 * i,
                base_uplink=30.0 + 12.0 * i,
                downlink_swing=0.55 + 0.04 * (i % 3),
                uplink_swing=0.45,
                peak_hour=float((5 * i) % 24),
                volume_noise=0.04,
                share_noise=0.06,
            )
        )
    return profiles


# Fixed share map: category scores are exp of a smooth function of the
# diurnal phase and the normalized volume deviations.  The map is shared by
# all beams; only the phase offset and volume scales differ per profile.
_SHARE_PHASE_GAIN = np.array([0.9, -1.1, 0.7, -0.5])
_SHARE_PHASE_SHIFT = np.array([0.0, 0.7, 2.1, 3.4])
_SHARE_DL_GAIN = np.array([0.8, -0.6, 0.4, -0.9])
_SHARE_UL_GAIN = np.array([-0.5, 0.9, -0.7, 0.6])


def generate_synthetic(seed: int, hours: int, profile: BeamProfile) -> BeamSeries:
    """Deterministic diurnal beam with a nonlinear share map.

    Volumes follow 24-hour sinusoids with multiplicative noise; shares come
    from exponentiated smooth scores of (phase, volume deviation), jittered
    and normalized to sum exactly to 1.
    """
    if hours < 1:
        raise ConfigurationError(f"hours must be >= 1, got {hours}")
    rng = np.random.default_rng(np.random.SeedSequence((seed, profile.index)))
    t = np.arange(hours, dtype=np.float64)
    phase = 2.0 * np.pi * ((t + profile.peak_hour) % 24.0) / 24.0

    dl_shape = 1.0 + profile.downlink_swing * np.cos(phase)
    ul_shape = 1.0 + profile.uplink_swing * np.cos(phase - 2.0)
    downlink = profile.base_downlink * dl_shape * np.exp(
        profile.volume_noise * rng.standard_normal(hours)
    )
    uplink = profile.base_uplink * ul_shape * np.exp(
        profile.volume_noise * rng.standard_normal(hours)
    )

    dl_dev = downlink / profile.base_downlink - 1.0
    ul_dev = uplink / profile.base_uplink - 1.0
    scores = np.exp(
        _SHARE_PHASE_GAIN[None, :] * np.sin(phase[:, None] + _SHARE_PHASE_SHIFT[None, :])
        + _SHARE_DL_GAIN[None, :] * dl_dev[:, None]
        + _SHARE_UL_GAIN[None, :] * ul_dev[:, None]
    )
    scores = scores * np.exp(profile.share_noise * rng.standard_normal((hours, 4)))
    shares = scores / scores.sum(axis=1, keepdims=True)

    records = tuple(
        TrafficRecord(int(i), float(downlink[i]), float(uplink[i]), shares[i].copy())
        for i in range(hours)
    )
    return BeamSeries(f"beam-{profile.index + 1:02d}", records)


def make_windows(series: BeamSeries, window_hours: int) -> list[WindowedSample]:
    """Sliding windows: sample t covers hours [t, t+W), target is hour t+W."""
    if window_hours < 1:
        raise ConfigurationError(f"window_hours must be >= 1, got {window_hours}")
    n = len(series)
    if n < window_hours + 1:
        raise ConfigurationError(
            f"beam {series.beam_id!r} has {n} hours; windowing needs at least "
            f"{window_hours + 1}"
        )
    volumes = series.volumes()
    shares = series.shares_matrix()
    samples = []
    for start in range(n - window_hours):
        window = volumes[start : start + window_hours]
        features = window.reshape(-1).copy()
        target = shares[start + window_hours].copy()
        samples.append(WindowedSample(features, target))
    return samples


def chrono_split(
    samples: list[WindowedSample], train_fraction: float
) -> tuple[list[WindowedSample], list[WindowedSample]]:
    """First floor(f*n) samples train, remainder test; order preserved."""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigurationError(
            f"train_fraction must be in (0, 1), got {train_fraction}"
        )
    n = len(samples)
    n_train = int(math.floor(train_fraction * n))
    if n_train == 0 or n_train == n:
        raise ConfigurationError(
            f"split of {n} samples at {train_fraction} leaves an empty side"
        )
    return samples[:n_train], samples[n_train:]


def fit_scaler(train_samples: list[WindowedSample]) -> Scaler:
    if not train_samples:
        raise ConfigurationError("cannot fit a scaler on an empty training set")
    features = np.stack([s.features for s in train_samples])
    return Scaler(features.min(axis=0), features.max(axis=0))


def apply_scaler(scaler: Scaler, samples: list[WindowedSample]) -> list[WindowedSample]:
    """Min-max scale features; degenerate columns map to 0; targets pass through."""
    span = scaler.feature_max - scaler.feature_min
    safe = np.where(span > 0, span, 1.0)
    out = []
    for s in samples:
        scaled = (s.features - scaler.feature_min) / safe
        scaled = np.where(span > 0, scaled, 0.0)
        out.append(WindowedSample(scaled, s.target))
    return out
