"""Trust features and trust-ratio calibration.

Each track gets a discrete feature triple (vessel type, waterway-bound,
anchoring), held constant over the journey. Calibration runs the full
tracking loop over historical tracks for every candidate trust ratio and
picks, per feature bucket, the ratio minimizing the bucket-mean position
error; ties resolve to the smallest ratio, and since every grid contains
0, a calibrated bucket can never do worse in-sample than the plain filter.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DegenerateBeliefError, FormatError
from .ingest import Track
from .particlefilter import FilterConfig, run_filter

# AIS ship-type code ranges (ITU-R M.1371 summary table).
_TYPE_RANGES = [
    (30, 30, "fishing"),
    (31, 32, "towing"),
    (33, 35, "special"),
    (36, 36, "sailing"),
    (37, 37, "pleasure"),
    (40, 49, "high_speed"),
    (50, 59, "special"),
    (60, 69, "passenger"),
    (70, 79, "cargo"),
    (80, 89, "tanker"),
]

DEFAULT_DRAFT_THRESHOLD_M = 9.0
DEFAULT_ANCHOR_SOG_KN = 0.5
DEFAULT_TAU_GRID = tuple(round(0.1 * i, 1) for i in range(11))


def vessel_type_name(code: int | None) -> str:
    if code is None:
        return "unknown"
    for lo, hi, name in _TYPE_RANGES:
        if lo <= code <= hi:
            return name
    return "other"


@dataclass(frozen=True)
class TrustFeatures:
    vessel_type: str
    waterway_bound: bool
    anchoring: bool

    def key(self) -> str:
        return f"{self.vessel_type}|{int(self.waterway_bound)}|{int(self.anchoring)}"


def extract_features(track: Track,
                     draft_threshold_m: float = DEFAULT_DRAFT_THRESHOLD_M,
                     anchor_sog_kn: float = DEFAULT_ANCHOR_SOG_KN) -> TrustFeatures:
    """Derive the feature triple from a track's metadata.

    waterway_bound: deep draft or a cargo/tanker type code; anchoring:
    median speed over ground below the threshold. Missing metadata falls
    back to the "unknown" type and False flags.
    """
    meta = track.metadata or {}
    vtype = vessel_type_name(meta.get("vessel_type"))
    draft = meta.get("draft")
    waterway_bound = bool(
        (draft is not None and draft >= draft_threshold_m)
        or vtype in ("cargo", "tanker")
    )
    sog = meta.get("sog_median_kn")
    anchoring = bool(sog is not None and sog < anchor_sog_kn)
    return TrustFeatures(
        vessel_type=vtype, waterway_bound=waterway_bound, anchoring=anchoring
    )


@dataclass(frozen=True)
class TrustTable:
    entries: tuple[tuple[TrustFeatures, float], ...]
    default_tau: float = 0.0

    def __post_init__(self):
        for _, tau in self.entries:
            if not 0.0 <= tau <= 1.0:
                raise ConfigurationError(f"stored tau {tau} outside [0, 1]")
        if not 0.0 <= self.default_tau <= 1.0:
            raise ConfigurationError(f"default tau {self.default_tau} outside [0, 1]")

    def lookup(self, features: TrustFeatures) -> float:
        for stored, tau in self.entries:
            if stored == features:
                return tau
        return self.default_tau

    def to_json(self) -> dict:
        return {
            "default_tau": self.default_tau,
            "entries": [
                {
                    "vessel_type": f.vessel_type,
                    "waterway_bound": f.waterway_bound,
                    "anchoring": f.anchoring,
                    "tau": tau,
                }
                for f, tau in self.entries
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TrustTable":
        try:
            entries = tuple(
                (
                    TrustFeatures(
                        vessel_type=str(e["vessel_type"]),
                        waterway_bound=bool(e["waterway_bound"]),
                        anchoring=bool(e["anchoring"]),
                    ),
                    float(e["tau"]),
                )
                for e in obj["entries"]
            )
            return cls(entries=entries, default_tau=float(obj.get("default_tau", 0.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad trust table: {exc}") from exc

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "TrustTable":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                return cls.from_json(json.load(fh))
            except json.JSONDecodeError as exc:
                raise FormatError(f"bad trust table file {path}: {exc}") from exc


@dataclass
class BucketReport:
    features: TrustFeatures
    tau_grid: tuple[float, ...]
    mae_per_tau: tuple[float, ...]
    chosen_tau: float
    track_count: int
    skipped_tracks: int = 0

    def to_json(self) -> dict:
        return {
            "features": self.features.key(),
            "tau_grid": list(self.tau_grid),
            "mae_per_tau": [None if not np.isfinite(v) else v for v in self.mae_per_tau],
            "chosen_tau": self.chosen_tau,
            "track_count": self.track_count,
            "skipped_tracks": self.skipped_tracks,
        }


@dataclass
class CalibrationReport:
    buckets: list[BucketReport] = field(default_factory=list)

    def histogram_by_bucket(self) -> dict[float, int]:
        out: dict[float, int] = {}
        for bucket in self.buckets:
            out[bucket.chosen_tau] = out.get(bucket.chosen_tau, 0) + 1
        return out

    def histogram_by_track(self) -> dict[float, int]:
        out: dict[float, int] = {}
        for bucket in self.buckets:
            out[bucket.chosen_tau] = out.get(bucket.chosen_tau, 0) + bucket.track_count
        return out

    def to_json(self) -> dict:
        return {
            "buckets": [b.to_json() for b in self.buckets],
            "histogram_by_bucket": {str(k): v for k, v in
                                    sorted(self.histogram_by_bucket().items())},
            "histogram_by_track": {str(k): v for k, v in
                                   sorted(self.histogram_by_track().items())},
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1)
            fh.write("\n")

    def write_histogram_csv(self, path) -> None:
        by_bucket = self.histogram_by_bucket()
        by_track = self.histogram_by_track()
        taus = sorted(set(by_bucket) | set(by_track))
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tau", "optimal_for_buckets", "optimal_for_tracks"])
            for tau in taus:
                writer.writerow([tau, by_bucket.get(tau, 0), by_track.get(tau, 0)])


def position_mae(estimates: np.ndarray, truth: np.ndarray) -> float:
    """Mean Euclidean position error over aligned timestamps."""
    estimates = np.asarray(estimates, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimates.shape != truth.shape:
        raise ConfigurationError(
            f"estimate/truth shapes disagree: {estimates.shape} vs {truth.shape}"
        )
    return float(np.linalg.norm(estimates - truth, axis=1).mean())


def calibrate(
    tracks: list[Track],
    evaluate,
    config: FilterConfig,
    tau_grid=DEFAULT_TAU_GRID,
    seed: int = 0,
    features: list[TrustFeatures] | None = None,
    default_tau: float = 0.0,
) -> tuple[TrustTable, CalibrationReport]:
    """Grid-search the trust ratio per feature bucket on historical tracks.

    Every track is filtered once per candidate ratio against the same
    synthetic-noise measurement sequence and the same filter seed, so the
    ratio is the only difference between arms. Tracks whose runs
    degenerate are skipped and counted. evaluate is the per-particle
    compliance evaluator shared by all runs (None tracks nothing but
    still exercises the grid; useful for smoke tests).
    """
    tau_grid = tuple(sorted(float(t) for t in tau_grid))
    if not tau_grid or any(not 0.0 <= t <= 1.0 for t in tau_grid):
        raise ConfigurationError("tau grid must be a nonempty subset of [0, 1]")
    if 0.0 not in tau_grid:
        raise ConfigurationError("tau grid must contain 0 (the safety fallback)")
    if not tracks:
        raise ConfigurationError("no tracks to calibrate on")
    if features is None:
        features = [extract_features(t) for t in tracks]
    if len(features) != len(tracks):
        raise ConfigurationError("one feature triple per track required")

    seeds = np.random.SeedSequence(seed).spawn(len(tracks))
    buckets: dict[TrustFeatures, list[int]] = {}
    for i, feat in enumerate(features):
        buckets.setdefault(feat, []).append(i)

    # MAE per (track, tau); NaN marks degenerate runs.
    mae = np.full((len(tracks), len(tau_grid)), np.nan)
    for i, track in enumerate(tracks):
        noise_rng, filter_seed = seeds[i].spawn(2)
        truth = np.asarray(track.positions, dtype=float)
        noise = config.draw_measurement_noise(
            np.random.default_rng(noise_rng), len(truth)
        )
        measurements = truth + noise
        for j, tau in enumerate(tau_grid):
            rng = np.random.default_rng(filter_seed)
            try:
                estimates, _ = run_filter(
                    measurements, config, rng, evaluate=evaluate, tau=tau
                )
            except DegenerateBeliefError:
                continue
            mae[i, j] = position_mae(estimates, truth[1:])

    entries = []
    report = CalibrationReport()
    for feat in sorted(buckets, key=lambda f: f.key()):
        idx = buckets[feat]
        rows = mae[idx]
        # A track that degenerated under any arm is skipped outright so the
        # per-tau bucket means stay comparable.
        usable = np.isfinite(rows).all(axis=1)
        skipped = int((~usable).sum())
        if usable.any():
            scores = rows[usable].mean(axis=0)
            # argmin over an ascending grid resolves ties to the smallest tau
            chosen = float(tau_grid[int(np.argmin(scores))])
        else:
            scores = np.full(len(tau_grid), np.inf)
            chosen = default_tau
        entries.append((feat, chosen))
        report.buckets.append(
            BucketReport(
                features=feat,
                tau_grid=tau_grid,
                mae_per_tau=tuple(float(v) for v in scores),
                chosen_tau=chosen,
                track_count=len(idx),
                skipped_tracks=skipped,
            )
        )
    table = TrustTable(entries=tuple(entries), default_tau=default_tau)
    return table, report
