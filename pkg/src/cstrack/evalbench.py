"""Synthetic benchmark: compliant/incompliant agents and filter ablations.

Scenarios generate ground-truth tracks whose maneuvers are rejection-
sampled against a precomputed compliance field (compliant agents steer
toward high-probability regions, incompliant agents away), then compare
the rule-aware filter against the plain particle filter on identical
measurement sequences, initial clouds, and random draws.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .constitution import environment_atoms, parse, precompute_field
from .constitution.field import ConstitutionField
from .errors import ConfigurationError, DegenerateBeliefError, FormatError, StuckAgentError
from .grids import GridSpec
from .ingest import Track
from .particlefilter import FilterConfig, run_filter
from .relations import RelationKind
from .starmap import build_starmap
from .trust import position_mae
from .vectormap import load_geojson, perturbations_from_config

MAX_REJECTIONS = 1000


def mae(estimates, ground_truth) -> float:
    """Mean Euclidean position error over aligned timestamps."""
    return position_mae(estimates, ground_truth)


def simulate_agent(
    f: ConstitutionField,
    start,
    velocity,
    steps: int,
    dt: float,
    mode: str,
    rng: np.random.Generator,
    kick_std: float = 0.05,
) -> np.ndarray:
    """Constant-velocity agent with rejection-sampled acceleration kicks.

    Each step proposes a velocity kick ~ N(0, kick_std^2 I) m/s and accepts
    it with probability equal to the field value at the resulting position
    (compliant mode) or its complement (incompliant mode). Returns the
    (steps + 1, 2) position sequence including the start.
    """
    if mode not in ("compliant", "incompliant"):
        raise ConfigurationError(f"unknown agent mode {mode!r}")
    p = np.asarray(start, dtype=float).copy()
    v = np.asarray(velocity, dtype=float).copy()
    if not f.grid.contains(p.reshape(1, 2))[0]:
        raise ConfigurationError(f"start {tuple(p)} outside the field bbox")
    out = np.empty((steps + 1, 2))
    out[0] = p
    for step in range(1, steps + 1):
        for attempt in range(MAX_REJECTIONS):
            kick = kick_std * rng.standard_normal(2)
            candidate_v = v + kick
            candidate_p = p + candidate_v * dt
            value = float(f.at_clamped(candidate_p.reshape(1, 2))[0])
            if not np.isfinite(value):
                value = 0.0
            accept = value if mode == "compliant" else 1.0 - value
            if rng.uniform() < accept:
                p, v = candidate_p, candidate_v
                break
        else:
            raise StuckAgentError(
                f"agent rejected {MAX_REJECTIONS} consecutive kicks at step {step}; "
                "the acceptance field vanishes on its reachable set"
            )
        out[step] = p
    return out


@dataclass(frozen=True)
class Scenario:
    """A fully resolved benchmark setup."""

    field: ConstitutionField
    truth_tracks: list[np.ndarray]  # (T, 2) each, shared dt
    dt: float
    filter_config: FilterConfig
    taus: tuple[float, ...]
    n_seeds: int
    seed: int
    name: str = "scenario"


@dataclass
class RunRow:
    seed: int
    track: int
    tau: float
    mae_filter: float
    mae_baseline: float

    @property
    def relative(self) -> float | None:
        if self.mae_baseline > 0:
            return self.mae_filter / self.mae_baseline
        return None


@dataclass
class MetricReport:
    rows: list[RunRow] = field(default_factory=list)

    def aggregate(self) -> dict:
        out: dict[str, dict] = {}
        taus = sorted({row.tau for row in self.rows})
        for tau in taus:
            rel = [row.relative for row in self.rows if row.tau == tau
                   and row.relative is not None]
            absolute = [row.mae_filter for row in self.rows if row.tau == tau]
            out[str(tau)] = {
                "relative_mae_mean": float(np.mean(rel)) if rel else None,
                "relative_mae_std": float(np.std(rel)) if rel else None,
                "relative_mae_median": float(np.median(rel)) if rel else None,
                "mae_mean": float(np.mean(absolute)) if absolute else None,
                "runs": len(absolute),
            }
        return out

    def to_json(self) -> dict:
        return {
            "per_run": [
                {
                    "seed": r.seed,
                    "track": r.track,
                    "tau": r.tau,
                    "mae": r.mae_filter,
                    "mae_baseline": r.mae_baseline,
                    "relative_mae": r.relative,
                }
                for r in self.rows
            ],
            "aggregate": self.aggregate(),
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1)
            fh.write("\n")

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["seed", "track", "tau", "mae", "mae_baseline", "relative_mae"]
            )
            for r in self.rows:
                writer.writerow(
                    [r.seed, r.track, r.tau, r.mae_filter, r.mae_baseline, r.relative]
                )


def run_ablation(scenario: Scenario, taus=None, n_seeds=None) -> MetricReport:
    """Baseline vs rule-aware runs over seeds x tracks x trust ratios.

    Per (seed, track): one noisy measurement sequence and one filter seed
    are drawn; the baseline and every tau arm consume both unchanged, so
    arms differ in the trust ratio alone. Degenerate runs are recorded as
    NaN rows rather than aborting the sweep.
    """
    taus = tuple(taus) if taus is not None else scenario.taus
    n_seeds = n_seeds if n_seeds is not None else scenario.n_seeds
    config = scenario.filter_config
    evaluate = field_evaluator(scenario.field)
    report = MetricReport()
    seed_roots = np.random.SeedSequence(scenario.seed).spawn(n_seeds)
    for s in range(n_seeds):
        track_seeds = seed_roots[s].spawn(len(scenario.truth_tracks))
        for t, truth in enumerate(scenario.truth_tracks):
            noise_seq, filter_seq = track_seeds[t].spawn(2)
            noise = config.draw_measurement_noise(
                np.random.default_rng(noise_seq), len(truth)
            )
            measurements = truth + noise
            try:
                base_est, _ = run_filter(
                    measurements, config, np.random.default_rng(filter_seq)
                )
                base_mae = mae(base_est, truth[1:])
            except DegenerateBeliefError:
                continue
            for tau in taus:
                try:
                    est, _ = run_filter(
                        measurements, config, np.random.default_rng(filter_seq),
                        evaluate=evaluate, tau=tau,
                    )
                    run_mae = mae(est, truth[1:])
                except DegenerateBeliefError:
                    run_mae = float("nan")
                report.rows.append(
                    RunRow(
                        seed=s, track=t, tau=float(tau),
                        mae_filter=run_mae, mae_baseline=base_mae,
                    )
                )
    return report


def field_evaluator(f: ConstitutionField):
    """Per-particle evaluator backed by a precomputed field.

    Positions outside the field bbox are clamped to its edge (constant
    extrapolation), which keeps stray particles evaluable.
    """

    def evaluate(positions, velocities, z):
        values = f.at_clamped(positions)
        return np.where(np.isfinite(values), values, 0.0)

    return evaluate


def tracks_as_truth(tracks: list[Track]) -> tuple[list[np.ndarray], float]:
    """Uniform-dt track positions for scenario ground truth."""
    if not tracks:
        raise ConfigurationError("no tracks given")
    dts = {t.dt for t in tracks}
    if len(dts) != 1 or None in dts:
        raise ConfigurationError("tracks must share one uniform dt; resample first")
    return [np.asarray(t.positions, dtype=float) for t in tracks], float(tracks[0].dt)


# ---------------------------------------------------------------------------
# Scenario loading (External interface: scenario spec JSON)


def _inline_or_path(entry, base_dir, loader, inline_key):
    if isinstance(entry, dict):
        if inline_key not in entry:
            raise FormatError(f"inline object must carry {inline_key!r}")
        return entry[inline_key]
    return loader(base_dir / entry) if base_dir is not None else loader(entry)


def load_scenario(path) -> Scenario:
    """Build a Scenario from its JSON spec.

    Schema (paths are relative to the scenario file):
      name, seed, taus, n_seeds
      map: geojson path | {"inline": featurecollection}
      perturbations: json path | {"inline": {...}}
      constitution: .cst path | {"inline": "text"}
      grid: {bbox, rows, cols}, starmap_samples
      agents: {count, mode, start, velocity, speed?, steps, kick_std}
      filter: FilterConfig fields
    """
    import pathlib

    path = pathlib.Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"bad scenario file {path}: {exc}") from exc
    base = path.parent
    try:
        name = spec.get("name", path.stem)
        seed = int(spec.get("seed", 0))
        grid = GridSpec.from_json(spec["grid"])
        n_samples = int(spec.get("starmap_samples", 50))
        taus = tuple(float(t) for t in spec.get("taus", (0.0, 0.5, 1.0)))
        n_seeds = int(spec.get("n_seeds", 5))
        agents = spec["agents"]
        filter_cfg = FilterConfig.from_json(spec.get("filter", {}))
        map_entry = spec["map"]
        perturb_entry = spec["perturbations"]
        constitution_entry = spec["constitution"]
    except KeyError as exc:
        raise FormatError(f"scenario spec is missing {exc}") from exc

    if isinstance(map_entry, dict):
        vmap, _ = load_geojson(map_entry["inline"])
    else:
        vmap, _ = load_geojson(base / map_entry)
    perturb_cfg = (
        perturb_entry["inline"]
        if isinstance(perturb_entry, dict)
        else json.loads((base / perturb_entry).read_text())
    )
    program_text = (
        constitution_entry["inline"]
        if isinstance(constitution_entry, dict)
        else (base / constitution_entry).read_text()
    )

    program = parse(program_text)
    relations = sorted(
        {(RelationKind(pred), tag) for pred, _, tag in environment_atoms(program)}
    )
    perturbations = perturbations_from_config(vmap, perturb_cfg)
    seeds = np.random.SeedSequence(seed).spawn(2)
    layers = build_starmap(
        vmap, perturbations, relations, grid, n=n_samples,
        rng=np.random.default_rng(seeds[0]),
    )
    f = precompute_field(program, layers, grid)

    agent_rng = np.random.default_rng(seeds[1])
    count = int(agents.get("count", 1))
    steps = int(agents["steps"])
    dt = float(agents.get("dt", filter_cfg.dt))
    if dt != filter_cfg.dt:
        raise ConfigurationError("agent dt must match the filter dt")
    mode = agents.get("mode", "compliant")
    kick = float(agents.get("kick_std", 0.05))
    start = np.asarray(agents["start"], dtype=float)
    velocity = np.asarray(agents.get("velocity", (0.0, 0.0)), dtype=float)
    tracks = [
        simulate_agent(f, start, velocity, steps, dt, mode, agent_rng, kick_std=kick)
        for _ in range(count)
    ]
    return Scenario(
        field=f,
        truth_tracks=tracks,
        dt=dt,
        filter_config=filter_cfg,
        taus=taus,
        n_seeds=n_seeds,
        seed=seed,
        name=name,
    )
