"""Raster layers of empirical relation statistics over randomized maps.

For each (relation, tag) pair and each grid node x, N randomized map
variants M^(1..N) yield samples r(M^(k), x, tag); the layer stores their
sample mean and the square root of the unbiased (1/(N-1)) sample variance.
The same N variants are shared by every node and every layer, so results
are independent of evaluation order and the sampling cost is amortized.

Cells whose relation evaluation fails (e.g. distance to a tag that is
absent from the map) are flagged; flagged cells hold NaN and poison any
interpolation that touches them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, FormatError, NoDepthDataError
from .grids import GridSpec, bilinear, write_pgm
from .relations import RelationKind, eval_relation_many
from .vectormap import FeaturePerturbation, VectorMap, sample_vertex_variants


@dataclass(frozen=True)
class StaRMapLayer:
    """Per-node (mean, std) of one relation/tag pair; NaN marks flagged cells."""

    relation: RelationKind
    tag: str
    grid: GridSpec
    mean: np.ndarray  # (rows, cols)
    std: np.ndarray  # (rows, cols)
    sample_count: int

    def __post_init__(self):
        expect = (self.grid.rows, self.grid.cols)
        if self.mean.shape != expect or self.std.shape != expect:
            raise ConfigurationError(
                f"layer arrays {self.mean.shape} do not match grid {expect}"
            )
        self.mean.setflags(write=False)
        self.std.setflags(write=False)

    @property
    def key(self) -> tuple[str, str]:
        return (self.relation.value, self.tag)

    @property
    def flagged(self) -> np.ndarray:
        return ~(np.isfinite(self.mean) & np.isfinite(self.std))

    def validate(self) -> None:
        ok = ~self.flagged
        if (self.std[ok] < 0).any():
            raise ConfigurationError("layer has negative std cells")
        if self.relation is RelationKind.OVER:
            vals = self.mean[ok]
            if ((vals < 0) | (vals > 1)).any():
                raise ConfigurationError("over layer has mean outside [0, 1]")


def _moment_arrays(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two-pass mean and unbiased std along axis 0; non-finite -> NaN."""
    n = samples.shape[0]
    with np.errstate(invalid="ignore"):
        mean = samples.sum(axis=0) / n
        var = ((samples - mean) ** 2).sum(axis=0) / (n - 1)
        std = np.sqrt(var)
    bad = ~np.isfinite(samples).all(axis=0)
    mean = np.where(bad, np.nan, mean)
    std = np.where(bad, np.nan, std)
    return mean, std


def estimate_moments(
    vmap: VectorMap,
    perturbations: dict[int, FeaturePerturbation],
    rel: RelationKind,
    tag: str,
    point,
    n: int,
    rng: int | np.random.Generator,
) -> tuple[float, float]:
    """Empirical (mean, std) of a relation at one point over n map variants."""
    if n < 2:
        raise ValueError(f"need at least 2 samples for a variance estimate, got {n}")
    variants = sample_vertex_variants(vmap, perturbations, n, rng)
    point = np.asarray(point, dtype=float).reshape(1, 2)
    samples = np.empty((n, 1))
    for k in range(n):
        samples[k] = eval_relation_many(vmap, rel, point, tag, vertices=variants[k])
    mean, std = _moment_arrays(samples)
    return float(mean[0]), float(std[0])


def build_starmap(
    vmap: VectorMap,
    perturbations: dict[int, FeaturePerturbation],
    relations: list[tuple[RelationKind, str]],
    grid: GridSpec,
    n: int,
    rng: int | np.random.Generator,
) -> list[StaRMapLayer]:
    """Build one layer per (relation, tag) pair on a shared variant set."""
    if n < 2:
        raise ValueError(f"need at least 2 samples for a variance estimate, got {n}")
    if not relations:
        raise ConfigurationError("no (relation, tag) pairs requested")
    seen = set()
    for rel, tag in relations:
        key = (RelationKind(rel).value, tag)
        if key in seen:
            raise ConfigurationError(f"duplicate layer requested: {key}")
        seen.add(key)
    variants = sample_vertex_variants(vmap, perturbations, n, rng)
    points = grid.node_points()
    layers = []
    for rel, tag in relations:
        rel = RelationKind(rel)
        samples = np.empty((n, len(points)))
        try:
            for k in range(n):
                samples[k] = eval_relation_many(
                    vmap, rel, points, tag, vertices=variants[k]
                )
        except NoDepthDataError:
            samples[:] = np.nan  # whole layer flagged, build continues
        mean, std = _moment_arrays(samples)
        layer = StaRMapLayer(
            relation=rel,
            tag=tag,
            grid=grid,
            mean=mean.reshape(grid.rows, grid.cols),
            std=std.reshape(grid.rows, grid.cols),
            sample_count=n,
        )
        layer.validate()
        layers.append(layer)
    return layers


def interpolate(layer: StaRMapLayer, point) -> tuple[float, float]:
    """Bilinear (mean, std) at a point inside the layer bbox."""
    mean = bilinear(layer.grid, layer.mean, np.asarray(point, dtype=float))
    std = bilinear(layer.grid, layer.std, np.asarray(point, dtype=float))
    return float(mean), float(std)


def interpolate_many(layer: StaRMapLayer, points: np.ndarray,
                     allow_outside: bool = False) -> tuple[np.ndarray, np.ndarray]:
    mean = bilinear(layer.grid, layer.mean, points, allow_outside=allow_outside)
    std = bilinear(layer.grid, layer.std, points, allow_outside=allow_outside)
    return mean, std


def find_layer(layers: list[StaRMapLayer], rel: RelationKind, tag: str) -> StaRMapLayer:
    rel = RelationKind(rel)
    for layer in layers:
        if layer.relation is rel and layer.tag == tag:
            return layer
    available = ", ".join(f"{a}:{b}" for a, b in sorted(l.key for l in layers))
    raise ConfigurationError(
        f"no starmap layer for {rel.value}:{tag} (available: {available or 'none'})"
    )


# ---------------------------------------------------------------------------
# Persistence


def _array_to_json(arr: np.ndarray) -> list:
    return [None if not np.isfinite(v) else float(v) for v in arr.ravel()]


def _array_from_json(values, rows: int, cols: int) -> np.ndarray:
    arr = np.array([np.nan if v is None else float(v) for v in values])
    if arr.size != rows * cols:
        raise FormatError(f"layer array has {arr.size} cells, expected {rows * cols}")
    return arr.reshape(rows, cols)


def starmap_to_json(layers: list[StaRMapLayer],
                    origin_lonlat: tuple[float, float] | None = None) -> dict:
    if not layers:
        raise ConfigurationError("no layers to save")
    grid = layers[0].grid
    for layer in layers:
        if layer.grid != grid:
            raise ConfigurationError("layers in one starmap must share a grid")
    return {
        "bbox": list(grid.bbox),
        "resolution": [grid.rows, grid.cols],
        "sample_count": layers[0].sample_count,
        "origin_lonlat": list(origin_lonlat) if origin_lonlat is not None else None,
        "layers": [
            {
                "relation": layer.relation.value,
                "tag": layer.tag,
                "mean": _array_to_json(layer.mean),
                "std": _array_to_json(layer.std),
            }
            for layer in layers
        ],
    }


def starmap_from_json(obj: dict) -> tuple[list[StaRMapLayer], tuple[float, float] | None]:
    try:
        rows, cols = (int(v) for v in obj["resolution"])
        grid = GridSpec(bbox=tuple(float(v) for v in obj["bbox"]), rows=rows, cols=cols)
        n = int(obj["sample_count"])
        layers = [
            StaRMapLayer(
                relation=RelationKind.parse(entry["relation"]),
                tag=str(entry["tag"]),
                grid=grid,
                mean=_array_from_json(entry["mean"], rows, cols),
                std=_array_from_json(entry["std"], rows, cols),
                sample_count=n,
            )
            for entry in obj["layers"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad starmap JSON: {exc}") from exc
    origin = obj.get("origin_lonlat")
    return layers, tuple(origin) if origin else None


def save_starmap(layers, path, origin_lonlat=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(starmap_to_json(layers, origin_lonlat), fh, indent=1)
        fh.write("\n")


def load_starmap(path) -> tuple[list[StaRMapLayer], tuple[float, float] | None]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"bad starmap file {path}: {exc}") from exc
    return starmap_from_json(obj)


def write_layer_pgm(layer: StaRMapLayer, path, which: str = "mean") -> None:
    arr = layer.mean if which == "mean" else layer.std
    if layer.relation is RelationKind.OVER and which == "mean":
        write_pgm(path, arr, vmin=0.0, vmax=1.0)
    else:
        write_pgm(path, arr)
