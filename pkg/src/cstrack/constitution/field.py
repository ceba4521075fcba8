"""Precomputed rasters of the constitutional probability.

When the environment and measurement policy are static, evaluating the
constitution on a grid once and interpolating afterwards replaces per-point
inference in the tracking loop.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, FormatError
from ..grids import GridSpec, bilinear, write_pgm
from ..starmap import StaRMapLayer
from .environment import ConstitutionEvaluator
from .inference import DEFAULT_ATOM_LIMIT
from .terms import Program


@dataclass(frozen=True)
class ConstitutionField:
    """Raster of P(constitution | x, z) at grid nodes; NaN marks flagged cells."""

    grid: GridSpec
    values: np.ndarray  # (rows, cols)

    def __post_init__(self):
        if self.values.shape != (self.grid.rows, self.grid.cols):
            raise ConfigurationError(
                f"field shape {self.values.shape} does not match grid "
                f"{self.grid.rows}x{self.grid.cols}"
            )
        self.values.setflags(write=False)

    def at(self, points) -> np.ndarray:
        """Bilinear interpolation; raises outside the bbox."""
        return bilinear(self.grid, self.values, points)

    def at_clamped(self, points) -> np.ndarray:
        """Bilinear interpolation with points clamped into the bbox."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        xmin, ymin, xmax, ymax = self.grid.bbox
        clamped = np.column_stack(
            [np.clip(pts[:, 0], xmin, xmax), np.clip(pts[:, 1], ymin, ymax)]
        )
        return bilinear(self.grid, self.values, clamped)

    def to_json(self) -> dict:
        return {
            "bbox": list(self.grid.bbox),
            "resolution": [self.grid.rows, self.grid.cols],
            "values": [None if not np.isfinite(v) else float(v)
                       for v in self.values.ravel()],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ConstitutionField":
        try:
            rows, cols = (int(v) for v in obj["resolution"])
            grid = GridSpec(bbox=tuple(float(v) for v in obj["bbox"]),
                            rows=rows, cols=cols)
            flat = np.array(
                [np.nan if v is None else float(v) for v in obj["values"]]
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad field JSON: {exc}") from exc
        if flat.size != rows * cols:
            raise FormatError(f"field has {flat.size} cells, expected {rows * cols}")
        return cls(grid=grid, values=flat.reshape(rows, cols))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ConstitutionField":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise FormatError(f"bad field file {path}: {exc}") from exc
        return cls.from_json(obj)

    def write_pgm(self, path) -> None:
        write_pgm(path, self.values, vmin=0.0, vmax=1.0)


def precompute_field(program: Program, layers: list[StaRMapLayer], grid: GridSpec,
                     measurement="state",
                     limit: int = DEFAULT_ATOM_LIMIT) -> ConstitutionField:
    """Evaluate the constitution at every grid node.

    measurement policy: the string "state" evaluates each node with the
    measurement bound to the node itself; a 2-sequence fixes one
    measurement for all nodes. Nodes over flagged starmap cells (or outside
    the starmap bbox) are flagged NaN rather than aborting the build.
    """
    evaluator = ConstitutionEvaluator(program, layers, limit=limit)
    points = grid.node_points()
    if isinstance(measurement, str):
        if measurement != "state":
            raise ConfigurationError(
                f"unknown measurement policy {measurement!r}; "
                "use 'state' or a fixed point"
            )
        meas = points
    else:
        meas = np.broadcast_to(
            np.asarray(measurement, dtype=float).reshape(1, 2), points.shape
        )
    values = evaluator.probabilities(points, meas, allow_outside=True)
    return ConstitutionField(grid=grid, values=values.reshape(grid.rows, grid.cols))
