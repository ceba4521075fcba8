"""Tagged vector maps with per-feature uncertainty.

A map is a set of vertices and edges partitioned into features; every
feature carries a nonempty set of semantic tags, and vertices may carry a
scalar depth sounding. Each feature has an associated perturbation model (a
random linear map plus a random translation) from which randomized map
variants are drawn; all vertices of one feature share a single draw per
variant, so features move rigidly.
"""

from __future__ import annotations

import fnmatch
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, FormatError
from .projection import LocalFrame


@dataclass(frozen=True)
class FeaturePerturbation:
    """Distribution over rigid-ish transforms applied to one feature.

    The linear part is an isotropic scale times a rotation about the frame
    origin: scale ~ N(1, scale_std^2), angle ~ N(0, rotation_std^2). The
    translation is N(translation_mean, translation_cov) in meters. All-zero
    spreads reproduce the input vertices exactly.
    """

    translation_mean: tuple[float, float] = (0.0, 0.0)
    translation_cov: tuple[tuple[float, float], tuple[float, float]] = (
        (0.0, 0.0),
        (0.0, 0.0),
    )
    rotation_std: float = 0.0
    scale_std: float = 0.0

    def __post_init__(self):
        cov = np.asarray(self.translation_cov, dtype=float)
        if cov.shape != (2, 2) or not np.allclose(cov, cov.T):
            raise ConfigurationError("translation covariance must be symmetric 2x2")
        eigvals = np.linalg.eigvalsh(cov)
        if eigvals.min() < -1e-12:
            raise ConfigurationError("translation covariance must be PSD")
        if self.rotation_std < 0 or self.scale_std < 0:
            raise ConfigurationError("perturbation spreads must be nonnegative")

    @classmethod
    def identity(cls) -> "FeaturePerturbation":
        return cls()

    @classmethod
    def isotropic(cls, translation_std_m: float = 0.0, rotation_std_rad: float = 0.0,
                  scale_std: float = 0.0) -> "FeaturePerturbation":
        v = float(translation_std_m) ** 2
        return cls(
            translation_cov=((v, 0.0), (0.0, v)),
            rotation_std=float(rotation_std_rad),
            scale_std=float(scale_std),
        )

    def _chol(self) -> np.ndarray:
        cov = np.asarray(self.translation_cov, dtype=float)
        if not cov.any():
            return np.zeros((2, 2))
        # PSD-safe factor; plain Cholesky rejects singular covariances.
        w, q = np.linalg.eigh(cov)
        return q @ np.diag(np.sqrt(np.clip(w, 0.0, None)))

    def sample(self, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Draw one (linear map, translation) pair.

        Always consumes exactly four standard normals so that draw streams
        line up across configurations sharing a seed.
        """
        raw = rng.standard_normal(4)
        angle = self.rotation_std * raw[0]
        scale = 1.0 + self.scale_std * raw[1]
        c, s = np.cos(angle), np.sin(angle)
        phi = np.array([[scale * c, -scale * s], [scale * s, scale * c]])
        t = np.asarray(self.translation_mean, dtype=float) + self._chol() @ raw[2:]
        return phi, t


@dataclass(frozen=True)
class MapFeature:
    """One feature to assemble into a VectorMap: local geometry plus tags."""

    points: tuple[tuple[float, float], ...]
    tags: frozenset[str]
    edges: tuple[tuple[int, int], ...] = ()
    rings: tuple[tuple[int, ...], ...] = ()  # closed loops, local indices, no repeat
    depths: tuple[float | None, ...] = ()


def polygon_feature(points, tags, depths=()) -> MapFeature:
    """Convenience: a single closed ring over the given points."""
    n = len(points)
    edges = tuple((i, (i + 1) % n) for i in range(n))
    return MapFeature(
        points=tuple((float(x), float(y)) for x, y in points),
        tags=frozenset(tags),
        edges=edges,
        rings=(tuple(range(n)),),
        depths=tuple(depths),
    )


def line_feature(points, tags) -> MapFeature:
    n = len(points)
    return MapFeature(
        points=tuple((float(x), float(y)) for x, y in points),
        tags=frozenset(tags),
        edges=tuple((i, i + 1) for i in range(n - 1)),
    )


def point_feature(point, tags, depth: float | None = None) -> MapFeature:
    return MapFeature(
        points=((float(point[0]), float(point[1])),),
        tags=frozenset(tags),
        depths=(depth,),
    )


@dataclass(frozen=True)
class VectorMap:
    """Immutable tagged vertex/edge map in local-frame meters."""

    vertices: np.ndarray  # (V, 2) float64
    edges: tuple[tuple[int, int], ...]
    feature_of_vertex: np.ndarray  # (V,) int
    tags_of_feature: tuple[frozenset[str], ...]
    rings: tuple[tuple[int, ...], ...] = ()
    depth_of_vertex: np.ndarray = field(default=None)  # (V,) float64, NaN = none

    def __post_init__(self):
        if self.depth_of_vertex is None:
            object.__setattr__(
                self, "depth_of_vertex", np.full(len(self.vertices), np.nan)
            )
        self.vertices.setflags(write=False)
        self.feature_of_vertex.setflags(write=False)
        self.depth_of_vertex.setflags(write=False)

    @property
    def n_features(self) -> int:
        return len(self.tags_of_feature)

    def validate(self) -> None:
        nv = len(self.vertices)
        for a, b in self.edges:
            if not (0 <= a < nv and 0 <= b < nv):
                raise ConfigurationError(f"edge ({a}, {b}) out of range for {nv} vertices")
            if self.feature_of_vertex[a] != self.feature_of_vertex[b]:
                raise ConfigurationError(
                    f"edge ({a}, {b}) connects vertices of different features"
                )
        for fid, tags in enumerate(self.tags_of_feature):
            if not tags:
                raise ConfigurationError(f"feature {fid} has an empty tag set")
        if self.feature_of_vertex.shape != (nv,):
            raise ConfigurationError("feature_of_vertex length mismatch")
        if (self.feature_of_vertex < 0).any() or (
            self.feature_of_vertex >= self.n_features
        ).any():
            raise ConfigurationError("feature ids out of range")
        for ring in self.rings:
            if len(ring) < 3:
                raise ConfigurationError(f"ring {ring} has fewer than 3 vertices")

    def features_with_tag(self, tag: str) -> list[int]:
        return [f for f, tags in enumerate(self.tags_of_feature) if tag in tags]

    def has_tag(self, tag: str) -> bool:
        return any(tag in tags for tags in self.tags_of_feature)

    def all_tags(self) -> list[str]:
        out: set[str] = set()
        for tags in self.tags_of_feature:
            out |= tags
        return sorted(out)

    @classmethod
    def build(cls, features: list[MapFeature]) -> "VectorMap":
        """Assemble a map; each MapFeature becomes one feature id."""
        verts: list[tuple[float, float]] = []
        edges: list[tuple[int, int]] = []
        fov: list[int] = []
        tags: list[frozenset[str]] = []
        rings: list[tuple[int, ...]] = []
        depths: list[float] = []
        for fid, feat in enumerate(features):
            if not feat.tags:
                raise ConfigurationError(f"feature {fid} has no tags")
            base = len(verts)
            verts.extend(feat.points)
            fov.extend([fid] * len(feat.points))
            ds = list(feat.depths) + [None] * (len(feat.points) - len(feat.depths))
            depths.extend(np.nan if d is None else float(d) for d in ds)
            edges.extend((base + a, base + b) for a, b in feat.edges)
            declared = [tuple(base + i for i in ring) for ring in feat.rings]
            if declared:
                rings.extend(declared)
            else:
                rings.extend(_detect_rings(len(feat.points), feat.edges, base))
            tags.append(frozenset(feat.tags))
        vmap = cls(
            vertices=np.asarray(verts, dtype=float).reshape(len(verts), 2),
            edges=tuple(edges),
            feature_of_vertex=np.asarray(fov, dtype=int),
            tags_of_feature=tuple(tags),
            rings=tuple(rings),
            depth_of_vertex=np.asarray(depths, dtype=float),
        )
        vmap.validate()
        return vmap

    def with_vertices(self, vertices: np.ndarray) -> "VectorMap":
        """Same structure over replaced coordinates (for map variants)."""
        return VectorMap(
            vertices=np.array(vertices, dtype=float),
            edges=self.edges,
            feature_of_vertex=self.feature_of_vertex,
            tags_of_feature=self.tags_of_feature,
            rings=self.rings,
            depth_of_vertex=self.depth_of_vertex,
        )


def _detect_rings(n_pts: int, edges, base: int):
    """Find components that form one simple cycle (every vertex degree 2)."""
    if not edges:
        return []
    adj: dict[int, list[int]] = {}
    for a, b in edges:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    seen: set[int] = set()
    rings = []
    for start in range(n_pts):
        if start in seen or start not in adj:
            continue
        component = []
        stack = [start]
        comp_seen = set()
        while stack:
            v = stack.pop()
            if v in comp_seen:
                continue
            comp_seen.add(v)
            component.append(v)
            stack.extend(adj.get(v, []))
        seen |= comp_seen
        if any(len(adj.get(v, [])) != 2 for v in component):
            continue
        # Trace the unique cycle.
        ring = [start]
        prev, cur = None, start
        while True:
            nxt = [w for w in adj[cur] if w != prev]
            if not nxt:
                break
            prev, cur = cur, nxt[0]
            if cur == start:
                break
            ring.append(cur)
        if len(ring) == len(component) and len(ring) >= 3:
            rings.append(tuple(base + v for v in ring))
    return rings


# ---------------------------------------------------------------------------
# Variant sampling


def _feature_indices(vmap: VectorMap) -> list[np.ndarray]:
    return [
        np.flatnonzero(vmap.feature_of_vertex == fid) for fid in range(vmap.n_features)
    ]


def _require_full_coverage(vmap: VectorMap, perturbations) -> None:
    missing = [f for f in range(vmap.n_features) if f not in perturbations]
    if missing:
        raise ConfigurationError(
            f"no perturbation entry for feature ids {missing}; "
            "add entries (identity is allowed)"
        )


def sample_vertex_variants(
    vmap: VectorMap,
    perturbations: dict[int, FeaturePerturbation],
    n: int,
    rng: int | np.random.Generator,
) -> np.ndarray:
    """Draw n randomized vertex sets, shape (n, V, 2).

    One (linear map, translation) pair is drawn per feature per variant and
    applied to all the feature's vertices; edges, tags and depths are
    untouched by construction.
    """
    _require_full_coverage(vmap, perturbations)
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    idx = _feature_indices(vmap)
    out = np.empty((n, len(vmap.vertices), 2))
    for k in range(n):
        out[k] = vmap.vertices
        for fid in range(vmap.n_features):
            phi, t = perturbations[fid].sample(gen)
            out[k, idx[fid]] = vmap.vertices[idx[fid]] @ phi.T + t
    return out


def sample_map_variant(
    vmap: VectorMap,
    perturbations: dict[int, FeaturePerturbation],
    rng: int | np.random.Generator,
) -> VectorMap:
    """Draw a single randomized map variant as a full VectorMap."""
    return vmap.with_vertices(sample_vertex_variants(vmap, perturbations, 1, rng)[0])


# ---------------------------------------------------------------------------
# Perturbation configuration (JSON: tag pattern -> spreads)


def perturbations_from_config(vmap: VectorMap, config: dict) -> dict[int, FeaturePerturbation]:
    """Resolve a pattern->spreads mapping to per-feature perturbations.

    Patterns are fnmatch globs matched against each feature's tags in config
    order; the first entry matching any tag wins. A feature matching nothing
    is a configuration error (add a "*" entry for a catch-all).
    """
    entries = []
    for pattern, params in config.items():
        if not isinstance(params, dict):
            raise ConfigurationError(f"perturbation entry {pattern!r} must be an object")
        known = {"translation_std_m", "rotation_std_rad", "scale_std"}
        unknown = set(params) - known
        if unknown:
            raise ConfigurationError(
                f"unknown perturbation keys {sorted(unknown)} under {pattern!r}"
            )
        entries.append(
            (
                pattern,
                FeaturePerturbation.isotropic(
                    translation_std_m=params.get("translation_std_m", 0.0),
                    rotation_std_rad=params.get("rotation_std_rad", 0.0),
                    scale_std=params.get("scale_std", 0.0),
                ),
            )
        )
    out: dict[int, FeaturePerturbation] = {}
    for fid, tags in enumerate(vmap.tags_of_feature):
        for pattern, perturbation in entries:
            if any(fnmatch.fnmatchcase(tag, pattern) for tag in sorted(tags)):
                out[fid] = perturbation
                break
        else:
            raise ConfigurationError(
                f"feature {fid} with tags {sorted(tags)} matches no perturbation "
                "pattern; add a '*' entry for a catch-all"
            )
    return out


def load_perturbation_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"bad perturbation config {path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise FormatError(f"perturbation config {path} must be a JSON object")
    return obj


# ---------------------------------------------------------------------------
# GeoJSON ingestion

_GEOM_HANDLERS = {"Point", "MultiPoint", "LineString", "MultiLineString",
                  "Polygon", "MultiPolygon"}


def load_geojson(source, origin: tuple[float, float] | None = None
                 ) -> tuple[VectorMap, LocalFrame]:
    """Load a GeoJSON FeatureCollection into a VectorMap.

    Coordinates are lon/lat degrees and are projected into a tangent frame
    centered on `origin` (lon, lat) or, by default, the midpoint of the
    collection's coordinate bounds. Every feature must carry a nonempty
    properties.tags list; Point features may carry properties.depth in
    meters. Polygon rings become closed cycles, LineStrings open chains.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, "r", encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise FormatError(f"bad GeoJSON {source}: {exc}") from exc
    else:
        obj = source
    if not isinstance(obj, dict) or obj.get("type") != "FeatureCollection":
        raise FormatError("expected a GeoJSON FeatureCollection")
    features = obj.get("features", [])
    if not isinstance(features, list) or not features:
        raise FormatError("FeatureCollection has no features")

    all_lon: list[float] = []
    all_lat: list[float] = []
    for feat in features:
        geom = (feat or {}).get("geometry") or {}
        for lon, lat in _iter_coords(geom):
            all_lon.append(lon)
            all_lat.append(lat)
    if not all_lon:
        raise FormatError("FeatureCollection contains no coordinates")
    if origin is None:
        origin = (
            (min(all_lon) + max(all_lon)) / 2.0,
            (min(all_lat) + max(all_lat)) / 2.0,
        )
    frame = LocalFrame(origin_lon=origin[0], origin_lat=origin[1])

    map_features: list[MapFeature] = []
    for i, feat in enumerate(features):
        props = (feat or {}).get("properties") or {}
        tags = props.get("tags")
        if not isinstance(tags, list) or not tags or not all(isinstance(t, str) for t in tags):
            raise FormatError(f"feature {i} needs a nonempty properties.tags string list")
        geom = feat.get("geometry") or {}
        gtype = geom.get("type")
        if gtype not in _GEOM_HANDLERS:
            raise FormatError(f"feature {i}: unsupported geometry type {gtype!r}")
        points: list[tuple[float, float]] = []
        edges: list[tuple[int, int]] = []
        rings: list[tuple[int, ...]] = []
        depths: list[float | None] = []

        def add_point(lonlat, depth=None):
            x, y = frame.to_xy(lonlat[0], lonlat[1])
            points.append((float(x), float(y)))
            depths.append(depth)
            return len(points) - 1

        def add_chain(coords, close: bool):
            coords = list(coords)
            if close and len(coords) > 1 and coords[0] == coords[-1]:
                coords = coords[:-1]
            idx = [add_point(c) for c in coords]
            for a, b in zip(idx, idx[1:]):
                edges.append((a, b))
            if close:
                if len(idx) < 3:
                    raise FormatError(f"feature {i}: ring with fewer than 3 points")
                edges.append((idx[-1], idx[0]))
                rings.append(tuple(idx))

        coords = geom.get("coordinates")
        try:
            if gtype == "Point":
                add_point(coords, depth=props.get("depth"))
            elif gtype == "MultiPoint":
                for c in coords:
                    add_point(c, depth=props.get("depth"))
            elif gtype == "LineString":
                add_chain(coords, close=False)
            elif gtype == "MultiLineString":
                for chain in coords:
                    add_chain(chain, close=False)
            elif gtype == "Polygon":
                for ring in coords:
                    add_chain(ring, close=True)
            elif gtype == "MultiPolygon":
                for poly in coords:
                    for ring in poly:
                        add_chain(ring, close=True)
        except (TypeError, IndexError) as exc:
            raise FormatError(f"feature {i}: malformed coordinates: {exc}") from exc

        map_features.append(
            MapFeature(
                points=tuple(points),
                tags=frozenset(tags),
                edges=tuple(edges),
                rings=tuple(rings),
                depths=tuple(depths),
            )
        )
    return VectorMap.build(map_features), frame


def _iter_coords(geom):
    gtype = geom.get("type")
    coords = geom.get("coordinates")
    if coords is None:
        return
    if gtype == "Point":
        yield coords[0], coords[1]
    elif gtype in ("MultiPoint", "LineString"):
        for c in coords:
            yield c[0], c[1]
    elif gtype in ("MultiLineString", "Polygon"):
        for chain in coords:
            for c in chain:
                yield c[0], c[1]
    elif gtype == "MultiPolygon":
        for poly in coords:
            for ring in poly:
                for c in ring:
                    yield c[0], c[1]
