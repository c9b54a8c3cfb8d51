"""Polygon data model, affine transforms, normalization and simplification.

Polygons are an exterior linear ring plus optional hole rings. Rings are
stored as (n, 2) float64 arrays of vertices, implicitly closed: the first
vertex is NOT repeated at the end. All operations here are pure functions
returning new Polygon values, so they are safe to call concurrently.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

from .errors import (
    DegenerateShear,
    ExteriorCollapsed,
    GeometryError,
    MissingLabel,
    NonPositiveFactor,
    ParseError,
    RingTooShort,
    UnsupportedGeometry,
    ZeroExtent,
)


class Point2(NamedTuple):
    x: float
    y: float


class TransformTag(enum.Enum):
    """Which label-preserving transform produced a sample."""

    ORIGINAL = "O"
    ROTATED = "R"
    SCALED = "SC"
    SHEARED = "SH"

    @property
    def code(self) -> str:
        return self.value

    @classmethod
    def from_code(cls, code: str) -> "TransformTag":
        return cls(code)


def _as_ring(vertices) -> np.ndarray:
    """Validate and freeze one ring: >=3 vertices, finite, no degenerate edge.

    Consecutive duplicates are rejected, including the implicit closing edge
    (stored last vertex equal to the first).
    """
    arr = np.asarray(vertices, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise GeometryError(f"ring must be an (n, 2) array, got shape {arr.shape}")
    if arr.shape[0] < 3:
        raise RingTooShort(f"ring needs at least 3 vertices, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise GeometryError("ring contains non-finite coordinates")
    closed = np.vstack([arr, arr[:1]])
    if np.any(np.all(closed[1:] == closed[:-1], axis=1)):
        raise GeometryError("ring has two consecutive identical vertices")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Polygon:
    """Exterior ring plus zero or more hole rings."""

    exterior: np.ndarray
    holes: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "exterior", _as_ring(self.exterior))
        object.__setattr__(self, "holes", tuple(_as_ring(h) for h in self.holes))

    def rings(self) -> Iterator[np.ndarray]:
        yield self.exterior
        yield from self.holes

    @property
    def n_vertices(self) -> int:
        return sum(len(r) for r in self.rings())

    def all_vertices(self) -> np.ndarray:
        return np.vstack(list(self.rings()))

    def map_vertices(self, fn) -> "Polygon":
        """Apply a pointwise (n,2)->(n,2) map to every ring."""
        return Polygon(fn(self.exterior), tuple(fn(h) for h in self.holes))


def centroid(poly: Polygon) -> Point2:
    """Unweighted mean of all stored vertices across all rings."""
    pts = poly.all_vertices()
    cx, cy = pts.mean(axis=0)
    return Point2(float(cx), float(cy))


def _about_centroid(poly: Polygon, matrix: np.ndarray) -> Polygon:
    c = np.array(centroid(poly))
    return poly.map_vertices(lambda r: (r - c) @ matrix.T + c)


def rotate(poly: Polygon, angle: float) -> Polygon:
    """Rotate about the centroid by `angle` degrees, counter-clockwise positive."""
    if not math.isfinite(angle):
        raise GeometryError("rotation angle must be finite")
    a = math.radians(angle)
    m = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
    return _about_centroid(poly, m)


def scale(poly: Polygon, fx: float, fy: float) -> Polygon:
    """Scale about the centroid by (fx, fy) per axis; factors must be positive."""
    if not (fx > 0 and fy > 0):
        raise NonPositiveFactor(f"scale factors must be > 0, got ({fx}, {fy})")
    m = np.array([[fx, 0.0], [0.0, fy]])
    return _about_centroid(poly, m)


def shear(poly: Polygon, ax: float, ay: float) -> Polygon:
    """Shear about the centroid: x-axis shear by `ax` degrees, then y-axis by `ay`.

    Applied sequentially: x' = x + tan(ax) * y, then y' = y + tan(ay) * x'.
    """
    if abs(ax) >= 90 or abs(ay) >= 90:
        raise DegenerateShear(f"shear angles must satisfy |a| < 90, got ({ax}, {ay})")
    mx = np.array([[1.0, math.tan(math.radians(ax))], [0.0, 1.0]])
    my = np.array([[1.0, 0.0], [math.tan(math.radians(ay)), 1.0]])
    return _about_centroid(poly, my @ mx)


def bounds(poly: Polygon) -> tuple[float, float, float, float]:
    pts = poly.all_vertices()
    return (
        float(pts[:, 0].min()),
        float(pts[:, 1].min()),
        float(pts[:, 0].max()),
        float(pts[:, 1].max()),
    )


def normalize(poly: Polygon) -> Polygon:
    """Map the bounding box into [-1, 1]^2 preserving aspect ratio.

    Uniform scale and translate; the longer axis spans exactly [-1, 1] and
    the shorter axis is centered.
    """
    minx, miny, maxx, maxy = bounds(poly)
    extent = max(maxx - minx, maxy - miny)
    if extent == 0:
        raise ZeroExtent("polygon bounding box is a single point")
    s = 2.0 / extent
    c = np.array([(minx + maxx) / 2.0, (miny + maxy) / 2.0])
    return poly.map_vertices(lambda r: (r - c) * s)


def translate(poly: Polygon, dx: float, dy: float) -> Polygon:
    d = np.array([dx, dy], dtype=np.float64)
    return poly.map_vertices(lambda r: r + d)


# --- Douglas-Peucker simplification ------------------------------------------

def _point_line_dist(pts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Perpendicular distance from each point to the line through a, b.

    Falls back to plain Euclidean distance to `a` when a == b (the anchor
    segment of a closed ring).
    """
    ab = b - a
    norm = math.hypot(ab[0], ab[1])
    if norm == 0.0:
        d = pts - a
        return np.hypot(d[:, 0], d[:, 1])
    d = pts - a
    return np.abs(d[:, 0] * ab[1] - d[:, 1] * ab[0]) / norm


def _dp_polyline_keep(pts: np.ndarray, tolerance: float) -> np.ndarray:
    """Boolean keep-mask for an open polyline; endpoints always kept.

    Iterative stack form of the classic recursion: split at the farthest
    vertex (first occurrence) while its distance exceeds the tolerance.
    """
    n = len(pts)
    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[n - 1] = True
    stack = [(0, n - 1)]
    while stack:
        lo, hi = stack.pop()
        if hi - lo < 2:
            continue
        d = _point_line_dist(pts[lo + 1 : hi], pts[lo], pts[hi])
        imax = int(np.argmax(d))
        if d[imax] > tolerance:
            split = lo + 1 + imax
            keep[split] = True
            stack.append((split, hi))
            stack.append((lo, split))
    return keep


def _simplify_ring(ring: np.ndarray, tolerance: float) -> np.ndarray:
    """Simplify one implicitly-closed ring.

    The ring is closed by appending its first vertex, simplified as a
    polyline anchored at that vertex, and reopened. The result may have
    fewer than 3 vertices (a collapsed ring), which the caller handles.
    """
    closed = np.vstack([ring, ring[:1]])
    keep = _dp_polyline_keep(closed, tolerance)
    return closed[:-1][keep[:-1]]


def simplify_dp(poly: Polygon, tolerance: float) -> Polygon:
    """Douglas-Peucker simplification, each ring independently.

    Output vertices are a subset of the input vertices. Hole rings that
    collapse below 3 vertices are dropped; a collapsing exterior raises
    ExteriorCollapsed.
    """
    if tolerance < 0:
        raise GeometryError(f"tolerance must be >= 0, got {tolerance}")
    ext = _simplify_ring(poly.exterior, tolerance)
    if len(ext) < 3:
        raise ExteriorCollapsed(
            f"exterior ring simplified to {len(ext)} vertices at tolerance {tolerance}"
        )
    holes = []
    for h in poly.holes:
        s = _simplify_ring(h, tolerance)
        if len(s) >= 3:
            holes.append(s)
    return Polygon(ext, tuple(holes))


# --- WKT ----------------------------------------------------------------------

def _fmt(x: float) -> str:
    """Shortest round-trip decimal; integral values written without exponent."""
    return repr(float(x))


def serialize_wkt(poly: Polygon) -> str:
    def ring_txt(r: np.ndarray) -> str:
        closed = np.vstack([r, r[:1]])
        return "(" + ", ".join(f"{_fmt(x)} {_fmt(y)}" for x, y in closed) + ")"

    return "POLYGON (" + ", ".join(ring_txt(r) for r in poly.rings()) + ")"


class _WktScanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def expect(self, token: str):
        self.skip_ws()
        if not self.text.startswith(token, self.pos):
            raise ParseError(f"expected {token!r}", self.pos)
        self.pos += len(token)

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def number(self) -> float:
        self.skip_ws()
        start = self.pos
        allowed = "0123456789+-.eE"
        while self.pos < len(self.text) and self.text[self.pos] in allowed:
            self.pos += 1
        if self.pos == start:
            raise ParseError("expected a number", start)
        try:
            return float(self.text[start : self.pos])
        except ValueError:
            raise ParseError(f"bad number {self.text[start:self.pos]!r}", start) from None


def _strip_closure(coords: list) -> list:
    if len(coords) >= 2 and coords[0] == coords[-1]:
        return coords[:-1]
    return coords


def parse_wkt(text: str) -> Polygon:
    """Parse `POLYGON ((...), (...))`; a closing vertex equal to the first is stripped."""
    sc = _WktScanner(text)
    sc.skip_ws()
    if not sc.text[sc.pos :].upper().startswith("POLYGON"):
        raise ParseError("expected POLYGON", sc.pos)
    sc.pos += len("POLYGON")
    sc.expect("(")
    rings = []
    while True:
        sc.expect("(")
        coords = []
        while True:
            x = sc.number()
            y = sc.number()
            coords.append((x, y))
            if sc.peek() == ",":
                sc.expect(",")
            else:
                break
        sc.expect(")")
        coords = _strip_closure(coords)
        if len(coords) < 3:
            raise RingTooShort(f"ring has only {len(coords)} distinct vertices")
        rings.append(coords)
        if sc.peek() == ",":
            sc.expect(",")
        else:
            break
    sc.expect(")")
    sc.skip_ws()
    if sc.pos != len(sc.text):
        raise ParseError("trailing characters after POLYGON", sc.pos)
    return Polygon(rings[0], tuple(rings[1:]))


# --- GeoJSON ------------------------------------------------------------------

def _polygon_from_geojson_coords(coords) -> Polygon:
    if not isinstance(coords, list) or not coords:
        raise ParseError("Polygon coordinates must be a non-empty array of rings")
    rings = []
    for ring in coords:
        if not isinstance(ring, list):
            raise ParseError("ring must be an array of positions")
        pts = []
        for pos in ring:
            if not isinstance(pos, list) or len(pos) < 2:
                raise ParseError(f"bad position {pos!r}")
            pts.append((float(pos[0]), float(pos[1])))
        pts = _strip_closure(pts)
        if len(pts) < 3:
            raise RingTooShort(f"ring has only {len(pts)} distinct vertices")
        rings.append(pts)
    return Polygon(rings[0], tuple(rings[1:]))


def parse_geojson_features(text: str, label_key: str = "label") -> list[tuple[Polygon, str]]:
    """Read a FeatureCollection of Polygon features into (polygon, label) pairs.

    The label comes from the configurable feature property key. MultiPolygon
    and any other non-Polygon geometry is rejected.
    """
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e}", e.pos) from None
    if not isinstance(obj, dict) or obj.get("type") != "FeatureCollection":
        raise ParseError("expected a FeatureCollection object")
    features = obj.get("features")
    if not isinstance(features, list):
        raise ParseError("FeatureCollection.features must be an array")
    out = []
    for i, feat in enumerate(features):
        if not isinstance(feat, dict) or feat.get("type") != "Feature":
            raise ParseError(f"features[{i}] is not a Feature")
        geom = feat.get("geometry")
        if not isinstance(geom, dict):
            raise ParseError(f"features[{i}] has no geometry")
        gtype = geom.get("type")
        if gtype != "Polygon":
            raise UnsupportedGeometry(f"features[{i}] geometry type {gtype!r} not supported")
        props = feat.get("properties") or {}
        if label_key not in props:
            raise MissingLabel(f"features[{i}] missing property {label_key!r}")
        poly = _polygon_from_geojson_coords(geom.get("coordinates"))
        out.append((poly, str(props[label_key])))
    return out


def serialize_geojson_features(records: list[tuple[Polygon, str]], label_key: str = "label") -> str:
    def ring_coords(r: np.ndarray) -> list:
        closed = np.vstack([r, r[:1]])
        return [[float(x), float(y)] for x, y in closed]

    features = [
        {
            "type": "Feature",
            "geometry": {
                "type": "Polygon",
                "coordinates": [ring_coords(r) for r in poly.rings()],
            },
            "properties": {label_key: label},
        }
        for poly, label in records
    ]
    return json.dumps({"type": "FeatureCollection", "features": features})
