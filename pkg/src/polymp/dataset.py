"""Synthetic labeled polygon dataset: letter-shaped templates, trivial-vertex
densification, label-preserving transform splits, and (de)serialization.

Ten letter classes (E, F, H, I, L, O, T, U, Y, Z) are drawn on a roughly
50 x 50 unit canvas; O carries a hole. Every sample keeps its unnormalized
base geometry and the drawn transform parameters, so simplified views can
be rebuilt from scratch: simplify the base at original scale, re-apply the
recorded transform, re-normalize, re-encode.

All randomness is derived from one master seed via per-sample seed
sequences, so identical seeds reproduce identical datasets byte-for-byte.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CorruptRecord,
    EmptyDataset,
    ExteriorCollapsed,
    InvalidRatio,
)
from .geometry import (
    Polygon,
    TransformTag,
    normalize,
    rotate,
    scale,
    shear,
    simplify_dp,
)
from .graph import PolyGraph, encode_graph, graph_from_record, graph_to_record

GENERATOR_VERSION = "1"
RATIOS = (0.0, 0.2, 0.4, 0.6, 0.8)

ROTATION_RANGE = (-75.0, 75.0)
SCALE_RANGE = (0.1, 2.0)
SHEAR_RANGE = (-45.0, 45.0)


# --- shape templates ------------------------------------------------------------

@dataclass(frozen=True)
class ShapeClass:
    """A letter template: exterior ring (counter-clockwise), optional holes."""

    name: str
    exterior: tuple
    holes: tuple = ()

    @property
    def has_hole(self) -> bool:
        return bool(self.holes)

    def polygon(self) -> Polygon:
        return Polygon(np.array(self.exterior, dtype=np.float64),
                       tuple(np.array(h, dtype=np.float64) for h in self.holes))


_T = {
    "E": [(0, 0), (50, 0), (50, 10), (10, 10), (10, 20), (40, 20), (40, 30),
          (10, 30), (10, 40), (50, 40), (50, 50), (0, 50)],
    "F": [(0, 0), (10, 0), (10, 20), (40, 20), (40, 30), (10, 30), (10, 40),
          (50, 40), (50, 50), (0, 50)],
    "H": [(0, 0), (10, 0), (10, 20), (40, 20), (40, 0), (50, 0), (50, 50),
          (40, 50), (40, 30), (10, 30), (10, 50), (0, 50)],
    "I": [(20, 0), (30, 0), (30, 50), (20, 50)],
    "L": [(10, 0), (40, 0), (40, 10), (20, 10), (20, 50), (10, 50)],
    "T": [(20, 0), (30, 0), (30, 40), (50, 40), (50, 50), (0, 50), (0, 40),
          (20, 40)],
    "U": [(0, 0), (50, 0), (50, 50), (40, 50), (40, 10), (10, 10), (10, 50),
          (0, 50)],
    "Y": [(21, 0), (29, 0), (29, 22), (41, 50), (31, 50), (25, 33), (19, 50),
          (9, 50), (21, 22)],
    "Z": [(0, 0), (50, 0), (50, 10), (17, 10), (50, 40), (50, 50), (0, 50),
          (0, 40), (33, 40), (0, 10)],
}

SHAPE_CLASSES = {
    name: ShapeClass(name, tuple(v)) for name, v in _T.items()
}
SHAPE_CLASSES["O"] = ShapeClass(
    "O",
    exterior=((8, 8), (42, 8), (42, 42), (8, 42)),
    holes=(((18, 18), (18, 32), (32, 32), (32, 18)),),
)

DEFAULT_CLASS_NAMES = tuple(sorted(SHAPE_CLASSES))  # E F H I L O T U Y Z


def _edge_lengths(ring: np.ndarray) -> np.ndarray:
    nxt = np.roll(ring, -1, axis=0)
    return np.hypot(*(nxt - ring).T)


def _jitter_ring(ring: np.ndarray, rng, frac: float) -> np.ndarray:
    """Displace each corner by up to frac of its shorter adjacent edge (capped)."""
    lens = _edge_lengths(ring)
    prev_lens = np.roll(lens, 1)
    amp = np.minimum(np.minimum(lens, prev_lens) * frac, 2.0)
    offsets = rng.uniform(-1.0, 1.0, size=ring.shape) * amp[:, None]
    return ring + offsets


def _notch_ring(ring: np.ndarray, rng, max_notches: int = 2) -> np.ndarray:
    """Carve small rectangular steps into long edges, toward the material side.

    Strokes are at least ~6 units wide and notch depth is capped at 2.2, so
    the ring stays simple. Emulates serif-like decorations.
    """
    lens = _edge_lengths(ring)
    candidates = [i for i, ln in enumerate(lens) if ln >= 12.0]
    if not candidates:
        return ring
    n_notch = int(rng.integers(1, max_notches + 1))
    chosen = sorted(rng.choice(candidates, size=min(n_notch, len(candidates)),
                               replace=False).tolist(), reverse=True)
    pts = [tuple(p) for p in ring]
    area2 = float(np.sum(ring[:, 0] * np.roll(ring[:, 1], -1)
                         - np.roll(ring[:, 0], -1) * ring[:, 1]))
    interior_sign = 1.0 if area2 > 0 else -1.0  # left of travel for CCW
    for i in chosen:
        a = np.array(pts[i])
        b = np.array(pts[(i + 1) % len(pts)])
        u = (b - a) / np.hypot(*(b - a))
        n_in = interior_sign * np.array([-u[1], u[0]])
        width = float(rng.uniform(2.0, min(4.0, lens[i] * 0.25)))
        depth = float(rng.uniform(1.0, 2.2))
        t0 = float(rng.uniform(0.2, 0.8 - width / lens[i]))
        p1 = a + u * (t0 * lens[i])
        p2 = p1 + n_in * depth
        p3 = p2 + u * width
        p4 = p1 + u * width
        pts[i + 1 : i + 1] = [tuple(p1), tuple(p2), tuple(p3), tuple(p4)]
    return np.array(pts)


def generate_class_instance(cls: ShapeClass, rng,
                            jitter: float = 0.1,
                            notch_prob: float = 0.35) -> Polygon:
    """One template instance with seeded corner jitter and optional notches.

    Coordinates stay in the order of 50 x 50 units (unnormalized).
    """
    rings = []
    for ring in cls.polygon().rings():
        r = np.asarray(ring, dtype=np.float64)
        if rng.uniform() < notch_prob:
            r = _notch_ring(r, rng)
        if jitter > 0:
            r = _jitter_ring(r, rng, jitter)
        rings.append(r)
    return Polygon(rings[0], tuple(rings[1:]))


def densify(poly: Polygon, points_per_edge: int, rng=None) -> Polygon:
    """Insert `points_per_edge` near-collinear vertices along each edge.

    Inserted points sit on the edge, displaced by at most 0.1 units (below
    the simplification tolerance of 1.0), so the shape and its label are
    unchanged.
    """
    if points_per_edge < 0:
        raise ValueError(f"points_per_edge must be >= 0, got {points_per_edge}")
    if points_per_edge == 0:
        return poly

    def densify_ring(ring: np.ndarray) -> np.ndarray:
        out = []
        n = len(ring)
        for i in range(n):
            a, b = ring[i], ring[(i + 1) % n]
            out.append(a)
            for k in range(1, points_per_edge + 1):
                p = a + (b - a) * (k / (points_per_edge + 1))
                if rng is not None:
                    p = p + rng.uniform(-0.07, 0.07, size=2)
                out.append(p)
        return np.array(out)

    return poly.map_vertices(densify_ring)


# --- label-preserving transforms -------------------------------------------------

def draw_transform_params(rng, which: TransformTag) -> dict:
    if which == TransformTag.ORIGINAL:
        raise ValueError("ORIGINAL is not a transform to draw")
    if which == TransformTag.ROTATED:
        return {"kind": "R", "angle": float(rng.uniform(*ROTATION_RANGE))}
    if which == TransformTag.SCALED:
        return {"kind": "SC", "fx": float(rng.uniform(*SCALE_RANGE)),
                "fy": float(rng.uniform(*SCALE_RANGE))}
    return {"kind": "SH", "ax": float(rng.uniform(*SHEAR_RANGE)),
            "ay": float(rng.uniform(*SHEAR_RANGE))}


def apply_transform(poly: Polygon, params: dict) -> Polygon:
    """Re-apply recorded transform parameters about the centroid (no normalize)."""
    kind = params["kind"]
    if kind == "O":
        return poly
    if kind == "R":
        return rotate(poly, params["angle"])
    if kind == "SC":
        return scale(poly, params["fx"], params["fy"])
    if kind == "SH":
        return shear(poly, params["ax"], params["ay"])
    raise ValueError(f"unknown transform kind {kind!r}")


def apply_random_transform(poly: Polygon, rng, which: TransformTag):
    """Draw transform parameters, apply about the centroid, re-normalize.

    Returns (normalized polygon, drawn parameters).
    """
    params = draw_transform_params(rng, which)
    return normalize(apply_transform(poly, params)), params


# --- samples and datasets --------------------------------------------------------

@dataclass
class Sample:
    id: str
    class_name: str
    label: int
    transform: TransformTag
    simplified: bool
    polygon: Polygon  # normalized
    graph: PolyGraph
    base: Polygon  # densified, untransformed, unnormalized geometry
    transform_params: dict = field(default_factory=dict)


@dataclass
class Dataset:
    class_names: list
    samples: list
    seed: int

    def __len__(self) -> int:
        return len(self.samples)

    def graphs(self) -> list:
        return [s.graph for s in self.samples]

    def counts(self) -> dict:
        out: dict = {}
        for s in self.samples:
            per_class = out.setdefault(s.class_name, {})
            per_class[s.transform.code] = per_class.get(s.transform.code, 0) + 1
        return out


def _sample_rng(seed: int, stream: int, index: int):
    return np.random.default_rng(np.random.SeedSequence((seed, stream, index)))


def _derive(base: Polygon, label: int, tag: TransformTag, rng) -> tuple:
    if tag == TransformTag.ORIGINAL:
        params = {"kind": "O"}
        poly = normalize(base)
    else:
        poly, params = apply_random_transform(base, rng, tag)
    return poly, params, encode_graph(poly, label)


def _make_sample(sid: str, class_name: str, label: int, tag: TransformTag,
                 rng, density_range=(1, 5)) -> Sample:
    base = generate_class_instance(SHAPE_CLASSES[class_name], rng)
    k = int(rng.integers(density_range[0], density_range[1] + 1))
    base = densify(base, k, rng)
    poly, params, g = _derive(base, label, tag, rng)
    return Sample(id=sid, class_name=class_name, label=label, transform=tag,
                  simplified=False, polygon=poly, graph=g, base=base,
                  transform_params=params)


def generate_base_samples(class_names, per_class: int, seed: int) -> Dataset:
    """Per-class Original samples; the pool that ratio splits are built from."""
    class_names = list(class_names)
    if not class_names or per_class <= 0:
        raise EmptyDataset(f"need classes and per_class > 0, got {class_names} x {per_class}")
    unknown = [c for c in class_names if c not in SHAPE_CLASSES]
    if unknown:
        raise EmptyDataset(f"unknown classes {unknown}; available: {sorted(SHAPE_CLASSES)}")
    samples = []
    idx = 0
    for label, name in enumerate(class_names):
        for i in range(per_class):
            rng = _sample_rng(seed, 0, idx)
            samples.append(_make_sample(f"base-{name}-{i:04d}", name, label,
                                        TransformTag.ORIGINAL, rng))
            idx += 1
    return Dataset(class_names, samples, seed)


def build_ratio_split(base: Dataset, ratio: float, seed: int | None = None) -> Dataset:
    """Replace round(ratio * n) samples per class with transformed variants.

    Transform kinds are drawn uniformly from {R, SC, SH}; the replaced sample
    keeps its id and base geometry, so the total count and the class balance
    are unchanged.
    """
    if not any(math.isclose(ratio, r) for r in RATIOS):
        raise InvalidRatio(f"ratio must be one of {RATIOS}, got {ratio}")
    seed = base.seed if seed is None else seed
    stream = 1 + int(round(ratio * 100))
    by_class: dict = {}
    for pos, s in enumerate(base.samples):
        by_class.setdefault(s.class_name, []).append(pos)

    out = list(base.samples)
    tags = (TransformTag.ROTATED, TransformTag.SCALED, TransformTag.SHEARED)
    for label, name in enumerate(base.class_names):
        positions = by_class.get(name, [])
        k = int(round(ratio * len(positions)))
        rng = _sample_rng(seed, stream, label)
        chosen = rng.choice(len(positions), size=k, replace=False) if k else []
        for j in sorted(int(c) for c in np.asarray(chosen, dtype=np.int64)):
            pos = positions[j]
            s = base.samples[pos]
            tag = tags[int(rng.integers(0, 3))]
            poly, params, g = _derive(s.base, s.label, tag, rng)
            out[pos] = Sample(id=s.id, class_name=s.class_name, label=s.label,
                              transform=tag, simplified=False, polygon=poly,
                              graph=g, base=s.base, transform_params=params)
    return Dataset(list(base.class_names), out, seed)


def generate_test_set(class_names, per_class_per_tag: int, seed: int) -> Dataset:
    """Fresh samples covering all four transform tags evenly."""
    class_names = list(class_names)
    if not class_names or per_class_per_tag <= 0:
        raise EmptyDataset("need classes and per_class_per_tag > 0")
    samples = []
    idx = 0
    for label, name in enumerate(class_names):
        for tag in TransformTag:
            for i in range(per_class_per_tag):
                rng = _sample_rng(seed, 2, idx)
                samples.append(_make_sample(f"test-{name}-{tag.code}-{i:03d}",
                                            name, label, tag, rng))
                idx += 1
    return Dataset(class_names, samples, seed)


def build_simplified_view(ds: Dataset, tolerance: float = 1.0) -> Dataset:
    """Simplify each sample's base geometry at original scale, re-apply its
    recorded transform, re-normalize and re-encode.

    Samples whose exterior collapses are dropped; the drop count is recorded
    on the returned dataset as `dropped`.
    """
    out = []
    dropped = 0
    for s in ds.samples:
        try:
            simp = simplify_dp(s.base, tolerance)
        except ExteriorCollapsed:
            dropped += 1
            continue
        poly = normalize(apply_transform(simp, s.transform_params))
        g = encode_graph(poly, s.label)
        out.append(Sample(id=s.id, class_name=s.class_name, label=s.label,
                          transform=s.transform, simplified=True, polygon=poly,
                          graph=g, base=simp, transform_params=s.transform_params))
    view = Dataset(list(ds.class_names), out, ds.seed)
    view.dropped = dropped  # type: ignore[attr-defined]
    return view


# --- serialization ---------------------------------------------------------------

def _sample_to_record(s: Sample) -> dict:
    rec = graph_to_record(s.graph)
    rec.update({
        "id": s.id,
        "class": s.class_name,
        "transform": s.transform.code,
        "simplified": s.simplified,
        "ring_sizes": [len(r) for r in s.polygon.rings()],
        "base_rings": [[[float(x), float(y)] for x, y in r] for r in s.base.rings()],
        "tparams": s.transform_params,
    })
    return rec


def _sample_from_record(rec: dict) -> Sample:
    g = graph_from_record(rec)
    g.validate()
    sizes = rec["ring_sizes"]
    if sum(sizes) != g.n:
        raise ValueError(f"ring sizes {sizes} do not cover {g.n} nodes")
    coords = g.nodes[:, :2]
    rings, at = [], 0
    for n in sizes:
        rings.append(coords[at : at + n])
        at += n
    poly = Polygon(rings[0], tuple(rings[1:]))
    base_rings = [np.asarray(r, dtype=np.float64) for r in rec["base_rings"]]
    base = Polygon(base_rings[0], tuple(base_rings[1:]))
    return Sample(id=rec["id"], class_name=rec["class"], label=int(rec["label"]),
                  transform=TransformTag.from_code(rec["transform"]),
                  simplified=bool(rec["simplified"]), polygon=poly, graph=g,
                  base=base, transform_params=dict(rec["tparams"]))


def save_dataset(ds: Dataset, path: str) -> dict:
    """Write one sample per line; returns the manifest entry for this file."""
    with open(path, "w") as f:
        for s in ds.samples:
            f.write(json.dumps(_sample_to_record(s)))
            f.write("\n")
    return {
        "file": os.path.basename(path),
        "n_samples": len(ds.samples),
        "counts": ds.counts(),
    }


def load_dataset(path: str, class_names=None, seed: int = 0) -> Dataset:
    samples = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                samples.append(_sample_from_record(json.loads(line)))
            except Exception as e:
                raise CorruptRecord(str(e), line=lineno) from e
    if class_names is None:
        names: dict = {}
        for s in samples:
            names[s.label] = s.class_name
        if names and sorted(names) != list(range(len(names))):
            raise CorruptRecord("label space has gaps")
        class_names = [names[i] for i in sorted(names)]
    for s in samples:
        if s.label >= len(class_names) or class_names[s.label] != s.class_name:
            raise CorruptRecord(f"sample {s.id}: label {s.label} does not match "
                                f"class table {class_names}")
    return Dataset(list(class_names), samples, seed)


def write_manifest(path: str, classes, seed: int, entries: dict) -> None:
    manifest = {
        "classes": list(classes),
        "seed": int(seed),
        "generator_version": GENERATOR_VERSION,
        "splits": entries,
    }
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def read_manifest(path: str) -> dict:
    with open(path) as f:
        return json.load(f)
