"""Per-node saliency export: JSON records and SVG renderings.

Saliency is the normalized L2 norm of each node's final latent feature;
vertices render darker the more salient they are.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .models import ModelParams, node_saliency
from .training import predict


def saliency_record(params: ModelParams, sample) -> dict:
    sal = node_saliency(params, sample.graph)
    pred = int(predict(params, [sample])[0])
    return {
        "id": sample.id,
        "class": sample.class_name,
        "label": int(sample.label),
        "prediction": pred,
        "transform": sample.transform.code,
        "coords": [[float(x), float(y)] for x, y in sample.graph.nodes[:, :2]],
        "flags": [int(f) for f in sample.graph.nodes[:, 2]],
        "saliency": [float(s) for s in sal],
    }


def _shade(s: float) -> str:
    """Grayscale fill, darker for higher saliency."""
    level = int(round(235 - 215 * s))
    return f"rgb({level},{level},{level})"


def saliency_svg(record: dict, class_names=None, size: int = 420, margin: int = 30) -> str:
    coords = np.asarray(record["coords"], dtype=np.float64)
    sal = record["saliency"]
    lo = coords.min(axis=0)
    hi = coords.max(axis=0)
    span = float(max(hi[0] - lo[0], hi[1] - lo[1], 1e-9))
    usable = size - 2 * margin

    def to_px(p):
        x = margin + (p[0] - lo[0]) / span * usable
        y = size - margin - (p[1] - lo[1]) / span * usable  # flip y for screen space
        return x, y

    rings = _edge_cycles(record)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    for cycle in rings:
        pts = " ".join("{:.2f},{:.2f}".format(*to_px(coords[i])) for i in cycle)
        parts.append(f'<polygon points="{pts}" fill="none" stroke="#bbb" stroke-width="1"/>')
    for i, p in enumerate(coords):
        x, y = to_px(p)
        parts.append(
            f'<circle cx="{x:.2f}" cy="{y:.2f}" r="4.5" fill="{_shade(float(sal[i]))}" '
            f'stroke="#333" stroke-width="0.5"/>'
        )
    pred = record["prediction"]
    pred_name = class_names[pred] if class_names and pred < len(class_names) else str(pred)
    true_name = record.get("class", str(record.get("label")))
    parts.append(
        f'<text x="{margin}" y="{size - 8}" font-family="monospace" font-size="13">'
        f"{record['id']}: predicted {pred_name}, true {true_name}</text>"
    )
    parts.append("</svg>")
    return "\n".join(parts)


def _edge_cycles(record: dict) -> list:
    """Node index cycles (one per ring), walked from the recorded edges."""
    n = len(record["flags"])
    neighbors: list[list[int]] = [[] for _ in range(n)]
    for i, j in record.get("edges", []):
        neighbors[i].append(j)
        neighbors[j].append(i)
    seen = [False] * n
    cycles = []
    for start in range(n):
        if seen[start] or not neighbors[start]:
            continue
        cycle = [start]
        seen[start] = True
        prev, cur = start, neighbors[start][0]
        while cur != start:
            cycle.append(cur)
            seen[cur] = True
            nxt = [k for k in neighbors[cur] if k != prev]
            if not nxt:
                break
            prev, cur = cur, nxt[0]
        cycles.append(cycle)
    return cycles


def export_saliency(params: ModelParams, samples, out_dir: str, ids=None,
                    class_names=None) -> list:
    """Write <id>.json and <id>.svg per requested sample; returns paths."""
    from .errors import SampleNotFound

    os.makedirs(out_dir, exist_ok=True)
    by_id = {s.id: s for s in samples}
    if ids is None:
        chosen = list(samples)
    else:
        missing = [i for i in ids if i not in by_id]
        if missing:
            raise SampleNotFound(f"sample ids not in dataset: {missing}")
        chosen = [by_id[i] for i in ids]
    paths = []
    for s in chosen:
        rec = saliency_record(params, s)
        jpath = os.path.join(out_dir, f"{s.id}.json")
        spath = os.path.join(out_dir, f"{s.id}.svg")
        with open(jpath, "w") as f:
            json.dump(rec, f)
        with open(spath, "w") as f:
            f.write(saliency_svg(rec, class_names=class_names))
        paths.extend([jpath, spath])
    return paths
