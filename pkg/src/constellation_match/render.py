"""SVG and Graphviz DOT output for maps and correspondences."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .graph import ObjectGraph


def pca_project(points: np.ndarray) -> np.ndarray:
    """Project 3-D points onto their two dominant principal axes."""
    pts = np.asarray(points, dtype=np.float64)
    centered = pts - pts.mean(axis=0)
    if len(pts) < 2 or not np.any(centered):
        return np.zeros((len(pts), 2))
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    out = centered @ vt[:2].T
    if out.shape[1] < 2:
        out = np.hstack([out, np.zeros((len(pts), 2 - out.shape[1]))])
    # fix the sign ambiguity of SVD so output is reproducible
    for k in range(2):
        col = out[:, k]
        if col[np.argmax(np.abs(col))] < 0:
            out[:, k] = -col
    return out


def _fit(xy: np.ndarray, box: float) -> np.ndarray:
    lo = xy.min(axis=0)
    span = float(np.max(xy.max(axis=0) - lo))
    if span <= 0:
        return np.full_like(xy, box / 2)
    return (xy - lo) / span * box


def render_svg(g1: ObjectGraph, g2: ObjectGraph, assignment=(), size: int = 360) -> str:
    """Both layouts side by side in one shared PCA frame, matches as dashed lines."""
    pad, box = 30.0, size - 60.0
    both = pca_project(np.vstack([g1.positions(), g2.positions()]))
    scaled = _fit(both, box)
    xy1 = scaled[: len(g1)] + pad
    xy2 = scaled[len(g1):] + pad + np.array([size, 0.0])
    width, height = 2 * size, size

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{pad}" y="18" font-size="12">{escape(g1.frame_id)}</text>',
        f'<text x="{size + pad}" y="18" font-size="12">{escape(g2.frame_id)}</text>',
    ]
    for g, xy in ((g1, xy1), (g2, xy2)):
        i, j, _ = g.edge_index_arrays()
        for a, b in zip(i.tolist(), j.tolist()):
            parts.append(f'<line x1="{xy[a, 0]:.2f}" y1="{xy[a, 1]:.2f}" x2="{xy[b, 0]:.2f}" '
                         f'y2="{xy[b, 1]:.2f}" stroke="#999" stroke-width="1"/>')
    for a, b in assignment:
        p, q = xy1[g1.index_of(a)], xy2[g2.index_of(b)]
        parts.append(f'<line x1="{p[0]:.2f}" y1="{p[1]:.2f}" x2="{q[0]:.2f}" y2="{q[1]:.2f}" '
                     'stroke="#d62728" stroke-width="1.2" stroke-dasharray="4 3"/>')
    for g, xy, color in ((g1, xy1, "#1f77b4"), (g2, xy2, "#2ca02c")):
        for nid, (x, y) in zip(g.ids, xy):
            parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="4" fill="{color}"/>')
            parts.append(f'<text x="{x + 5:.2f}" y="{y - 5:.2f}" font-size="9">{nid}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _dot_id(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _dot_cluster(g: ObjectGraph, prefix: str, k: int) -> list[str]:
    lines = [f"  subgraph cluster_{k} {{", f"    label={_dot_id(g.frame_id)};"]
    for nd in g.nodes:
        lines.append(f'    {prefix}{nd.id} [label="{nd.id}", u="{nd.scalar_uncertainty:.4g}"];')
    for e in g.edges:
        lines.append(f'    {prefix}{e.i} -- {prefix}{e.j} [label="{e.length:.2f}"];')
    lines.append("  }")
    return lines


def to_dot(g1: ObjectGraph, g2: ObjectGraph | None = None, assignment=()) -> str:
    """Undirected DOT graph; with two maps, correspondences are dashed red edges."""
    lines = ["graph constellation {", "  node [shape=circle];"]
    lines += _dot_cluster(g1, "a", 0)
    if g2 is not None:
        lines += _dot_cluster(g2, "b", 1)
        for a, b in assignment:
            lines.append(f"  a{a} -- b{b} [style=dashed, color=red, constraint=false];")
    lines.append("}")
    return "\n".join(lines) + "\n"
