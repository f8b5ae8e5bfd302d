"""SVG drawings of a disk triangulation and of its image."""
from __future__ import annotations

import numpy as np

from .qcmap import Triangulation

VIEWBOX = "-1.1 -1.1 2.2 2.2"


def _fmt(x: float) -> str:
    s = f"{x:.6f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _document(points: np.ndarray, triangles: np.ndarray, stroke: str) -> str:
    # SVG's y axis points down; flip it so the picture has the usual orientation
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{VIEWBOX}" width="600" height="600">',
        f'<g fill="none" stroke="{stroke}" stroke-width="0.002" stroke-linejoin="round">',
    ]
    for tri in triangles:
        p = points[tri]
        coords = " L ".join(f"{_fmt(v.real)} {_fmt(-v.imag)}" for v in p)
        lines.append(f'<path d="M {coords} Z"/>')
    lines.append("</g>")
    lines.append('<circle cx="0" cy="0" r="1" fill="none" stroke="#c0392b" stroke-width="0.006"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def render_svg(mesh: Triangulation, image) -> tuple[str, str]:
    """Source mesh and image mesh as two SVG documents with one path per triangle."""
    image = np.asarray(image, dtype=complex)
    if image.shape != mesh.vertices.shape:
        raise ValueError("need one image point per mesh vertex")
    return (
        _document(mesh.vertices, mesh.triangles, "#1f3a93"),
        _document(image, mesh.triangles, "#1f3a93"),
    )
