"""The disk automorphism f(z) = w*(z/|z|, -log|z|) built from an inverse
Loewner chain, sampled on polar grids and ring triangulations, and its
complex dilatation recovered by finite differences in logarithmic
coordinates w = -log z = t + i theta.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .beltrami import BOUNDARY_EPS, BeltramiSpec, psi_at
from .errors import BreakpointStraddle
from .loewner import ChainEvaluator, OK


@dataclass(frozen=True)
class QCMap:
    evaluator: ChainEvaluator
    t_max: float = 12.0

    @classmethod
    def from_spec(cls, spec: BeltramiSpec, t_max: float = 12.0, **kw) -> "QCMap":
        return cls(ChainEvaluator.from_spec(spec, **kw), t_max)

    @property
    def r_min(self) -> float:
        return math.exp(-self.t_max)

    @property
    def k(self) -> float:
        return self.evaluator.family.k

    @property
    def truncation_error(self) -> float:
        """Bound on |f| committed for 0 < |z| < r_min by capping t at t_max."""
        k = self.k
        return math.exp(-self.t_max * (1 - k) / (1 + k))

    def evaluate(self, z):
        """Return (f(z), flags) with flags 0 where the chain evaluation succeeded."""
        z = np.asarray(z, dtype=complex)
        shape = z.shape
        z = z.ravel()
        r = np.abs(z)
        out = z.copy()
        flags = np.zeros(z.size, dtype=np.int8)
        with np.errstate(divide="ignore"):
            t = -np.log(r)
        inside = (r > 0) & (t > BOUNDARY_EPS)
        out[r == 0] = 0
        if np.any(inside):
            zi = z[inside]
            ti = np.minimum(t[inside], self.t_max)
            res = self.evaluator.flow(zi / np.abs(zi), ti, 0.0)
            out[inside] = res.zeta
            flags[inside] = res.status
        return out.reshape(shape), flags.reshape(shape)


def f_at(fmap: QCMap, z):
    from .loewner import _raise_on_status, FlowResult

    vals, flags = fmap.evaluate(z)
    if np.any(flags != OK):
        dummy = np.zeros_like(flags, dtype=float)
        _raise_on_status(FlowResult(vals, flags, dummy, dummy, dummy, None))
    return complex(vals) if np.ndim(vals) == 0 else vals


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class PolarGrid:
    radii: np.ndarray = field(repr=False)
    m: int

    @classmethod
    def standard(cls, p: int = 32, m: int = 64, t_max: float = 12.0, breakpoints: Sequence[float] = ()) -> "PolarGrid":
        """Geometric radii e^{-t_max} .. 1 plus a node at every e^{-breakpoint}."""
        ts = np.linspace(t_max, 0.0, p)
        extra = [b for b in breakpoints if 0 < b < t_max]
        ts = np.unique(np.concatenate([ts, extra]))[::-1]
        return cls(np.exp(-ts), m)

    @property
    def nodes(self) -> np.ndarray:
        theta = 2 * np.pi * np.arange(self.m) / self.m
        return (self.radii[:, None] * np.exp(1j * theta)[None, :]).ravel()


@dataclass(frozen=True)
class Triangulation:
    vertices: np.ndarray = field(repr=False)
    triangles: np.ndarray = field(repr=False)
    boundary: np.ndarray = field(repr=False)  # indices of vertices on |z| = 1

    @property
    def nodes(self) -> np.ndarray:
        return self.vertices

    def signed_areas(self, pts=None) -> np.ndarray:
        p = self.vertices if pts is None else np.asarray(pts)
        a, b, c = p[self.triangles[:, 0]], p[self.triangles[:, 1]], p[self.triangles[:, 2]]
        return 0.5 * np.imag(np.conj(b - a) * (c - a))


def ring_layout(rings: int, sectors: int, core: int = 10) -> tuple[list[int], list[float]]:
    """Vertex counts and radii of the rings, innermost first.

    Rings j >= core sit at radius j/rings with sectors*j/rings vertices. The
    rings inside carry a constant count on geometrically spaced radii: near
    the origin the map's angular distortion does not decay, so the cells must
    stay roughly square in log-polar coordinates. The constant count is
    chosen so the vertex total matches the purely linear layout.
    """
    core = max(1, min(core, rings))
    step = sectors / rings
    m = max(3, round(step * core / 2))
    counts = [m] * (core - 1) + [max(3, round(step * j)) for j in range(core, rings + 1)]
    r_core = core / rings
    rho = math.exp(2 * math.pi / m)
    radii = [r_core * rho ** -(core - j) for j in range(1, core)] + [j / rings for j in range(core, rings + 1)]
    return counts, radii


def disk_triangulation(rings: int = 32, sectors: int = 64, core: int = 10) -> Triangulation:
    """Concentric-ring triangulation of the closed disk (center fan plus ring bands).

    The default 32 x 64 mesh has 2048 triangles.
    """
    counts, radii = ring_layout(rings, sectors, core)
    verts = [0j]
    ring_ids = []
    ring_angles = []
    for j, (n, r) in enumerate(zip(counts, radii), start=1):
        off = 0.5 * (j % 2) * 2 * np.pi / n
        ang = off + 2 * np.pi * np.arange(n) / n
        pts = np.exp(1j * ang) if j == rings else r * np.exp(1j * ang)
        ids = np.arange(len(verts), len(verts) + n)
        verts.extend(pts)
        ring_ids.append(ids)
        ring_angles.append(ang)
    tris = []
    first = ring_ids[0]
    for i in range(len(first)):
        tris.append((0, first[i], first[(i + 1) % len(first)]))
    for (ia, aa), (ib, ab) in zip(zip(ring_ids, ring_angles), zip(ring_ids[1:], ring_angles[1:])):
        # zip two rings together in angular order
        na, nb = len(ia), len(ib)
        A = np.append(aa, aa[0] + 2 * np.pi)
        B = np.append(ab, ab[0] + 2 * np.pi)
        i = o = 0
        while i < na or o < nb:
            if i >= na or (o < nb and B[o + 1] <= A[i + 1]):
                tris.append((ia[i % na], ib[o % nb], ib[(o + 1) % nb]))
                o += 1
            else:
                tris.append((ia[i % na], ib[o % nb], ia[(i + 1) % na]))
                i += 1
    V = np.array(verts, dtype=complex)
    T = np.array(tris, dtype=np.int64)
    neg = Triangulation(V, T, ring_ids[-1]).signed_areas() < 0
    T[neg] = T[neg][:, [0, 2, 1]]
    return Triangulation(V, T, ring_ids[-1].copy())


class FieldSamples(NamedTuple):
    z: np.ndarray
    fz: np.ndarray
    flag: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "fx", "fy", "flag"])
        for z, f, fl in zip(self.z, self.fz, self.flag):
            w.writerow([repr(float(z.real)), repr(float(z.imag)), repr(float(f.real)), repr(float(f.imag)), int(fl)])
        return buf.getvalue()


def f_grid(fmap: QCMap, grid: PolarGrid | Triangulation) -> FieldSamples:
    z = grid.nodes
    fz, flags = fmap.evaluate(z)
    return FieldSamples(z, fz, flags)


class OrientationReport(NamedTuple):
    all_positive: bool
    min_area: float
    n_negative: int
    n_triangles: int

    def to_json(self) -> dict:
        return self._asdict()


def orientation_check(mesh: Triangulation, samples: FieldSamples) -> OrientationReport:
    areas = mesh.signed_areas(samples.fz)
    neg = int(np.sum(areas <= 0))
    return OrientationReport(neg == 0, float(np.min(areas)), neg, int(areas.size))


# ---------------------------------------------------------------------------
# dilatation


def _scaled_nodes(nodes: np.ndarray, t: float, t_new: float, edge: float) -> np.ndarray:
    out = nodes.copy()
    top = nodes >= edge
    out[top] = edge + (nodes[top] - edge) * ((t_new - edge) / (t - edge))
    return out


def dilatation_fd_multi(fmap: QCMap, t, theta, hs: Sequence[float]) -> np.ndarray:
    """Finite-difference dilatation at z = e^{-t - i theta} for several steps h.

    All difference quotients reuse the step sequence of an adaptive run at
    (t, theta), rescaled on the topmost breakpoint interval for t +- h, so
    integrator noise does not enter the quotients.
    Returns an array of shape (len(hs), n).
    """
    ev = fmap.evaluator
    fam = ev.family
    t = np.atleast_1d(np.asarray(t, dtype=float))
    theta = np.broadcast_to(np.atleast_1d(np.asarray(theta, dtype=float)), t.shape)
    for h in hs:
        if h < 1e-5:
            raise ValueError("h below 1e-5 is dominated by integrator tolerance")
        if np.any(t <= h) or np.any(t >= fmap.t_max - h):
            raise ValueError("need h < t < t_max - h")
        iv = fam.interval_of(t)
        if np.any(fam.interval_of(t + h) != iv) or np.any(fam.interval_of(t - h) != iv):
            raise BreakpointStraddle("t +- h crosses a breakpoint")
    zeta = np.exp(-1j * theta)
    res = ev.flow(zeta, t, 0.0, record=True)
    if np.any(res.status != OK):
        from .loewner import _raise_on_status

        _raise_on_status(res)
    base = [sq[0] for sq in res.nodes]
    edges = fam.edges[fam.interval_of(t)]
    out = []
    for h in hs:
        plus = [_scaled_nodes(nd, ti, ti + h, e) for nd, ti, e in zip(base, t, edges)]
        minus = [_scaled_nodes(nd, ti, ti - h, e) for nd, ti, e in zip(base, t, edges)]
        z0 = np.concatenate([zeta, zeta, np.exp(-1j * (theta + h)), np.exp(-1j * (theta - h))])
        F = ev.replay(z0, plus + minus + base + base).reshape(4, -1)
        Ft = (F[0] - F[1]) / (2 * h)
        Fth = (F[2] - F[3]) / (2 * h)
        mu_log = (Ft + 1j * Fth) / (Ft - 1j * Fth)
        out.append(np.exp(-2j * theta) * mu_log)
    return np.array(out)


def dilatation_fd(fmap: QCMap, t, theta, h: float = 1e-3):
    out = dilatation_fd_multi(fmap, t, theta, [h])[0]
    return complex(out[0]) if np.ndim(t) == 0 else out


def dilatation_target(spec: BeltramiSpec, t, theta):
    """zeta^2 psi_t(zeta) with zeta = e^{-i theta}: the value mu(e^{-t} zeta)."""
    zeta = np.exp(-1j * np.asarray(theta, dtype=float))
    out = zeta * zeta * np.asarray(psi_at(spec, zeta, t))
    return complex(out) if np.ndim(out) == 0 else out


def closed_form_constant(c: complex, z):
    """f(z) = z |z|^(q-1), q = (1+c)/(1-c): the map for psi == c."""
    q = (1 + c) / (1 - c)
    z = np.asarray(z, dtype=complex)
    r = np.abs(z)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(r > 0, z * np.exp((q - 1) * np.log(np.where(r > 0, r, 1.0))), 0)
    return np.where(r >= 1, z, out)
