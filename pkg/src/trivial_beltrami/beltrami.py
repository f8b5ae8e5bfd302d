"""Beltrami coefficients built from families of bounded holomorphic functions.

A family ``psi_t`` (``t >= 0``) induces the coefficient

    mu(z) = (z/|z|)**2 * psi_{-log|z|}(z/|z|)

whose boundary slices ``U_t(zeta) = zeta**-2 mu(zeta e^{-t})`` are the
boundary values of ``psi_t``. Two constructors are supported: a finite sum
``sum_j a_j(t) phi_j(z)`` and the dilation form ``e^{-2t} phi(e^{-t} z)``,
which yields ``mu(z) = z**2 phi(z)``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from .analytic_expr import (
    DEFAULT_SAMPLES,
    DISK_TOL,
    Breakpoint,
    HoloExpr,
    TimeCoefficient,
    coeff_from_json,
    holo_from_json,
    merge_breakpoints,
    sup_norm_circle,
)
from .errors import BudgetExceeded, DomainError

MEMBERSHIP_TOL = 1e-9
# -log|z| below this counts as the unit circle; covers |e^{i theta}| rounding
BOUNDARY_EPS = 1e-15


@dataclass(frozen=True)
class SumForm:
    terms: tuple[tuple[TimeCoefficient, HoloExpr], ...]

    @property
    def k(self) -> float:
        return float(sum(a.declared_bound * phi.declared_bound for a, phi in self.terms))

    def breakpoints(self) -> list[Breakpoint]:
        return merge_breakpoints([a.breakpoints() for a, _ in self.terms])

    def psi(self, z, t):
        z = np.asarray(z, dtype=complex)
        t = np.asarray(t, dtype=float)
        out = np.zeros(np.broadcast(z, t).shape, dtype=complex)
        for a, phi in self.terms:
            out = out + a(t) * phi(z)
        return out

    def psi_on_pieces(self, z, t, piece_idx):
        """Evaluate with explicit piece indices, one row per term."""
        out = np.zeros(np.broadcast(z, t).shape, dtype=complex)
        for j, (a, phi) in enumerate(self.terms):
            out = out + a.eval_pieces(piece_idx[j], t) * phi(z)
        return out

    def piece_map(self, edges: np.ndarray) -> np.ndarray:
        """Piece index of every term on every interval [edges[i], edges[i+1])."""
        probes = np.append(0.5 * (edges[:-1] + edges[1:]), edges[-1] + 1.0)
        return np.array([a.piece_index(probes) for a, _ in self.terms], dtype=int).reshape(len(self.terms), -1)

    def to_json(self) -> dict:
        return {"form": "sum", "terms": [{"a": a.to_json(), "phi": phi.to_json()} for a, phi in self.terms]}


@dataclass(frozen=True)
class DilationForm:
    phi: HoloExpr

    @property
    def k(self) -> float:
        return self.phi.declared_bound

    def breakpoints(self) -> list[Breakpoint]:
        return []

    def psi(self, z, t):
        z = np.asarray(z, dtype=complex)
        t = np.asarray(t, dtype=float)
        e = np.exp(-t)
        return e * e * self.phi(e * z)

    def psi_on_pieces(self, z, t, piece_idx):
        return self.psi(z, t)

    def piece_map(self, edges):
        return np.zeros((0, len(edges)), dtype=int)

    def to_json(self) -> dict:
        return {"form": "dilation", "phi": self.phi.to_json()}


PsiFamily = SumForm | DilationForm


@dataclass(frozen=True)
class BeltramiSpec:
    family: SumForm | DilationForm
    name: str = ""
    description: str = ""

    @property
    def k(self) -> float:
        return self.family.k

    def breakpoints(self) -> list[Breakpoint]:
        return self.family.breakpoints()

    def to_json(self) -> dict:
        d = self.family.to_json()
        d["name"] = self.name
        if self.description:
            d["description"] = self.description
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def spec_from_json(d: dict) -> BeltramiSpec:
    form = d.get("form", "sum")
    if form == "sum":
        fam = SumForm(tuple((coeff_from_json(t["a"]), holo_from_json(t["phi"])) for t in d["terms"]))
    elif form == "dilation":
        fam = DilationForm(holo_from_json(d["phi"]))
    else:
        raise ValueError(f"unknown family form {form!r}")
    return BeltramiSpec(fam, d.get("name", ""), d.get("description", ""))


def load_spec(path) -> BeltramiSpec:
    with open(path, encoding="utf-8") as fh:
        return spec_from_json(json.load(fh))


# ---------------------------------------------------------------------------
# budget


class TermNorm(NamedTuple):
    a_bound: float
    a_sampled: float
    phi_bound: float
    phi_sampled: float


@dataclass
class BudgetReport:
    K: float
    terms: list[TermNorm]
    accepted: bool

    def to_json(self) -> dict:
        return {"K": self.K, "accepted": self.accepted, "terms": [t._asdict() for t in self.terms]}


def validate_spec(spec: BeltramiSpec, samples: int = DEFAULT_SAMPLES) -> BudgetReport:
    """Check every declared bound by sampling and the budget K < 1."""
    fam = spec.family
    terms = []
    if isinstance(fam, SumForm):
        for a, phi in fam.terms:
            an = a.verify_bound()
            pn = sup_norm_circle(phi, 1.0, samples)
            terms.append(TermNorm(an.bound, an.estimate, pn.bound, pn.estimate))
        K = float(sum(t.a_bound * t.phi_bound for t in terms))
    else:
        pn = sup_norm_circle(fam.phi, 1.0, samples)
        terms.append(TermNorm(1.0, 1.0, pn.bound, pn.estimate))
        K = pn.bound
    report = BudgetReport(K, terms, K < 1)
    if not report.accepted:
        err = BudgetExceeded(f"norm budget K = {K:.6g} is not below 1")
        err.report = report
        raise err
    return report


# ---------------------------------------------------------------------------
# point evaluation


def psi_at(spec: BeltramiSpec, z, t):
    za = np.asarray(z, dtype=complex)
    ta = np.asarray(t, dtype=float)
    if np.any(np.abs(za) > 1 + DISK_TOL):
        raise DomainError("psi_t is evaluated on the closed unit disk only")
    if np.any(ta < 0):
        raise DomainError("t must be non-negative")
    out = spec.family.psi(za, ta)
    return complex(out) if out.ndim == 0 else out


def mu_at(spec: BeltramiSpec, z):
    """mu(z) = (z/|z|)^2 psi_{-log|z|}(z/|z|) for 0 < |z| <= 1."""
    za = np.asarray(z, dtype=complex)
    r = np.abs(za)
    if np.any(r == 0):
        raise DomainError("mu is an a.e. class; the value at z = 0 is not defined")
    if np.any(r > 1 + DISK_TOL):
        raise DomainError("mu is defined on the unit disk")
    zeta = za / r
    t = -np.log(r)
    t = np.where(t < BOUNDARY_EPS, 0.0, t)
    out = zeta * zeta * spec.family.psi(zeta, t)
    return complex(out) if out.ndim == 0 else out


def mu_sampler(spec: BeltramiSpec) -> Callable:
    return lambda z: mu_at(spec, z)


def conjugate_quadratic_sampler(amplitude: float = 0.2) -> Callable:
    """mu(z) = amplitude * (conj(z)/|z|)^2: bounded but with a negative mode."""

    def sample(z):
        z = np.asarray(z, dtype=complex)
        w = np.conj(z) / np.abs(z)
        return amplitude * w * w

    return sample


# ---------------------------------------------------------------------------
# boundary slices


def _fft_size(M: int) -> int:
    n = 4
    while n < 4 * M or n < 2 * M + 2:
        n *= 2
    return n


@dataclass(frozen=True)
class BoundarySlice:
    t: float
    M: int
    coeffs: np.ndarray = field(repr=False)  # c_{-M..M}
    sup: float = math.nan  # max |U_t| over the FFT samples

    @property
    def n(self) -> np.ndarray:
        return np.arange(-self.M, self.M + 1)

    def mode(self, n: int) -> complex:
        return complex(self.coeffs[n + self.M])

    @property
    def parseval_mass(self) -> float:
        return float(np.sum(np.abs(self.coeffs) ** 2))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "re_c", "im_c"])
        for n, c in zip(self.n, self.coeffs):
            w.writerow([int(n), repr(float(c.real)), repr(float(c.imag))])
        return buf.getvalue()


def slice_fourier(sampler: Callable, t: float, M: int) -> BoundarySlice:
    """Fourier modes c_{-M..M} of U_t(zeta) = zeta^-2 mu(zeta e^{-t})."""
    if M < 1:
        raise ValueError("M must be positive")
    nfft = _fft_size(M)
    zeta = np.exp(2j * np.pi * np.arange(nfft) / nfft)
    U = np.asarray(sampler(math.exp(-t) * zeta), dtype=complex) / (zeta * zeta)
    c = np.fft.fft(U) / nfft
    coeffs = np.concatenate([c[nfft - M:], c[: M + 1]])
    return BoundarySlice(float(t), int(M), coeffs, float(np.max(np.abs(U))))


def analyticity_defect(sl: BoundarySlice) -> float:
    return float(np.max(np.abs(sl.coeffs[: sl.M]))) if sl.M else 0.0


def in_analytic_class(sl: BoundarySlice, tol: float = MEMBERSHIP_TOL) -> bool:
    return analyticity_defect(sl) <= tol


class Extension(NamedTuple):
    analytic: complex
    harmonic: complex
    truncation_bound: float


def extend_from_slice(sl: BoundarySlice, z) -> Extension:
    """Holomorphic part and Poisson (harmonic) extension of a slice at |z| < 1."""
    z = complex(z)
    r = abs(z)
    if r >= 1:
        raise DomainError("extension is evaluated inside the open disk")
    pos = sl.coeffs[sl.M:]
    neg = sl.coeffs[: sl.M][::-1]  # c_{-1}, c_{-2}, ...
    analytic = complex(np.polynomial.polynomial.polyval(z, pos))
    harmonic = analytic + complex(np.polynomial.polynomial.polyval(z.conjugate(), np.concatenate([[0], neg])))
    sup = sl.sup if math.isfinite(sl.sup) else float(np.max(np.abs(sl.coeffs)))
    # |c_n| <= sup|U_t|; the two tails are geometric
    tail = 2 * sup * r ** (sl.M + 1) / (1 - r)
    return Extension(analytic, harmonic, tail)
