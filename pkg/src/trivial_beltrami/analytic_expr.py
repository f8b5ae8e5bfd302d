"""Closed-form bounded holomorphic functions on the closed disk and
piecewise closed-form driving coefficients in time.

Both families are small immutable expression trees. Every node evaluates
vectorised over numpy arrays, knows a structural upper bound for its modulus
on the closed disk (or on ``[0, inf)`` for time coefficients), and
round-trips through a JSON dictionary with complex numbers encoded as
``[re, im]`` pairs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import BoundViolation, DomainError, PoleError

DISK_TOL = 1e-12
DEFAULT_SAMPLES = 2**14
# relative slack when comparing a sample maximum against a declared bound
BOUND_RTOL = 1e-12


def parse_complex(v) -> complex:
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ValueError(f"complex pair must have two entries, got {v!r}")
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, dict):
        return complex(float(v["re"]), float(v["im"]))
    return complex(v)


def complex_pair(c: complex) -> list[float]:
    c = complex(c)
    return [c.real, c.imag]


def _scalar_or_array(out, z):
    if np.ndim(z) == 0:
        return complex(out)
    return out


# ---------------------------------------------------------------------------
# holomorphic expressions


@dataclass(frozen=True)
class HoloExpr:
    """Base node. ``bound`` is an optional user-declared sup bound on |z|<=1."""

    def __call__(self, z):
        raise NotImplementedError

    def structural_bound(self) -> float:
        raise NotImplementedError

    def _payload(self) -> dict:
        raise NotImplementedError

    @property
    def declared_bound(self) -> float:
        b = getattr(self, "bound", None)
        return float(b) if b is not None else self.structural_bound()

    def to_json(self) -> dict:
        d = {"kind": self.kind, **self._payload()}
        b = getattr(self, "bound", None)
        if b is not None:
            d["bound"] = float(b)
        return d


@dataclass(frozen=True)
class Const(HoloExpr):
    c: complex
    bound: float | None = field(default=None, kw_only=True)
    kind = "const"

    def __call__(self, z):
        return np.full(np.shape(z), complex(self.c)) if np.ndim(z) else complex(self.c)

    def structural_bound(self):
        return abs(self.c)

    def _payload(self):
        return {"c": complex_pair(self.c)}


@dataclass(frozen=True)
class Identity(HoloExpr):
    bound: float | None = field(default=None, kw_only=True)
    kind = "z"

    def __call__(self, z):
        return np.asarray(z, dtype=complex) if np.ndim(z) else complex(z)

    def structural_bound(self):
        return 1.0

    def _payload(self):
        return {}


@dataclass(frozen=True)
class Poly(HoloExpr):
    """Polynomial with complex coefficients in ascending order."""

    coeffs: tuple[complex, ...]
    bound: float | None = field(default=None, kw_only=True)
    kind = "poly"

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros_like(z)
        for c in reversed(self.coeffs):  # Horner
            out = out * z + c
        return _scalar_or_array(out, z)

    def structural_bound(self):
        return float(sum(abs(c) for c in self.coeffs))

    def _payload(self):
        return {"coeffs": [complex_pair(c) for c in self.coeffs]}


@dataclass(frozen=True)
class Mobius(HoloExpr):
    """Disk automorphism (z - a) / (1 - conj(a) z) with |a| < 1."""

    a: complex
    bound: float | None = field(default=None, kw_only=True)
    kind = "mobius"

    def __post_init__(self):
        if not abs(self.a) < 1:
            raise ValueError(f"Mobius parameter must satisfy |a|<1, got {self.a!r}")

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        den = 1 - np.conj(self.a) * z
        if np.any(den == 0):
            raise PoleError("Mobius denominator vanished")
        return _scalar_or_array((z - self.a) / den, z)

    def structural_bound(self):
        return 1.0

    def _payload(self):
        return {"a": complex_pair(self.a)}


def _sinc(z):
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-3
    safe = np.where(small, 1.0, z)
    z2 = z * z
    # series error below |z|^6/5040 ~ 2e-22 on the small branch
    return np.where(small, 1 - z2 / 6 + z2 * z2 / 120, np.sin(safe) / safe)


@dataclass(frozen=True)
class Sinc(HoloExpr):
    """sin(z)/z, with value 1 at the origin."""

    bound: float | None = field(default=None, kw_only=True)
    kind = "sinc"

    def __call__(self, z):
        return _scalar_or_array(_sinc(z), z)

    def structural_bound(self):
        # |sin z / z| <= sinh|z| / |z| from the product formula
        return math.sinh(1.0)

    def _payload(self):
        return {}


@dataclass(frozen=True)
class Sinc2(HoloExpr):
    """(sin(z)/z)**2."""

    bound: float | None = field(default=None, kw_only=True)
    kind = "sinc2"

    def __call__(self, z):
        s = _sinc(z)
        return _scalar_or_array(s * s, z)

    def structural_bound(self):
        return math.sinh(1.0) ** 2

    def _payload(self):
        return {}


@dataclass(frozen=True)
class Sum(HoloExpr):
    terms: tuple[HoloExpr, ...]
    bound: float | None = field(default=None, kw_only=True)
    kind = "sum"

    def __call__(self, z):
        out = np.zeros(np.shape(z), dtype=complex)
        for t in self.terms:
            out = out + t(z)
        return _scalar_or_array(out, z)

    def structural_bound(self):
        return float(sum(t.declared_bound for t in self.terms))

    def _payload(self):
        return {"terms": [t.to_json() for t in self.terms]}


@dataclass(frozen=True)
class Prod(HoloExpr):
    factors: tuple[HoloExpr, ...]
    bound: float | None = field(default=None, kw_only=True)
    kind = "prod"

    def __call__(self, z):
        out = np.ones(np.shape(z), dtype=complex)
        for f in self.factors:
            out = out * f(z)
        return _scalar_or_array(out, z)

    def structural_bound(self):
        return float(math.prod(f.declared_bound for f in self.factors))

    def _payload(self):
        return {"factors": [f.to_json() for f in self.factors]}


@dataclass(frozen=True)
class Scale(HoloExpr):
    c: complex
    expr: HoloExpr
    bound: float | None = field(default=None, kw_only=True)
    kind = "scale"

    def __call__(self, z):
        return _scalar_or_array(complex(self.c) * np.asarray(self.expr(z)), z)

    def structural_bound(self):
        return abs(self.c) * self.expr.declared_bound

    def _payload(self):
        return {"c": complex_pair(self.c), "expr": self.expr.to_json()}


@dataclass(frozen=True)
class Pow(HoloExpr):
    expr: HoloExpr
    n: int
    bound: float | None = field(default=None, kw_only=True)
    kind = "pow"

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 0:
            raise ValueError("pow exponent must be a non-negative integer")

    def __call__(self, z):
        return _scalar_or_array(np.asarray(self.expr(z)) ** int(self.n), z)

    def structural_bound(self):
        return self.expr.declared_bound ** int(self.n)

    def _payload(self):
        return {"n": int(self.n), "expr": self.expr.to_json()}


@dataclass(frozen=True)
class Dilate(HoloExpr):
    """z -> expr(rho * z) with 0 < rho <= 1."""

    expr: HoloExpr
    rho: float
    bound: float | None = field(default=None, kw_only=True)
    kind = "dilate"

    def __post_init__(self):
        if not 0 < self.rho <= 1:
            raise ValueError("dilation factor must lie in (0, 1]")

    def __call__(self, z):
        return _scalar_or_array(self.expr(self.rho * np.asarray(z, dtype=complex)), z)

    def structural_bound(self):
        # maximum principle: the sup over the smaller disk is no larger
        return self.expr.declared_bound

    def _payload(self):
        return {"rho": float(self.rho), "expr": self.expr.to_json()}


def holo_from_json(d: dict) -> HoloExpr:
    kind = d["kind"]
    bound = d.get("bound")
    bound = None if bound is None else float(bound)
    if kind == "const":
        return Const(parse_complex(d["c"]), bound=bound)
    if kind in ("z", "identity"):
        return Identity(bound=bound)
    if kind == "poly":
        return Poly(tuple(parse_complex(c) for c in d["coeffs"]), bound=bound)
    if kind == "mobius":
        return Mobius(parse_complex(d["a"]), bound=bound)
    if kind == "sinc":
        return Sinc(bound=bound)
    if kind == "sinc2":
        return Sinc2(bound=bound)
    if kind == "sum":
        return Sum(tuple(holo_from_json(t) for t in d["terms"]), bound=bound)
    if kind == "prod":
        return Prod(tuple(holo_from_json(t) for t in d["factors"]), bound=bound)
    if kind == "scale":
        return Scale(parse_complex(d["c"]), holo_from_json(d["expr"]), bound=bound)
    if kind == "pow":
        return Pow(holo_from_json(d["expr"]), int(d["n"]), bound=bound)
    if kind == "dilate":
        return Dilate(holo_from_json(d["expr"]), float(d["rho"]), bound=bound)
    raise ValueError(f"unknown expression kind {kind!r}")


def eval_holo(expr: HoloExpr, z):
    """Evaluate ``expr`` at points of the closed unit disk."""
    za = np.asarray(z, dtype=complex)
    if np.any(np.abs(za) > 1 + DISK_TOL):
        raise DomainError("evaluation point outside the closed unit disk")
    return expr(z)


class NormEstimate(NamedTuple):
    estimate: float
    bound: float


def sup_norm_circle(expr: HoloExpr, radius: float = 1.0, samples: int = DEFAULT_SAMPLES) -> NormEstimate:
    """Sampled maximum of |expr| on the circle |z| = radius.

    Raises BoundViolation when a sample exceeds the declared bound.
    """
    if not 0 < radius <= 1:
        raise ValueError("radius must lie in (0, 1]")
    if samples < 1024:
        raise ValueError("at least 1024 samples are required")
    theta = 2 * np.pi * np.arange(samples) / samples
    est = float(np.max(np.abs(expr(radius * np.exp(1j * theta)))))
    bound = expr.declared_bound
    if est > bound * (1 + BOUND_RTOL):
        raise BoundViolation(f"sampled sup {est!r} exceeds declared bound {bound!r}")
    return NormEstimate(est, bound)


# ---------------------------------------------------------------------------
# time coefficients


@dataclass(frozen=True)
class TimeForm:
    def __call__(self, t):
        raise NotImplementedError

    def structural_bound(self) -> float:
        raise NotImplementedError

    def has_log_osc(self) -> bool:
        return False

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class TConst(TimeForm):
    c: complex

    def __call__(self, t):
        return np.full(np.shape(t), complex(self.c))

    def structural_bound(self):
        return abs(self.c)

    def to_json(self):
        return {"kind": "const", "c": complex_pair(self.c)}


@dataclass(frozen=True)
class LogOsc(TimeForm):
    """c * exp(i * alpha * log t); takes the value c at t = 0 by convention."""

    c: complex
    alpha: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        pos = t > 0
        logt = np.log(np.where(pos, t, 1.0))
        return complex(self.c) * np.exp(1j * self.alpha * logt)

    def structural_bound(self):
        return abs(self.c)

    def has_log_osc(self):
        return self.alpha != 0

    def to_json(self):
        return {"kind": "logosc", "c": complex_pair(self.c), "alpha": float(self.alpha)}


@dataclass(frozen=True)
class ExpDecay(TimeForm):
    """c * exp(beta * t) with Re beta <= 0."""

    c: complex
    beta: complex

    def __post_init__(self):
        if complex(self.beta).real > 0:
            raise ValueError("exponential pieces need Re(beta) <= 0")

    def __call__(self, t):
        return complex(self.c) * np.exp(complex(self.beta) * np.asarray(t, dtype=float))

    def structural_bound(self):
        return abs(self.c)

    def to_json(self):
        return {"kind": "exp", "c": complex_pair(self.c), "beta": complex_pair(self.beta)}


@dataclass(frozen=True)
class TSum(TimeForm):
    terms: tuple[TimeForm, ...]

    def __call__(self, t):
        out = np.zeros(np.shape(t), dtype=complex)
        for f in self.terms:
            out = out + f(t)
        return out

    def structural_bound(self):
        return float(sum(f.structural_bound() for f in self.terms))

    def has_log_osc(self):
        return any(f.has_log_osc() for f in self.terms)

    def to_json(self):
        return {"kind": "sum", "terms": [f.to_json() for f in self.terms]}


@dataclass(frozen=True)
class TProd(TimeForm):
    factors: tuple[TimeForm, ...]

    def __call__(self, t):
        out = np.ones(np.shape(t), dtype=complex)
        for f in self.factors:
            out = out * f(t)
        return out

    def structural_bound(self):
        return float(math.prod(f.structural_bound() for f in self.factors))

    def has_log_osc(self):
        return any(f.has_log_osc() for f in self.factors)

    def to_json(self):
        return {"kind": "prod", "factors": [f.to_json() for f in self.factors]}


def timeform_from_json(d: dict) -> TimeForm:
    kind = d["kind"]
    if kind == "const":
        return TConst(parse_complex(d["c"]))
    if kind == "logosc":
        return LogOsc(parse_complex(d.get("c", 1.0)), float(d["alpha"]))
    if kind == "exp":
        return ExpDecay(parse_complex(d.get("c", 1.0)), parse_complex(d["beta"]))
    if kind == "sum":
        return TSum(tuple(timeform_from_json(f) for f in d["terms"]))
    if kind == "prod":
        return TProd(tuple(timeform_from_json(f) for f in d["factors"]))
    raise ValueError(f"unknown time-form kind {kind!r}")


@dataclass(frozen=True)
class Piece:
    t_lo: float
    t_hi: float
    form: TimeForm


class Breakpoint(NamedTuple):
    t: float
    oscillatory: bool = False


def _parse_time(v) -> float:
    if v is None:
        return math.inf
    if isinstance(v, str):
        s = v.strip().lower()
        if s in ("inf", "infinity", "+inf"):
            return math.inf
        if s.startswith("log"):
            return math.log(float(s[3:].strip("() ")))
        return float(s)
    return float(v)


@dataclass(frozen=True)
class TimeCoefficient:
    """Piecewise closed-form bounded function of t on [0, inf).

    At a breakpoint the right-hand piece is used.
    """

    pieces: tuple[Piece, ...]
    bound: float | None = None

    def __post_init__(self):
        if not self.pieces:
            raise ValueError("a time coefficient needs at least one piece")
        if self.pieces[0].t_lo != 0:
            raise ValueError("first piece must start at t = 0")
        for p, nxt in zip(self.pieces, self.pieces[1:]):
            if p.t_hi != nxt.t_lo:
                raise ValueError("pieces must be contiguous")
        for p in self.pieces:
            if not p.t_lo < p.t_hi:
                raise ValueError("pieces must have t_lo < t_hi")
        if self.pieces[-1].t_hi != math.inf:
            raise ValueError("last piece must extend to infinity")

    @classmethod
    def constant(cls, c, bound=None) -> "TimeCoefficient":
        return cls((Piece(0.0, math.inf, TConst(complex(c))),), bound)

    @property
    def starts(self) -> np.ndarray:
        return np.array([p.t_lo for p in self.pieces])

    def piece_index(self, t):
        return np.searchsorted(self.starts, np.asarray(t, dtype=float), side="right") - 1

    def eval_pieces(self, idx, t):
        """Evaluate piece ``idx[i]`` at ``t[i]`` (no interval check)."""
        t = np.asarray(t, dtype=float)
        idx = np.broadcast_to(np.asarray(idx), t.shape)
        if len(self.pieces) == 1:
            return self.pieces[0].form(t)
        out = np.empty(t.shape, dtype=complex)
        for i, p in enumerate(self.pieces):
            m = idx == i
            if np.any(m):
                out[m] = p.form(t[m])
        return out

    def __call__(self, t):
        ta = np.asarray(t, dtype=float)
        if np.any(ta < 0):
            raise DomainError("time coefficients are defined for t >= 0")
        out = self.eval_pieces(self.piece_index(ta), ta)
        return complex(out) if np.ndim(t) == 0 else out

    def structural_bound(self) -> float:
        return max(p.form.structural_bound() for p in self.pieces)

    @property
    def declared_bound(self) -> float:
        return float(self.bound) if self.bound is not None else self.structural_bound()

    def breakpoints(self) -> list[Breakpoint]:
        out = []
        if self.pieces[0].form.has_log_osc():
            out.append(Breakpoint(0.0, True))
        out.extend(Breakpoint(p.t_lo) for p in self.pieces[1:])
        return out

    def sample_max(self, samples: int = 4096) -> float:
        best = 0.0
        for p in self.pieces:
            hi = p.t_hi if math.isfinite(p.t_hi) else p.t_lo + 100.0
            ts = [np.linspace(p.t_lo, hi, samples, endpoint=math.isinf(p.t_hi))]
            if p.t_lo == 0:
                ts.append(np.geomspace(1e-12, hi, samples, endpoint=False))
            if math.isinf(p.t_hi):
                ts.append(p.t_lo + np.geomspace(1.0, 1e6, samples // 4))
            vals = np.abs(p.form(np.concatenate(ts)))
            best = max(best, float(np.max(vals)))
        return best

    def verify_bound(self, samples: int = 4096) -> NormEstimate:
        est = self.sample_max(samples)
        if est > self.declared_bound * (1 + BOUND_RTOL):
            raise BoundViolation(f"sampled sup {est!r} exceeds declared bound {self.declared_bound!r}")
        return NormEstimate(est, self.declared_bound)

    def to_json(self) -> dict:
        d = {
            "pieces": [
                {
                    "t_lo": p.t_lo,
                    "t_hi": None if math.isinf(p.t_hi) else p.t_hi,
                    "form": p.form.to_json(),
                }
                for p in self.pieces
            ]
        }
        if self.bound is not None:
            d["bound"] = float(self.bound)
        return d


def coeff_from_json(d) -> TimeCoefficient:
    if not isinstance(d, dict):
        return TimeCoefficient.constant(parse_complex(d))
    if "pieces" not in d:
        # bare form: a single piece on [0, inf)
        return TimeCoefficient((Piece(0.0, math.inf, timeform_from_json(d)),), d.get("bound"))
    pieces = tuple(
        Piece(_parse_time(p.get("t_lo", 0.0)), _parse_time(p.get("t_hi")), timeform_from_json(p["form"]))
        for p in d["pieces"]
    )
    b = d.get("bound")
    return TimeCoefficient(pieces, None if b is None else float(b))


def eval_coeff(a: TimeCoefficient, t):
    return a(t)


def breakpoints(a: TimeCoefficient) -> list[Breakpoint]:
    return a.breakpoints()


def merge_breakpoints(lists: Sequence[Sequence[Breakpoint]]) -> list[Breakpoint]:
    merged: dict[float, bool] = {}
    for bps in lists:
        for b in bps:
            merged[b.t] = merged.get(b.t, False) or b.oscillatory
    return [Breakpoint(t, osc) for t, osc in sorted(merged.items())]
