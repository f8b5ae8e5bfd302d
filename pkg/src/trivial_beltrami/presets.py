"""Ready-made coefficient families used by the tests, the CLI and the docs."""
from __future__ import annotations

import math

from .analytic_expr import (
    Const,
    HoloExpr,
    LogOsc,
    Mobius,
    Piece,
    Sinc2,
    TConst,
    TimeCoefficient,
)
from .beltrami import BeltramiSpec, DilationForm, SumForm, conjugate_quadratic_sampler

LOG2 = math.log(2.0)


def figure1_a1() -> TimeCoefficient:
    """(-2+i)/10 on [0, log 2), (1+i)/10 afterwards."""
    return TimeCoefficient(
        (
            Piece(0.0, LOG2, TConst(complex(-0.2, 0.1))),
            Piece(LOG2, math.inf, TConst(complex(0.1, 0.1))),
        ),
        bound=math.sqrt(5) / 10,
    )


def figure1_a2() -> TimeCoefficient:
    """exp(-i log t) / 5."""
    return TimeCoefficient((Piece(0.0, math.inf, LogOsc(0.2, -1.0)),), bound=0.2)


def figure1_spec() -> BeltramiSpec:
    phi1 = Sinc2(bound=math.sinh(1.0) ** 2)
    phi2 = Mobius(2 / 3, bound=1.0)
    return BeltramiSpec(
        SumForm(((figure1_a1(), phi1), (figure1_a2(), phi2))),
        name="figure1",
        description="two-term example with a jump at log 2 and a log-oscillating coefficient",
    )


def constant_spec(c: complex) -> BeltramiSpec:
    """psi_t == c, so mu(z) = c (z/|z|)^2."""
    return BeltramiSpec(
        SumForm(((TimeCoefficient.constant(complex(c), bound=abs(c)), Const(1.0)),)),
        name=f"constant-{c}",
    )


def identity_spec() -> BeltramiSpec:
    return BeltramiSpec(SumForm(((TimeCoefficient.constant(0.0, bound=0.0), Const(1.0)),)), name="identity")


def dilation_spec(phi: HoloExpr, name: str = "dilation") -> BeltramiSpec:
    return BeltramiSpec(DilationForm(phi), name=name)


SAMPLERS = {
    "conj_quadratic": conjugate_quadratic_sampler,
}

PRESETS = {
    "figure1": figure1_spec,
    "identity": identity_spec,
    "constant": lambda c=0.3: constant_spec(c),
}
