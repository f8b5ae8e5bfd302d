"""Trivial Beltrami coefficients built from inverse Loewner chains.

A family of bounded holomorphic functions psi_t with sup norm below one
defines mu(z) = (z/|z|)^2 psi_{-log|z|}(z/|z|). The map f(z) = w(z/|z|, -log|z|)
built from the inverse Loewner chain driven by q = (1 + psi)/(1 - psi) has
dilatation mu and fixes the unit circle pointwise.
"""
from .analytic_expr import (
    Const,
    Dilate,
    ExpDecay,
    Identity,
    LogOsc,
    Mobius,
    Piece,
    Poly,
    Pow,
    Prod,
    Scale,
    Sinc,
    Sinc2,
    Sum,
    TConst,
    TimeCoefficient,
    TProd,
    TSum,
    eval_holo,
    sup_norm_circle,
)
from .beltrami import (
    BeltramiSpec,
    DilationForm,
    SumForm,
    analyticity_defect,
    extend_from_slice,
    in_analytic_class,
    load_spec,
    mu_at,
    psi_at,
    slice_fourier,
    spec_from_json,
    validate_spec,
)
from .errors import *  # noqa: F401,F403
from .loewner import ChainEvaluator, HerglotzFamily, omega, omega_prime_zero, q_at
from .oracle import PlaneGrid, beurling_selftest, calibrate, principal_solution, triviality_residual
from .presets import constant_spec, figure1_spec, identity_spec
from .qcmap import (
    PolarGrid,
    QCMap,
    dilatation_fd,
    dilatation_target,
    disk_triangulation,
    f_at,
    f_grid,
    orientation_check,
)
from .render import render_svg
from .verify import RunConfig, VerificationReport, infinitesimal_defect, load_config, run_suite

__version__ = "0.1.0"
