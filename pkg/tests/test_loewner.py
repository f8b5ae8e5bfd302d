import csv
import io
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trivial_beltrami.analytic_expr import Const, TimeCoefficient
from trivial_beltrami.beltrami import BeltramiSpec, SumForm
from trivial_beltrami.errors import DomainError, EscapeError, InvariantViolation, StepFailure
from trivial_beltrami.loewner import (
    ChainEvaluator,
    HerglotzFamily,
    decay_bound,
    log_b,
    log_b_many,
    omega,
    omega_prime_zero,
    q_at,
)
from trivial_beltrami.presets import LOG2, constant_spec, dilation_spec, figure1_spec, identity_spec

from conftest import Q03, disk_points


def raw_constant(c):
    """A constant family that skips budget validation."""
    return BeltramiSpec(SumForm(((TimeCoefficient.constant(c), Const(1.0)),)))


@pytest.fixture(scope="module")
def ev_fig1():
    return ChainEvaluator.from_spec(figure1_spec())


class TestHerglotz:
    def test_identity_driver(self):
        assert q_at(HerglotzFamily.from_spec(identity_spec()), 0.3, 1.0) == 1

    def test_constant(self):
        assert q_at(HerglotzFamily.from_spec(constant_spec(0.3)), 0.1j, 2.0) == pytest.approx(13 / 7)

    def test_imaginary_constant(self):
        assert q_at(HerglotzFamily.from_spec(constant_spec(0.5j)), 0, 0.0) == pytest.approx(0.6 + 0.8j)

    def test_not_herglotz(self):
        with pytest.raises(InvariantViolation):
            q_at(HerglotzFamily.from_spec(raw_constant(3.0)), 0, 1.0)

    def test_domain(self):
        with pytest.raises(DomainError):
            q_at(HerglotzFamily.from_spec(identity_spec()), 1.5, 1.0)

    def test_breakpoint_metadata(self):
        fam = HerglotzFamily.from_spec(figure1_spec())
        assert fam.oscillatory_origin
        assert list(fam.edges) == [0.0, LOG2]
        assert fam.interval_of(0.5) == 0 and fam.interval_of(LOG2) == 1

    @settings(max_examples=60, deadline=None)
    @given(st.floats(0, 1), st.floats(0, 2 * math.pi), st.floats(0, 20))
    def test_herglotz_ratio_bound_and_positivity(self, r, th, t):
        fam = HerglotzFamily.from_spec(figure1_spec())
        z = r * complex(math.cos(th), math.sin(th))
        q = q_at(fam, z, t)
        assert q.real > 0
        assert abs((q - 1) / (q + 1)) <= fam.k + 1e-12
        k = fam.k
        assert q_at(fam, 0, t).real >= (1 - k) / (1 + k) - 1e-12


class TestOmega:
    def test_time_zero(self, ev_fig1):
        z = np.array([0.3 + 0.1j, 1j, -0.9])
        assert np.array_equal(omega(ev_fig1, z, 0.0), z)

    def test_identity_chain_log2(self):
        ev = ChainEvaluator.from_spec(identity_spec())
        assert omega(ev, 0.5, LOG2) == pytest.approx(0.25, abs=1e-14)

    def test_constant_closed_form(self):
        ev = ChainEvaluator.from_spec(constant_spec(0.3))
        w = omega(ev, 0.5, 1.0)
        assert abs(w - 0.5 * math.exp(-Q03)) <= 1e-12
        assert w == pytest.approx(0.078059, abs=1e-6)

    def test_identity_family_exact(self):
        ev = ChainEvaluator.from_spec(identity_spec())
        rng = np.random.default_rng(3)
        z = disk_points(rng, 300)
        t = rng.uniform(0, 10, 300)
        assert np.max(np.abs(omega(ev, z, t) - np.exp(-t) * z)) <= 1e-12

    def test_domain_errors(self, ev_fig1):
        for z, t in ((0, 1.0), (1.2, 1.0), (0.5, -1.0), (0.5, math.inf)):
            with pytest.raises(DomainError):
                omega(ev_fig1, z, t)

    def test_step_failure(self):
        ev = ChainEvaluator.from_spec(figure1_spec(), max_steps=3)
        with pytest.raises(StepFailure) as ei:
            omega(ev, 0.5, 5.0)
        assert ei.value.worst_error is not None

    def test_escape(self):
        ev = ChainEvaluator.from_spec(raw_constant(3.0))
        with pytest.raises(EscapeError):
            omega(ev, 0.5, 1.0)

    def test_batch_independence(self, ev_fig1):
        rng = np.random.default_rng(5)
        z = disk_points(rng, 40)
        t = rng.uniform(0, 6, 40)
        batch = omega(ev_fig1, z, t)
        alone = np.array([omega(ev_fig1, zz, tt) for zz, tt in zip(z[:8], t[:8])])
        assert np.array_equal(batch[:8], alone)

    def test_thread_count_irrelevant(self):
        rng = np.random.default_rng(6)
        z = disk_points(rng, 200)
        t = rng.uniform(0, 6, 200)
        a = omega(ChainEvaluator.from_spec(figure1_spec(), threads=1), z, t)
        b = omega(ChainEvaluator.from_spec(figure1_spec(), threads=4), z, t)
        assert np.array_equal(a, b)

    def test_start_radius_device(self):
        # r^-1 w(r z, t) with r close to 1 approaches w(z, t)
        ev = ChainEvaluator.from_spec(figure1_spec())
        evr = ChainEvaluator.from_spec(figure1_spec(), start_radius=1 - 1e-6)
        z = np.exp(1j * np.linspace(0, 6, 7))
        assert np.max(np.abs(omega(evr, z, 1.3) - omega(ev, z, 1.3))) < 1e-5

    def test_boundary_start(self, ev_fig1):
        z = np.exp(2j * np.pi * np.arange(16) / 16)
        w = omega(ev_fig1, z, 0.8)
        assert np.all(np.abs(w) < 1)

    def test_trajectory_csv(self, ev_fig1):
        rows = list(csv.reader(io.StringIO(ev_fig1.trajectory_csv(0.7j, 2.0))))
        assert rows[0] == ["s", "re_zeta", "im_zeta", "step_size"]
        s = [float(r[0]) for r in rows[1:]]
        assert s[0] == 2.0 and s[-1] == 0.0
        assert all(a > b for a, b in zip(s, s[1:]))
        assert any(abs(x - LOG2) < 1e-15 for x in s)  # steps land on the breakpoint

    def test_deterministic(self, ev_fig1):
        assert omega(ev_fig1, 0.3 + 0.4j, 3.3) == omega(ev_fig1, 0.3 + 0.4j, 3.3)


class TestChainInvariants:
    @settings(max_examples=40, deadline=None)
    @given(st.floats(1e-6, 1), st.floats(0, 2 * math.pi), st.floats(0, 10))
    def test_schwarz(self, r, th, t):
        ev = ChainEvaluator.from_spec(figure1_spec())
        z = r * complex(math.cos(th), math.sin(th))
        assert abs(omega(ev, z, t)) <= abs(z) + 1e-9

    def test_refinement(self, ev_fig1):
        rng = np.random.default_rng(11)
        z = disk_points(rng, 200)
        t = rng.uniform(0, 10, 200)
        coarse = omega(ev_fig1, z, t)
        fine = omega(ev_fig1.with_tolerances(ev_fig1.rtol / 2, ev_fig1.atol / 2), z, t)
        assert np.max(np.abs(fine - coarse)) <= 20 * ev_fig1.rtol

    def test_composition(self, ev_fig1):
        rng = np.random.default_rng(12)
        z = disk_points(rng, 200)
        t = rng.uniform(0, 10, 200)
        s = t * rng.uniform(0, 1, 200)
        mid = ev_fig1.flow(z, t, s).zeta
        assert np.max(np.abs(omega(ev_fig1, mid, s) - omega(ev_fig1, z, t))) <= 10 * ev_fig1.rtol


class TestDerivativeAtOrigin:
    def test_identity(self):
        ev = ChainEvaluator.from_spec(identity_spec())
        assert omega_prime_zero(ev, LOG2) == pytest.approx(0.5, abs=1e-14)

    def test_constant(self):
        ev = ChainEvaluator.from_spec(constant_spec(0.3))
        assert omega_prime_zero(ev, 1.0) == pytest.approx(math.exp(-13 / 7), abs=1e-13)
        assert omega_prime_zero(ev, 1.0) == pytest.approx(0.156118, abs=1e-6)

    def test_time_zero(self, ev_fig1):
        assert omega_prime_zero(ev_fig1, 0.0) == 1

    def test_figure1_hand_integral(self, ev_fig1):
        # q(0,s) = (1+p)/(1-p) with p = a1(s) - (2/3) a2(s) and a2 = e^{-i log s}/5;
        # check the piece after log 2 against scipy on a plain grid integral
        from scipy import integrate

        fam = ev_fig1.family

        def q0(s):
            a1 = complex(0.1, 0.1) if s >= LOG2 else complex(-0.2, 0.1)
            p = a1 - (2 / 3) * 0.2 * np.exp(-1j * math.log(s))
            return (1 + p) / (1 - p)

        re = integrate.quad(lambda s: q0(s).real, 1.0, 3.0, epsabs=1e-13)[0]
        im = integrate.quad(lambda s: q0(s).imag, 1.0, 3.0, epsabs=1e-13)[0]
        got = log_b(fam, 3.0).value - log_b(fam, 1.0).value
        assert got == pytest.approx(-complex(re, im), abs=1e-11)

    def test_many_matches_single(self, ev_fig1):
        ts = np.array([2.5, 0.1, LOG2, 0.0, 7.0, 0.1])
        many, _ = log_b_many(ev_fig1.family, ts)
        single = np.array([log_b(ev_fig1.family, float(t)).value for t in ts])
        assert np.max(np.abs(many - single)) <= 1e-12

    def test_fd_matches_quadrature(self, ev_fig1):
        rng = np.random.default_rng(13)
        t = rng.uniform(0, 10, 200)
        h = 1e-5
        fd = (omega(ev_fig1, np.full(200, h + 0j), t) - omega(ev_fig1, np.full(200, -h + 0j), t)) / (2 * h)
        assert np.max(np.abs(fd - omega_prime_zero(ev_fig1, t))) <= 1e-6

    def test_decay_law_and_monotone(self, ev_fig1):
        t = np.sort(np.random.default_rng(14).uniform(0, 10, 200))
        b = np.abs(omega_prime_zero(ev_fig1, t))
        assert np.all(b <= decay_bound(ev_fig1.family.k, t) + 1e-9)
        assert np.all(np.diff(b) < 0)

    def test_dilation_family(self):
        # psi_t(0) = e^{-2t} c, so int_0^t q(0,s) ds has a closed form via log
        c = 0.5
        ev = ChainEvaluator.from_spec(dilation_spec(Const(c)))
        t = 1.7
        # q = (1+x)/(1-x) with x = c e^{-2s}; integral = t + log((1 - c e^{-2t}) / (1 - c))
        expect = math.exp(-(t + math.log((1 - c * math.exp(-2 * t)) / (1 - c))))
        assert omega_prime_zero(ev, t) == pytest.approx(expect, abs=1e-13)

    def test_domain(self, ev_fig1):
        with pytest.raises(DomainError):
            log_b(ev_fig1.family, -1.0)

    def test_quadrature_warning(self, ev_fig1):
        with warnings.catch_warnings(record=True) as rec:
            warnings.simplefilter("always")
            omega_prime_zero(ev_fig1, 3.0, report_tol=0.0)
        assert any(issubclass(w.category, RuntimeWarning) for w in rec)
