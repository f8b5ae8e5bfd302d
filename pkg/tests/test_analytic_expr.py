import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trivial_beltrami.analytic_expr import (
    Breakpoint,
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
    breakpoints,
    coeff_from_json,
    eval_coeff,
    eval_holo,
    holo_from_json,
    merge_breakpoints,
    sup_norm_circle,
)
from trivial_beltrami.errors import BoundViolation, DomainError
from trivial_beltrami.presets import LOG2, figure1_a1, figure1_a2

SINH1_SQ = math.sinh(1.0) ** 2


class TestEvalHolo:
    def test_mobius_at_origin(self):
        assert eval_holo(Mobius(2 / 3), 0) == pytest.approx(-2 / 3, abs=1e-15)

    def test_mobius_fixes_one(self):
        assert eval_holo(Mobius(2 / 3), 1.0) == pytest.approx(1.0, abs=1e-15)

    def test_sinc_squared_removable_point(self):
        assert eval_holo(Sinc2(), 0) == 1.0
        assert eval_holo(Sinc(), 0) == 1.0

    def test_sinc_series_matches_direct_formula_near_switch(self):
        z = np.array([9.99e-4, 1.01e-3, 1e-3j, 5e-4 + 5e-4j])
        direct = (np.sin(z) / z) ** 2
        assert np.allclose(Sinc2()(z), direct, rtol=1e-14, atol=0)

    def test_sinc2_at_one_is_sin_squared(self):
        assert eval_holo(Sinc2(), 1.0) == pytest.approx(math.sin(1.0) ** 2, rel=1e-15)

    def test_outside_disk_rejected(self):
        with pytest.raises(DomainError):
            eval_holo(Identity(), 1.001)

    def test_tolerance_at_rim(self):
        eval_holo(Identity(), 1 + 1e-13)

    def test_vectorised_shape(self):
        z = np.zeros((3, 4), dtype=complex)
        assert eval_holo(Sum((Const(1.0), Identity())), z).shape == (3, 4)

    def test_poly_horner(self):
        p = Poly((1, 2j, -3))
        z = 0.3 - 0.4j
        assert eval_holo(p, z) == pytest.approx(1 + 2j * z - 3 * z * z, abs=1e-15)

    def test_composites(self):
        z = 0.2 + 0.5j
        e = Scale(0.5, Prod((Pow(Identity(), 3), Dilate(Mobius(0.1j), 0.5))))
        expect = 0.5 * z**3 * (0.5 * z - 0.1j) / (1 - np.conj(0.1j) * 0.5 * z)
        assert eval_holo(e, z) == pytest.approx(expect, abs=1e-15)

    def test_mobius_parameter_checked(self):
        with pytest.raises(ValueError):
            Mobius(1.0)

    def test_dilation_factor_checked(self):
        with pytest.raises(ValueError):
            Dilate(Identity(), 1.5)

    def test_negative_power_rejected(self):
        with pytest.raises(ValueError):
            Pow(Identity(), -1)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0, 2 * math.pi), st.floats(0, 0.99), st.floats(0, 2 * math.pi))
    def test_determinism(self, th, ra, tha):
        e = Prod((Sinc2(), Mobius(ra * complex(math.cos(tha), math.sin(tha)))))
        z = complex(math.cos(th), math.sin(th)) * 0.9
        assert eval_holo(e, z) == eval_holo(e, z)

    @settings(max_examples=100, deadline=None)
    # rounding grows like 1/(1 - |a|), so keep the parameter off the rim
    @given(st.floats(0, 0.9), st.floats(0, 2 * math.pi))
    def test_mobius_unimodular_on_circle(self, ra, tha):
        a = ra * complex(math.cos(tha), math.sin(tha))
        th = np.linspace(0, 2 * np.pi, 257)
        assert np.max(np.abs(np.abs(Mobius(a)(np.exp(1j * th))) - 1)) <= 1e-14


class TestSupNorm:
    def test_mobius(self):
        est = sup_norm_circle(Mobius(2 / 3), 1.0)
        assert est.estimate == pytest.approx(1.0, abs=1e-14)

    def test_sinc_squared_max_is_sinh_squared(self):
        # maximum at z = +-i where |sin z| = sinh 1
        est = sup_norm_circle(Sinc2(bound=SINH1_SQ), 1.0)
        assert est.estimate == pytest.approx(1.381098, abs=1e-6)
        assert est.estimate <= SINH1_SQ * (1 + 1e-12)

    def test_constant(self):
        assert sup_norm_circle(Const(0.3)).estimate == pytest.approx(0.3, abs=1e-16)

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            sup_norm_circle(Const(1.0), 1.0, 512)

    def test_declared_bound_falsified(self):
        with pytest.raises(BoundViolation):
            sup_norm_circle(Sinc2(bound=1.3))

    def test_smaller_radius(self):
        assert sup_norm_circle(Identity(), 0.5).estimate == pytest.approx(0.5)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.complex_numbers(max_magnitude=2, allow_nan=False, allow_infinity=False), min_size=1, max_size=5))
    def test_structural_bound_holds_for_polynomials(self, coeffs):
        p = Poly(tuple(coeffs))
        est = sup_norm_circle(p)
        assert est.estimate <= p.structural_bound() * (1 + 1e-12) + 1e-15


class TestJson:
    EXPRS = [
        Const(0.3 + 0.1j),
        Identity(),
        Poly((1, 0.5j)),
        Mobius(2 / 3, bound=1.0),
        Sinc(),
        Sinc2(bound=SINH1_SQ),
        Sum((Const(0.1), Identity())),
        Prod((Identity(), Identity())),
        Scale(0.5j, Sinc2()),
        Pow(Mobius(0.2), 2),
        Dilate(Sinc2(), 0.5),
    ]

    @pytest.mark.parametrize("e", EXPRS, ids=lambda e: e.kind)
    def test_round_trip(self, e):
        d = json.loads(json.dumps(e.to_json()))
        back = holo_from_json(d)
        assert back == e
        z = np.array([0, 0.3 + 0.4j, -1j])
        assert np.array_equal(back(z), e(z))

    def test_complex_pair_encoding(self):
        assert Const(1 - 2j).to_json() == {"kind": "const", "c": [1.0, -2.0]}

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            holo_from_json({"kind": "spline"})

    def test_coefficient_round_trip(self):
        for a in (figure1_a1(), figure1_a2()):
            back = coeff_from_json(json.loads(json.dumps(a.to_json())))
            assert back == a

    def test_coefficient_shorthands(self):
        assert coeff_from_json(0.25)(3.0) == 0.25
        a = coeff_from_json({"pieces": [{"t_lo": 0, "t_hi": "log2", "form": {"kind": "const", "c": 1}},
                                        {"t_lo": "log2", "t_hi": "inf", "form": {"kind": "const", "c": 2}}]})
        assert a.breakpoints() == [Breakpoint(LOG2)]
        b = coeff_from_json({"kind": "exp", "c": 1, "beta": [-1, 0]})
        assert b(1.0) == pytest.approx(math.exp(-1))


class TestTimeCoefficients:
    def test_figure1_a1_first_piece(self):
        assert eval_coeff(figure1_a1(), 0.5) == complex(-0.2, 0.1)

    def test_figure1_a1_after_log2(self):
        assert eval_coeff(figure1_a1(), 1.0) == complex(0.1, 0.1)

    def test_right_limit_at_breakpoint(self):
        assert eval_coeff(figure1_a1(), LOG2) == complex(0.1, 0.1)

    def test_figure1_a2_at_one(self):
        assert eval_coeff(figure1_a2(), 1.0) == pytest.approx(0.2, abs=1e-16)

    def test_figure1_a2_oscillates(self):
        t = math.exp(-math.pi / 2)
        assert eval_coeff(figure1_a2(), t) == pytest.approx(0.2 * np.exp(-1j * math.log(t)), abs=1e-16)

    def test_constant(self):
        a = TimeCoefficient.constant(0.7j)
        assert np.all(a(np.array([0, 1, 1e9])) == 0.7j)

    def test_breakpoints(self):
        assert breakpoints(figure1_a1()) == [Breakpoint(LOG2, False)]
        assert breakpoints(TimeCoefficient.constant(1)) == []
        assert breakpoints(figure1_a2()) == [Breakpoint(0.0, True)]

    def test_merge(self):
        m = merge_breakpoints([figure1_a1().breakpoints(), figure1_a2().breakpoints()])
        assert m == [Breakpoint(0.0, True), Breakpoint(LOG2, False)]

    def test_negative_time(self):
        with pytest.raises(DomainError):
            figure1_a1()(-0.1)

    def test_pieces_must_tile(self):
        with pytest.raises(ValueError):
            TimeCoefficient((Piece(0, 1, TConst(1)), Piece(2, math.inf, TConst(1))))
        with pytest.raises(ValueError):
            TimeCoefficient((Piece(0, 1, TConst(1)),))

    def test_growing_exponential_rejected(self):
        with pytest.raises(ValueError):
            ExpDecay(1, 0.1)

    def test_declared_bounds_verified(self):
        for a in (figure1_a1(), figure1_a2()):
            est = a.verify_bound()
            assert est.estimate <= est.bound * (1 + 1e-12)

    def test_bound_violation(self):
        a = TimeCoefficient.constant(0.5, bound=0.4)
        with pytest.raises(BoundViolation):
            a.verify_bound()

    def test_sum_and_product_forms(self):
        f = TSum((TConst(0.1), TProd((ExpDecay(0.2, -1), LogOsc(1, 2)))))
        t = 2.0
        assert f(np.array(t)) == pytest.approx(0.1 + 0.2 * math.exp(-t) * np.exp(2j * math.log(t)))
        assert f.structural_bound() == pytest.approx(0.3)
        assert f.has_log_osc()

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0, 50))
    def test_sample_max_bounds_any_time(self, t):
        for a in (figure1_a1(), figure1_a2()):
            assert abs(a(t)) <= a.declared_bound * (1 + 1e-12)
