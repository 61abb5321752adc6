from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hitchin_sov import SovError
from hitchin_sov import special_forms as sf
from hitchin_sov import surface_kernel as sk
from hitchin_sov import verify_harness as vh
from hitchin_sov.surface_kernel import Divisor, SurfacePoint

P_PLUS = SurfacePoint(0.35 + 1.6j, 1)
P_MINUS = SurfacePoint(-1.4 - 1.4j, -1)


def _loop_integral(ctx, d, cycle, n=2048):
    z, dz, y = sk.cycle_loop_nodes(ctx, cycle, n)
    sheet = np.where(np.abs(y - ctx.geometry.y_can(z)) < np.abs(y), 1, -1)
    return complex(np.mean(d.values(z, sheet) * dz) * 2 * np.pi)


def _residue(func, p, radius=1e-2):
    return sf.laurent_coefficients(func, p, radius, orders=[-1], n=128)[-1]


def _surface_point(x, y, sheet):
    return SurfacePoint(complex(x, y), sheet)


points = st.builds(_surface_point, st.floats(-2.5, 2.5), st.floats(-2.0, 2.0), st.sampled_from([1, -1]))


# ------------------------------------------------------------ prime form ---

def test_prime_form_vanishes_on_diagonal(ctx2):
    p = SurfacePoint(0.4 + 0.9j, -1)
    assert sf.prime_form(ctx2, p, p) == 0


def test_prime_form_nonzero_on_conjugate(ctx2):
    p = SurfacePoint(0.4 + 0.9j, 1)
    assert abs(sf.prime_form(ctx2, p, p.conjugate())) > 1e-3


@settings(max_examples=40, deadline=None)
@given(points, points)
def test_prime_form_antisymmetric(ctx2, a, b):
    if min(sk.clearance(ctx2, a.base)[0], sk.clearance(ctx2, b.base)[0]) < 0.05 or abs(a.base - b.base) < 1e-3:
        return
    e_ab, e_ba = sf.prime_form(ctx2, a, b), sf.prime_form(ctx2, b, a)
    assert abs(e_ab + e_ba) < 1e-10 * abs(e_ab)


@settings(max_examples=40, deadline=None)
@given(points, st.floats(0, 2 * np.pi))
def test_prime_form_local_limit(ctx2, a, phase):
    if sk.clearance(ctx2, a.base)[0] < 0.05:
        return
    d = 1e-4 * np.exp(1j * phase)
    b = SurfacePoint(a.base + d, a.sheet)
    assert abs(sf.prime_form(ctx2, b, a) / d - 1) < 1e-5


def test_dlog_prime_form_matches_log_derivative(ctx2):
    pole, x = SurfacePoint(0.3 + 0.8j, 1), SurfacePoint(-0.9 + 1.1j, -1)
    h = 1e-5
    fd = (np.log(sf.prime_form(ctx2, pole, SurfacePoint(x.base + h, x.sheet)))
          - np.log(sf.prime_form(ctx2, pole, SurfacePoint(x.base - h, x.sheet)))) / (2 * h)
    exact = sf.dlog_prime_form(ctx2, pole, x)
    assert abs(fd - exact) < 1e-6 * abs(exact)


def test_dlog_prime_form_residue(ctx2):
    pole = SurfacePoint(0.3 + 0.8j, 1)

    def func(zs, sheet):
        return np.array([sf.dlog_prime_form(ctx2, pole, SurfacePoint(z, sheet)) for z in zs])

    assert abs(_residue(func, pole) - 1) < 1e-6


def test_dlog_prime_form_rejects_pole(ctx2):
    p = SurfacePoint(0.3 + 0.8j, 1)
    with pytest.raises(SovError, match="evaluation at pole"):
        sf.dlog_prime_form(ctx2, p, p)


# ----------------------------------------------------- third-kind forms ---

def test_third_kind_residues_and_periods(ctx2):
    om = sf.omega_third_kind(ctx2, P_PLUS, P_MINUS)
    assert abs(_residue(om.values, P_PLUS) - 1) < 1e-6
    assert abs(_residue(om.values, P_MINUS) + 1) < 1e-6
    for k in range(ctx2.genus):
        assert abs(_loop_integral(ctx2, om, k)) < 1e-6


def test_third_kind_swap_negates(ctx2):
    a = sf.omega_third_kind(ctx2, P_PLUS, P_MINUS)
    b = sf.omega_third_kind(ctx2, P_MINUS, P_PLUS)
    for p in [SurfacePoint(0.5 - 0.7j, 1), SurfacePoint(-2.0 + 1.0j, -1)]:
        assert abs(a(p) + b(p)) < 1e-9 * max(1.0, abs(a(p)))


def test_third_kind_rejects_coincident_poles(ctx2):
    with pytest.raises(SovError, match="degenerate third-kind differential"):
        sf.omega_third_kind(ctx2, P_PLUS, P_PLUS)


def test_dlog_difference_is_third_kind_up_to_periods(ctx2):
    om = sf.omega_third_kind(ctx2, P_PLUS, P_MINUS)
    xs = [SurfacePoint(0.5 - 0.7j, 1), SurfacePoint(-2.0 + 1.0j, -1), SurfacePoint(1.1 + 0.9j, 1)]
    diffs = [sf.dlog_prime_form(ctx2, P_PLUS, x) - sf.dlog_prime_form(ctx2, P_MINUS, x) - om(x) for x in xs]
    # the remainder is 2 pi i times an integer combination of holomorphic forms
    forms = np.array([sk.point_forms(ctx2, x) for x in xs])
    coef, *_ = np.linalg.lstsq(forms[:2], np.array(diffs[:2]), rcond=None)
    assert abs(forms[2] @ coef - diffs[2]) < 1e-8
    n = coef / (2j * np.pi)
    np.testing.assert_allclose(n, np.round(n.real), atol=1e-8)


def test_primed_third_kind_vanishes_on_q(ctx2):
    q = Divisor.from_points([SurfacePoint(0.8 + 0.9j, 1), SurfacePoint(-1.7 + 0.8j, -1)])
    om = sf.omega_third_kind_primed(ctx2, P_PLUS, P_MINUS, q)
    for p in q.points:
        assert abs(om(p)) < 1e-7


def test_primed_equals_plain_when_q_are_zeros(ctx2):
    rat = sf.third_kind_rational(ctx2, P_PLUS, P_MINUS)
    zeros = [z for z, _ in sf.surface_zeros(rat)]
    assert len(zeros) == 2 * ctx2.genus
    q = None
    for i in range(len(zeros)):
        for j in range(i + 1, len(zeros)):
            cand = Divisor.from_points([zeros[i], zeros[j]])
            if np.linalg.cond(sf.abel_jacobian(ctx2, cand.points)) < 1e6:
                q = cand
                break
        if q is not None:
            break
    primed = sf.omega_third_kind_primed(ctx2, P_PLUS, P_MINUS, q)
    for p in [SurfacePoint(0.5 - 0.7j, 1), SurfacePoint(-2.0 + 1.0j, -1)]:
        assert abs(primed(p) - rat(p)) < 1e-8 * max(1.0, abs(rat(p)))


def test_primed_rejects_special_divisor(ctx2):
    p = SurfacePoint(0.8 + 0.9j, 1)
    with pytest.raises(SovError, match="special divisor q"):
        sf.omega_third_kind_primed(ctx2, P_PLUS, P_MINUS, Divisor.from_points([p, p.conjugate()]))


# ------------------------------------------------------- sigma, theta products ---

def test_sigma_ratio_identity_and_rho_independence(ctx2):
    z, w = SurfacePoint(0.6 + 0.7j, 1), SurfacePoint(-1.3 + 1.2j, -1)
    assert sf.sigma_ratio(ctx2, z, z, sf.default_rho(ctx2)) == 1
    rho_a = sf.default_rho(ctx2)
    rho_b = Divisor.from_points([SurfacePoint(1.9 + 1.3j, 1), SurfacePoint(-0.4 - 1.6j, -1)])
    a, b = sf.sigma_ratio(ctx2, z, w, rho_a), sf.sigma_ratio(ctx2, z, w, rho_b)
    assert abs(a - b) < 1e-7 * abs(a)


def test_holomorphic_forms_single_valued(ctx2):
    for om in sf.normalized_holomorphic(ctx2):
        d = om.as_differential("omega")
        for c in range(2 * ctx2.genus):
            assert sf.monodromy_check(ctx2, d, c) < 1e-9


def test_differential_from_divisor_data(ctx2):
    rng = np.random.default_rng(17)
    for _ in range(3):
        u, v, q, qp = vh.random_divisor_data(ctx2, rng)
        d = sf.differential_from_divisor_data(ctx2, u, v, q, qp)
        for c in range(2 * ctx2.genus):
            assert sf.monodromy_check(ctx2, d, c) < 1e-6
        rat = sf.bounded_space(ctx2, v + qp, u + q)
        assert rat.dim == 1
        probe = [SurfacePoint(0.2 - 1.7j, 1), SurfacePoint(2.6 + 1.1j, -1), SurfacePoint(-2.4 - 0.2j, 1)]
        ratios = [d(p) / rat.basis[0](p) for p in probe]
        np.testing.assert_allclose(ratios, ratios[0], rtol=1e-9)
        others = u.points + v.points + q.points + qp.points
        res = [_residue(d.values, p, sf.safe_radius(ctx2, p, others)) for p in v.points + qp.points]
        assert abs(sum(res)) < 1e-7 * max(abs(r) for r in res)


def test_differential_rejects_shifted_zero(ctx2):
    rng = np.random.default_rng(5)
    u, v, q, qp = vh.random_divisor_data(ctx2, rng)
    pts = u.points
    pts[0] = sk.move_point(ctx2, pts[0], 0.2)
    with pytest.raises(SovError, match="divisor class mismatch"):
        sf.differential_from_divisor_data(ctx2, Divisor.from_points(pts), v, q, qp)


def test_half_period_violation_is_multivalued(ctx2):
    rng = np.random.default_rng(8)
    u, v, q, qp = vh.random_divisor_data(ctx2, rng, violate=True)
    d = sf.differential_from_divisor_data(ctx2, u, v, q, qp, enforce=False)
    assert max(sf.monodromy_check(ctx2, d, c) for c in range(2 * ctx2.genus)) > 1e-2


# ------------------------------------------------------- bounded spaces ---

def test_holomorphic_space_has_dimension_g(ctx2):
    space = sf.bounded_space(ctx2, Divisor(()), Divisor(()))
    assert space.dim == ctx2.genus


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 3), st.integers(0, 4), st.integers(0, 10 ** 6))
def test_bounded_space_riemann_roch(ctx2, n_poles, n_zeros, seed):
    rng = np.random.default_rng(seed)
    pts = vh._random_points(ctx2, rng, n_poles + n_zeros, clearance=0.15)
    poles = Divisor.from_points(pts[:n_poles])
    zeros = Divisor.from_points(pts[n_poles:])
    space = sf.bounded_space(ctx2, poles, zeros)
    g = ctx2.genus
    # a single simple pole forces holomorphy (residue theorem)
    expected = max(g - n_zeros, 0) if n_poles == 1 else max(g - 1 + n_poles - n_zeros, 0)
    assert space.dim == expected


def test_surface_zeros_of_holomorphic_form(ctx2):
    om = sf.normalized_holomorphic(ctx2)[0]
    zeros = sf.surface_zeros(om)
    assert len(zeros) <= 2 * ctx2.genus - 2
    for p, _ in zeros:
        assert abs(om(p)) < 1e-9


def test_null_space_flags_ambiguous_rank():
    mat = np.diag([1.0, 1e-8 * 1.5, 1e-12])
    with pytest.raises(SovError, match="rank indeterminate"):
        sf.null_space(mat, ambiguity=10)
    ns, _ = sf.null_space(mat)
    assert ns.shape[1] == 1
