from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hitchin_sov import SovError
from hitchin_sov import moduli_charts as mc
from hitchin_sov import sov_engine as se
from hitchin_sov import special_forms as sf
from hitchin_sov import surface_kernel as sk
from hitchin_sov.moduli_charts import ReferenceData
from hitchin_sov.surface_kernel import Divisor, SurfacePoint


@pytest.fixture(scope="module")
def q2(ctx2, ref2):
    return se.random_divisor(ctx2, ref2, np.random.default_rng(4))


def test_default_reference_dimensions(ref2, ref3):
    assert (ref2.N, ref2.m, ref2.s_d) == (2, 3, 1)
    assert (ref3.N, ref3.m, ref3.s_d) == (4, 6, 2)


def test_reference_rejects_wrong_degree(ref2):
    with pytest.raises(SovError, match="wrong degree"):
        ReferenceData(Divisor.from_points(ref2.p_points[:1]), ref2.q_check, ref2.q_check_0, 1, 0)


def test_reference_requires_q_check_0_with_odd_lambda(ref2):
    with pytest.raises(SovError, match="q_check_0"):
        ReferenceData(ref2.p, ref2.q_check, None, 1, 0)


def test_generic_divisor_passes_validation(ctx2, ref2, q2):
    assert mc.validate_reference(ctx2, ref2, q2).all_ok


def test_coincident_point_fails_separation(ctx2, ref2, q2):
    q = Divisor.from_points([ref2.p_points[0], q2.expanded()[1]])
    diag = mc.validate_reference(ctx2, ref2, q)
    assert not diag.separation_ok
    assert not diag.all_ok


def test_conjugate_pair_is_special(ctx2, ref2):
    p = SurfacePoint(0.9 + 1.1j, 1)
    diag = mc.validate_reference(ctx2, ref2, Divisor.from_points([p, p.conjugate()]))
    assert diag.separation_ok
    assert not diag.nonspecial_ok


@settings(max_examples=10, deadline=None)
@given(st.floats(1e2, 1e12))
def test_validation_monotone_in_threshold(ctx2, ref2, q2, cond_max):
    loose = mc.validate_reference(ctx2, ref2, q2, cond_max=cond_max)
    strict = mc.validate_reference(ctx2, ref2, q2, cond_max=cond_max / 10)
    assert loose.all_ok or not strict.all_ok


def test_q_of_lambda_fixed_point(ctx2, ref2, q2):
    lam = mc.lambda_of_q(ctx2, ref2, q2)
    q = mc.q_of_lambda(ctx2, ref2, lam, q2)
    for a, b in zip(q.expanded(), q2.expanded()):
        assert a.distance(b) < 1e-12


def test_q_of_lambda_jacobian(ctx2, ref2, q2):
    lam = mc.lambda_of_q(ctx2, ref2, q2)
    pts = q2.expanded()
    dA = sf.abel_jacobian(ctx2, pts)
    h = 1e-6
    for i in range(ctx2.genus):
        e = np.zeros(ctx2.genus, dtype=complex)
        e[i] = h
        hi = mc.q_of_lambda(ctx2, ref2, lam + e, q2).expanded()
        lo = mc.q_of_lambda(ctx2, ref2, lam - e, q2).expanded()
        fd = np.array([(a.base - b.base) / (2 * h) for a, b in zip(hi, lo)])
        exact = np.linalg.solve(dA.T, np.eye(ctx2.genus)[i])
        assert np.linalg.norm(fd - exact) < 1e-5 * np.linalg.norm(exact)


def test_q_of_lambda_permutation_invariant(ctx2, ref2, q2):
    lam = mc.lambda_of_q(ctx2, ref2, q2) + np.array([0.01, -0.02j])
    a = mc.q_of_lambda(ctx2, ref2, lam, q2).expanded()
    b = mc.q_of_lambda(ctx2, ref2, lam, Divisor.from_points(q2.expanded()[::-1])).expanded()
    assert sorted(p.base.real for p in a) == pytest.approx(sorted(p.base.real for p in b), abs=1e-12)
    assert sk.lattice_distance(ctx2, sk.abel_map(ctx2, Divisor.from_points(a)) - lam) < 1e-11


def test_jacobi_inversion_reports_failure(ctx2, q2):
    lam = sk.abel_map(ctx2, q2) + 0.3
    with pytest.raises(SovError, match="Jacobi inversion failed"):
        mc.jacobi_inversion(ctx2, lam, q2.expanded(), max_iter=0)


def test_chart_rescale(ref2):
    x = np.array([1.0 + 2j, -0.5j])
    np.testing.assert_array_equal(mc.chart_rescale_x(ref2, 0, 1.0, x), x)
    twice = mc.chart_rescale_x(ref2, 1, 3.0, mc.chart_rescale_x(ref2, 1, 2.0 - 1j, x))
    np.testing.assert_allclose(twice, mc.chart_rescale_x(ref2, 1, 3.0 * (2.0 - 1j), x), rtol=1e-15)
    with pytest.raises(SovError, match="singular chart change"):
        mc.chart_rescale_x(ref2, 0, 0.0, x)


def test_transition_matrices(ref2, q2):
    pt = mc.ModuliPoint(q2, np.array([0.0, 1.5 - 0.5j]), np.zeros(2, dtype=complex))
    data = mc.transition_data(ref2, pt)
    w = 0.3 - 0.7j
    p_mats = data.of_kind("p")
    np.testing.assert_array_equal(p_mats[0].evaluate(w), np.eye(2))
    assert p_mats[1].evaluate(w)[0, 1] == pytest.approx((1.5 - 0.5j) / w)
    (t0,) = data.of_kind("q_check_0")
    assert t0.determinant(w) == pytest.approx(w)
    for kind in ("q", "q_check", "p"):
        for t in data.of_kind(kind):
            assert t.determinant(w) == pytest.approx(1.0)
    assert len(data.of_kind("q")) == len(data.of_kind("q_check")) == 2
