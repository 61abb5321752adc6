from __future__ import annotations

import numpy as np
import pytest

from hitchin_sov import SovError
from hitchin_sov import higgs_forms as hf
from hitchin_sov import sov_engine as se
from hitchin_sov import special_forms as sf
from hitchin_sov import surface_kernel as sk
from hitchin_sov.moduli_charts import ModuliPoint
from hitchin_sov.surface_kernel import Divisor, SurfacePoint

PROBES = [SurfacePoint(0.2 - 1.7j, 1), SurfacePoint(2.9 + 0.1j, -1), SurfacePoint(-0.8 + 1.2j, 1)]


@pytest.fixture(scope="module")
def base(scenario2):
    return scenario2.point.moduli_point()


def test_moment_map():
    assert hf.moment_map([1, 2j], [3, -1j]) == 5


def test_phi_plus_space_dimension(ctx2, ref2, base):
    assert hf.phi_plus_space(ctx2, ref2, base.q).dim == ref2.N


def test_quadratic_space_dimensions(ctx2):
    assert len(hf.quadratic_basis(ctx2)) == 3 * ctx2.genus - 3
    zero = Divisor.from_points([SurfacePoint(0.4 - 0.9j, 1)])
    assert len(hf.quadratic_basis(ctx2, zero)) == 3 * ctx2.genus - 4


def test_phi_plus_interpolates_k(ctx2, ref2, base, scenario2):
    k = scenario2.point.k
    phi = hf.phi_plus_from_k(ctx2, ref2, base, k)
    for r, p in enumerate(ref2.p_points):
        assert abs(phi(p) - k[r]) < 1e-10 * max(1.0, abs(k[r]))
    for p in base.q.expanded():
        assert abs(phi(p)) < 1e-8
    zero = hf.phi_plus_from_k(ctx2, ref2, base, np.zeros(ref2.N))
    assert all(abs(zero(p)) == 0 for p in PROBES)


def test_phi0_residues(ctx2, ref2, base, scenario2):
    pt = scenario2.point
    for kappa in (np.zeros(ctx2.genus), pt.kappa):
        phi0 = hf.phi0_rational(ctx2, ref2, base, kappa, pt.k)
        for r, p in enumerate(ref2.p_points):
            assert abs(phi0.residue_at(p) + pt.x[r] * pt.k[r]) < 1e-12 * max(1.0, abs(pt.x[r] * pt.k[r]))


def test_phi0_without_k_is_holomorphic_part(ctx2, ref2, base, scenario2):
    kappa = scenario2.point.kappa
    phi0 = hf.phi0_rational(ctx2, ref2, base, kappa, np.zeros(ref2.N))
    omegas = sf.normalized_holomorphic(ctx2)
    for p in PROBES:
        expect = -0.5 * sum(c * om(p) for c, om in zip(kappa, omegas))
        assert abs(phi0(p) - expect) < 1e-12 * max(1.0, abs(expect))


def test_kappa_recovered_from_phi0_on_q(ctx2, ref2, base, scenario2):
    pt = scenario2.point
    phi0 = hf.phi0_rational(ctx2, ref2, base, pt.kappa, pt.k)
    qpts = base.q.expanded()
    vals = np.array([phi0(p) for p in qpts])
    kappa = -2 * np.linalg.solve(sf.abel_jacobian(ctx2, qpts), vals)
    np.testing.assert_allclose(kappa, pt.kappa, atol=1e-9)


def test_phi0_requires_vanishing_moment(ctx2, ref2, base, scenario2):
    k = np.array(scenario2.point.k) + 0.5
    with pytest.raises(SovError, match="moment map nonzero"):
        hf.phi0_rational(ctx2, ref2, base, scenario2.point.kappa, k)


def test_phi_minus_solvable_and_unique(scenario2):
    rep = scenario2.higgs_report
    assert rep.solvability.residual < 1e-7
    assert rep.solvability.null_dim == 0
    assert rep.laurent_residual < 1e-6
    assert rep.residue_error < 1e-9


def test_quadratic_differential_matches_fit(ctx2, scenario2):
    higgs, qd = scenario2.higgs, scenario2.higgs_report.quadratic
    for p in PROBES:
        exact = higgs.quadratic_values(p)
        assert abs(qd(p) - exact) < 1e-7 * max(1.0, abs(exact))
    assert qd.nondegenerate


def test_generic_point_is_very_stable(ctx2, ref2, base):
    rep = hf.wobbly_diagnostic(ctx2, ref2, base)
    assert rep.h0_L2inv == 0
    assert rep.h0_nilpotent == ctx2.genus - 1 - ref2.s_d
    assert rep.is_expected_rank and rep.riemann_roch_consistent


def test_special_point_has_nilpotent_direction(ctx2, ref2, base):
    # 2q + P ~ r forces a section of the degree-one bundle
    P = SurfacePoint(-0.3 - 1.9j, 1)
    target = 0.5 * (sk.abel_map(ctx2, ref2.r_divisor) - sk.abel_map(ctx2, P))
    q = se.jacobi_solve(ctx2, target, base.q)
    rep = hf.wobbly_diagnostic(ctx2, ref2, ModuliPoint.from_divisor(ctx2, q, base.x))
    assert rep.h0_L2inv == 1
    assert not rep.is_expected_rank
    assert rep.riemann_roch_consistent


def test_bound_names(ref2, base):
    poles, zeros = hf.bound_divisors(ref2, base.q, "phi_minus")
    assert poles.degree == 2 * ref2.N + 2 * base.q.degree
    with pytest.raises(SovError, match="unknown bound"):
        hf.bound_divisors(ref2, base.q, "bogus")
