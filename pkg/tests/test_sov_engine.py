from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from hitchin_sov import SovError
from hitchin_sov import sov_engine as se
from hitchin_sov import surface_kernel as sk


def _inverse_of(ctx, ref, sc, choice=None, **kw):
    choice = se.find_sqrt_choice(ctx, ref, sc.ba.u, sc.point.q) if choice is None else choice
    return se.sov_inverse(ctx, ref, sc.ba, sc.higgs_report.quadratic, choice, **kw)


def test_forward_produces_m_points(ctx2, ref2, scenarios2):
    for sc in scenarios2:
        assert sc.ba.m == ref2.m
        assert sc.ba.u0 == sc.point.k[0]


def test_v_agrees_between_routes(ctx2, ref2, scenarios2):
    for sc in scenarios2:
        _, rep, _, _ = se.forward_details(ctx2, ref2, sc.point)
        assert rep.v_route_gap < 1e-8


def test_points_lie_on_spectral_curve(ctx2, scenarios2):
    for sc in scenarios2:
        qd = sc.higgs_report.quadratic
        for a, v in sc.ba.points:
            assert abs(qd(a) - v * v) < 1e-8 * max(1.0, abs(v) ** 2)


def test_roundtrip(ctx2, ref2, scenarios2):
    for sc in scenarios2:
        back, _, rep = _inverse_of(ctx2, ref2, sc, k1=sc.point.k[0], guess=sc.point.q)
        assert se.darboux_distance(ctx2, sc.point, back) < 1e-6
        assert rep.system_shape == (ref2.m + 1, ref2.N + ctx2.genus)
        assert rep.step0_residual < 1e-10


def test_roundtrip_gauge_free_inverse(ctx2, ref2, scenario2):
    back, _, _ = _inverse_of(ctx2, ref2, scenario2)
    assert back.k[0] == pytest.approx(1.0)
    assert se.darboux_distance(ctx2, scenario2.point, back) < 1e-6


def test_other_square_roots_cover_same_image(ctx2, ref2, scenario2):
    sc = scenario2
    own = se.find_sqrt_choice(ctx2, ref2, sc.ba.u, sc.point.q)
    other = (own + 5) % len(se.square_root_bundles(ctx2))
    alt, _, _ = _inverse_of(ctx2, ref2, sc, choice=other)
    assert sk.lattice_distance(ctx2, alt.lam - sc.point.lam) > 1e-3
    assert se.sov_forward(ctx2, ref2, alt).distance(sc.ba) < 1e-9


def test_cstar_action(ctx2, ref2, scenario2):
    pt = scenario2.point
    one = se.cstar_act(1.0, pt)
    np.testing.assert_array_equal(one.flat(), pt.flat())
    back = se.cstar_act(1 / (2 - 1j), se.cstar_act(2 - 1j, pt))
    np.testing.assert_allclose(back.flat(), pt.flat(), rtol=1e-15)
    assert se.cstar_act(3j, pt).moment == pytest.approx(pt.moment, abs=1e-14)
    assert se.sov_forward(ctx2, ref2, se.cstar_act(-0.4 + 2j, pt)).distance(scenario2.ba) < 1e-9
    with pytest.raises(SovError, match="not in C"):
        se.cstar_act(0, pt)


def test_reduce_lift(scenario2):
    pt = se.cstar_act(1 / scenario2.point.x[0], scenario2.point)
    lifted = se.lift(se.reduce(pt))
    np.testing.assert_allclose(lifted.flat(), pt.flat(), atol=1e-14)
    assert lifted.moment == 0
    with pytest.raises(SovError, match="x1"):
        se.reduce(replace(pt, x=np.array([0.0, 1.0])))


def test_divisor_class(ctx2, ref2, scenario2):
    sc = scenario2
    assert se.divisor_class_check(ctx2, ref2, sc.ba, sc.point.q) < 1e-6
    moved = list(sc.ba.points)
    moved[0] = (sk.move_point(ctx2, moved[0][0], 0.1), moved[0][1])
    assert se.divisor_class_check(ctx2, ref2, se.BAConfiguration(tuple(moved), sc.ba.u0), sc.point.q) > 1e-3
    # u only fixes 2L, so every square root of the same class passes
    for half in se.square_root_bundles(ctx2):
        assert se.divisor_class_residual(ctx2, ref2, sc.ba.u, sc.point.lam + half) < 1e-6


def test_square_root_bundles(ctx2):
    roots = se.square_root_bundles(ctx2)
    assert len(roots) == 2 ** (2 * ctx2.genus)
    np.testing.assert_array_equal(roots[0], 0)
    for h in roots:
        assert sk.lattice_distance(ctx2, 2 * h) < 1e-12


def test_inverse_rejects_off_curve(ctx2, ref2, scenario2):
    sc = scenario2
    bad = list(sc.ba.points)
    bad[1] = (bad[1][0], bad[1][1] * 1.1 + 0.3)
    with pytest.raises(SovError, match="off spectral curve"):
        se.sov_inverse(ctx2, ref2, se.BAConfiguration(tuple(bad), sc.ba.u0), sc.higgs_report.quadratic, 0)


def test_sqrt_choice_mismatch(ctx2, ref2, scenario2):
    sc = scenario2
    q = replace(sc.point, lam=sc.point.lam + 0.05)
    q = se.resolve_q(ctx2, q)
    with pytest.raises(SovError, match="divisor class mismatch"):
        se.find_sqrt_choice(ctx2, ref2, sc.ba.u, q)


def test_forward_rejects_nonzero_moment(ctx2, ref2, scenario2):
    pt = replace(scenario2.point, k=scenario2.point.k + 0.2)
    with pytest.raises(SovError, match="moment map nonzero"):
        se.sov_forward(ctx2, ref2, pt)


def test_ba_distance_matches_permutations(scenario2):
    ba = scenario2.ba
    flipped = se.BAConfiguration(tuple(reversed(ba.points)), ba.u0)
    assert ba.distance(flipped) == 0.0


def test_genus_three_roundtrip(ctx3, ref3):
    sc = se.make_scenario(ctx3, ref3, 0)
    assert sc.ba.m == ref3.m == 6
    back, _, _ = _inverse_of(ctx3, ref3, sc, k1=sc.point.k[0], guess=sc.point.q)
    assert se.darboux_distance(ctx3, sc.point, back) < 1e-6


def test_far_preimage_maps_to_same_image(ctx2, ref2):
    # one square root of this class puts a q point near z = 15 - 38i
    sc = se.make_scenario(ctx2, ref2, 49)
    alt, _, _ = se.sov_inverse(ctx2, ref2, sc.ba, sc.higgs_report.quadratic, 0)
    assert max(abs(p.base) for p in alt.q.expanded()) > 10
    assert se.sov_forward(ctx2, ref2, alt).distance(sc.ba) < 1e-9
