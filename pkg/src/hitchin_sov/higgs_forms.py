"""Higgs differentials (phi0, phi_plus, phi_minus) on an extension bundle."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly

from hitchin_sov import special_forms as sf
from hitchin_sov import surface_kernel as sk
from hitchin_sov.errors import SovError
from hitchin_sov.moduli_charts import ModuliPoint, ReferenceData
from hitchin_sov.special_forms import MeromorphicDifferential, RationalDifferential, SpanningSet
from hitchin_sov.surface_kernel import Divisor, SurfaceContext, SurfacePoint

SERRE_TOL = 1e-9


def moment_map(x, k) -> complex:
    """H = sum x_r k_r."""
    return complex(np.dot(np.asarray(x, dtype=complex), np.asarray(k, dtype=complex)))


# ---------------------------------------------------------------- bounds ---

def bound_divisors(ref: ReferenceData, q: Divisor, bound) -> tuple[Divisor, Divisor]:
    """(poles, zeros) for a named bound or an explicit pair."""
    if not isinstance(bound, str):
        return bound
    empty = Divisor(())
    if bound == "phi_plus":
        return ref.r_divisor, q.scaled(2)
    if bound == "nilpotent":
        return q.scaled(2), ref.r_divisor
    if bound == "phi_minus":
        return ref.p.scaled(2) + q.scaled(2), ref.r_divisor
    if bound == "double_q":
        return q.scaled(2), empty
    if bound == "holomorphic":
        return empty, empty
    raise SovError(f"unknown bound {bound!r}")


def bounded_differential_basis(ctx: SurfaceContext, ref: ReferenceData, q: Divisor, bound,
                               max_excess: int | None = None) -> list[MeromorphicDifferential]:
    """Spanning set of the differentials obeying ``bound``.

    ``bound`` is one of "phi_plus", "nilpotent", "phi_minus", "double_q",
    "holomorphic", or an explicit (poles, zeros) pair of divisors.
    """
    poles, zeros = bound_divisors(ref, q, bound)
    space = sf.bounded_space(ctx, poles, zeros, max_excess=max_excess)
    return [b.as_differential(f"basis[{bound if isinstance(bound, str) else 'custom'}]") for b in space.basis]


# -------------------------------------------------- quadratic differentials ---

def quadratic_basis_values(ctx: SurfaceContext, z, sheet) -> np.ndarray:
    """Rows z^j/y^2 (j <= 2g-2) then z^j/y (j <= g-3), in the dz^2 chart."""
    g = ctx.genus
    z = np.asarray(z, dtype=complex)
    y = np.asarray(sheet) * ctx.geometry.y_can(z)
    rows = [z ** j / y ** 2 for j in range(2 * g - 1)]
    rows += [z ** j / y for j in range(g - 2)]
    return np.array(rows)


@dataclass(frozen=True)
class QuadraticDifferential:
    ctx: SurfaceContext = field(repr=False)
    coeffs: np.ndarray

    def values(self, z, sheet) -> np.ndarray:
        return np.tensordot(self.coeffs, quadratic_basis_values(self.ctx, z, sheet), axes=1)

    def __call__(self, point: SurfacePoint) -> complex:
        return complex(self.values(np.array([point.base]), point.sheet)[0])

    def polynomials(self):
        """(a, b) with q = (a + b y) dz^2 / y^2."""
        g = self.ctx.genus
        return self.coeffs[:2 * g - 1], self.coeffs[2 * g - 1:]

    def zero_bases(self) -> np.ndarray:
        a, b = self.polynomials()
        norm = npoly.polysub(npoly.polymul(a, a), npoly.polymul(npoly.polymul(b, b), self.ctx.curve.f_coeffs)) \
            if len(b) else npoly.polymul(a, a)
        norm = np.trim_zeros(norm, "b")
        return npoly.polyroots(norm) if len(norm) > 1 else np.zeros(0, dtype=complex)

    @property
    def nondegenerate(self) -> bool:
        """All 4g - 4 zeros on X simple and away from branch points."""
        a, b = self.polynomials()
        g = self.ctx.genus
        if len(b) == 0 or np.max(np.abs(b)) == 0:
            a = np.trim_zeros(a, "b")
            roots = npoly.polyroots(a) if len(a) > 1 else np.zeros(0, dtype=complex)
            count = 2 * g - 2
        else:
            roots = self.zero_bases()
            count = 4 * g - 4
        if len(roots) != count:
            return False
        sep = np.abs(roots[:, None] - roots[None, :]) + np.eye(len(roots))
        return bool(sep.min() > 1e-6 and np.min(np.abs(roots[:, None] - self.ctx.geometry.e[None, :])) > 1e-6)


def quadratic_basis(ctx: SurfaceContext, zeros: Divisor | None = None) -> list[QuadraticDifferential]:
    """Basis of holomorphic quadratic differentials vanishing on ``zeros``."""
    n = 3 * ctx.genus - 3
    if zeros is None or zeros.degree == 0:
        return [QuadraticDifferential(ctx, np.eye(n, dtype=complex)[i]) for i in range(n)]
    rows = [quadratic_basis_values(ctx, np.array([p.base]), p.sheet)[:, 0] for p in zeros.expanded()]
    ns, _ = sf.null_space(sf._row_normalize(np.array(rows)))
    return [QuadraticDifferential(ctx, ns[:, j]) for j in range(ns.shape[1])]


def fit_quadratic(ctx: SurfaceContext, func, points: list[SurfacePoint]):
    """Least-squares fit of func (dz^2-chart values) in the H^0(K^2) basis; returns (q, rel residual)."""
    zs = np.array([p.base for p in points])
    sh = np.array([p.sheet for p in points])
    mat = quadratic_basis_values(ctx, zs, sh).T
    rhs = np.array([func(p) for p in points])
    coeffs, *_ = np.linalg.lstsq(mat, rhs, rcond=None)
    resid = np.linalg.norm(mat @ coeffs - rhs) / max(np.linalg.norm(rhs), 1e-300)
    return QuadraticDifferential(ctx, coeffs), float(resid)


def sample_points(ctx: SurfaceContext, n: int, seed: int = 7, avoid=()) -> list[SurfacePoint]:
    rng = np.random.default_rng(seed)
    centre = complex(np.mean(ctx.geometry.e))
    out = []
    while len(out) < n:
        z = centre + (0.8 * ctx.geometry.scale + 0.5) * (rng.uniform(-1, 1) + 1j * rng.uniform(-1, 1))
        if sk.clearance(ctx, z)[0] < 0.05 or any(abs(z - a.base) < 0.05 for a in avoid):
            continue
        out.append(SurfacePoint(z, int(rng.choice([-1, 1]))))
    return out


# -------------------------------------------------------- Higgs components ---

@dataclass(frozen=True)
class HiggsDifferential:
    phi0: MeromorphicDifferential
    phi_plus: MeromorphicDifferential
    phi_minus: MeromorphicDifferential | None
    base: ModuliPoint
    ref: ReferenceData

    def quadratic_values(self, point: SurfacePoint) -> complex:
        """q = phi0^2 + phi_plus phi_minus at a point."""
        a = self.phi0(point)
        return a * a + self.phi_plus(point) * self.phi_minus(point)


def phi_plus_space(ctx: SurfaceContext, ref: ReferenceData, q: Divisor) -> sf.BoundedSpace:
    return sf.bounded_space(ctx, ref.r_divisor, q.scaled(2))


def phi_plus_from_k(ctx: SurfaceContext, ref: ReferenceData, point: ModuliPoint, k,
                    cond_max: float = 1e10) -> MeromorphicDifferential:
    """The element of the phi_plus space with values k_r at p_r."""
    k = np.asarray(k, dtype=complex)
    space = phi_plus_space(ctx, ref, point.q)
    if space.dim != ref.N:
        raise SovError("reference divisor fails Span condition")
    ev = np.array([[complex(b(p)) for b in space.basis] for p in ref.p_points])
    s = np.linalg.svd(ev, compute_uv=False)
    if s[-1] <= s[0] / cond_max:
        raise SovError("reference divisor fails Span condition")
    c = np.linalg.solve(ev, k)
    coeffs = sum(cj * b.coeffs for cj, b in zip(c, space.basis))
    return space.span.combination(coeffs, "phi_plus").as_differential("phi_plus")


def phi0_rational(ctx: SurfaceContext, ref: ReferenceData, point: ModuliPoint, kappa, k,
                  serre_tol: float = SERRE_TOL) -> RationalDifferential:
    x = np.asarray(point.x, dtype=complex)
    k = np.asarray(k, dtype=complex)
    kappa = np.asarray(kappa, dtype=complex)
    scale = max(1.0, float(np.linalg.norm(x) * np.linalg.norm(k)))
    if abs(moment_map(x, k)) > serre_tol * scale:
        raise SovError("moment map nonzero: not a Higgs pull-back")
    pts = ref.p_points
    span = SpanningSet(ctx, tuple(pts))
    g = ctx.genus
    total = np.zeros(span.size, dtype=complex)
    total[:g] = -0.5 * (kappa @ ctx.omega_basis.normalization)
    dA = sf.abel_jacobian(ctx, point.q.expanded())
    for r in range(1, len(pts)):
        if k[r] * x[r] == 0:
            continue
        w = sf.omega_third_kind_primed_rational(ctx, pts[r], pts[0], point.q, dA)
        total -= k[r] * x[r] * sf._embed(w, span)
    return span.combination(total, "phi0")


def phi0_from_coords(ctx: SurfaceContext, ref: ReferenceData, point: ModuliPoint, kappa, k,
                     serre_tol: float = SERRE_TOL) -> MeromorphicDifferential:
    """phi0 = -sum_{r>=2} k_r x_r omega'[p_r - p_1] - (1/2) sum kappa_i omega_i."""
    return phi0_rational(ctx, ref, point, kappa, k, serre_tol).as_differential("phi0")


@dataclass(frozen=True)
class SolvabilityReport:
    rank: int
    null_dim: int
    residual: float
    shape: tuple
    singular_values: np.ndarray = field(repr=False)
    coefficients: np.ndarray = field(repr=False)


def _condition_rows(span: SpanningSet, ref: ReferenceData) -> np.ndarray:
    """Rows for vanishing on r: value and derivative at each q_check, value at q_check_0."""
    rows = []
    for p in ref.q_check.expanded():
        rows.append(span.values(np.array([p.base]), p.sheet)[:, 0])
        rows.append(span.derivatives(np.array([p.base]), p.sheet)[:, 0])
    if ref.q_check_0 is not None:
        p = ref.q_check_0
        rows.append(span.values(np.array([p.base]), p.sheet)[:, 0])
    return np.array(rows)


def particular_phi_minus(ctx: SurfaceContext, ref: ReferenceData, point: ModuliPoint,
                         phi0: RationalDifferential, phi_plus: RationalDifferential) -> RationalDifferential:
    """Differential with the principal parts at p forced by holomorphy of phi0^2 + phi_plus phi_minus."""
    pts = ref.p_points
    qpts = point.q.expanded()
    span = SpanningSet(ctx, tuple(pts) + tuple(qpts), tuple(pts) + tuple(qpts))
    g = ctx.genus
    n = len(pts)
    coeffs = np.zeros(span.size, dtype=complex)
    x = point.x
    total_res = 0j
    for r, p in enumerate(pts):
        kr = phi_plus(p)
        kprime = complex(phi_plus.derivative(np.array([p.base]), p.sheet)[0])
        a0 = phi0.regular_value(p)
        c = 2 * x[r] * a0 + x[r] ** 2 * kprime
        coeffs[g + r] = c
        coeffs[g + n + len(qpts) + r] = -x[r] ** 2 * kr
        total_res += c
    coeffs[g + n] = -total_res
    return span.combination(coeffs, "phi_minus particular")


def solve_phi_minus(ctx: SurfaceContext, ref: ReferenceData, point: ModuliPoint, phi0, phi_plus):
    """Solve the linear system for phi_minus; returns (differential, report)."""
    phi0_r = phi0.rational if isinstance(phi0, MeromorphicDifferential) else phi0
    phip_r = phi_plus.rational if isinstance(phi_plus, MeromorphicDifferential) else phi_plus
    chi0 = particular_phi_minus(ctx, ref, point, phi0_r, phip_r)
    span = chi0.span
    qpts = point.q.expanded()
    homog = sf.bounded_space(ctx, point.q.scaled(2), Divisor(()))
    basis = [sf._embed(b, span) for b in homog.basis]
    cols = np.array(basis).T
    rows = _condition_rows(span, ref)
    A = rows @ cols
    l0 = -(rows @ chi0.coeffs)
    # scale columns and rows for the rank test
    colnorm = np.linalg.norm(A, axis=0)
    colnorm[colnorm == 0] = 1.0
    rownorm = np.linalg.norm(np.hstack([A, l0[:, None]]), axis=1)
    rownorm[rownorm == 0] = 1.0
    As = A / colnorm / rownorm[:, None]
    ls = l0 / rownorm
    ns, s = sf.null_space(As)
    rank = A.shape[1] - ns.shape[1]
    sol, *_ = np.linalg.lstsq(As, ls, rcond=sf.RANK_TOL)
    resid = float(np.linalg.norm(As @ sol - ls) / max(np.linalg.norm(ls), 1e-300))
    l = sol / colnorm
    coeffs = chi0.coeffs + cols @ l
    phi_minus = span.combination(coeffs, "phi_minus")
    report = SolvabilityReport(rank=rank, null_dim=ns.shape[1], residual=resid, shape=A.shape,
                               singular_values=s, coefficients=l)
    bound = Divisor(tuple((p, -2) for p in ref.p_points) + tuple((p, -2) for p in qpts))
    md = MeromorphicDifferential(phi_minus.__call__, bound, "phi_minus", vector_eval=phi_minus.values,
                                 rational=phi_minus)
    return md, report


@dataclass(frozen=True)
class HiggsReport:
    solvability: SolvabilityReport
    quadratic: QuadraticDifferential
    fit_residual: float
    laurent_residual: float
    residue_error: float


def quadratic_laurent_residual(ctx: SurfaceContext, higgs: HiggsDifferential, points: list[SurfacePoint]) -> float:
    """Largest relative negative-order Laurent coefficient of q at the given points."""
    def qv(z, s):
        a = higgs.phi0.values(z, s)
        return a * a + higgs.phi_plus.values(z, s) * higgs.phi_minus.values(z, s)
    worst = 0.0
    allpts = points
    for p in points:
        rad = sf.safe_radius(ctx, p, allpts)
        co = sf.laurent_coefficients(qv, p, rad, orders=range(-4, 1), n=128)
        scale = max(abs(co[0]), 1e-300)
        neg = max(abs(co[j]) * rad ** j for j in range(-4, 0)) / max(scale, max(abs(co[j]) * rad ** j for j in range(-4, 1)))
        worst = max(worst, neg)
    return float(worst)


def assemble_higgs(ctx: SurfaceContext, ref: ReferenceData, point: ModuliPoint, kappa, k,
                   checks: bool = True):
    """Build (phi0, phi_plus, phi_minus) and the recovered quadratic differential."""
    phi_plus = phi_plus_from_k(ctx, ref, point, k)
    phi0 = phi0_from_coords(ctx, ref, point, kappa, k)
    phi_minus, rep = solve_phi_minus(ctx, ref, point, phi0, phi_plus)
    higgs = HiggsDifferential(phi0, phi_plus, phi_minus, point, ref)
    refpts = ref.reference_points() + point.q.expanded()
    pts = sample_points(ctx, 10 * (3 * ctx.genus - 3) + 8, seed=11, avoid=refpts)
    qd, fit = fit_quadratic(ctx, higgs.quadratic_values, pts)
    laurent = quadratic_laurent_residual(ctx, higgs, refpts) if checks else float("nan")
    res_err = 0.0
    if checks:
        for r, p in enumerate(ref.p_points):
            res_err = max(res_err, abs(phi0.rational.residue_at(p) + point.x[r] * phi_plus(p)))
    return higgs, HiggsReport(rep, qd, fit, laurent, res_err)


# ------------------------------------------------------------- wobbliness ---

@dataclass(frozen=True)
class WobblyReport:
    h0_L2inv: int
    h0_nilpotent: int
    is_expected_rank: bool
    riemann_roch_consistent: bool


def _function_space_dim(ctx: SurfaceContext, poles: Divisor, zeros: Divisor, ambiguity: float) -> int:
    """dim of functions (P + Q y)/D with poles bounded by ``poles`` and vanishing on ``zeros``."""
    g = ctx.genus
    bases = []
    D = np.array([1.0 + 0j])
    for p, m in poles.entries:
        for _ in range(m):
            D = npoly.polymul(D, [-p.base, 1.0])
        bases.append(p)
    degD = len(D) - 1
    nP = degD + 1
    nQ = max(degD - g, 0)
    pts = [p.base for p, _ in poles.entries] + [p.base for p, _ in zeros.entries]
    s = max(1.0, max(abs(z) for z in pts)) if pts else 1.0

    def row(z, sheet, deriv):
        y = sheet * complex(ctx.geometry.y_can(z))
        yp = complex(ctx.curve.fprime(z)) / (2 * y)
        u = z / s
        if not deriv:
            rp = [u ** j for j in range(nP)]
            rq = [u ** j * y for j in range(nQ)]
        else:
            rp = [j * u ** (j - 1) / s if j else 0 for j in range(nP)]
            rq = [(j * u ** (j - 1) / s if j else 0) * y + u ** j * yp for j in range(nQ)]
        return np.array(rp + rq, dtype=complex)

    rows = []
    for p, m in poles.entries:
        c = p.conjugate()
        for o in range(m):
            rows.append(row(c.base, c.sheet, o == 1))
    for p, m in zeros.entries:
        for o in range(m):
            rows.append(row(p.base, p.sheet, o == 1))
    mat = sf._row_normalize(np.array(rows))
    ns, _ = sf.null_space(mat, ambiguity=ambiguity)
    return ns.shape[1]


def wobbly_diagnostic(ctx: SurfaceContext, ref: ReferenceData, point: ModuliPoint,
                      ambiguity: float = 30.0) -> WobblyReport:
    """Nilpotent count dim Omega_{2q-r} and h0(L^-2 Lambda) from independent rank tests."""
    g = ctx.genus
    h0_fun = _function_space_dim(ctx, ref.r_divisor, point.q.scaled(2), ambiguity)
    poles, zeros = bound_divisors(ref, point.q, "nilpotent")
    span = SpanningSet(ctx, tuple(p for p, _ in poles.entries), tuple(p for p, _ in poles.entries))
    rows = np.vstack([span.residue_row()[None, :], sf.vanishing_rows(span, zeros)])
    probe = span.values(np.array([ctx.basepoint.base]), ctx.basepoint.sheet)[:, 0]
    colscale = np.maximum(np.abs(probe), 1e-3)
    ns, _ = sf.null_space(sf._row_normalize(rows * colscale), ambiguity=ambiguity)
    h0_nil = ns.shape[1]
    expected = g - 1 - ref.s_d
    return WobblyReport(h0_L2inv=h0_fun, h0_nilpotent=h0_nil,
                        is_expected_rank=(h0_nil == expected and h0_fun == 0),
                        riemann_roch_consistent=(h0_nil == expected + h0_fun))
