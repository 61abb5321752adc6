"""Forward and inverse separation-of-variables maps, C*-action and reduction."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from hitchin_sov import higgs_forms as hf
from hitchin_sov import moduli_charts as mc
from hitchin_sov import special_forms as sf
from hitchin_sov import surface_kernel as sk
from hitchin_sov.errors import SovError
from hitchin_sov.moduli_charts import ModuliPoint, ReferenceData
from hitchin_sov.surface_kernel import Divisor, SurfaceContext, SurfacePoint


# ------------------------------------------------------------------ types ---

@dataclass(frozen=True)
class DarbouxPoint:
    """Coordinates (lambda, x, kappa, k); ``q`` is the divisor with Abel image lambda."""

    lam: np.ndarray
    x: np.ndarray
    kappa: np.ndarray
    k: np.ndarray
    ref: ReferenceData = field(repr=False)
    q: Divisor | None = None

    @property
    def moment(self) -> complex:
        return hf.moment_map(self.x, self.k)

    def moduli_point(self) -> ModuliPoint:
        return ModuliPoint(self.q, np.asarray(self.x, dtype=complex), np.asarray(self.lam, dtype=complex))

    def flat(self) -> np.ndarray:
        return np.concatenate([self.lam, self.x, self.kappa, self.k]).astype(complex)

    def with_flat(self, vec) -> DarbouxPoint:
        g, n = len(self.lam), len(self.x)
        vec = np.asarray(vec, dtype=complex)
        return replace(self, lam=vec[:g], x=vec[g:g + n], kappa=vec[g + n:2 * g + n], k=vec[2 * g + n:])


@dataclass(frozen=True)
class BAConfiguration:
    points: tuple
    u0: complex = 1.0 + 0j

    @property
    def m(self) -> int:
        return len(self.points)

    @property
    def u(self) -> list[SurfacePoint]:
        return [p for p, _ in self.points]

    @property
    def v(self) -> np.ndarray:
        return np.array([v for _, v in self.points], dtype=complex)

    def distance(self, other: BAConfiguration) -> float:
        """Point-set distance max(|du|, |dv| / max(1, |v|)) under the best matching."""
        if self.m != other.m:
            return np.inf
        cost = np.empty((self.m, self.m))
        for i, (a, va) in enumerate(self.points):
            for j, (b, vb) in enumerate(other.points):
                d = a.distance(b)
                cost[i, j] = max(d, abs(va - vb) / max(1.0, abs(va), abs(vb))) if np.isfinite(d) else 1e300
        rows, cols = linear_sum_assignment(cost)
        return float(cost[rows, cols].max()) if self.m else 0.0


@dataclass(frozen=True)
class ReducedPoint:
    lam: np.ndarray
    y: np.ndarray
    kappa: np.ndarray
    y_check: np.ndarray
    ref: ReferenceData = field(repr=False)
    q: Divisor | None = None


# ------------------------------------------------------------- C* action ---

def cstar_act(epsilon: complex, pt: DarbouxPoint) -> DarbouxPoint:
    """(lambda, x, kappa, k) -> (lambda, eps x, kappa, k / eps)."""
    if epsilon == 0:
        raise SovError("not in C*")
    return replace(pt, x=epsilon * np.asarray(pt.x, dtype=complex), k=np.asarray(pt.k, dtype=complex) / epsilon)


def reduce(pt: DarbouxPoint) -> ReducedPoint:
    x = np.asarray(pt.x, dtype=complex)
    if abs(x[0]) < 1e-14 * max(1.0, float(np.max(np.abs(x)))):
        raise SovError("chart x1 != 0 required")
    k = np.asarray(pt.k, dtype=complex)
    return ReducedPoint(np.asarray(pt.lam, dtype=complex), x[1:] / x[0], np.asarray(pt.kappa, dtype=complex),
                        x[0] * k[1:], pt.ref, pt.q)


def lift(rp: ReducedPoint) -> DarbouxPoint:
    """Gauge x1 = 1 with k1 fixed by the vanishing moment map."""
    y = np.asarray(rp.y, dtype=complex)
    yc = np.asarray(rp.y_check, dtype=complex)
    k1 = -np.dot(y, yc)
    x = np.concatenate([[1.0 + 0j], y])
    k = np.concatenate([[k1], yc])
    return DarbouxPoint(np.asarray(rp.lam, dtype=complex), x, np.asarray(rp.kappa, dtype=complex), k, rp.ref, rp.q)


def square_root_bundles(ctx: SurfaceContext) -> list[np.ndarray]:
    """The 2^(2g) half-lattice vectors n/2 + B m/2, n, m in {0,1}^g."""
    return sk.half_lattice_vectors(ctx)


# ------------------------------------------------------------ q <-> lambda ---

def resolve_q(ctx: SurfaceContext, pt: DarbouxPoint, tol: float = 1e-10) -> Divisor:
    """The divisor q with Abel image pt.lam, using pt.q as the Newton guess."""
    if pt.q is None:
        raise SovError("Jacobi inversion failed: guess out of basin")
    if sk.lattice_distance(ctx, sk.abel_map(ctx, pt.q) - pt.lam) < tol:
        return pt.q
    return mc.q_of_lambda(ctx, pt.ref, pt.lam, pt.q)


# ----------------------------------------------------------------- forward ---

@dataclass(frozen=True)
class ForwardReport:
    v_route_gap: float
    min_zero_separation: float
    min_derivative: float


def ba_zeros(ctx: SurfaceContext, ref: ReferenceData, q: Divisor, phi_plus: sf.RationalDifferential,
             simple_tol: float = 1e-6) -> list[SurfacePoint]:
    """The m zeros of phi_plus off q, ordered deterministically."""
    qpts = q.expanded()
    zeros = sf.surface_zeros(phi_plus, exclude=qpts, exclude_radius=1e-4)
    if len(zeros) != ref.m:
        if len(zeros) < ref.m:
            raise SovError("non-simple BA divisor: outside s-locus")
        raise SovError("degenerate configuration")
    scale = max(abs(phi_plus(p)) for p in ref.p_points) + 1e-300
    for pt, der in zeros:
        if der < simple_tol * scale:
            raise SovError("non-simple BA divisor: outside s-locus")
    pts = [z for z, _ in zeros]
    for i, a in enumerate(pts):
        for b in pts[i + 1:]:
            if abs(a.base - b.base) < 1e-7 and a.sheet == b.sheet:
                raise SovError("non-simple BA divisor: outside s-locus")
    for a in pts:
        for r in ref.reference_points():
            if a.distance(r) < 1e-6:
                raise SovError("degenerate configuration")
    return sorted(pts, key=lambda p: (round(p.base.real, 9), round(p.base.imag, 9), p.sheet))


def v_by_prime_forms(ctx: SurfaceContext, ref: ReferenceData, q: Divisor, x, kappa, k,
                     u: list[SurfacePoint]) -> np.ndarray:
    """v_n from third-kind differentials written with d log E and the chain rule for q(u)."""
    pts = ref.p_points
    qpts = q.expanded()
    dA = sf.abel_jacobian(ctx, qpts)
    inv = np.linalg.inv(dA)
    out = []
    for un in u:
        forms = sk.point_forms(ctx, un)
        dq_du = -0.5 * (forms @ inv)
        total = -0.5 * np.dot(kappa, forms)
        for r in range(1, len(pts)):
            def third(xp):
                return sf.dlog_prime_form(ctx, pts[r], xp) - sf.dlog_prime_form(ctx, pts[0], xp)
            at_q = np.array([third(qj) for qj in qpts])
            total -= k[r] * x[r] * (third(un) + 2 * np.dot(at_q, dq_du))
        out.append(total)
    return np.array(out, dtype=complex)


def forward_details(ctx: SurfaceContext, ref: ReferenceData, pt: DarbouxPoint, enforce_moment: bool = True,
                    second_route: bool = True):
    q = resolve_q(ctx, pt)
    mp = ModuliPoint(q, np.asarray(pt.x, dtype=complex), np.asarray(pt.lam, dtype=complex))
    phi_plus = hf.phi_plus_from_k(ctx, ref, mp, pt.k)
    u = ba_zeros(ctx, ref, q, phi_plus.rational)
    serre = hf.SERRE_TOL if enforce_moment else np.inf
    phi0 = hf.phi0_rational(ctx, ref, mp, pt.kappa, pt.k, serre_tol=serre)
    v = np.array([phi0(un) for un in u])
    gap = np.nan
    if second_route:
        v2 = v_by_prime_forms(ctx, ref, q, pt.x, pt.kappa, pt.k, u)
        gap = float(np.max(np.abs(v - v2)) / max(1.0, float(np.max(np.abs(v)))))
    ders = [abs(complex(phi_plus.rational.derivative(np.array([a.base]), a.sheet)[0])) for a in u]
    sep = min((a.distance(b) for i, a in enumerate(u) for b in u[i + 1:]), default=np.inf)
    ba = BAConfiguration(tuple(zip(u, v)), complex(pt.k[0]))
    return ba, ForwardReport(gap, float(sep), float(min(ders))), phi_plus, phi0


def sov_forward(ctx: SurfaceContext, ref: ReferenceData, pt: DarbouxPoint, enforce_moment: bool = True,
                second_route: bool = False) -> BAConfiguration:
    """u = zeros of phi_plus(k), v = phi0 at u; u0 records phi_plus(p_1)."""
    return forward_details(ctx, ref, pt, enforce_moment, second_route)[0]


# ------------------------------------------------------------ class check ---

def divisor_class_residual(ctx: SurfaceContext, ref: ReferenceData, u: list[SurfacePoint], lam_q) -> float:
    """Reduced Abel residual of u ~ K - 2L + Lambda, with lam_q the Abel image of q."""
    au = sum(sk.abel_map(ctx, a) for a in u)
    ar = sk.abel_map(ctx, ref.r_divisor)
    return sk.lattice_distance(ctx, au - (2 * ctx.K_vector - 2 * np.asarray(lam_q) + ar))


def divisor_class_check(ctx: SurfaceContext, ref: ReferenceData, ba: BAConfiguration, q_divisor_of_L) -> float:
    """``q_divisor_of_L`` is a Divisor or directly its Abel image."""
    lam = sk.abel_map(ctx, q_divisor_of_L) if isinstance(q_divisor_of_L, Divisor) else q_divisor_of_L
    return divisor_class_residual(ctx, ref, ba.u, lam)


# ----------------------------------------------------------------- inverse ---

def quadratic_from_ba(ctx: SurfaceContext, ba: BAConfiguration, rank_tol: float = sf.RANK_TOL):
    """Least-squares q with q(u_i) = v_i^2; returns (q, residual, rank)."""
    zs = np.array([a.base for a in ba.u])
    sh = np.array([a.sheet for a in ba.u])
    mat = hf.quadratic_basis_values(ctx, zs, sh).T
    rhs = ba.v ** 2
    coeffs, _, rank, s = np.linalg.lstsq(mat, rhs, rcond=rank_tol)
    resid = float(np.linalg.norm(mat @ coeffs - rhs) / max(np.linalg.norm(rhs), 1e-300))
    return hf.QuadraticDifferential(ctx, coeffs), resid, int(rank)


def step0_target(ctx: SurfaceContext, ref: ReferenceData, u: list[SurfacePoint], sqrt_choice: int) -> np.ndarray:
    au = sum(sk.abel_map(ctx, a) for a in u)
    ar = sk.abel_map(ctx, ref.r_divisor)
    half = square_root_bundles(ctx)[sqrt_choice]
    return 0.5 * (ar + 2 * ctx.K_vector - au) + half


def find_sqrt_choice(ctx: SurfaceContext, ref: ReferenceData, u: list[SurfacePoint], q: Divisor,
                     tol: float = 1e-7) -> int:
    """Index of the half-lattice vector relating q to u."""
    lam = sk.abel_map(ctx, q)
    best, best_d = -1, np.inf
    for i in range(len(square_root_bundles(ctx))):
        d = sk.lattice_distance(ctx, lam - step0_target(ctx, ref, u, i))
        if d < best_d:
            best, best_d = i, d
    if best_d > tol:
        raise SovError("divisor class mismatch")
    return best


def _restart_guesses(ctx: SurfaceContext, count: int, seed: int = 2024) -> list[list[SurfacePoint]]:
    rng = np.random.default_rng(seed)
    centre = complex(np.mean(ctx.geometry.e))
    rad = 0.7 * ctx.geometry.scale + 0.5
    out = []
    while len(out) < count:
        pts = []
        while len(pts) < ctx.genus:
            z = centre + rad * (rng.uniform(-1, 1) + 1j * rng.uniform(-1, 1))
            if sk.clearance(ctx, z)[0] < 0.1 or any(abs(z - a.base) < 0.2 for a in pts):
                continue
            pts.append(SurfacePoint(z, int(rng.choice([-1, 1]))))
        out.append(pts)
    return out


def jacobi_solve(ctx: SurfaceContext, target, guess: Divisor | None = None, restarts: int = 6) -> Divisor:
    """Jacobi inversion: Newton from the guess, then continuation from fixed starting divisors."""
    def acceptable(pts):
        return np.linalg.cond(sf.abel_jacobian(ctx, pts)) < 1e10

    if guess is not None:
        try:
            pts = mc.jacobi_inversion(ctx, target, guess.expanded())
            if acceptable(pts):
                return Divisor.from_points(pts)
        except SovError:
            pass
    for start in _restart_guesses(ctx, restarts):
        try:
            pts = mc.jacobi_continuation(ctx, target, start)
        except SovError:
            continue
        if acceptable(pts):
            return Divisor.from_points(pts)
    raise SovError("Jacobi inversion failed: guess out of basin")


@dataclass(frozen=True)
class InverseReport:
    q: Divisor
    u0: complex
    step0_residual: float
    phi_plus_crosscheck: float
    system_shape: tuple
    system_residual: float
    system_condition: float
    phi_minus_residue_sum: float
    phi_minus_mismatch: float
    solvability: hf.SolvabilityReport | None = field(default=None, repr=False)


def sov_inverse(ctx: SurfaceContext, ref: ReferenceData, ba: BAConfiguration, q_diff: hf.QuadraticDifferential,
                sqrt_choice: int, k1: complex | None = None, guess: Divisor | None = None,
                spectral_tol: float = 1e-6, residue_tol: float = 1e-6):
    """Reconstruct (DarbouxPoint, HiggsDifferential, report) from BA data and q."""
    u = ba.u
    v = ba.v
    qv = np.array([q_diff(a) for a in u])
    scale = max(1.0, float(np.max(np.abs(v) ** 2)))
    if np.max(np.abs(qv - v ** 2)) > spectral_tol * scale:
        raise SovError("BA data off spectral curve")

    # Step 0: Jacobi inversion for q
    target = step0_target(ctx, ref, u, sqrt_choice)
    q = jacobi_solve(ctx, target, guess)
    step0_res = sk.lattice_distance(ctx, sk.abel_map(ctx, q) - target)
    lam = sk.abel_map(ctx, q)

    # Step 1: phi_plus, gauge phi_plus(p_1) = 1
    space = sf.bounded_space(ctx, ref.r_divisor, q.scaled(2) + Divisor.from_points(u))
    if space.dim != 1:
        raise SovError("non-generic BA data or reference divisor")
    base = space.basis[0]
    p1 = ref.p_points[0]
    b1 = base(p1)
    if abs(b1) < 1e-12 * max(abs(base(p)) for p in ref.p_points):
        raise SovError("non-generic BA data or reference divisor")
    gauge = (1.0 if k1 is None else k1) / b1
    phi_plus = base.scale(gauge)
    k = np.array([phi_plus(p) for p in ref.p_points])
    prod = sf.theta_product(ctx, q.scaled(2) + Divisor.from_points(u), ref.r_divisor, normalize_at=p1)
    probe = hf.sample_points(ctx, 4, seed=5, avoid=ref.reference_points() + q.expanded() + list(u))
    u0 = complex(k[0])
    cross = max(abs(u0 * prod(p) - phi_plus(p)) / max(abs(phi_plus(p)), 1e-300) for p in probe)

    # Step 2: (m + 1) x (N + g) system for (x, kappa)
    N, g = ref.N, ctx.genus
    pts = ref.p_points
    dA = sf.abel_jacobian(ctx, q.expanded())
    primed = [None] + [sf.omega_third_kind_primed_rational(ctx, pts[r], pts[0], q, dA) for r in range(1, N)]
    mat = np.zeros((len(u) + 1, N + g), dtype=complex)
    rhs = np.zeros(len(u) + 1, dtype=complex)
    for j, un in enumerate(u):
        for r in range(1, N):
            mat[j, r] = -k[r] * primed[r](un)
        mat[j, N:] = -0.5 * sk.point_forms(ctx, un)
        rhs[j] = v[j]
    mat[-1, :N] = k
    cond = float(np.linalg.cond(mat))
    if not np.isfinite(cond) or cond > 1e12:
        raise SovError("non-generic BA data or reference divisor")
    qmat, rmat = np.linalg.qr(mat)
    sol = np.linalg.solve(rmat[:N + g, :N + g], (qmat.conj().T @ rhs)[:N + g]) if mat.shape[0] == N + g \
        else np.linalg.lstsq(mat, rhs, rcond=None)[0]
    sys_res = float(np.linalg.norm(mat @ sol - rhs) / max(np.linalg.norm(rhs), 1e-300))
    x, kappa = sol[:N], sol[N:]

    # Step 3: phi_minus = (q - phi0^2) / phi_plus, checked against the linear system
    mp = ModuliPoint(q, x, lam)
    phi0 = hf.phi0_rational(ctx, ref, mp, kappa, k, serre_tol=1e-7)

    def phi_minus_vals(z, s):
        a = phi0.values(z, s)
        return (q_diff.values(z, s) - a * a) / phi_plus.values(z, s)

    def phi_minus_point(p):
        return complex(phi_minus_vals(np.array([p.base]), p.sheet)[0])

    res_sum = 0j
    res_scale = 0.0
    for p in pts + q.expanded():
        rad = sf.safe_radius(ctx, p, pts + q.expanded() + list(u))
        co = sf.laurent_coefficients(phi_minus_vals, p, rad, orders=[-2, -1], n=128)
        res_sum += co[-1]
        res_scale = max(res_scale, abs(co[-1]), abs(co[-2]) / rad)
    res_err = abs(res_sum) / max(res_scale, 1.0)
    if res_err > residue_tol:
        raise SovError("inconsistent (q, u) pair")
    md_minus, solv = hf.solve_phi_minus(ctx, ref, mp, phi0, phi_plus)
    mism = max(abs(md_minus(p) - phi_minus_point(p)) / max(abs(phi_minus_point(p)), 1e-300) for p in probe)
    if mism > 1e-5 and solv.null_dim == 0:
        raise SovError("inconsistent (q, u) pair")
    bound = Divisor(tuple((p, -2) for p in pts) + tuple((p, -2) for p in q.expanded()))
    phi_minus = sf.MeromorphicDifferential(phi_minus_point, bound, "phi_minus", vector_eval=phi_minus_vals)
    higgs = hf.HiggsDifferential(phi0.as_differential("phi0"), phi_plus.as_differential("phi_plus"),
                                 phi_minus, mp, ref)
    dp = DarbouxPoint(lam, x, kappa, k, ref, q)
    report = InverseReport(q, u0, step0_res, float(cross), mat.shape, sys_res, cond, float(res_err),
                           float(mism), solv)
    return dp, higgs, report


def darboux_distance(ctx: SurfaceContext, a: DarbouxPoint, b: DarbouxPoint, gauge: bool = True) -> float:
    """Componentwise distance after matching the C* gauge on k_1 (lambda compared mod lattice)."""
    if gauge and abs(b.k[0]) > 0 and abs(a.k[0]) > 0:
        b = cstar_act(b.k[0] / a.k[0], b)
    dl = sk.lattice_distance(ctx, np.asarray(a.lam) - np.asarray(b.lam))
    rest = max(float(np.max(np.abs(np.asarray(getattr(a, f)) - np.asarray(getattr(b, f)))))
               for f in ("x", "kappa", "k"))
    return max(dl, rest)


# --------------------------------------------------------------- scenarios ---

def default_curve(genus: int = 2) -> sk.HyperellipticCurve:
    if genus == 2:
        roots = [-2.1 + 0.3j, -1.2 - 0.5j, -0.2 + 0.4j, 0.7 - 0.3j, 1.6 + 0.5j, 2.4 - 0.2j]
    elif genus == 3:
        roots = [-2.9 + 0.2j, -2.0 - 0.4j, -1.1 + 0.5j, -0.3 - 0.3j, 0.6 + 0.4j, 1.4 - 0.5j, 2.2 + 0.3j,
                 3.0 - 0.2j]
    else:
        raise SovError("default curve available for genus 2 and 3 only")
    return sk.HyperellipticCurve(np.poly(roots)[::-1])


def default_basepoint(genus: int = 2) -> SurfacePoint:
    return SurfacePoint(0.1 + 2.0j, 1)


def default_context(genus: int = 2) -> SurfaceContext:
    return sk.build_context(default_curve(genus), default_basepoint(genus))


def default_reference(genus: int = 2) -> ReferenceData:
    P = SurfacePoint
    if genus == 2:
        return ReferenceData(
            Divisor.from_points([P(0.35 + 1.6j, 1), P(-1.4 - 1.4j, -1)]),
            Divisor.from_points([P(1.3 - 1.5j, 1), P(-0.6 + 2.2j, -1)]),
            P(2.6 + 1.2j, 1), 1, 0)
    if genus == 3:
        return ReferenceData(
            Divisor.from_points([P(0.4 + 1.7j, 1), P(-1.6 - 1.5j, -1), P(2.1 - 1.6j, 1), P(-2.4 + 1.4j, -1)]),
            Divisor.from_points([P(1.2 + 2.1j, -1), P(-0.5 - 2.2j, 1), P(3.1 + 1.1j, 1), P(-3.2 - 1.0j, -1)]),
            None, 0, -1)
    raise SovError("default reference available for genus 2 and 3 only")


def random_divisor(ctx: SurfaceContext, ref: ReferenceData, rng: np.random.Generator,
                   min_gap: float = 0.25) -> Divisor:
    centre = complex(np.mean(ctx.geometry.e))
    rad = 0.7 * ctx.geometry.scale + 0.6
    refs = ref.reference_points()
    while True:
        pts = []
        while len(pts) < ctx.genus:
            z = centre + rad * (rng.uniform(-1, 1) + 1j * rng.uniform(-1, 1))
            if sk.clearance(ctx, z)[0] < 0.15:
                continue
            if any(abs(z - a.base) < min_gap for a in pts + refs):
                continue
            pts.append(SurfacePoint(z, int(rng.choice([-1, 1]))))
        q = Divisor.from_points(pts)
        diag = mc.validate_reference(ctx, ref, q, cond_max=1e4)
        if diag.all_ok:
            return q


def _cnormal(rng: np.random.Generator, n: int) -> np.ndarray:
    return (rng.normal(size=n) + 1j * rng.normal(size=n)) / np.sqrt(2)


@dataclass(frozen=True)
class Scenario:
    ident: int
    point: DarbouxPoint
    ba: BAConfiguration
    higgs: hf.HiggsDifferential = field(repr=False)
    higgs_report: hf.HiggsReport = field(repr=False)


def random_darboux_point(ctx: SurfaceContext, ref: ReferenceData, rng: np.random.Generator,
                         x1_min: float = 0.3) -> DarbouxPoint:
    q = random_divisor(ctx, ref, rng)
    x = _cnormal(rng, ref.N)
    while abs(x[0]) < x1_min:
        x[0] = _cnormal(rng, 1)[0]
    k = _cnormal(rng, ref.N)
    k[0] = -np.dot(x[1:], k[1:]) / x[0]
    kappa = _cnormal(rng, ctx.genus)
    return DarbouxPoint(sk.abel_map(ctx, q), x, kappa, k, ref, q)


def make_scenario(ctx: SurfaceContext, ref: ReferenceData, seed: int, ident: int | None = None,
                  max_tries: int = 50) -> Scenario:
    """Random s-locus point with its Higgs differential and forward image, deterministic in seed."""
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        pt = random_darboux_point(ctx, ref, rng)
        try:
            ba, rep, _, _ = forward_details(ctx, ref, pt, second_route=False)
            if rep.min_zero_separation < 0.05:
                continue
            if min(sk.clearance(ctx, a.base)[0] for a in ba.u) < 0.02:
                continue
            higgs, hrep = hf.assemble_higgs(ctx, ref, pt.moduli_point(), pt.kappa, pt.k)
        except SovError:
            continue
        if hrep.solvability.residual > 1e-8 or not hrep.quadratic.nondegenerate:
            continue
        return Scenario(seed if ident is None else ident, pt, ba, higgs, hrep)
    raise SovError("degenerate configuration")


def scenario_from_point(ctx: SurfaceContext, ref: ReferenceData, pt: DarbouxPoint, ident: int = 0) -> Scenario:
    """Scenario for a user-supplied s-locus point; raises when the point is not a Higgs pull-back."""
    if pt.q is None:
        pt = replace(pt, q=resolve_q(ctx, pt))
    ba = sov_forward(ctx, ref, pt)
    higgs, hrep = hf.assemble_higgs(ctx, ref, pt.moduli_point(), pt.kappa, pt.k)
    return Scenario(ident, pt, ba, higgs, hrep)
