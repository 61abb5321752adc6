"""Finite-difference verification of brackets, symplectic maps, and the aggregate check suite."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from hitchin_sov import higgs_forms as hf
from hitchin_sov import moduli_charts as mc
from hitchin_sov import sov_engine as se
from hitchin_sov import special_forms as sf
from hitchin_sov import surface_kernel as sk
from hitchin_sov.errors import SovError
from hitchin_sov.surface_kernel import Divisor, SurfaceContext, SurfacePoint

DEFAULT_TOLERANCES = {
    "symmetry": 1e-9,
    "a_normalization": 1e-8,
    "quasi_periodicity": 1e-9,
    "build_seconds": 60.0,
    "prime_antisymmetry": 1e-10,
    "prime_diagonal": 1e-5,
    "monodromy": 1e-6,
    "monodromy_violation": 1e-2,
    "divisor_locus": 1e-6,
    "residue_sum": 1e-7,
    "residue_relation": 1e-7,
    "laurent": 1e-6,
    "moment": 1e-9,
    "roundtrip": 1e-6,
    "cover": 1e-9,
    "divisor_class": 1e-6,
    "divisor_class_perturbed": 1e-3,
    "cstar": 1e-9,
    "brackets": 1e-4,
    "transport": 1e-4,
    "reduction": 1e-6,
    "sov_symplectic": 1e-4,
}


# ------------------------------------------------------------ forms ---

def canonical_form(n_pairs: int) -> np.ndarray:
    """Matrix of sum dq_i ^ dp_i in the ordering (q_1..q_n, p_1..p_n)."""
    eye = np.eye(n_pairs)
    zero = np.zeros((n_pairs, n_pairs))
    return np.block([[zero, eye], [-eye, zero]])


def darboux_form(g: int, n: int) -> np.ndarray:
    """sum dlambda ^ dkappa + sum dx ^ dk in the ordering (lambda, x, kappa, k)."""
    return canonical_form(g + n)


def fd_jacobian(fmap, point, step: float, order: int = 2) -> np.ndarray:
    """Central-difference holomorphic Jacobian along ``step`` in each coordinate (order 2 or 4)."""
    point = np.asarray(point, dtype=complex)
    cols = []
    for j in range(len(point)):
        e = np.zeros(len(point), dtype=complex)
        e[j] = step
        d1 = np.asarray(fmap(point + e)) - np.asarray(fmap(point - e))
        if order == 2:
            cols.append(d1 / (2 * step))
        elif order == 4:
            d2 = np.asarray(fmap(point + 2 * e)) - np.asarray(fmap(point - 2 * e))
            cols.append((8 * d1 - d2) / (12 * step))
        else:
            raise SovError("finite-difference order must be 2 or 4")
    return np.array(cols).T


def symplectic_jacobian_check(fmap, point, fd_step: float, omega_target: np.ndarray,
                              omega_source: np.ndarray, cond_max: float = 1e12, order: int = 4) -> float:
    """max |J^T omega_target J - omega_source| with J the finite-difference Jacobian of fmap."""
    jac = fd_jacobian(fmap, point, fd_step, order)
    if jac.shape[0] == jac.shape[1]:
        if not np.all(np.isfinite(jac)) or np.linalg.cond(jac) > cond_max:
            raise SovError("map degenerate at point")
    return float(np.max(np.abs(jac.T @ omega_target @ jac - omega_source)))


# -------------------------------------------------- tracked (u, v) values ---

class _Tracker:
    """Evaluates (u, v) at nearby Darboux points with labels matched to a base configuration."""

    def __init__(self, ctx: SurfaceContext, ref, pt: se.DarbouxPoint, fd_step: float):
        self.ctx, self.ref, self.base_pt = ctx, ref, pt
        self.base = se.sov_forward(ctx, ref, pt, enforce_moment=False)
        u = self.base.u
        sep = min((abs(a.base - b.base) for i, a in enumerate(u) for b in u[i + 1:]), default=np.inf)
        if sep < 10 * fd_step:
            raise SovError("labels unresolvable at this step")
        self.sep = sep

    def __call__(self, vec) -> np.ndarray:
        pt = self.base_pt.with_flat(vec)
        ba = se.sov_forward(self.ctx, self.ref, pt, enforce_moment=False)
        return self.match(ba)

    def match(self, ba: se.BAConfiguration) -> np.ndarray:
        m = self.base.m
        cost = np.array([[a.distance(b) if np.isfinite(a.distance(b)) else 1e300 for b in ba.u]
                         for a in self.base.u])
        rows, cols = linear_sum_assignment(cost)
        if cost[rows, cols].max() > 0.25 * self.sep:
            raise SovError("labels unresolvable at this step")
        order = cols[np.argsort(rows)]
        u = np.array([ba.u[j].base for j in order])
        v = ba.v[order]
        return np.concatenate([u, v])


@dataclass(frozen=True)
class BracketReport:
    uu: np.ndarray
    uv: np.ndarray
    vv: np.ndarray
    fd_step: float
    max_deviation: float
    cr_residual: float
    antisymmetry: float = 0.0


def uv_gradients(ctx, ref, pt: se.DarbouxPoint, fd_step: float, cauchy_riemann: bool = True):
    tracker = _Tracker(ctx, ref, pt, fd_step)
    base = pt.flat()
    grad = fd_jacobian(tracker, base, fd_step)
    cr = 0.0
    if cauchy_riemann:
        grad_i = fd_jacobian(lambda v: tracker(v), base, 1j * fd_step)
        cr = float(np.max(np.abs(grad - grad_i)) / max(1.0, float(np.max(np.abs(grad)))))
    return grad, cr, tracker


def fd_poisson_brackets(ctx: SurfaceContext, ref, pt: se.DarbouxPoint, fd_step: float = 1e-5,
                        cauchy_riemann: bool = True, gradients=None) -> BracketReport:
    """Brackets of tracked u_n, v_n under the canonical Poisson tensor on (lambda, x, kappa, k)."""
    if gradients is None:
        grad, cr, _ = uv_gradients(ctx, ref, pt, fd_step, cauchy_riemann)
    else:
        grad, cr = gradients
    g, n = ctx.genus, ref.N
    omega = darboux_form(g, n)
    poisson = -np.linalg.inv(omega)  # {F, G} = dF . P . dG
    br = grad @ poisson @ grad.T
    m = grad.shape[0] // 2
    uu, uv, vv = br[:m, :m], br[:m, m:], br[m:, m:]
    dev = max(float(np.max(np.abs(uu))), float(np.max(np.abs(uv - np.eye(m)))), float(np.max(np.abs(vv))))
    anti = float(np.max(np.abs(br + br.T)))
    return BracketReport(uu, uv, vv, fd_step, dev, cr, anti)


@dataclass(frozen=True)
class HalvingReport:
    steps: tuple
    deviations: tuple
    ratios: tuple
    floor: float

    @property
    def converging(self) -> bool:
        """Each halving lowers the deviation unless both values sit at the roundoff floor."""
        return all(b < a or max(a, b) < self.floor for a, b in zip(self.deviations, self.deviations[1:]))


def step_halving_report(ctx, ref, pt: se.DarbouxPoint, start: float = 1e-4, levels: int = 2,
                        floor: float = 1e-7) -> HalvingReport:
    steps = tuple(start / 2 ** i for i in range(levels))
    devs = tuple(fd_poisson_brackets(ctx, ref, pt, h, cauchy_riemann=False).max_deviation for h in steps)
    ratios = tuple(a / b if b > 0 else np.inf for a, b in zip(devs, devs[1:]))
    return HalvingReport(steps, devs, ratios, floor)


# ---------------------------------------------------- transport identity ---

def _lam_k_after_moving(ctx, ref, pt: se.DarbouxPoint, ba: se.BAConfiguration, n: int, du: complex):
    """(lambda, k) of the configuration with u_n moved by du, k_1 held fixed."""
    u = list(ba.u)
    moved = sk.move_point(ctx, u[n], du)
    lam = np.asarray(pt.lam) - 0.5 * (sk.abel_map(ctx, moved) - sk.abel_map(ctx, u[n]))
    u[n] = moved
    q = mc.q_of_lambda(ctx, ref, lam, pt.q)
    space = sf.bounded_space(ctx, ref.r_divisor, q.scaled(2) + Divisor.from_points(u))
    if space.dim != 1:
        raise SovError("non-generic BA data or reference divisor")
    vals = np.array([space.basis[0](p) for p in ref.p_points])
    k = vals * (pt.k[0] / vals[0])
    return sk.abel_map(ctx, q), k


BUILTIN_F = {
    "u_1": None,
    "lambda_1": lambda lam, k: lam[0],
    "k1k2": lambda lam, k: k[0] * k[1],
}


def transport_identity_check(ctx: SurfaceContext, ref, pt: se.DarbouxPoint, F="lambda_1", fd_step: float = 1e-5,
                             gradients=None) -> float:
    """max_n |dF/du_n + {v_n, F}| for F = F(lambda, k), both sides by finite differences.

    ``F`` is a built-in name ("u_1", "lambda_1", "k1k2") or a callable F(lam, k).
    ``gradients`` may carry (grad, tracker) from an earlier ``uv_gradients`` call at the same step.
    """
    if gradients is None:
        grad, _, tracker = uv_gradients(ctx, ref, pt, fd_step, cauchy_riemann=False)
    else:
        grad, tracker = gradients
    g, n = ctx.genus, ref.N
    m = tracker.base.m
    ba = tracker.base
    if F == "u_1":
        lhs = np.eye(m)[0]
        gradF = grad[0]
    else:
        func = BUILTIN_F[F] if isinstance(F, str) else F

        def Fvec(vec):
            lam, k = vec[:g], vec[2 * g + n:]
            return np.array([func(lam, k)])

        gradF = fd_jacobian(Fvec, pt.flat(), fd_step)[0]
        lhs = np.zeros(m, dtype=complex)
        for j in range(m):
            lp, kp = _lam_k_after_moving(ctx, ref, pt, ba, j, fd_step)
            lm, km = _lam_k_after_moving(ctx, ref, pt, ba, j, -fd_step)
            lhs[j] = (func(lp, kp) - func(lm, km)) / (2 * fd_step)
    poisson = -np.linalg.inv(darboux_form(g, n))
    rhs = np.array([grad[m + j] @ poisson @ gradF for j in range(m)])
    scale = max(1.0, float(np.max(np.abs(lhs))))
    return float(np.max(np.abs(lhs + rhs)) / scale)


# -------------------------------------------------------- symplectic maps ---

def _embedding(g: int, n: int):
    """(lambda, x, kappa, k') -> (lambda, x, kappa, k) with k_1 = -x_1^-1 sum x_r k_r."""
    def embed(zeta):
        lam, x, kappa, kp = zeta[:g], zeta[g:g + n], zeta[g + n:2 * g + n], zeta[2 * g + n:]
        k1 = -np.dot(x[1:], kp) / x[0]
        return np.concatenate([lam, x, kappa, [k1], kp])
    return embed


def reduction_check(pt: se.DarbouxPoint, fd_step: float = 1e-5) -> tuple[float, float]:
    """Pullback residual of the reduction map, and |H| of the lift of its image."""
    g, n = len(pt.lam), len(pt.x)
    embed = _embedding(g, n)
    zeta = np.concatenate([pt.lam, pt.x, pt.kappa, pt.k[1:]]).astype(complex)
    dembed = fd_jacobian(embed, zeta, fd_step, order=4)
    omega_source = dembed.T @ darboux_form(g, n) @ dembed

    def fmap(z):
        full = embed(z)
        rp = se.reduce(pt.with_flat(full))
        return np.concatenate([rp.lam, rp.y, rp.kappa, rp.y_check])

    resid = symplectic_jacobian_check(fmap, zeta, fd_step, canonical_form(g + n - 1), omega_source)
    lifted = se.lift(se.reduce(pt))
    return resid, abs(lifted.moment)


def sov_symplectic_check(ctx: SurfaceContext, ref, pt: se.DarbouxPoint, fd_step: float = 1e-5) -> float:
    """Pullback of sum du ^ dv through reduced coordinates -> lift -> SoV, compared with the reduced form."""
    g, n = ctx.genus, ref.N
    rp = se.reduce(pt)
    base_pt = se.lift(rp)
    tracker = _Tracker(ctx, ref, base_pt, fd_step)

    def fmap(z):
        r = se.ReducedPoint(z[:g], z[g:g + n - 1], z[g + n - 1:2 * g + n - 1], z[2 * g + n - 1:], ref, pt.q)
        ba = se.sov_forward(ctx, ref, se.lift(r))
        return tracker.match(ba)

    zeta = np.concatenate([rp.lam, rp.y, rp.kappa, rp.y_check]).astype(complex)
    m = ref.m
    return symplectic_jacobian_check(fmap, zeta, fd_step, canonical_form(m), canonical_form(g + n - 1))


# ---------------------------------------------------------- check records ---

@dataclass
class CheckRecord:
    scenario_id: int
    check_name: str
    residual: float
    tolerance: float
    passed: bool
    witness: dict = field(default_factory=dict)
    greater: bool = False

    def as_dict(self) -> dict:
        return {"scenario_id": self.scenario_id, "check_name": self.check_name,
                "residual": float(self.residual), "tolerance": float(self.tolerance),
                "bound": "lower" if self.greater else "upper",
                "pass": bool(self.passed), "witness": self.witness}


def _rec(sid, name, residual, tol, witness=None, greater=False) -> CheckRecord:
    residual = float(residual)
    ok = residual > tol if greater else residual < tol
    if not math.isfinite(residual):
        ok = False
    return CheckRecord(sid, name, residual, tol, bool(ok), witness or {}, greater)


def _random_points(ctx: SurfaceContext, rng: np.random.Generator, n: int, avoid=(), clearance: float = 0.1):
    centre = complex(np.mean(ctx.geometry.e))
    rad = 0.7 * ctx.geometry.scale + 0.6
    out = []
    while len(out) < n:
        z = centre + rad * (rng.uniform(-1, 1) + 1j * rng.uniform(-1, 1))
        if sk.clearance(ctx, z)[0] < clearance or any(abs(z - a.base) < 0.2 for a in list(avoid) + out):
            continue
        out.append(SurfacePoint(z, int(rng.choice([-1, 1]))))
    return out


def check_periods(ctx: SurfaceContext, tol: dict, build_seconds: float, sid: int = 0) -> list[CheckRecord]:
    """Symmetry, positivity and normalization of the periods; the build-time record is 0/1 so reports stay deterministic."""
    g = ctx.genus
    sym = float(np.max(np.abs(ctx.B - ctx.B.T)))
    eig = float(np.min(np.linalg.eigvalsh(0.5 * (ctx.Y + ctx.Y.T))))
    norm_err = 0.0
    for k in range(g):
        val, _ = sk.cycle_integral(ctx, k)
        norm_err = max(norm_err, float(np.max(np.abs(val - np.eye(g)[k]))))
    b_err = 0.0
    for k in range(g, 2 * g):
        val, _ = sk.cycle_integral(ctx, k)
        b_err = max(b_err, float(np.max(np.abs(val - sk.cycle_lattice_vector(ctx, k)))))
    return [
        _rec(sid, "periods.symmetry", sym, tol["symmetry"]),
        _rec(sid, "periods.imag_positive", eig, 0.0, {"min_eigenvalue": eig}, greater=True),
        _rec(sid, "periods.a_normalization", norm_err, tol["a_normalization"]),
        _rec(sid, "periods.b_consistency", b_err, tol["a_normalization"]),
        _rec(sid, "periods.build_time_exceeded", float(build_seconds >= tol["build_seconds"]), 0.5,
             {"limit_seconds": tol["build_seconds"]}),
    ]


def check_theta(ctx: SurfaceContext, tol: dict, rng: np.random.Generator, sid: int = 0, count: int = 8):
    g = ctx.genus
    worst = 0.0
    for _ in range(count):
        z = 0.5 * (rng.normal(size=g) + 1j * rng.normal(size=g))
        t0 = sk.theta(ctx, z)
        for k in range(g):
            e = np.eye(g)[k]
            worst = max(worst, abs(sk.theta(ctx, z + e) - t0) / abs(t0))
            shifted = sk.theta(ctx, z + ctx.B @ e)
            expected = np.exp(-1j * np.pi * ctx.B[k, k] - 2j * np.pi * z[k]) * t0
            worst = max(worst, abs(shifted - expected) / abs(expected))
    return [_rec(sid, "theta.quasi_periodicity", worst, tol["quasi_periodicity"])]


def check_prime_form(ctx: SurfaceContext, tol: dict, rng: np.random.Generator, sid: int = 0, count: int = 1000):
    anti = 0.0
    diag = 0.0
    zero = 0.0
    for _ in range(count):
        a, b = _random_points(ctx, rng, 2)
        e_ab = sf.prime_form(ctx, a, b)
        e_ba = sf.prime_form(ctx, b, a)
        anti = max(anti, abs(e_ab + e_ba) / max(abs(e_ab), 1e-300))
        zero = max(zero, abs(sf.prime_form(ctx, a, a)))
        d = 1e-4 * np.exp(2j * np.pi * rng.uniform())
        c = SurfacePoint(a.base + d, a.sheet)
        diag = max(diag, abs(sf.prime_form(ctx, c, a) / d - 1))
    return [
        _rec(sid, "prime_form.diagonal_zero", zero, 1e-14, {"pairs": count}),
        _rec(sid, "prime_form.antisymmetry", anti, tol["prime_antisymmetry"], {"pairs": count}),
        _rec(sid, "prime_form.local_limit", diag, tol["prime_diagonal"], {"pairs": count}),
    ]


def random_divisor_data(ctx: SurfaceContext, rng: np.random.Generator, violate: bool = False):
    """(u, v, q, q') with deg u = deg v + 2g - 2 satisfying the class condition (or violating it by a half period)."""
    g = ctx.genus
    for _ in range(50):
        pts = _random_points(ctx, rng, 2 * g - 1 + 1 + g, clearance=0.15)
        u = Divisor.from_points(pts[:2 * g - 1])
        v = Divisor.from_points(pts[2 * g - 1:2 * g])
        qp = Divisor.from_points(pts[2 * g:])
        target = 2 * ctx.K_vector - sk.abel_map(ctx, u) + sk.abel_map(ctx, v) + sk.abel_map(ctx, qp)
        if violate:
            target = target + 0.5 * np.eye(g)[0]
        try:
            q = se.jacobi_solve(ctx, target)
        except SovError:
            continue
        allp = pts + q.expanded()
        if min(a.distance(b) for i, a in enumerate(allp) for b in allp[i + 1:]) < 0.05:
            continue
        if min(float(sk.clearance(ctx, a.base)[0]) for a in q.expanded()) < 0.05:
            continue
        return u, v, q, qp
    raise SovError("degenerate configuration")


def check_differentials(ctx: SurfaceContext, tol: dict, rng: np.random.Generator, sid: int = 0, count: int = 20):
    g = ctx.genus
    worst_mono = 0.0
    worst_locus = 0.0
    worst_res = 0.0
    worst_violation = np.inf
    for _ in range(count):
        u, v, q, qp = random_divisor_data(ctx, rng)
        d = sf.differential_from_divisor_data(ctx, u, v, q, qp)
        for c in range(2 * g):
            worst_mono = max(worst_mono, sf.monodromy_check(ctx, d, c))
        # rational differential with the same divisor: one-dimensional, proportional
        space = sf.bounded_space(ctx, v + qp, u + q)
        if space.dim != 1:
            worst_locus = max(worst_locus, 1.0)
            continue
        rat = space.basis[0]
        probe = _random_points(ctx, rng, 4, avoid=u.points + v.points + q.points + qp.points)
        ratios = np.array([d(p) / rat(p) for p in probe])
        worst_locus = max(worst_locus, float(np.max(np.abs(ratios / ratios[0] - 1))))
        zeros = [z for z, _ in sf.surface_zeros(rat)]
        for target in u.points + q.points:
            dist = min((target.distance(z) for z in zeros), default=np.inf)
            worst_locus = max(worst_locus, dist)
        rsum = 0j
        rscale = 0.0
        for p in v.points + qp.points:
            rad = sf.safe_radius(ctx, p, v.points + qp.points + u.points + q.points)
            co = sf.laurent_coefficients(d.values, p, rad, orders=[-2, -1], n=96)
            rsum += co[-1]
            rscale = max(rscale, abs(co[-1]))
            worst_locus = max(worst_locus, abs(co[-2]) / max(abs(co[-1]) * rad, 1e-300) * rad)
        worst_res = max(worst_res, abs(rsum) / max(rscale, 1e-300))
        ub, vb, qb, qpb = random_divisor_data(ctx, rng, violate=True)
        bad = sf.differential_from_divisor_data(ctx, ub, vb, qb, qpb, enforce=False)
        worst_violation = min(worst_violation, max(sf.monodromy_check(ctx, bad, c) for c in range(2 * g)))
    return [
        _rec(sid, "differentials.monodromy", worst_mono, tol["monodromy"], {"samples": count}),
        _rec(sid, "differentials.divisor_locus", worst_locus, tol["divisor_locus"]),
        _rec(sid, "differentials.residue_sum", worst_res, tol["residue_sum"]),
        _rec(sid, "differentials.violation_detected", worst_violation, tol["monodromy_violation"], greater=True),
    ]


def check_higgs(ctx: SurfaceContext, ref, sc: se.Scenario, tol: dict) -> list[CheckRecord]:
    sid = sc.ident
    rep = sc.higgs_report
    dim = sf.bounded_space(ctx, ref.r_divisor, sc.point.q.scaled(2)).dim
    null_expected = ctx.genus - 1 - ref.s_d
    return [
        _rec(sid, "higgs.phi_plus_dimension", abs(dim - ref.N), 0.5, {"dim": dim, "N": ref.N}),
        _rec(sid, "higgs.residue_relation", rep.residue_error, tol["residue_relation"]),
        _rec(sid, "higgs.quadratic_holomorphic", rep.laurent_residual, tol["laurent"]),
        _rec(sid, "higgs.null_dimension", abs(rep.solvability.null_dim - null_expected), 0.5,
             {"null_dim": rep.solvability.null_dim, "expected": null_expected}),
        _rec(sid, "higgs.moment_map", abs(sc.point.moment), tol["moment"]),
    ]


def check_sov(ctx: SurfaceContext, ref, sc: se.Scenario, tol: dict, choices: int = 4) -> list[CheckRecord]:
    sid = sc.ident
    pt, ba = sc.point, sc.ba
    qd = sc.higgs_report.quadratic
    choice = se.find_sqrt_choice(ctx, ref, ba.u, pt.q)
    back, _, irep = se.sov_inverse(ctx, ref, ba, qd, choice, k1=pt.k[0], guess=pt.q)
    rt = se.darboux_distance(ctx, pt, back)
    n_choices = len(se.square_root_bundles(ctx))
    others = [c for c in range(n_choices) if c != choice][:: max(1, (n_choices - 1) // choices)][:choices]
    cover = 0.0
    lam_gap = np.inf
    for c in others:
        alt, _, _ = se.sov_inverse(ctx, ref, ba, qd, c)
        cover = max(cover, se.sov_forward(ctx, ref, alt).distance(ba))
        lam_gap = min(lam_gap, sk.lattice_distance(ctx, alt.lam - pt.lam))
    cls = se.divisor_class_check(ctx, ref, ba, pt.q)
    # move the u_i where z is a good local coordinate (largest holomorphic forms)
    idx = int(np.argmax([np.linalg.norm(sk.point_forms(ctx, a)) for a in ba.u]))
    moved = list(ba.points)
    moved[idx] = (sk.move_point(ctx, moved[idx][0], 0.1), moved[idx][1])
    cls_bad = se.divisor_class_check(ctx, ref, se.BAConfiguration(tuple(moved), ba.u0), pt.q)
    cst = 0.0
    for eps in (2 + 1j, -0.3, 10.0):
        cst = max(cst, se.sov_forward(ctx, ref, se.cstar_act(eps, pt)).distance(ba))
    return [
        _rec(sid, "sov.roundtrip", rt, tol["roundtrip"], {"sqrt_choice": choice}),
        _rec(sid, "sov.cover_same_image", cover, tol["cover"], {"choices": others, "min_lambda_gap": lam_gap}),
        _rec(sid, "sov.divisor_class", cls, tol["divisor_class"]),
        _rec(sid, "sov.divisor_class_perturbed", cls_bad, tol["divisor_class_perturbed"], {"moved_index": idx},
             greater=True),
        _rec(sid, "sov.cstar_invariance", cst, tol["cstar"]),
    ]


def check_brackets(ctx: SurfaceContext, ref, sc: se.Scenario, tol: dict, fd_step: float = 1e-5):
    sid = sc.ident
    grad, cr, tracker = uv_gradients(ctx, ref, sc.point, fd_step)
    rep = fd_poisson_brackets(ctx, ref, sc.point, fd_step, gradients=(grad, cr))
    halving = step_halving_report(ctx, ref, sc.point)
    transport = {F: transport_identity_check(ctx, ref, sc.point, F, fd_step, gradients=(grad, tracker))
             for F in ("u_1", "lambda_1", "k1k2")}
    worst_ratio = min(halving.ratios)
    return [
        _rec(sid, "brackets.canonical", rep.max_deviation, tol["brackets"],
             {"cauchy_riemann": rep.cr_residual, "antisymmetry": rep.antisymmetry}),
        _rec(sid, "brackets.step_halving", 0.0 if halving.converging else 1.0, 0.5,
             {"steps": list(halving.steps), "deviations": list(halving.deviations), "min_ratio": worst_ratio}),
        _rec(sid, "brackets.transport_identity", max(transport.values()), tol["transport"], transport),
    ]


def check_symplectic(ctx: SurfaceContext, ref, sc: se.Scenario, tol: dict, fd_step: float = 1e-5):
    sid = sc.ident
    red, h = reduction_check(sc.point, fd_step)
    sov = sov_symplectic_check(ctx, ref, sc.point, fd_step)
    return [
        _rec(sid, "symplectic.reduction", red, tol["reduction"]),
        _rec(sid, "symplectic.lift_moment", h, 1e-14),
        _rec(sid, "symplectic.sov_map", sov, tol["sov_symplectic"]),
    ]


# ---------------------------------------------------------------- suite ---

SUITES = ("periods", "theta", "prime-form", "differentials", "higgs", "brackets", "symplectic")


@dataclass(frozen=True)
class SuiteConfig:
    genus: int = 2
    f_coeffs: tuple | None = None
    basepoint: tuple | None = None
    reference: object | None = None
    suites: tuple = SUITES
    scenario_seeds: tuple = tuple(range(50))
    fd_scenarios: int = 20
    points: tuple = ()
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    fd_step: float = 1e-5
    prime_pairs: int = 1000
    differential_samples: int = 20


def _build(cfg: SuiteConfig):
    t0 = time.perf_counter()
    if cfg.f_coeffs is None:
        curve = se.default_curve(cfg.genus)
    else:
        curve = sk.HyperellipticCurve(np.asarray(cfg.f_coeffs, dtype=complex))
    base = se.default_basepoint(cfg.genus) if cfg.basepoint is None else SurfacePoint(*cfg.basepoint)
    ctx = sk.build_context(curve, base)
    elapsed = time.perf_counter() - t0
    ref = cfg.reference if cfg.reference is not None else se.default_reference(ctx.genus)
    return ctx, ref, elapsed


def _scenario_task(args):
    cfg, seed = args
    ctx, ref, _ = _build(cfg)
    tol = {**DEFAULT_TOLERANCES, **cfg.tolerances}
    out = []
    try:
        if cfg.points:
            sc = se.scenario_from_point(ctx, ref, cfg.points[seed], seed)
        else:
            sc = se.make_scenario(ctx, ref, seed)
    except SovError as exc:
        return [_rec(seed, "scenario.construct", np.inf, 0.0, {"error": str(exc)}).as_dict()]
    runners = {
        "higgs": lambda: check_higgs(ctx, ref, sc, tol) + check_sov(ctx, ref, sc, tol),
        "brackets": lambda: check_brackets(ctx, ref, sc, tol, cfg.fd_step),
        "symplectic": lambda: check_symplectic(ctx, ref, sc, tol, cfg.fd_step),
    }
    ids = tuple(range(len(cfg.points))) if cfg.points else cfg.scenario_seeds
    fd_allowed = seed in ids[:cfg.fd_scenarios]
    for name in ("higgs", "brackets", "symplectic"):
        if name in cfg.suites and (name == "higgs" or fd_allowed):
            try:
                out.extend(r.as_dict() for r in runners[name]())
            except SovError as exc:
                out.append(_rec(seed, f"{name}.error", np.inf, 0.0, {"error": str(exc)}).as_dict())
    return out


def _global_task(args):
    cfg, name = args
    ctx, _, elapsed = _build(cfg)
    tol = {**DEFAULT_TOLERANCES, **cfg.tolerances}
    rng = np.random.default_rng([cfg.seed, SUITES.index(name)])
    try:
        if name == "periods":
            recs = check_periods(ctx, tol, elapsed)
        elif name == "theta":
            recs = check_theta(ctx, tol, rng)
        elif name == "prime-form":
            recs = check_prime_form(ctx, tol, rng, count=cfg.prime_pairs)
        elif name == "differentials":
            recs = check_differentials(ctx, tol, rng, count=cfg.differential_samples)
        else:
            recs = []
    except SovError as exc:
        recs = [_rec(0, f"{name}.error", np.inf, 0.0, {"error": str(exc)})]
    return [r.as_dict() for r in recs]


def run_suite(cfg: SuiteConfig, workers: int = 1) -> dict:
    """Run the selected checks; the report is deterministic for a fixed configuration."""
    global_names = [s for s in cfg.suites if s in ("periods", "theta", "prime-form", "differentials")]
    scenario_needed = any(s in cfg.suites for s in ("higgs", "brackets", "symplectic"))
    tasks_g = [(cfg, n) for n in global_names]
    ids = tuple(range(len(cfg.points))) if cfg.points else cfg.scenario_seeds
    tasks_s = [(cfg, s) for s in ids] if scenario_needed else []
    records = []
    if workers > 1 and len(tasks_g) + len(tasks_s) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for res in pool.map(_global_task, tasks_g):
                records.extend(res)
            for res in pool.map(_scenario_task, tasks_s):
                records.extend(res)
    else:
        for t in tasks_g:
            records.extend(_global_task(t))
        for t in tasks_s:
            records.extend(_scenario_task(t))
    records.sort(key=lambda r: (r["scenario_id"], r["check_name"]))
    failures = [r for r in records if not r["pass"]]
    worst = {}
    for r in records:
        key = r["check_name"]
        lower = r["bound"] == "lower"
        if key not in worst or (r["residual"] < worst[key]["residual"] if lower
                                else r["residual"] > worst[key]["residual"]):
            worst[key] = {"scenario_id": r["scenario_id"], "residual": r["residual"]}
    return {"checks": records, "pass": not failures, "failures": len(failures), "worst": worst}
