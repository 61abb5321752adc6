"""Reference divisors, Abel coordinates of the subbundle divisor and transition data."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from hitchin_sov import special_forms as sf
from hitchin_sov import surface_kernel as sk
from hitchin_sov.errors import SovError
from hitchin_sov.surface_kernel import Divisor, SurfaceContext, SurfacePoint


@dataclass(frozen=True)
class ReferenceData:
    """Fixed divisors p, q_check and optional q_check_0.

    The local coordinate at each reference point is z - z(point), times the
    optional per-point factor in ``charts``.
    """

    p: Divisor
    q_check: Divisor
    q_check_0: SurfacePoint | None
    Lambda_degree: int
    d: int
    charts: tuple = ()

    def __post_init__(self):
        if self.Lambda_degree not in (0, 1):
            raise SovError("Lambda degree must be 0 or 1")
        if (self.q_check_0 is not None) != (self.Lambda_degree == 1):
            raise SovError("q_check_0 must be present exactly when deg Lambda = 1")
        if not (0 < self.s_d <= self.genus - 1):
            raise SovError("s_d outside (0, g-1]")
        if self.p.degree != self.N:
            raise SovError("reference divisor p has wrong degree")

    @property
    def genus(self) -> int:
        return self.q_check.degree + self.d

    @property
    def s_d(self) -> int:
        return self.Lambda_degree - 2 * self.d

    @property
    def N(self) -> int:
        return self.genus - 1 + self.s_d

    @property
    def m(self) -> int:
        return 2 * self.genus - 2 + self.s_d

    @property
    def p_points(self) -> list[SurfacePoint]:
        return self.p.expanded()

    @property
    def r_divisor(self) -> Divisor:
        """2 q_check + deg(Lambda) q_check_0, the pole bound of phi_plus."""
        out = self.q_check.scaled(2)
        if self.q_check_0 is not None:
            out = out + Divisor(((self.q_check_0, 1),))
        return out

    def reference_points(self) -> list[SurfacePoint]:
        pts = self.p_points + self.q_check.expanded()
        if self.q_check_0 is not None:
            pts.append(self.q_check_0)
        return pts


@dataclass(frozen=True)
class ModuliPoint:
    q: Divisor
    x: np.ndarray
    lam: np.ndarray

    @classmethod
    def from_divisor(cls, ctx: SurfaceContext, q: Divisor, x) -> ModuliPoint:
        return cls(q, np.asarray(x, dtype=complex), sk.abel_map(ctx, q))


@dataclass(frozen=True)
class ReferenceDiagnostics:
    span_ok: bool
    span_condition: float
    nonspecial_ok: bool
    nonspecial_condition: float
    separation_ok: bool
    min_separation: float

    @property
    def all_ok(self) -> bool:
        return self.span_ok and self.nonspecial_ok and self.separation_ok


def _min_separation(points: list[SurfacePoint]) -> float:
    best = np.inf
    for i, a in enumerate(points):
        for b in points[i + 1:]:
            best = min(best, a.distance(b))
    return float(best)


def _condition(mat: np.ndarray) -> float:
    if mat.size == 0:
        return 1.0
    s = np.linalg.svd(mat, compute_uv=False)
    return float(s[0] / s[-1]) if s[-1] > 0 else np.inf


def validate_reference(ctx: SurfaceContext, ref: ReferenceData, q: Divisor, cond_max: float = 1e8,
                       min_sep: float = 1e-6) -> ReferenceDiagnostics:
    """Span, non-speciality and multiplicity-freeness diagnostics."""
    pts = ref.reference_points() + q.expanded()
    sep = _min_separation(pts)
    sep_ok = sep > min_sep and all(m == 1 for _, m in q.entries)
    dA = sf.abel_jacobian(ctx, q.expanded())
    ns_cond = _condition(dA)
    try:
        space = sf.bounded_space(ctx, ref.r_divisor, q.scaled(2))
        ev = np.array([[b(p) for b in space.basis] for p in ref.p_points])
        span_cond = _condition(ev) if ev.shape == (ref.N, ref.N) else np.inf
    except (SovError, np.linalg.LinAlgError, ZeroDivisionError, FloatingPointError):
        span_cond = np.inf
    return ReferenceDiagnostics(
        span_ok=span_cond < cond_max and sep_ok, span_condition=span_cond,
        nonspecial_ok=ns_cond < cond_max and sep_ok, nonspecial_condition=ns_cond,
        separation_ok=sep_ok, min_separation=sep)


def lambda_of_q(ctx: SurfaceContext, ref: ReferenceData | None, q: Divisor) -> np.ndarray:
    """Abel coordinates of q."""
    return sk.abel_map(ctx, q)


class _PointChart:
    """Local coordinate for Newton moves: z, sqrt(z - e) near a branch point, or 1/z far out."""

    def __init__(self, ctx: SurfaceContext, point: SurfacePoint):
        geo = ctx.geometry
        self.ctx = ctx
        self.point = point
        self.y = point.sheet * complex(geo.y_can(point.base))
        gaps = np.abs(geo.e[:, None] - geo.e[None, :])
        np.fill_diagonal(gaps, np.inf)
        self.radius = 0.25 * float(gaps.min())
        dist = np.abs(geo.e - point.base)
        i = int(np.argmin(dist))
        self.far = 2.0 * geo.scale + float(np.max(np.abs(geo.e)))
        if dist[i] < self.radius:
            self.kind, self.e = "branch", geo.e[i]
            self.t = np.sqrt(point.base - self.e)
        elif abs(point.base) > self.far and not ctx.curve.is_odd:
            self.kind = "infinity"
        else:
            self.kind = "plain"

    def dz_dparam(self) -> complex:
        z = self.point.base
        if self.kind == "branch":
            return 2 * self.t
        if self.kind == "infinity":
            return -z * z
        return 1.0

    def max_step(self) -> float:
        if self.kind == "branch":
            return 0.5 * np.sqrt(self.radius)
        if self.kind == "infinity":
            return 0.3 / abs(self.point.base)
        return 0.5 * float(np.min(np.abs(self.ctx.geometry.e - self.point.base)))

    def moved(self, step: complex) -> SurfacePoint:
        ctx = self.ctx
        z = self.point.base
        if self.kind == "plain":
            return sk.move_point(ctx, self.point, step)
        if self.kind == "branch":
            t_new = self.t + step
            z_new = self.e + t_new * t_new
            predicted = self.y * t_new / self.t
        else:
            w_new = 1 / z + step
            z_new = 1 / w_new
            predicted = self.y * (z_new / z) ** (ctx.genus + 1)
        yc = complex(ctx.geometry.y_can(z_new))
        sheet = 1 if abs(yc - predicted) <= abs(yc + predicted) else -1
        return SurfacePoint(complex(z_new), sheet)


def jacobi_inversion(ctx: SurfaceContext, target, guess: list[SurfacePoint], max_iter: int = 80,
                     tol: float = 1e-13) -> list[SurfacePoint]:
    """Newton iteration for sum A(q_i) = target modulo the period lattice."""
    pts = list(guess)
    target = np.asarray(target, dtype=complex)

    def residual(points):
        return sk.lattice_reduce(ctx, sum(sk.abel_map(ctx, p) for p in points) - target)[0]

    try:
        res = residual(pts)
    except SovError as exc:
        raise SovError("Jacobi inversion failed: guess out of basin") from exc
    for _ in range(max_iter):
        err = float(np.max(np.abs(res)))
        if err < tol:
            return pts
        charts = [_PointChart(ctx, p) for p in pts]
        jac = np.array([sk.point_forms(ctx, p) * c.dz_dparam() for p, c in zip(pts, charts)]).T
        if _condition(jac) > 1e12:
            break
        step = -np.linalg.solve(jac, res)
        limits = np.array([c.max_step() for c in charts])
        lam = min(1.0, float(np.min(limits / (np.abs(step) + 1e-300))))
        accepted = False
        while lam > 1e-4:
            try:
                trial = [c.moved(complex(lam * h)) for c, h in zip(charts, step)]
                new_res = residual(trial)
            except SovError:
                lam *= 0.5
                continue
            if np.max(np.abs(new_res)) < err or err < 1e3 * tol:
                pts, res, accepted = trial, new_res, True
                break
            lam *= 0.5
        if not accepted:
            break
    if float(np.max(np.abs(res))) < max(1e3 * tol, 1e-11):
        return pts
    raise SovError("Jacobi inversion failed: guess out of basin")


def jacobi_continuation(ctx: SurfaceContext, target, start: list[SurfacePoint], steps: int = 24) -> list[SurfacePoint]:
    """Track the solution along the straight path from A(start) to target (reduced)."""
    a0 = sum(sk.abel_map(ctx, p) for p in start)
    delta = sk.lattice_reduce(ctx, np.asarray(target) - a0)[0]
    pts = list(start)
    for s in np.linspace(0, 1, steps + 1)[1:]:
        pts = jacobi_inversion(ctx, a0 + s * delta, pts)
    return pts


def q_of_lambda(ctx: SurfaceContext, ref: ReferenceData | None, lam, guess: Divisor) -> Divisor:
    """Degree-g divisor with Abel coordinates lam (mod lattice), started from guess."""
    return Divisor.from_points(jacobi_inversion(ctx, lam, guess.expanded()))


def chart_rescale_x(ref: ReferenceData | None, r: int, scale_derivative: complex, x) -> np.ndarray:
    """x_r -> (dw_r/dw'_r)(p_r) x_r; callers divide k_r by the same factor."""
    if scale_derivative == 0:
        raise SovError("singular chart change")
    out = np.array(x, dtype=complex)
    out[r] *= scale_derivative
    return out


@dataclass(frozen=True)
class TransitionMatrix:
    kind: str
    point: SurfacePoint
    x_entry: complex = 0j

    def evaluate(self, w: complex) -> np.ndarray:
        """Matrix at local coordinate value w (measured from the point)."""
        if self.kind == "q":
            return np.array([[w, 0], [0, 1 / w]], dtype=complex)
        if self.kind == "q_check":
            return np.array([[1 / w, 0], [0, w]], dtype=complex)
        if self.kind == "p":
            return np.array([[1, self.x_entry / w], [0, 1]], dtype=complex)
        if self.kind == "q_check_0":
            return np.array([[1, 0], [0, w]], dtype=complex)
        raise SovError(f"unknown transition kind {self.kind}")

    def determinant(self, w: complex) -> complex:
        return complex(np.linalg.det(self.evaluate(w)))


@dataclass(frozen=True)
class TransitionData:
    matrices: tuple = field(default_factory=tuple)

    def of_kind(self, kind: str) -> list[TransitionMatrix]:
        return [t for t in self.matrices if t.kind == kind]


def transition_data(ref: ReferenceData, point: ModuliPoint) -> TransitionData:
    mats = [TransitionMatrix("q", p) for p in point.q.expanded()]
    mats += [TransitionMatrix("q_check", p) for p in ref.q_check.expanded()]
    mats += [TransitionMatrix("p", p, complex(xr)) for p, xr in zip(ref.p_points, point.x)]
    if ref.q_check_0 is not None:
        mats.append(TransitionMatrix("q_check_0", ref.q_check_0))
    return TransitionData(tuple(mats))
