"""Prime form, sigma ratios and meromorphic differentials with prescribed divisors.

Two independent representations are used:

* rational differentials, linear combinations of z^j dz/y and of the
  elementary forms ``simple_pole(p)`` = (y + y_p) dz / (2 y (z - z_p)) and
  ``double_pole(p)``; these are exact and cheap, and their zeros come from a
  norm polynomial;
* theta products (prime forms and sigma), built from the Abel map.

All values are in the global dz chart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as npoly

from hitchin_sov import surface_kernel as sk
from hitchin_sov.errors import SovError
from hitchin_sov.surface_kernel import Divisor, SurfaceContext, SurfacePoint


@dataclass(frozen=True)
class MeromorphicDifferential:
    evaluator: Callable[[SurfacePoint], complex]
    declared_divisor_bound: Divisor
    label: str
    vector_eval: Callable | None = field(default=None, repr=False)
    continued: Callable | None = field(default=None, repr=False)
    rational: RationalDifferential | None = field(default=None, repr=False)
    chart_weight: int = 1

    def __call__(self, point: SurfacePoint) -> complex:
        return self.evaluator(point)

    def values(self, z, sheet) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        if self.vector_eval is not None:
            return self.vector_eval(z, np.broadcast_to(sheet, z.shape))
        sheets = np.broadcast_to(sheet, z.shape)
        flat = [self.evaluator(SurfacePoint(zz, int(ss))) for zz, ss in zip(z.ravel(), sheets.ravel())]
        return np.array(flat, dtype=complex).reshape(z.shape)


# ------------------------------------------------------ rational forms ---

def _ypoint(ctx: SurfaceContext, p: SurfacePoint):
    y = p.sheet * complex(ctx.geometry.y_can(p.base))
    yp = complex(ctx.curve.fprime(p.base)) / (2 * y)
    return y, yp


@dataclass(frozen=True)
class SpanningSet:
    """Elementary differentials: g raw holomorphic, simple poles, double poles."""

    ctx: SurfaceContext = field(repr=False)
    simple: tuple[SurfacePoint, ...] = ()
    double: tuple[SurfacePoint, ...] = ()

    @property
    def size(self) -> int:
        return self.ctx.genus + len(self.simple) + len(self.double)

    def _pieces(self, z, sheet):
        z = np.asarray(z, dtype=complex)
        y = np.asarray(sheet) * self.ctx.geometry.y_can(z)
        yprime = self.ctx.curve.fprime(z) / (2 * y)
        return z, y, yprime

    def values(self, z, sheet) -> np.ndarray:
        z, y, _ = self._pieces(z, sheet)
        g = self.ctx.genus
        rows = [z ** j / y for j in range(g)]
        for p in self.simple:
            yp, _ = _ypoint(self.ctx, p)
            w = z - p.base
            rows.append((y + yp) / (2 * y * w))
        for p in self.double:
            yp, ypp = _ypoint(self.ctx, p)
            w = z - p.base
            rows.append((ypp * w + y + yp) / (2 * y * w ** 2))
        return np.array(rows)

    def derivatives(self, z, sheet) -> np.ndarray:
        z, y, y1 = self._pieces(z, sheet)
        g = self.ctx.genus
        rows = []
        for j in range(g):
            lead = j * z ** (j - 1) if j > 0 else np.zeros_like(z)
            rows.append(lead / y - z ** j * y1 / y ** 2)
        for p in self.simple:
            yp, _ = _ypoint(self.ctx, p)
            w = z - p.base
            rows.append(0.5 * (-1 / w ** 2 - yp * (y1 * w + y) / (y ** 2 * w ** 2)))
        for p in self.double:
            yp, ypp = _ypoint(self.ctx, p)
            w = z - p.base
            d1 = -ypp * (y1 * w + y) / (2 * y ** 2 * w ** 2)
            d2 = -1 / w ** 3
            d3 = -yp * (y1 * w + 2 * y) / (2 * y ** 2 * w ** 3)
            rows.append(d1 + d2 + d3)
        return np.array(rows)

    def residue_row(self) -> np.ndarray:
        """Row r with r.c = sum of finite residues of the combination c."""
        g = self.ctx.genus
        row = np.zeros(self.size, dtype=complex)
        row[g:g + len(self.simple)] = 1.0
        return row

    def regular_values_at(self, point: SurfacePoint) -> np.ndarray:
        """Constant Laurent term of each element at ``point`` (a simple-pole support)."""
        g = self.ctx.genus
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = self.values(np.array([point.base + 0j]), point.sheet)[:, 0]
        for i, p in enumerate(self.simple):
            if p == point:
                f = complex(self.ctx.curve.f(p.base))
                fp = complex(self.ctx.curve.fprime(p.base))
                vals[g + i] = -fp / (4 * f)
        for p in self.double:
            if p == point:
                raise SovError("evaluation at pole")
        return vals

    def combination(self, coeffs, label: str = "") -> RationalDifferential:
        return RationalDifferential(self, np.asarray(coeffs, dtype=complex), label)


@dataclass(frozen=True)
class RationalDifferential:
    span: SpanningSet = field(repr=False)
    coeffs: np.ndarray
    label: str = ""

    @property
    def ctx(self) -> SurfaceContext:
        return self.span.ctx

    def values(self, z, sheet) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        return np.tensordot(self.coeffs, self.span.values(z, sheet), axes=1)

    def derivative(self, z, sheet) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        return np.tensordot(self.coeffs, self.span.derivatives(z, sheet), axes=1)

    def __call__(self, point: SurfacePoint) -> complex:
        return complex(self.values(np.array([point.base]), point.sheet)[0])

    def regular_value(self, point: SurfacePoint) -> complex:
        return complex(self.coeffs @ self.span.regular_values_at(point))

    def residue_at(self, point: SurfacePoint) -> complex:
        g = self.ctx.genus
        total = 0j
        for i, p in enumerate(self.span.simple):
            if p == point:
                total += self.coeffs[g + i]
        return total

    def __add__(self, other: RationalDifferential) -> RationalDifferential:
        span, a, b = _common_span(self, other)
        return RationalDifferential(span, a + b, self.label)

    def __sub__(self, other: RationalDifferential) -> RationalDifferential:
        span, a, b = _common_span(self, other)
        return RationalDifferential(span, a - b, self.label)

    def scale(self, c: complex) -> RationalDifferential:
        return RationalDifferential(self.span, c * self.coeffs, self.label)

    def as_differential(self, label: str | None = None) -> MeromorphicDifferential:
        bound = Divisor(tuple((p, -1) for p in self.span.simple) + tuple((p, -2) for p in self.span.double))
        return MeromorphicDifferential(
            evaluator=self.__call__, declared_divisor_bound=bound,
            label=label if label is not None else self.label,
            vector_eval=self.values, rational=self)

    def numerator(self):
        """Polynomials (P, Q, D) with the differential equal to (P + Q y) dz / (y D)."""
        ctx = self.ctx
        g = ctx.genus
        poles: dict[complex, int] = {}
        for p in self.span.simple:
            poles[p.base] = max(poles.get(p.base, 0), 1)
        for p in self.span.double:
            poles[p.base] = 2
        D = np.array([1.0 + 0j])
        for zp, k in poles.items():
            for _ in range(k):
                D = npoly.polymul(D, [-zp, 1.0])
        P = np.zeros(1, dtype=complex)
        Q = np.zeros(1, dtype=complex)
        for j in range(g):
            mono = np.zeros(j + 1, dtype=complex)
            mono[j] = 1.0
            P = npoly.polyadd(P, self.coeffs[j] * npoly.polymul(mono, D))
        for i, p in enumerate(self.span.simple):
            c = self.coeffs[g + i]
            yp, _ = _ypoint(ctx, p)
            Dw, _ = npoly.polydiv(D, [-p.base, 1.0])
            P = npoly.polyadd(P, c * yp * Dw / 2)
            Q = npoly.polyadd(Q, c * Dw / 2)
        for i, p in enumerate(self.span.double):
            c = self.coeffs[g + len(self.span.simple) + i]
            yp, ypp = _ypoint(ctx, p)
            Dw, _ = npoly.polydiv(D, [-p.base, 1.0])
            Dw2, _ = npoly.polydiv(Dw, [-p.base, 1.0])
            P = npoly.polyadd(P, c * npoly.polyadd(npoly.polymul([-p.base, 1.0], ypp * Dw2), yp * Dw2) / 2)
            Q = npoly.polyadd(Q, c * Dw2 / 2)
        return P, Q, D


def _common_span(a: RationalDifferential, b: RationalDifferential):
    if a.span is b.span or (a.span.simple == b.span.simple and a.span.double == b.span.double):
        return a.span, a.coeffs, b.coeffs
    simple = tuple(dict.fromkeys(a.span.simple + b.span.simple))
    double = tuple(dict.fromkeys(a.span.double + b.span.double))
    span = SpanningSet(a.ctx, simple, double)
    return span, _embed(a, span), _embed(b, span)


def _embed(d: RationalDifferential, span: SpanningSet) -> np.ndarray:
    g = d.ctx.genus
    out = np.zeros(span.size, dtype=complex)
    out[:g] = d.coeffs[:g]
    for i, p in enumerate(d.span.simple):
        out[g + span.simple.index(p)] += d.coeffs[g + i]
    for i, p in enumerate(d.span.double):
        out[g + len(span.simple) + span.double.index(p)] += d.coeffs[g + len(d.span.simple) + i]
    return out


def normalized_holomorphic(ctx: SurfaceContext) -> list[RationalDifferential]:
    span = SpanningSet(ctx)
    return [span.combination(ctx.omega_basis.normalization[i], f"omega_{i + 1}") for i in range(ctx.genus)]


def surface_zeros(d: RationalDifferential, tol: float = 1e-9, exclude=(),
                  exclude_radius: float = 1e-5) -> list[tuple[SurfacePoint, float]]:
    """Zeros of a rational differential away from branch points and its poles.

    Candidates come from the roots of the norm P^2 - Q^2 f, are assigned to a
    sheet, and are polished by Newton's method on the differential itself.
    Points within ``exclude_radius`` (relative to max(1, |z|)) of ``exclude``
    are dropped.  Returns
    (point, |derivative|) pairs, deduplicated.
    """
    ctx = d.ctx
    P, Q, D = d.numerator()
    norm = npoly.polysub(npoly.polymul(P, P), npoly.polymul(npoly.polymul(Q, Q), ctx.curve.f_coeffs))
    # a differential without zeros at infinity has 2g - 2 + deg D zeros, plus
    # the deg D conjugates of its poles: higher coefficients are roundoff
    norm = norm[:2 * ctx.genus - 2 + 2 * (len(D) - 1) + 1]
    big = np.max(np.abs(norm)) if len(norm) else 0.0
    while len(norm) > 1 and abs(norm[-1]) <= 1e-11 * big:
        norm = norm[:-1]
    if len(norm) <= 1:
        return []
    roots = npoly.polyroots(norm)
    scale = float(np.max(np.abs(d.values(np.array([ctx.basepoint.base]), ctx.basepoint.sheet)))) + 1e-300
    pole_bases = np.array([p.base for p in d.span.simple + d.span.double] + [np.inf])
    found: list[tuple[SurfacePoint, float]] = []
    far = 1e4 * (1.0 + ctx.geometry.scale + float(np.max(np.abs(pole_bases[:-1]), initial=0.0)))
    for r in roots:
        if abs(r) > far:
            continue
        if np.min(np.abs(ctx.geometry.e - r)) < 1e-6 or np.min(np.abs(pole_bases - r)) < 1e-4:
            continue
        yc = complex(ctx.geometry.y_can(r))
        num = [abs(npoly.polyval(r, P) + s * npoly.polyval(r, Q) * yc) for s in (1, -1)]
        sheet = 1 if num[0] <= num[1] else -1
        z = complex(r)
        travel = 0.0
        for _ in range(30):
            val = complex(d.values(np.array([z]), sheet)[0])
            der = complex(d.derivative(np.array([z]), sheet)[0])
            if der == 0:
                break
            step = val / der
            travel += abs(step)
            if travel > 1e-2 * (1.0 + abs(r)):
                break
            z_new = z - step
            if ctx.geometry.crosses_cut(z, z_new):
                sheet = -sheet
            z = z_new
            if abs(step) < 1e-15 * max(1.0, abs(z)):
                break
        val = complex(d.values(np.array([z]), sheet)[0])
        der = abs(complex(d.derivative(np.array([z]), sheet)[0]))
        if abs(val) > tol * scale * max(1.0, abs(z)) ** 2:
            continue
        pt = SurfacePoint(z, sheet)
        # root accuracy of the norm polynomial is relative to |z|
        zscale = max(1.0, abs(z))
        if any(pt.distance(e) < exclude_radius * zscale for e in exclude):
            continue
        if any(pt.distance(f[0]) < 1e-6 * zscale for f in found):
            continue
        found.append((pt, der))
    return found


# --------------------------------------------------------- third kind ---

_PERIOD_CACHE: dict = {}


def simple_pole_a_periods(ctx: SurfaceContext, p: SurfacePoint) -> np.ndarray:
    """a-periods of the elementary simple-pole form at p."""
    key = (id(ctx), p)
    if key in _PERIOD_CACHE:
        return _PERIOD_CACHE[key][1]
    span = SpanningSet(ctx, (p,))
    out = np.zeros(ctx.genus, dtype=complex)
    for k in range(ctx.genus):
        n = 128
        prev = None
        while True:
            z, dz, y = sk.cycle_loop_nodes(ctx, k, n)
            sheet = np.where(np.abs(y - ctx.geometry.y_can(z)) < np.abs(y), 1, -1)
            vals = span.values(z, sheet)[ctx.genus] * dz
            total = 2 * math.pi * vals.mean()
            if prev is not None and abs(total - prev) < 1e-13 * max(1.0, abs(total)):
                break
            prev = total
            n *= 2
            if n > ctx.config.max_period_nodes:
                raise SovError("degenerate third-kind differential")
        out[k] = total
    _PERIOD_CACHE[key] = (ctx, out)
    return out


def third_kind_rational(ctx: SurfaceContext, p_plus: SurfacePoint, p_minus: SurfacePoint) -> RationalDifferential:
    """Normalized third-kind differential as a rational combination."""
    if p_plus == p_minus:
        raise SovError("degenerate third-kind differential")
    span = SpanningSet(ctx, (p_plus, p_minus))
    g = ctx.genus
    periods = simple_pole_a_periods(ctx, p_plus) - simple_pole_a_periods(ctx, p_minus)
    coeffs = np.zeros(span.size, dtype=complex)
    coeffs[g] = 1.0
    coeffs[g + 1] = -1.0
    coeffs[:g] = -periods @ ctx.omega_basis.normalization
    return span.combination(coeffs, "third-kind")


def omega_third_kind(ctx: SurfaceContext, p_plus: SurfacePoint, p_minus: SurfacePoint) -> MeromorphicDifferential:
    """Differential with zero a-periods and residues +1, -1 at p_plus, p_minus."""
    return third_kind_rational(ctx, p_plus, p_minus).as_differential("omega[p+ - p-]")


def omega_third_kind_primed_rational(ctx: SurfaceContext, p_plus: SurfacePoint, p_minus: SurfacePoint,
                                     q: Divisor, lambda_jacobian: np.ndarray | None = None) -> RationalDifferential:
    base = third_kind_rational(ctx, p_plus, p_minus)
    qpts = q.expanded()
    if lambda_jacobian is None:
        lambda_jacobian = abel_jacobian(ctx, qpts)
    if np.linalg.cond(lambda_jacobian) > 1e12:
        raise SovError("special divisor q")
    inv = np.linalg.inv(lambda_jacobian)
    at_q = np.array([base(p) for p in qpts])
    # correction sum_ij omega(q_j) (dA^-1)_ij omega_i
    weights = inv @ at_q
    g = ctx.genus
    coeffs = base.coeffs.copy()
    coeffs[:g] -= weights @ ctx.omega_basis.normalization
    return base.span.combination(coeffs, "third-kind primed")


def omega_third_kind_primed(ctx: SurfaceContext, p_plus: SurfacePoint, p_minus: SurfacePoint,
                            q: Divisor, lambda_jacobian: np.ndarray | None = None) -> MeromorphicDifferential:
    """Third-kind differential corrected by holomorphic forms to vanish on q.

    ``lambda_jacobian`` is the matrix dA with dA[i, j] = omega_j(q_i).
    """
    return omega_third_kind_primed_rational(ctx, p_plus, p_minus, q, lambda_jacobian).as_differential(
        "omega'[p+ - p-]")


def abel_jacobian(ctx: SurfaceContext, points) -> np.ndarray:
    """Matrix dA[i, j] = omega_j(q_i)."""
    return np.array([sk.point_forms(ctx, p) for p in points])


# ---------------------------------------------------------- prime form ---

@dataclass(frozen=True)
class _HalfFormData:
    poly: np.ndarray
    roots: np.ndarray
    hub_value: complex


_HALF_CACHE: dict = {}


def _half_form_data(ctx: SurfaceContext) -> _HalfFormData:
    key = id(ctx)
    if key not in _HALF_CACHE:
        poly = np.trim_zeros(sk.odd_form_polynomial(ctx, ctx.odd_char), "b")
        roots = npoly.polyroots(poly) if len(poly) > 1 else np.zeros(0, dtype=complex)
        hub = ctx.geometry.hub * ctx.geometry.rot
        hub_value = np.sqrt(npoly.polyval(hub, poly) / ctx.geometry.y_can(hub))
        _HALF_CACHE[key] = (ctx, _HalfFormData(poly, roots, complex(hub_value)))
    return _HALF_CACHE[key][1]


def odd_form(ctx: SurfaceContext, z, sheet):
    """omega_Delta = sum_l d_l theta[Delta](0) omega_l in the dz chart."""
    data = _half_form_data(ctx)
    return npoly.polyval(z, data.poly) / (np.asarray(sheet) * ctx.geometry.y_can(z))


def odd_form_dlog(ctx: SurfaceContext, z):
    data = _half_form_data(ctx)
    return (npoly.polyval(z, npoly.polyder(data.poly)) / npoly.polyval(z, data.poly)
            - ctx.curve.fprime(z) / (2 * ctx.curve.f(z)))


def half_form(ctx: SurfaceContext, point: SurfacePoint) -> complex:
    """A square root of omega_Delta, continued from the hub along the canonical path."""
    data = _half_form_data(ctx)
    geo = ctx.geometry
    verts = np.array(geo.path_from_hub(point.base))
    def dlog(c):
        return np.sum(np.log((verts[1:] - c) / (verts[:-1] - c)))
    change = sum(dlog(r) for r in data.roots) - 0.5 * sum(dlog(e) for e in geo.e)
    value = data.hub_value * np.exp(0.5 * change)
    return complex(value if point.sheet == 1 else 1j * value)


def _theta_delta(ctx: SurfaceContext, v):
    return sk.theta(ctx, v, ctx.odd_char)


def prime_form(ctx: SurfaceContext, z: SurfacePoint, w: SurfacePoint) -> complex:
    """E(z, w) in the dz^(-1/2) dw^(-1/2) chart; E(z, w) ~ z - w near the diagonal."""
    if z == w:
        return 0j
    hz, hw = half_form(ctx, z), half_form(ctx, w)
    scale = max(1.0, abs(ctx.geometry.y_can(z.base)) ** -0.5, abs(ctx.geometry.y_can(w.base)) ** -0.5)
    if min(abs(hz), abs(hw)) < 1e-10 * scale:
        raise SovError("characteristic degenerate at point")
    v = sk.abel_map(ctx, z) - sk.abel_map(ctx, w)
    return complex(_theta_delta(ctx, v) / (hz * hw))


def dlog_prime_form(ctx: SurfaceContext, pole: SurfacePoint, x: SurfacePoint) -> complex:
    """d_x log E(pole, x) in the dz chart; residue +1 at x = pole."""
    if pole == x or (pole.sheet == x.sheet and abs(pole.base - x.base) < 1e-13):
        raise SovError("evaluation at pole")
    v = sk.abel_map(ctx, pole) - sk.abel_map(ctx, x)
    th = _theta_delta(ctx, v)
    grad = sk.theta_grad(ctx, v, ctx.odd_char)
    forms = sk.point_forms(ctx, x)
    return complex(-(grad @ forms) / th - 0.5 * odd_form_dlog(ctx, x.base))


# ------------------------------------------------------------- sigma ---

def default_rho(ctx: SurfaceContext) -> Divisor:
    """A fixed generic degree-g divisor used for sigma factors."""
    geo = ctx.geometry
    centre = complex(np.mean(geo.e))
    pts = []
    for i in range(ctx.genus):
        ang = 1.1 + 2.4 * i
        pts.append(SurfacePoint(centre + (0.55 * geo.scale + 0.7) * np.exp(1j * ang), 1 if i % 2 == 0 else -1))
    return Divisor.from_points(pts)


def sigma_ratio(ctx: SurfaceContext, z: SurfacePoint, w: SurfacePoint, rho: Divisor) -> complex:
    """sigma(z) / sigma(w) using a degree-g divisor rho."""
    if z == w:
        return 1.0 + 0j
    rho_pts = rho.expanded()
    S = sum(sk.abel_map(ctx, r) for r in rho_pts)
    K = ctx.K_vector
    Az, Aw = sk.abel_map(ctx, z), sk.abel_map(ctx, w)
    tz = sk.theta(ctx, Az - S + K)
    tw = sk.theta(ctx, Aw - S + K)
    typical = abs(sk.theta(ctx, np.zeros(ctx.genus)))
    if min(abs(tz), abs(tw)) < 1e-10 * typical:
        raise SovError("rho divisor non-generic")
    ratio = tz / tw
    for r in rho_pts:
        ratio *= prime_form(ctx, w, r) / prime_form(ctx, z, r)
    return complex(ratio)


# --------------------------------------------------- theta products ---

@dataclass(frozen=True)
class ThetaProduct:
    """c(x) = C prod theta[D](A(x) - a_i)^m_i / prod theta[D](A(x) - b_j)^n_j
    * theta(A(x) - S + K)^2 / prod theta[D](A(x) - A(rho))^2 * omega_D(x).

    The lifts a_i, b_j are chosen so that sum m a - sum n b - 2K is an
    integer vector; the total chart weight is that of a one-form.
    """

    ctx: SurfaceContext = field(repr=False)
    zero_lifts: tuple
    pole_lifts: tuple
    rho_lifts: tuple
    constant: complex
    class_residual: float
    chart_weight: int = 1

    def value(self, z: complex, sheet: int, abel: np.ndarray) -> complex:
        ctx = self.ctx
        num = 1.0 + 0j
        for a, m in self.zero_lifts:
            num *= _theta_delta(ctx, abel - a) ** m
        for b, m in self.pole_lifts:
            num /= _theta_delta(ctx, abel - b) ** m
        S = sum(r for r in self.rho_lifts)
        num *= sk.theta(ctx, abel - S + ctx.K_vector) ** 2
        for r in self.rho_lifts:
            num /= _theta_delta(ctx, abel - r) ** 2
        return complex(self.constant * num * odd_form(ctx, z, sheet))

    def __call__(self, point: SurfacePoint) -> complex:
        return self.value(point.base, point.sheet, sk.abel_map(self.ctx, point))


def theta_product(ctx: SurfaceContext, zeros: Divisor, poles: Divisor, rho: Divisor | None = None,
                  enforce: bool = True, tol: float = 1e-8, normalize_at: SurfacePoint | None = None) -> ThetaProduct:
    rho = rho or default_rho(ctx)
    zl = [[sk.abel_map(ctx, p), m] for p, m in zeros.entries]
    pl = [[sk.abel_map(ctx, p), m] for p, m in poles.entries]
    resid = sum(m * a for a, m in zl) - sum(m * b for b, m in pl) - 2 * ctx.K_vector
    reduced, n, mvec = sk.lattice_reduce(ctx, resid)
    size = float(np.max(np.abs(reduced)))
    if enforce and size > tol:
        raise SovError("divisor class mismatch")
    shift = n + ctx.B @ mvec
    for entry in zl:
        if entry[1] == 1:
            entry[0] = entry[0] - shift
            break
    else:
        for entry in pl:
            if entry[1] == 1:
                entry[0] = entry[0] + shift
                break
    rl = tuple(sk.abel_map(ctx, r) for r in rho.expanded())
    prod = ThetaProduct(ctx, tuple((a, m) for a, m in zl), tuple((b, m) for b, m in pl), rl, 1.0 + 0j, size)
    if normalize_at is not None:
        val = prod(normalize_at)
        prod = ThetaProduct(ctx, prod.zero_lifts, prod.pole_lifts, rl, 1.0 / val, size)
    return prod


def differential_from_divisor_data(ctx: SurfaceContext, u: Divisor, v: Divisor, q: Divisor, q_prime: Divisor,
                                   enforce: bool = True, rho: Divisor | None = None) -> MeromorphicDifferential:
    """Single-valued differential with zeros u + q and poles v + q_prime."""
    if u.degree != v.degree + 2 * ctx.genus - 2 or q.degree != ctx.genus or q_prime.degree != ctx.genus:
        raise SovError("divisor class mismatch")
    zeros = u + q
    poles = v + q_prime
    prod = theta_product(ctx, zeros, poles, rho=rho, enforce=enforce)
    bound = Divisor(tuple((p, -m) for p, m in poles.entries))
    return MeromorphicDifferential(evaluator=prod, declared_divisor_bound=bound,
                                   label="theta product", continued=prod.value, chart_weight=prod.chart_weight)


def monodromy_check(ctx: SurfaceContext, d: MeromorphicDifferential, cycle: int, nodes: int = 512) -> float:
    """Relative change of d after analytic continuation around basis loop ``cycle``."""
    z, dz, y = sk.cycle_loop_nodes(ctx, cycle, nodes)
    for p, m in d.declared_divisor_bound.entries:
        if m < 0 and np.min(np.abs(z - p.base)) < 1e-6:
            raise SovError("cycle through singularity")
    if d.continued is None:
        sheet = np.where(np.abs(y - ctx.geometry.y_can(z)) < np.abs(y), 1, -1)
        vals = d.values(z, sheet)
        if not np.all(np.isfinite(vals)):
            raise SovError("cycle through singularity")
        end = d.values(np.array([z[0]]), int(sheet[0]))[0]
        return float(abs(end - vals[0]) / max(abs(vals[0]), 1e-300))
    increment, start = sk.cycle_integral(ctx, cycle)
    a0 = sk.abel_map(ctx, start)
    v0 = d.continued(start.base, start.sheet, a0)
    v1 = d.continued(start.base, start.sheet, a0 + increment)
    return float(abs(v1 - v0) / max(abs(v0), 1e-300))


# ----------------------------------------------------------- diagnostics ---

def laurent_coefficients(func, point: SurfacePoint, radius: float, orders=range(-3, 3), n: int = 64):
    """Laurent coefficients of func(z, sheet) around point from samples on a circle."""
    theta = 2 * math.pi * np.arange(n) / n
    zs = point.base + radius * np.exp(1j * theta)
    vals = func(zs, point.sheet)
    out = {}
    for k in orders:
        out[k] = complex(np.mean(vals * np.exp(-1j * k * theta)) / radius ** k)
    return out


def safe_radius(ctx: SurfaceContext, point: SurfacePoint, others=()) -> float:
    r = 0.25 * float(sk.clearance(ctx, point.base)[0])
    for o in others:
        if o != point:
            r = min(r, 0.25 * abs(o.base - point.base)) if abs(o.base - point.base) > 0 else r
    return max(min(r, 0.05), 1e-4)


def residue_numeric(d: MeromorphicDifferential, point: SurfacePoint, radius: float) -> complex:
    return laurent_coefficients(d.values, point, radius, orders=[-1])[-1]


# ------------------------------------------- prescribed pole/zero bounds ---

RANK_TOL = 1e-8


@dataclass(frozen=True)
class BoundedSpace:
    """Basis of differentials with poles bounded by ``poles`` and zeros at ``zeros``."""

    span: SpanningSet = field(repr=False)
    basis: tuple
    singular_values: np.ndarray
    expected_dim: int

    @property
    def dim(self) -> int:
        return len(self.basis)

    @property
    def excess(self) -> int:
        return self.dim - self.expected_dim


def null_space(mat: np.ndarray, rank_tol: float = RANK_TOL, ambiguity: float = 0.0):
    """Null space with singular values below rank_tol * top counted as zero.

    Returns (basis columns, singular values).  If ``ambiguity`` > 1, a
    singular value within a factor ``ambiguity`` of the threshold raises.
    """
    rows, cols = mat.shape
    if rows == 0:
        return np.eye(cols, dtype=complex), np.zeros(0)
    _, s, vh = np.linalg.svd(mat)
    top = s[0] if len(s) and s[0] > 0 else 1.0
    cut = rank_tol * top
    if ambiguity > 1 and np.any((s > cut / ambiguity) & (s < cut * ambiguity)):
        raise SovError("rank indeterminate")
    rank = int(np.sum(s > cut))
    return vh[rank:].conj().T, s


def _row_normalize(mat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return mat / norms


def vanishing_rows(span: SpanningSet, zeros: Divisor) -> np.ndarray:
    """Linear conditions for vanishing to the stated order (at most 2) at each zero."""
    rows = []
    for p, m in zeros.entries:
        if m < 1:
            continue
        if m > 2:
            raise SovError("unsupported zero order")
        rows.append(span.values(np.array([p.base]), p.sheet)[:, 0])
        if m == 2:
            rows.append(span.derivatives(np.array([p.base]), p.sheet)[:, 0])
    return np.array(rows).reshape(len(rows), span.size)


def expected_dimension(g: int, pole_degree: int, zero_degree: int) -> int:
    if pole_degree == 0:
        return max(g - zero_degree, 0)
    return max(g - 1 + pole_degree - zero_degree, 0)


def bounded_space(ctx: SurfaceContext, poles: Divisor, zeros: Divisor, rank_tol: float = RANK_TOL,
                  max_excess: int | None = None) -> BoundedSpace:
    """Differentials with poles at most ``poles`` and vanishing on ``zeros``."""
    simple = tuple(p for p, m in poles.entries if m >= 1)
    double = tuple(p for p, m in poles.entries if m >= 2)
    if any(m > 2 for _, m in poles.entries):
        raise SovError("unsupported pole order")
    span = SpanningSet(ctx, simple, double)
    rows = [span.residue_row()] if simple else []
    vr = vanishing_rows(span, zeros)
    mat = np.vstack([np.array(rows).reshape(len(rows), span.size), vr])
    # column scaling keeps the rank test meaningful across element sizes
    probe = span.values(np.array([ctx.basepoint.base]), ctx.basepoint.sheet)[:, 0]
    colscale = np.maximum(np.abs(probe), 1e-3)
    scaled = _row_normalize(mat * colscale) if len(mat) else mat
    ns, s = null_space(scaled, rank_tol)
    coeffs = ns * colscale[:, None]
    expected = expected_dimension(ctx.genus, poles.degree, zeros.degree)
    if max_excess is not None and ns.shape[1] - expected > max_excess:
        raise SovError("basis construction ill-conditioned")
    basis = tuple(span.combination(coeffs[:, j], "bounded") for j in range(coeffs.shape[1]))
    return BoundedSpace(span, basis, s, expected)
