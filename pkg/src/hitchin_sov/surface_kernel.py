"""Hyperelliptic curves y^2 = f(z): periods, Abel map, theta functions.

Conventions
-----------
* ``f_coeffs`` are listed in ascending powers of z.
* Branch points are sorted along a direction in which their projections are
  well separated.  Consecutive sorted points form a polygonal chain.  The
  pairs (e0, e1), (e2, e3), ... are the square-root cuts of the canonical
  branch ``y_can``; the remaining chain segments are auxiliary cuts across
  which only the Abel map jumps (by lattice vectors).
* ``a_k`` is a small counter-clockwise loop around the k-th square-root cut
  on sheet +1.  ``b_k`` runs from cut k to the last cut on sheet +1 and back
  on sheet -1.
* theta(z) = sum_n exp(pi i n.B.n + 2 pi i n.z).
* The Riemann constant K is fixed by theta(K - A(D)) = 0 for every effective
  divisor D of degree g-1, with A based at the context basepoint.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial import polynomial as npoly

from hitchin_sov.errors import SovError

_EPS = float(np.finfo(float).eps)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class KernelConfig:
    root_separation: float = 1e-6
    path_clearance: float = 1e-7
    period_tol: float = 1e-14
    theta_tol: float = 1e-16
    theta_truncation: int | None = None
    max_period_nodes: int = 1 << 14


@dataclass(frozen=True)
class SurfacePoint:
    base: complex
    sheet: int = 1

    def __post_init__(self):
        if self.sheet not in (1, -1):
            raise ValueError("sheet must be +1 or -1")
        object.__setattr__(self, "base", complex(self.base))

    def conjugate(self) -> SurfacePoint:
        """Image under the hyperelliptic involution."""
        return SurfacePoint(self.base, -self.sheet)

    def distance(self, other: SurfacePoint) -> float:
        if self.sheet != other.sheet:
            return math.inf
        return abs(self.base - other.base)


@dataclass(frozen=True)
class Divisor:
    entries: tuple[tuple[SurfacePoint, int], ...] = ()

    @classmethod
    def from_points(cls, points, multiplicity: int = 1) -> Divisor:
        return cls(tuple((p, multiplicity) for p in points))

    @property
    def degree(self) -> int:
        return sum(m for _, m in self.entries)

    @property
    def is_effective(self) -> bool:
        return all(m > 0 for _, m in self.entries)

    @property
    def points(self) -> list[SurfacePoint]:
        return [p for p, _ in self.entries]

    def expanded(self) -> list[SurfacePoint]:
        """Points repeated by multiplicity (effective divisors only)."""
        out = []
        for p, m in self.entries:
            if m < 0:
                raise ValueError("expanded() needs an effective divisor")
            out.extend([p] * m)
        return out

    def __add__(self, other: Divisor) -> Divisor:
        return Divisor(self.entries + other.entries)

    def scaled(self, k: int) -> Divisor:
        return Divisor(tuple((p, k * m) for p, m in self.entries))


@dataclass(frozen=True)
class Characteristic:
    a: tuple[float, ...]
    b: tuple[float, ...]

    @property
    def parity(self) -> int:
        return int(round(4 * float(np.dot(self.a, self.b)))) % 2

    def as_arrays(self):
        return np.array(self.a, float), np.array(self.b, float)


class HyperellipticCurve:
    """The curve y^2 = f(z) with f given by ascending coefficients."""

    def __init__(self, f_coeffs, root_separation: float = 1e-6):
        coeffs = np.trim_zeros(np.asarray(f_coeffs, dtype=complex), "b")
        deg = len(coeffs) - 1
        if deg < 5:
            raise SovError("degenerate curve")
        self.f_coeffs = coeffs
        self.degree = deg
        self.genus = (deg - 1) // 2
        roots = npoly.polyroots(coeffs)
        deriv = npoly.polyder(coeffs)
        with np.errstate(divide="ignore", invalid="ignore"):
            for _ in range(3):
                roots = roots - npoly.polyval(roots, coeffs) / npoly.polyval(roots, deriv)
        gaps = np.abs(roots[:, None] - roots[None, :])
        np.fill_diagonal(gaps, np.inf)
        if not np.all(np.isfinite(roots)) or gaps.min() <= root_separation:
            raise SovError("degenerate curve")
        self.branch_points = roots

    @property
    def is_odd(self) -> bool:
        return self.degree % 2 == 1

    def f(self, z):
        return npoly.polyval(z, self.f_coeffs)

    def fprime(self, z):
        return npoly.polyval(z, npoly.polyder(self.f_coeffs))


class _CutGeometry:
    """Sorted branch points, canonical square-root branch, and integration paths."""

    def __init__(self, curve: HyperellipticCurve):
        self.curve = curve
        e = curve.branch_points
        best = None
        for k in range(64):
            rot = np.exp(1j * math.pi * k / 64)
            proj = np.sort((e / rot).real)
            gap = np.min(np.diff(proj))
            if best is None or gap > best[0] * (1 + 1e-9):
                best = (gap, rot)
        self.rot = best[1]
        t = e / self.rot
        order = np.argsort(t.real)
        self.t = t[order]
        self.e = self.t * self.rot
        n = len(self.t)
        g = curve.genus
        self.n_cuts = g + 1 if not curve.is_odd else g
        self.cuts = [(self.t[2 * k], self.t[2 * k + 1]) for k in range(self.n_cuts)]
        self.aux = [(self.t[2 * k + 1], self.t[2 * k + 2]) for k in range(g)]
        self.ray_start = self.t[-1] if curve.is_odd else None
        lead = curve.f_coeffs[-1] * self.rot ** curve.degree
        self.sqrt_lead = np.sqrt(lead)
        span = float(np.max(np.abs(self.t[:, None] - self.t[None, :])))
        self.scale = span
        margin = 0.5 * span + 0.5
        self.x_lo, self.x_hi = self.t[0].real, self.t[-1].real
        self.top = float(np.max(self.t.imag)) + margin
        self.bottom = float(np.min(self.t.imag)) - margin
        self.left = self.x_lo - margin
        self.hub = complex(self.left, self.top)
        self.n_points = n

    # square root with cuts on the chosen segments (and a downward ray)
    def y_can(self, z):
        tt = np.asarray(z, dtype=complex) / self.rot
        out = np.full(tt.shape, self.sqrt_lead, dtype=complex)
        for a, b in self.cuts:
            m, c = 0.5 * (a + b), 0.5 * (b - a)
            d = tt - m
            out = out * d * np.sqrt(1 - (c / d) ** 2)
        if self.ray_start is not None:
            out = out * np.sqrt(-1j * (tt - self.ray_start)) * np.exp(0.25j * math.pi)
        return out

    def chain_height(self, x):
        return np.interp(x, self.t.real, self.t.imag)

    def is_above(self, t: complex) -> bool:
        if t.real < self.x_lo or t.real > self.x_hi:
            return True
        return t.imag > self.chain_height(t.real)

    def path_from_hub(self, z: complex) -> list[complex]:
        """Vertices (in z) of the canonical path from the hub to z."""
        t = z / self.rot
        if self.is_above(t):
            verts = [self.hub, complex(t.real, self.top), t]
        else:
            verts = [self.hub, complex(self.left, self.bottom),
                     complex(t.real, self.bottom), t]
        return [v * self.rot for v in verts]

    def crosses_cut(self, z0: complex, z1: complex) -> int:
        """Number of square-root cuts crossed by the segment z0 -> z1."""
        a0, a1 = z0 / self.rot, z1 / self.rot
        count = 0
        segs = list(self.cuts)
        if self.ray_start is not None:
            segs.append((self.ray_start, self.ray_start - 1j * (abs(self.bottom) + 10 * self.scale + abs(a0) + abs(a1))))
        for c0, c1 in segs:
            if _segments_intersect(a0, a1, c0, c1):
                count += 1
        return count

    def distance_to_chain(self, z) -> np.ndarray:
        tt = np.atleast_1d(np.asarray(z, dtype=complex)) / self.rot
        dist = np.full(tt.shape, np.inf)
        for k in range(self.n_points - 1):
            dist = np.minimum(dist, _point_segment_distance(tt, self.t[k], self.t[k + 1]))
        if self.ray_start is not None:
            below = tt.imag <= self.ray_start.imag
            ray_d = np.where(below, np.abs(tt.real - self.ray_start.real), np.abs(tt - self.ray_start))
            dist = np.minimum(dist, ray_d)
        return dist


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def cross(o, a, b):
        return (a - o).real * (b - o).imag - (a - o).imag * (b - o).real
    d1, d2 = cross(q1, q2, p1), cross(q1, q2, p2)
    d3, d4 = cross(p1, p2, q1), cross(p1, p2, q2)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def _point_segment_distance(p, a, b):
    ab = b - a
    s = np.clip(((p - a) * np.conj(ab)).real / abs(ab) ** 2, 0.0, 1.0)
    return np.abs(p - (a + s * ab))


@dataclass(frozen=True)
class HolomorphicBasis:
    """Normalized holomorphic differentials omega_i = sum_j N_ij z^j dz / y."""

    normalization: np.ndarray

    @property
    def genus(self) -> int:
        return self.normalization.shape[0]


@dataclass(frozen=True)
class SurfaceContext:
    curve: HyperellipticCurve
    omega_basis: HolomorphicBasis
    B: np.ndarray
    basepoint: SurfacePoint
    K_vector: np.ndarray | None
    odd_char: Characteristic | None
    theta_truncation: int
    config: KernelConfig = field(repr=False)
    geometry: _CutGeometry = field(repr=False)
    raw_a_periods: np.ndarray = field(repr=False)
    raw_b_periods: np.ndarray = field(repr=False)
    hub_to_branch: np.ndarray = field(repr=False)
    base_offset: np.ndarray = field(repr=False)
    theta_radius: float = field(repr=False)

    @property
    def genus(self) -> int:
        return self.curve.genus

    @property
    def Y(self) -> np.ndarray:
        return self.B.imag


# ---------------------------------------------------------------- periods ---

def _ellipse_params(geo: _CutGeometry, a: complex, b: complex, fat: float = 1.25):
    """Confocal ellipse around segment [a, b] avoiding every other cut."""
    m, c = 0.5 * (a + b), 0.5 * (b - a)
    ts = np.linspace(0, 1, 41)
    samples = [s0 + ts * (s1 - s0) for s0, s1 in geo.cuts if (s0, s1) != (a, b)]
    samples.append(np.array([x for x in geo.t if x != a and x != b]))
    others = np.concatenate(samples)
    u = (others - m) / c
    zeta = u + np.sqrt(u - 1) * np.sqrt(u + 1)
    rho_other = np.abs(zeta)
    rho_other = np.where(rho_other < 1, 1 / rho_other, rho_other)
    limit = rho_other.min() if len(others) else np.inf
    rho = min(fat, 1 + 0.5 * (limit - 1))
    return m, c, rho


def _ellipse_nodes(m, c, rho, n, phase=0.0):
    theta = 2 * math.pi * np.arange(n) / n + phase
    w = rho * np.exp(1j * theta)
    t = m + 0.5 * c * (w + 1 / w)
    dt = 0.5 * c * (1j * w - 1j / w)
    return t, dt


def _a_cycle_loop(geo: _CutGeometry, index: int, n: int, phase: float = 0.0):
    """Nodes (z) and dz/dtheta of the loop encircling chain points index, index+1."""
    a, b = geo.t[index], geo.t[index + 1]
    if index % 2 == 0:
        m, c, rho = _ellipse_params(geo, a, b)
    else:
        m, c, rho = _ellipse_params_aux(geo, a, b)
    t, dt = _ellipse_nodes(m, c, rho, n, phase)
    return t * geo.rot, dt * geo.rot


def _ellipse_params_aux(geo: _CutGeometry, a: complex, b: complex, fat: float = 1.25):
    m, c = 0.5 * (a + b), 0.5 * (b - a)
    others = np.array([x for x in geo.t if abs(x - a) > 1e-12 and abs(x - b) > 1e-12])
    u = (others - m) / c
    zeta = u + np.sqrt(u - 1) * np.sqrt(u + 1)
    rho_other = np.abs(zeta)
    rho_other = np.where(rho_other < 1, 1 / rho_other, rho_other)
    limit = rho_other.min() if len(others) else np.inf
    return m, c, min(fat, 1 + 0.5 * (limit - 1))


def _raw_forms(geo: _CutGeometry, z, y):
    g = geo.curve.genus
    z = np.asarray(z, dtype=complex)
    powers = z[None, ...] ** np.arange(g).reshape((g,) + (1,) * z.ndim)
    return powers / y


def _loop_integral_continuous(geo: _CutGeometry, index: int, funcs, tol: float, max_nodes: int,
                              phase: float = 0.3):
    """Integrate funcs(z, y) around a pair loop with y continued along the loop.

    Returns (integral, start_z, start_sign) where start_sign relates the
    continued y at the start node to y_can there.
    """
    n = 64
    prev = None
    while n <= max_nodes:
        z, dz = _a_cycle_loop(geo, index, n, phase)
        y = _continue_sqrt(geo, z)
        vals = funcs(z, y) * dz
        total = 2 * math.pi * vals.mean(axis=-1)
        if prev is not None and np.max(np.abs(total - prev)) <= max(tol, 20 * _EPS * n) * max(1.0, np.max(np.abs(total))):
            sign = int(np.sign((y[0] / geo.y_can(z[0])).real))
            return total, z[0], sign
        prev = total
        n *= 2
    raise SovError("period integration failed")


def _continue_sqrt(geo: _CutGeometry, z: np.ndarray) -> np.ndarray:
    """Values of y along a closed node sequence, continued by continuity."""
    y = geo.y_can(z).copy()
    for k in range(1, len(y)):
        if abs(y[k] - y[k - 1]) > abs(y[k] + y[k - 1]):
            y[k] = -y[k]
    return y


def _aux_integral(geo: _CutGeometry, a: complex, b: complex, tol: float, max_nodes: int):
    """Integral of z^j dz / y_can along the straight segment a -> b (rotated coords)."""
    za, zb = a * geo.rot, b * geo.rot
    mid, half = 0.5 * (za + zb), 0.5 * (zb - za)
    n = 32
    prev = None
    while n <= max_nodes:
        k = np.arange(1, n + 1)
        tau = np.cos((2 * k - 1) * math.pi / (2 * n))
        z = mid + half * tau
        y = geo.y_can(z)
        vals = _raw_forms(geo, z, y) * np.sqrt(1 - tau ** 2)
        total = half * (math.pi / n) * vals.sum(axis=-1)
        if prev is not None and np.max(np.abs(total - prev)) <= max(tol, 20 * _EPS * n) * max(1.0, np.max(np.abs(total))):
            return total
        prev = total
        n *= 2
    raise SovError("period integration failed")


def _compute_periods(geo: _CutGeometry, config: KernelConfig):
    g = geo.curve.genus
    a_raw = np.zeros((g, g), dtype=complex)
    for k in range(g):
        total, _, _ = _loop_integral_continuous(
            geo, 2 * k, lambda z, y: _raw_forms(geo, z, y), config.period_tol, config.max_period_nodes)
        a_raw[:, k] = total
    bprime = np.zeros((g, g), dtype=complex)
    for k in range(g):
        bprime[:, k] = 2 * _aux_integral(geo, *geo.aux[k], config.period_tol, config.max_period_nodes)
    b_raw = np.zeros((g, g), dtype=complex)
    for k in range(g):
        b_raw[:, k] = bprime[:, k:].sum(axis=1)
    return a_raw, b_raw


# ------------------------------------------------------------ quadrature ---

def _segment_integral(geo: _CutGeometry, za: complex, zb: complex, clearance: float):
    """Integral of z^j dz / y_can along a straight segment (adaptive Gauss-Legendre)."""
    e = geo.e
    stack = [(za, zb, 0)]
    leaves = []
    while stack:
        a, b, depth = stack.pop()
        length = abs(b - a)
        if length == 0:
            continue
        d = float(np.min(_point_segment_distance(e, a, b)))
        if d < clearance:
            raise SovError("path degenerate")
        if length > 0.5 * d:
            if depth > 60:
                raise SovError("path degenerate")
            mid = 0.5 * (a + b)
            stack.append((mid, b, depth + 1))
            stack.append((a, mid, depth + 1))
        else:
            leaves.append((a, b))
    if not leaves:
        return np.zeros(geo.curve.genus, dtype=complex)
    a = np.array([l[0] for l in leaves])
    b = np.array([l[1] for l in leaves])
    half = 0.5 * (b - a)
    z = (0.5 * (a + b))[:, None] + half[:, None] * _GL_NODES[None, :]
    y = geo.y_can(z)
    vals = _raw_forms(geo, z, y)
    return np.einsum("gln,n,l->g", vals, _GL_WEIGHTS, half)


def _hub_integral(geo: _CutGeometry, z: complex, clearance: float) -> np.ndarray:
    verts = geo.path_from_hub(z)
    total = np.zeros(geo.curve.genus, dtype=complex)
    for a, b in zip(verts[:-1], verts[1:]):
        total = total + _segment_integral(geo, a, b, clearance)
    return total


def _hub_to_first_branch(geo: _CutGeometry, clearance: float) -> np.ndarray:
    """Integral from the hub to e0 (endpoint singularity removed by t = s^2)."""
    t0 = geo.t[0]
    others = np.abs(geo.t[1:] - t0)
    h = 0.3 * float(others.min())
    corner = complex(t0.real, geo.top)
    near = complex(t0.real, t0.imag + h)
    total = _segment_integral(geo, geo.hub * geo.rot, corner * geo.rot, clearance)
    total = total + _segment_integral(geo, corner * geo.rot, near * geo.rot, clearance)
    za, ze = near * geo.rot, t0 * geo.rot
    nodes, weights = np.polynomial.legendre.leggauss(40)
    s = 0.5 * (nodes + 1)
    zs = ze + (za - ze) * s ** 2
    dz = 2 * (za - ze) * s
    vals = _raw_forms(geo, zs, geo.y_can(zs)) * dz
    total = total - 0.5 * (vals * weights).sum(axis=-1)
    return total


# -------------------------------------------------------------- building ---

def build_context(curve: HyperellipticCurve, basepoint: SurfacePoint,
                  config: KernelConfig | None = None) -> SurfaceContext:
    """Compute periods, theta data, the odd characteristic and Riemann constants."""
    config = config or KernelConfig()
    if curve.genus < 2:
        raise SovError("degenerate curve")
    geo = _CutGeometry(curve)
    if np.min(np.abs(geo.e - basepoint.base)) < config.path_clearance:
        raise SovError("path degenerate")
    a_raw, b_raw = _compute_periods(geo, config)
    norm = np.linalg.inv(a_raw)
    B = norm @ b_raw
    if np.min(np.linalg.eigvalsh(0.5 * (B.imag + B.imag.T))) <= 0:
        B = -B
        b_raw = -b_raw
    radius, trunc = _theta_radius(B, config)
    J = 2 * _hub_to_first_branch(geo, config.path_clearance)
    ctx = SurfaceContext(curve=curve, omega_basis=HolomorphicBasis(norm), B=B, basepoint=basepoint,
                         K_vector=None, odd_char=None, theta_truncation=trunc, config=config,
                         geometry=geo, raw_a_periods=a_raw, raw_b_periods=b_raw,
                         hub_to_branch=J, base_offset=np.zeros(curve.genus, dtype=complex),
                         theta_radius=radius)
    offset = _abel_unshifted(ctx, basepoint)
    ctx = replace(ctx, base_offset=offset)
    ctx = replace(ctx, odd_char=find_odd_characteristic(ctx))
    ctx = replace(ctx, K_vector=riemann_constants(ctx))
    return ctx


def _theta_radius(B: np.ndarray, config: KernelConfig):
    Y = B.imag
    g = len(Y)
    radius = math.sqrt((-math.log(config.theta_tol) + 2 * g + 5) / math.pi)
    yinv = np.linalg.inv(Y)
    widths = np.ceil(radius * np.sqrt(np.diag(yinv))).astype(int) + 1
    needed = int(widths.max())
    if config.theta_truncation is not None:
        if config.theta_truncation < needed:
            raise SovError("theta truncation insufficient")
        needed = int(config.theta_truncation)
    return radius, needed


# ----------------------------------------------------- evaluation helpers ---

def y_value(ctx: SurfaceContext, z, sheet):
    return np.asarray(sheet) * ctx.geometry.y_can(z)


def holomorphic_forms(ctx: SurfaceContext, z, sheet) -> np.ndarray:
    """Normalized omega_i at points (z, sheet) in the dz chart; shape (g, ...)."""
    z = np.asarray(z, dtype=complex)
    y = y_value(ctx, z, sheet)
    raw = _raw_forms(ctx.geometry, z, y)
    return np.tensordot(ctx.omega_basis.normalization, raw, axes=1)


def holomorphic_forms_derivative(ctx: SurfaceContext, z, sheet) -> np.ndarray:
    """d/dz of omega_i in the dz chart."""
    z = np.asarray(z, dtype=complex)
    g = ctx.genus
    y = y_value(ctx, z, sheet)
    yp = ctx.curve.fprime(z) / (2 * y)
    k = np.arange(g).reshape((g,) + (1,) * z.ndim)
    zk = z[None, ...] ** k
    zkm1 = np.where(k > 0, z[None, ...] ** np.maximum(k - 1, 0), 0)
    raw = k * zkm1 / y - zk * yp / y ** 2
    return np.tensordot(ctx.omega_basis.normalization, raw, axes=1)


def point_forms(ctx: SurfaceContext, point: SurfacePoint) -> np.ndarray:
    return holomorphic_forms(ctx, point.base, point.sheet)


def clearance(ctx: SurfaceContext, z) -> np.ndarray:
    """Distance from z to the cut chain (branch points included)."""
    return ctx.geometry.distance_to_chain(z)


def move_point(ctx: SurfaceContext, point: SurfacePoint, dz: complex) -> SurfacePoint:
    """Continue a surface point along the straight segment base -> base + dz."""
    new = point.base + dz
    flips = ctx.geometry.crosses_cut(point.base, new)
    sheet = point.sheet * (-1) ** flips
    return SurfacePoint(new, sheet)


# ---------------------------------------------------------------- Abel map ---

def _abel_unshifted(ctx: SurfaceContext, point: SurfacePoint) -> np.ndarray:
    geo = ctx.geometry
    if np.min(np.abs(geo.e - point.base)) < ctx.config.path_clearance:
        raise SovError("path degenerate")
    raw = _hub_integral(geo, point.base, ctx.config.path_clearance)
    if point.sheet == 1:
        total = raw
    else:
        total = ctx.hub_to_branch - raw
    return ctx.omega_basis.normalization @ total


def abel_map(ctx: SurfaceContext, point) -> np.ndarray:
    """Abel map from the basepoint; accepts a SurfacePoint or a Divisor."""
    if isinstance(point, Divisor):
        total = np.zeros(ctx.genus, dtype=complex)
        for p, m in point.entries:
            total = total + m * abel_map(ctx, p)
        return total
    return _abel_unshifted(ctx, point) - ctx.base_offset


def lattice_reduce(ctx: SurfaceContext, v):
    """Split v = reduced + n + B m with reduced in the centred fundamental cell."""
    v = np.asarray(v, dtype=complex)
    m = np.round(np.linalg.solve(ctx.Y, v.imag)).astype(int)
    w = v - ctx.B @ m
    n = np.round(w.real).astype(int)
    return w - n, n, m


def lattice_distance(ctx: SurfaceContext, v) -> float:
    reduced, _, _ = lattice_reduce(ctx, v)
    return float(np.max(np.abs(reduced)))


# ------------------------------------------------------------------- theta ---

def _offsets(ctx: SurfaceContext) -> np.ndarray:
    w = ctx.theta_truncation
    g = ctx.genus
    rng = np.arange(-w, w + 1)
    return np.array(list(itertools.product(rng, repeat=g)), dtype=float)


_OFFSET_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _lattice_offsets(ctx: SurfaceContext) -> np.ndarray:
    key = (ctx.genus, ctx.theta_truncation)
    if key not in _OFFSET_CACHE:
        _OFFSET_CACHE[key] = _offsets(ctx)
    return _OFFSET_CACHE[key]


def _theta_terms(ctx: SurfaceContext, z, char: Characteristic | None):
    z = np.atleast_2d(np.asarray(z, dtype=complex))
    g = ctx.genus
    if char is None:
        a = np.zeros(g)
        b = np.zeros(g)
    else:
        a, b = char.as_arrays()
    Y = ctx.Y
    centre = -np.linalg.solve(Y, z.imag.T).T - a
    base = np.round(centre)
    offs = _lattice_offsets(ctx)
    n = base[:, None, :] + offs[None, :, :] + a
    dev = n - (centre + a)[:, None, :]
    quad = np.einsum("mki,ij,mkj->mk", dev, Y, dev)
    mask = quad <= ctx.theta_radius ** 2
    phase = np.einsum("mki,ij,mkj->mk", n, ctx.B, n) / 2 + np.einsum("mki,mi->mk", n, z + b)
    terms = np.exp(2j * math.pi * phase) * mask
    return n, terms


def theta(ctx: SurfaceContext, z, char: Characteristic | None = None):
    """Riemann theta with characteristic; z has shape (g,) or (M, g)."""
    z = np.asarray(z, dtype=complex)
    _, terms = _theta_terms(ctx, z, char)
    out = terms.sum(axis=1)
    return out[0] if z.ndim == 1 else out


def theta_grad(ctx: SurfaceContext, z, char: Characteristic | None = None):
    z = np.asarray(z, dtype=complex)
    n, terms = _theta_terms(ctx, z, char)
    out = 2j * math.pi * np.einsum("mki,mk->mi", n, terms)
    return out[0] if z.ndim == 1 else out


def characteristics(g: int):
    """All 2^(2g) half-integer characteristics in a fixed order."""
    out = []
    for bits in itertools.product((0, 1), repeat=2 * g):
        a = tuple(0.5 * x for x in bits[:g])
        b = tuple(0.5 * x for x in bits[g:])
        out.append(Characteristic(a, b))
    return out


def odd_form_polynomial(ctx: SurfaceContext, char: Characteristic) -> np.ndarray:
    """Ascending coefficients P with omega_Delta = P(z) dz / y."""
    grad = theta_grad(ctx, np.zeros(ctx.genus), char)
    return grad @ ctx.omega_basis.normalization


def find_odd_characteristic(ctx: SurfaceContext) -> Characteristic:
    """First odd characteristic whose holomorphic form vanishes only at branch points."""
    odd = [c for c in characteristics(ctx.genus) if c.parity == 1]
    norms = [np.linalg.norm(theta_grad(ctx, np.zeros(ctx.genus), c)) for c in odd]
    top = max(norms)
    for char, nrm in zip(odd, norms):
        if nrm < 1e-6 * top:
            continue
        poly = np.trim_zeros(odd_form_polynomial(ctx, char), "b")
        roots = npoly.polyroots(poly) if len(poly) > 1 else np.zeros(0)
        if len(roots) and np.max(np.min(np.abs(roots[:, None] - ctx.geometry.e[None, :]), axis=1)) > 1e-5:
            continue
        return char
    return odd[int(np.argmax(norms))]


def riemann_constants(ctx: SurfaceContext) -> np.ndarray:
    """K with theta(K - A(D)) = 0 for all effective D of degree g - 1."""
    g = ctx.genus
    geo = ctx.geometry
    base = ctx.basepoint
    canonical = (g - 1) * abel_map(ctx, base.conjugate())
    centre = complex(np.mean(geo.e))
    radius = 0.6 * geo.scale + 0.5
    probes = []
    for j in range(3):
        pts = []
        for i in range(g - 1):
            ang = 0.7 + 2.1 * j + 1.3 * i
            z = centre + radius * (1.0 + 0.17 * i) * np.exp(1j * ang)
            pts.append(SurfacePoint(z, 1 if (i + j) % 2 == 0 else -1))
        probes.append(abel_map(ctx, Divisor.from_points(pts)))
    scale_pts = np.array([np.full(g, 0.13 + 0.07j) + 0.05 * k for k in range(3)])
    typical = float(np.mean(np.abs(theta(ctx, scale_pts))))
    best, best_val = None, math.inf
    for bits in itertools.product((0, 1), repeat=2 * g):
        n = np.array(bits[:g], float)
        m = np.array(bits[g:], float)
        cand = 0.5 * canonical + 0.5 * n + 0.5 * ctx.B @ m
        val = max(abs(theta(ctx, cand - p)) for p in probes) / typical
        if val < best_val:
            best, best_val = cand, val
    return lattice_reduce(ctx, best)[0]


def canonical_class_vector(ctx: SurfaceContext) -> np.ndarray:
    """Abel image of a canonical divisor, (g-1)(P0 + iota P0)."""
    return (ctx.genus - 1) * abel_map(ctx, ctx.basepoint.conjugate())


def half_lattice_vectors(ctx: SurfaceContext) -> list[np.ndarray]:
    g = ctx.genus
    out = []
    for bits in itertools.product((0, 1), repeat=2 * g):
        n = np.array(bits[:g], float)
        m = np.array(bits[g:], float)
        out.append(0.5 * n + 0.5 * ctx.B @ m)
    return out


def cycle_integral(ctx: SurfaceContext, index: int, funcs=None, tol: float = 1e-13):
    """Integrate around basis loop ``index``.

    Loops 0..g-1 are the a-cycles; loop g+k encircles the auxiliary segment
    between cut k and cut k+1 (crossing both cuts), so it is homologous to
    b_k - b_{k+1} (with b_g = 0).  ``funcs(z, y)`` defaults to the normalized
    holomorphic forms.  Returns (integral, start_point).
    """
    g = ctx.genus
    geo = ctx.geometry
    chain_index = 2 * index if index < g else 2 * (index - g) + 1
    if funcs is None:
        norm = ctx.omega_basis.normalization

        def funcs(z, y):
            return np.tensordot(norm, _raw_forms(geo, z, y), axes=1)
    total, z0, sign = _loop_integral_continuous(geo, chain_index, funcs, tol, ctx.config.max_period_nodes)
    return total, SurfacePoint(complex(z0), sign)


def cycle_loop_nodes(ctx: SurfaceContext, index: int, n: int = 512, phase: float = 0.3):
    """Nodes, dz/dtheta and continued y along basis loop ``index``."""
    g = ctx.genus
    geo = ctx.geometry
    chain_index = 2 * index if index < g else 2 * (index - g) + 1
    z, dz = _a_cycle_loop(geo, chain_index, n, phase)
    y = _continue_sqrt(geo, z)
    return z, dz, y


def cycle_lattice_vector(ctx: SurfaceContext, index: int) -> np.ndarray:
    """Lattice vector predicted for loop ``index`` (a_k -> e_k, aux_k -> B e_k - B e_{k+1})."""
    g = ctx.genus
    if index < g:
        return np.eye(g)[index].astype(complex)
    k = index - g
    vec = ctx.B[:, k].copy()
    if k + 1 < g:
        vec = vec - ctx.B[:, k + 1]
    return vec
