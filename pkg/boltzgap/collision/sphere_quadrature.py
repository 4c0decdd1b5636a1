"""
Angular integrals of the direct backend

    A_{m,i}(p, w) = int_{S^{d-1}} [phi_i(p') chi_m(p') - phi_i(p) chi_m(p)] b(w.sigma/|w|) dsigma,
    p' = p + (|w| sigma - w)/2

The image sphere has centre p - w/2 and radius |w|/2. Every circle on it is
written x(phi) = c + P cos(phi) + Q sin(phi); its crossings with the mesh
planes split [0, 2pi) into arcs that each lie in a single element, so the arc
sets of all elements partition the circle.

Integrable b (alpha < 0): gain over the arcs, loss as phi_i(p) times the sphere
integral of b. d=2 uses the global angle sigma = (sin t, cos t); d=3 integrates
the polar angle adaptively with exact azimuthal arcs.

Non-integrable b (alpha >= 0): scattering frame from rotation_frame, the cap
[0, theta0] in closed form (s1_cancellation) and the tail [theta0, pi] adaptive
in a logarithmic polar variable.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special
from scipy.integrate import quad_vec

from boltzgap.config import QuadratureSettings
from boltzgap.errors import QuadratureToleranceError, SingularEvaluationError
from boltzgap.kernels import CrossSection, b_of_angle, sphere_integral_b
from boltzgap.mesh_basis import BasisSpec, Mesh, locate_many
from boltzgap.quadrature import gauss_01

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


# ------------------------------------------------------------------------------
# Interval sets
# ------------------------------------------------------------------------------
@dataclass(frozen=True)
class IntervalSet:
    """Sorted, disjoint, nonempty half-open intervals [a, b) in [0, 2pi)."""
    intervals: Tuple[Tuple[float, float], ...] = ()

    def __post_init__(self):
        prev = 0.0
        for a, b in self.intervals:
            if not (prev <= a < b <= TWO_PI + 1e-12):
                raise ValueError(f"malformed interval set {self.intervals}")
            prev = b

    def __iter__(self) -> Iterator[Tuple[float, float]]:
        return iter(self.intervals)

    def __len__(self) -> int:
        return len(self.intervals)

    def __bool__(self) -> bool:
        return bool(self.intervals)

    @property
    def measure(self) -> float:
        return float(sum(b - a for a, b in self.intervals))

    def contains(self, angle: float) -> bool:
        angle = float(angle) % TWO_PI
        return any(a <= angle < b for a, b in self.intervals)

    @classmethod
    def full(cls) -> "IntervalSet":
        return cls(((0.0, TWO_PI),))

    @classmethod
    def from_pieces(cls, lo: Sequence[float], hi: Sequence[float], keep: Sequence[bool]) -> "IntervalSet":
        out = []
        for a, b, k in zip(lo, hi, keep):
            if not k or b <= a:
                continue
            if out and out[-1][1] == a:
                out[-1] = (out[-1][0], float(b))
            else:
                out.append((float(a), float(b)))
        return cls(tuple(out))


# ------------------------------------------------------------------------------
# Rotation frames
# ------------------------------------------------------------------------------
@dataclass(frozen=True)
class RotationFrame:
    """Orthogonal A with A u = |u| e_d; sigma = A^T s maps local to global directions."""
    A: np.ndarray
    u: np.ndarray

    def to_global(self, local: np.ndarray) -> np.ndarray:
        return np.asarray(local, dtype=float) @ self.A


def _frame_matrices(w: np.ndarray) -> np.ndarray:
    """Batched rotation matrices for the rows of w, shape (n, d, d)."""
    n, d = w.shape
    norm = np.sqrt(np.sum(w * w, axis=1))
    if np.any(norm == 0.0):
        raise SingularEvaluationError("rotation frame of u = 0")
    A = np.zeros((n, d, d))
    if d == 2:
        u1, u2 = w[:, 0] / norm, w[:, 1] / norm
        A[:, 0, 0], A[:, 0, 1] = -u2, u1
        A[:, 1, 0], A[:, 1, 1] = u1, u2
        return A
    u1, u2, u3 = w[:, 0], w[:, 1], w[:, 2]
    s = np.hypot(u1, u2)
    polar = s == 0.0
    ss = np.where(polar, 1.0, s)
    A[:, 0, 0] = u1 * u3 / ss / norm
    A[:, 0, 1] = u2 * u3 / ss / norm
    A[:, 0, 2] = -s / norm
    A[:, 1, 0] = -u2 / ss
    A[:, 1, 1] = u1 / ss
    A[:, 2] = w / norm[:, None]
    # u along the z-axis: identity, or its half-turn about e1 when u points down
    if np.any(polar):
        sign = np.where(u3[polar] > 0, 1.0, -1.0)
        A[polar] = 0.0
        A[polar, 0, 0] = 1.0
        A[polar, 1, 1] = sign
        A[polar, 2, 2] = sign
    return A


def rotation_frame(u) -> RotationFrame:
    u = np.asarray(u, dtype=float)
    if u.ndim != 1 or u.size not in (2, 3):
        raise ValueError(f"rotation frame needs a 2- or 3-vector, got shape {u.shape}")
    return RotationFrame(A=_frame_matrices(u[None, :])[0], u=u.copy())


# ------------------------------------------------------------------------------
# Circles against planes
# ------------------------------------------------------------------------------
def _crossings(c: np.ndarray, P: np.ndarray, Q: np.ndarray, planes: np.ndarray) -> np.ndarray:
    """Angles where x_j(phi) = plane value, NaN where the axis is not crossed. planes: (d, L)."""
    n = c.shape[0]
    R = np.hypot(P, Q)
    psi = np.arctan2(Q, P)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = (planes[None, :, :] - c[:, :, None]) / R[:, :, None]
    hit = np.abs(ratio) < 1.0
    ac = np.arccos(np.where(hit, ratio, 0.0))
    lo = np.where(hit, np.mod(psi[:, :, None] - ac, TWO_PI), np.nan)
    hi = np.where(hit, np.mod(psi[:, :, None] + ac, TWO_PI), np.nan)
    return np.concatenate([lo.reshape(n, -1), hi.reshape(n, -1)], axis=1)


def arc_breaks(c: np.ndarray, P: np.ndarray, Q: np.ndarray, planes: np.ndarray,
               extra: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Sorted arc end points (a, b), each (n, K); consecutive arcs tile [0, 2pi)."""
    n = c.shape[0]
    cols = [np.zeros((n, 1)), _crossings(c, P, Q, planes)]
    if extra is not None:
        cols.append(np.mod(extra, TWO_PI).reshape(n, -1))
    br = np.concatenate(cols, axis=1)
    br = np.where(np.isnan(br), TWO_PI, br)
    br.sort(axis=1)
    br = np.concatenate([br, np.full((n, 1), TWO_PI)], axis=1)
    return br[:, :-1], br[:, 1:]


def _circle_points(c, P, Q, angle) -> np.ndarray:
    angle = np.asarray(angle)
    extra = angle.ndim - 1
    shape = (c.shape[0],) + (1,) * extra + (c.shape[1],)
    return (c.reshape(shape) + P.reshape(shape) * np.cos(angle)[..., None]
            + Q.reshape(shape) * np.sin(angle)[..., None])


def mesh_planes(mesh: Mesh) -> np.ndarray:
    g = -mesh.V + np.arange(mesh.N + 1) * mesh.dv
    return np.broadcast_to(g, (mesh.d, g.size))


def arc_cells(mesh: Mesh, c, P, Q, extra=None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Arcs of each circle against the whole mesh: (a, b, flat cell or -1)."""
    a, b = arc_breaks(c, P, Q, mesh_planes(mesh), extra)
    x = _circle_points(c, P, Q, 0.5 * (a + b))
    cells = locate_many(mesh, x.reshape(-1, mesh.d)).reshape(a.shape)
    return a, b, cells


def _global_circle(p: np.ndarray, w: np.ndarray, polar: Optional[float] = None):
    """(c, P, Q) of the global parameterization: d=2 sigma=(sin t, cos t); d=3 azimuth at polar angle."""
    rho = 0.5 * np.sqrt(np.sum(w * w, axis=1))
    c = p - 0.5 * w
    d = p.shape[1]
    P = np.zeros_like(p)
    Q = np.zeros_like(p)
    if d == 2:
        P[:, 1] = rho
        Q[:, 0] = rho
        return c, P, Q
    c = c.copy()
    c[:, 2] += rho * math.cos(polar)
    P[:, 0] = rho * math.sin(polar)
    Q[:, 1] = rho * math.sin(polar)
    return c, P, Q


def _frame_circle(p: np.ndarray, w: np.ndarray, A: np.ndarray, theta):
    """(c, P, Q) of the azimuthal circle at scattering angle theta (d=3)."""
    rho = 0.5 * np.sqrt(np.sum(w * w, axis=1))
    theta = np.broadcast_to(np.asarray(theta, dtype=float), rho.shape)
    c = p + (rho * (np.cos(theta) - 1.0))[:, None] * A[:, 2, :]
    r = (rho * np.sin(theta))[:, None]
    return c, r * A[:, 0, :], r * A[:, 1, :]


def target_intervals(v, u, cell, mesh: Mesh, fixed_polar: Optional[float] = None,
                     frame: Optional[RotationFrame] = None) -> IntervalSet:
    """
    Angles with v' = v + (|u| sigma - u)/2 in element `cell`.

    d=2: the global angle of sigma = (sin t, cos t), or the scattering angle
    when a frame is given. d=3: the azimuth at polar angle fixed_polar, about
    e3 or about u when a frame is given.
    """
    v = np.asarray(v, dtype=float)[None, :]
    u = np.asarray(u, dtype=float)[None, :]
    if not np.any(u):
        raise SingularEvaluationError("target intervals of u = 0")
    d = mesh.d
    k = np.asarray(cell if not np.isscalar(cell) else mesh.multi_index(int(cell)), dtype=float)
    lo = -mesh.V + k * mesh.dv
    hi = lo + mesh.dv
    if d == 3 and fixed_polar is None:
        raise ValueError("d=3 target intervals need a fixed polar angle")
    if frame is None:
        c, P, Q = _global_circle(v, u, fixed_polar)
    elif d == 2:
        rho = 0.5 * float(np.linalg.norm(u))
        c = v - 0.5 * u
        P = rho * frame.A[1][None, :]
        Q = rho * frame.A[0][None, :]
    else:
        c, P, Q = _frame_circle(v, u, frame.A[None], fixed_polar)
    planes = np.stack([lo, hi], axis=1)
    a, b = arc_breaks(c, P, Q, planes)
    x = _circle_points(c, P, Q, 0.5 * (a + b))[0]
    inside = np.all((x >= lo) & (x < hi), axis=-1)
    return IntervalSet.from_pieces(a[0], b[0], inside)


# ------------------------------------------------------------------------------
# Closed-form grazing cap
# ------------------------------------------------------------------------------
def s1_cancellation(t0, grad_dot_u, u_norm, cs: CrossSection) -> np.ndarray:
    """
    int over the cap sin(theta/2) <= t0 of [phi(v') - phi(v)] b dsigma for a
    linear phi with (grad phi . u/|u|) = grad_dot_u.
    """
    alpha = cs.params.alpha
    t0 = np.asarray(t0, dtype=float)
    half = 0.5 * np.asarray(u_norm, dtype=float)
    g = np.asarray(grad_dot_u, dtype=float)
    if cs.params.d == 3:
        return TWO_PI * half * g * (-8.0 * cs.amplitude * t0 ** (2.0 - alpha) / (2.0 - alpha))
    a = 1.0 - 0.5 * alpha
    cap = special.beta(a, 0.5) * special.betainc(a, 0.5, np.clip(t0 * t0, 0.0, 1.0))
    return -4.0 * cs.amplitude * half * g * cap


# ------------------------------------------------------------------------------
# Batched accumulation
# ------------------------------------------------------------------------------
@dataclass
class AngularContext:
    mesh: Mesh
    basis: BasisSpec
    cs: CrossSection
    settings: QuadratureSettings = field(default_factory=QuadratureSettings)
    centers: np.ndarray = field(init=False, repr=False)
    sb: Optional[float] = field(init=False, default=None)

    def __post_init__(self):
        self.centers = self.mesh.centers()
        if self.cs.params.integrable:
            self.sb = sphere_integral_b(self.cs)

    @property
    def integrable(self) -> bool:
        return self.cs.params.integrable


def _scatter(out: np.ndarray, cells: np.ndarray, vals: np.ndarray, coef: np.ndarray):
    """out[r, m, i] += sum coef[n, r] vals[n, ..., i] over entries with cells == m."""
    n_el = out.shape[1]
    valid = cells >= 0
    idx = cells[valid]
    if idx.size == 0:
        return
    extra = vals.ndim - 2
    for r in range(coef.shape[1]):
        c = coef[:, r].reshape((-1,) + (1,) * extra)
        for i in range(vals.shape[-1]):
            out[r, :, i] += np.bincount(idx, weights=(c * vals[..., i])[valid], minlength=n_el)


def _arc_moments(ctx: AngularContext, c, P, Q, a, b, cells) -> np.ndarray:
    """Exact int_a^b phi_i(x(phi)) dphi for each arc, (n, K, n_local)."""
    nl = ctx.basis.n_local
    out = np.empty(a.shape + (nl,))
    out[..., 0] = b - a
    if nl > 1:
        w = ctx.centers[np.maximum(cells, 0)]
        sa, sb, ca, cb = np.sin(a), np.sin(b), np.cos(a), np.cos(b)
        for j in range(ctx.mesh.d):
            out[..., j + 1] = ((c[:, None, j] - w[..., j]) * (b - a) + P[:, None, j] * (sb - sa)
                               + Q[:, None, j] * (ca - cb)) / ctx.mesh.dv
    return out


def _local_values(ctx: AngularContext, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    cells = locate_many(ctx.mesh, x.reshape(-1, ctx.mesh.d)).reshape(x.shape[:-1])
    local = (x - ctx.centers[np.maximum(cells, 0)]) / ctx.mesh.dv
    return cells, ctx.basis.evaluate(local)


def _loss(ctx: AngularContext, out: np.ndarray, p: np.ndarray, coef: np.ndarray, scale):
    """out[:, cell(p), :] -= scale * coef phi(p)."""
    cells, phi = _local_values(ctx, p)
    _scatter(out, cells[:, None], -(np.asarray(scale) * np.ones(len(p)))[:, None, None] * phi[:, None, :], coef)


def _gain_2d(ctx: AngularContext, out: np.ndarray, p, w, coef):
    c, P, Q = _global_circle(p, w)
    e = ctx.cs.exponent
    if e == 0.0:
        a, b, cells = arc_cells(ctx.mesh, c, P, Q)
        _scatter(out, cells, ctx.cs.amplitude * _arc_moments(ctx, c, P, Q, a, b, cells), coef)
        return
    # b singular (or just non-constant) about sigma = w/|w|
    what = w / np.sqrt(np.sum(w * w, axis=1))[:, None]
    sing = np.mod(np.arctan2(what[:, 0], what[:, 1]), TWO_PI)
    a, b, cells = arc_cells(ctx.mesh, c, P, Q, extra=sing[:, None])
    t, wt = gauss_01(ctx.settings.arc_order)
    q = 1.0 / (1.0 + e) if e < 0 else 1.0
    L = (b - a)[..., None]
    lo_sing = (a == sing[:, None])[..., None]
    hi_sing = ((b == sing[:, None]) | ((b == TWO_PI) & (sing[:, None] == 0.0)))[..., None]
    theta = np.where(lo_sing, a[..., None] + L * t ** q,
                     np.where(hi_sing, b[..., None] - L * t ** q, a[..., None] + L * t))
    jac = np.where(lo_sing | hi_sing, L * q * t ** (q - 1.0), L) * wt
    sigma = np.stack([np.sin(theta), np.cos(theta)], axis=-1)
    half = 0.5 * np.sqrt(np.sum((sigma - what[:, None, None, :]) ** 2, axis=-1))
    with np.errstate(divide="ignore"):
        # zero-length arcs may sit on the singular direction
        bval = np.where(half > 0.0, ctx.cs.amplitude * half ** e, 0.0)
    x = _circle_points(c, P, Q, theta)
    local = (x - ctx.centers[np.maximum(cells, 0)][:, :, None, :]) / ctx.mesh.dv
    phi = ctx.basis.evaluate(local)
    vals = np.einsum("nkq,nkqi->nki", jac * bval, phi)
    _scatter(out, cells, vals, coef)


def _adaptive(ctx: AngularContext, f, a: float, b: float, size: int) -> np.ndarray:
    st = ctx.settings
    res, err, info = quad_vec(f, a, b, epsabs=1e-14, epsrel=st.ang_tol, norm="max",
                              limit=st.ang_max_intervals, full_output=True)
    scale = float(np.max(np.abs(res))) if size else 0.0
    if not info.success and err > max(1e-14, st.ang_tol * scale):
        raise QuadratureToleranceError("angular integral did not reach tolerance",
                                       err / scale if scale else err)
    return res


def _gain_3d(ctx: AngularContext, out: np.ndarray, p, w, coef):
    shape = out.shape
    mesh = ctx.mesh
    if ctx.cs.is_constant:
        amp = ctx.cs.amplitude

        def f(theta):
            acc = np.zeros(shape)
            c, P, Q = _global_circle(p, w, theta)
            a, b, cells = arc_cells(mesh, c, P, Q)
            _scatter(acc, cells, _arc_moments(ctx, c, P, Q, a, b, cells), coef)
            return (amp * math.sin(theta)) * acc.ravel()
    else:
        A = _frame_matrices(w)

        def f(theta):
            acc = np.zeros(shape)
            c, P, Q = _frame_circle(p, w, A, theta)
            a, b, cells = arc_cells(mesh, c, P, Q)
            _scatter(acc, cells, _arc_moments(ctx, c, P, Q, a, b, cells), coef)
            return (float(b_of_angle(theta, ctx.cs)) * math.sin(theta)) * acc.ravel()

    out += _adaptive(ctx, f, 0.0, math.pi, out.size).reshape(shape)


def _cap_angles(ctx: AngularContext, p: np.ndarray, w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(t0, cell) with t0 = sin(theta0/2): the cap where p' stays in p's own element (or outside the domain)."""
    mesh = ctx.mesh
    cells = locate_many(mesh, p)
    lo = -mesh.V + mesh.multi_index(np.maximum(cells, 0)) * mesh.dv
    inner = np.min(np.minimum(p - lo, lo + mesh.dv - p), axis=1)
    outside = np.sqrt(np.sum(np.maximum(np.abs(p) - mesh.V, 0.0) ** 2, axis=1))
    dist = np.where(cells >= 0, inner, outside)
    if np.any(dist <= 0.0):
        raise SingularEvaluationError("non-integrable angular integral at a point on an element face")
    unorm = np.sqrt(np.sum(w * w, axis=1))
    return np.minimum(1.0, dist / unorm), cells


def _noncutoff(ctx: AngularContext, out: np.ndarray, p, w, coef):
    mesh, basis = ctx.mesh, ctx.basis
    d = mesh.d
    shape = out.shape
    A = _frame_matrices(w)
    unorm = np.sqrt(np.sum(w * w, axis=1))
    rho = 0.5 * unorm
    t0, own = _cap_angles(ctx, p, w)
    inside = own >= 0

    if basis.n_local > 1 and np.any(inside):
        # grazing cap, linear modes only
        s1 = np.zeros((len(p), 1, basis.n_local))
        what = w / unorm[:, None]
        s1[:, 0, 1:] = s1_cancellation(t0[:, None], what / mesh.dv, unorm[:, None], ctx.cs)
        _scatter(out, own[:, None], s1, coef)

    theta0 = 2.0 * np.arcsin(t0)
    span = np.log(math.pi / theta0)
    _, phi_p = _local_values(ctx, p)
    measure = TWO_PI if d == 3 else 2.0

    def f(tau):
        theta = theta0 * np.exp(tau * span)
        jac = theta * span * b_of_angle(theta, ctx.cs)
        acc = np.zeros(shape)
        if d == 3:
            jac = jac * np.sin(theta)
            c, P, Q = _frame_circle(p, w, A, theta)
            a, b, cells = arc_cells(mesh, c, P, Q)
            vals = _arc_moments(ctx, c, P, Q, a, b, cells)
        else:
            ds = (rho * np.sin(theta))[:, None] * A[:, 0, :]
            base = p + (rho * (np.cos(theta) - 1.0))[:, None] * A[:, 1, :]
            x = np.stack([base + ds, base - ds], axis=1)
            cells, vals = _local_values(ctx, x)
        _scatter(acc, cells, jac[:, None, None] * vals, coef)
        loss = np.where(inside, -measure * jac, 0.0)
        _scatter(acc, own[:, None], loss[:, None, None] * phi_p[:, None, :], coef)
        return acc.ravel()

    if np.any(span > 0):
        out += _adaptive(ctx, f, 0.0, 1.0, out.size).reshape(shape)


def accumulate_angular(ctx: AngularContext, p: np.ndarray, w: np.ndarray, coef: np.ndarray) -> np.ndarray:
    """
    sum_n coef[n, r] A_{m,i}(p_n, w_n) for every element m and local index i.

    Returns shape (coef.shape[1], n_elements, n_local).
    """
    p = np.atleast_2d(np.asarray(p, dtype=float))
    w = np.atleast_2d(np.asarray(w, dtype=float))
    coef = np.asarray(coef, dtype=float).reshape(len(p), -1)
    if np.any(np.sum(w * w, axis=1) == 0.0):
        raise SingularEvaluationError("angular integral with u = 0")
    out = np.zeros((coef.shape[1], ctx.mesh.n_elements, ctx.basis.n_local))
    if len(p) == 0:
        return out
    if not ctx.integrable:
        _noncutoff(ctx, out, p, w, coef)
        return out
    if ctx.mesh.d == 2:
        _gain_2d(ctx, out, p, w, coef)
    else:
        _gain_3d(ctx, out, p, w, coef)
    _loss(ctx, out, p, coef, ctx.sb)
    return out


def angular_integrals(v, u, cs: CrossSection, mesh: Mesh, basis: BasisSpec,
                      settings: Optional[QuadratureSettings] = None) -> np.ndarray:
    """A_{m,i}(v, u) for every element m, shape (n_elements, n_local)."""
    ctx = AngularContext(mesh=mesh, basis=basis, cs=cs, settings=settings or QuadratureSettings())
    return accumulate_angular(ctx, np.asarray(v, dtype=float)[None, :], np.asarray(u, dtype=float)[None, :],
                              np.ones((1, 1)))[0]


def angular_integral(v, u, m: Union[int, Sequence[int]], i: int, cs: CrossSection, mesh: Mesh,
                     tol: float = 1e-7, basis: Optional[BasisSpec] = None) -> float:
    if basis is None:
        basis = BasisSpec(p=1 if i > 0 else 0, d=mesh.d)
    flat = int(m) if np.isscalar(m) else int(mesh.flat_index(np.asarray(m)))
    settings = QuadratureSettings(ang_tol=tol)
    return float(angular_integrals(v, u, cs, mesh, basis, settings)[flat, i])
