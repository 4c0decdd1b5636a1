"""
Grad splitting L = nu Id + K for integrable cross-sections, with the explicit
kernel k = k1 - k2, and the collision matrix it induces:

    G(k,m) = delta_km int_{E_k} nu s^2 Phi x Phi + int_{E_k} int_{E_m} (k1 - k2) s(v) s(xi) Phi(v) x Phi(xi)

with s = 1 in the F-representation and s = mu^{1/2} in the g-representation,
where G is the Galerkin matrix of the same Dirichlet form the direct backend
assembles.

Far element pairs use tensor Gauss rules. Near pairs (Chebyshev distance <= 1)
are integrated in r = xi - v; boxes of the r-domain touching r = 0 use a Duffy
map whose Jacobian absorbs the |r|^{-d-alpha} and |r|^gamma singularities.
"""
import itertools
import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from scipy import integrate, special
from scipy.integrate import IntegrationWarning
from scipy.interpolate import RectBivariateSpline

from boltzgap.collision.matrix import CollisionMatrix, check_memory, symmetrize
from boltzgap.collision.workers import map_blocks
from boltzgap.config import OperatorParams, QuadratureSettings
from boltzgap.errors import QuadratureToleranceError, SingularEvaluationError, UnsupportedCrossSectionError
from boltzgap.kernels import CrossSection, NuProfile, cross_section, nu_profile, sphere_integral_b
from boltzgap.mesh_basis import BasisSpec, Mesh, Representation, maxwellian_weight
from boltzgap.quadrature import gauss_01, hermite_tensor, tensor_rule

log = logging.getLogger(__name__)


# ------------------------------------------------------------------------------
# Plane Pi = {w : (xi - v).w = 0}
# ------------------------------------------------------------------------------
@dataclass(frozen=True)
class PlanarQuadrature:
    d: int
    order: int = 32
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        x, w = hermite_tensor(self.order, self.d - 1)
        object.__setattr__(self, "nodes", x)
        object.__setattr__(self, "weights", w)

    def orientation(self, v, xi) -> np.ndarray:
        return plane_basis(v, xi)


def _unit(v, xi) -> Tuple[np.ndarray, float]:
    r = np.asarray(xi, dtype=float) - np.asarray(v, dtype=float)
    rn = float(np.linalg.norm(r))
    if rn == 0.0:
        raise SingularEvaluationError("kernel evaluated at v = xi")
    return r / rn, rn


def plane_basis(v, xi) -> np.ndarray:
    """Orthonormal basis of Pi, shape (d-1, d); pivots on the axis least aligned with xi - v."""
    rhat, _ = _unit(v, xi)
    d = rhat.size
    if d == 2:
        return np.array([[-rhat[1], rhat[0]]])
    axis = np.zeros(d)
    axis[int(np.argmin(np.abs(rhat)))] = 1.0
    e1 = axis - (axis @ rhat) * rhat
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(rhat, e1)
    return np.stack([e1, e2])


def zeta(v, xi) -> Tuple[np.ndarray, np.ndarray]:
    """(zeta, zeta_perp): the Pi and (xi - v) components of (xi + v)/2."""
    rhat, _ = _unit(v, xi)
    mid = 0.5 * (np.asarray(xi, dtype=float) + np.asarray(v, dtype=float))
    perp = (mid @ rhat) * rhat
    return mid - perp, perp


def planar_integral(c, zeta_norm, beta: float, quad: PlanarQuadrature, centered: bool = False) -> np.ndarray:
    """
    int_Pi exp(-|t|^2/2) (c^2 + |t - zeta|^2)^beta dt, which depends on zeta only
    through |zeta|; zeta is placed on the first plane axis.

    The default rule is shifted onto the singular point t = zeta and is exact at
    beta = 0. centered=True keeps the nodes on the Gaussian of the unshifted form,

        int_Pi exp(-|s + zeta|^2/2) (c^2 + |s|^2)^beta ds,

    which is a genuine node sum for every beta but loses accuracy once |zeta|
    approaches the outermost Hermite node.
    """
    c = np.asarray(c, dtype=float)
    zn = np.asarray(zeta_norm, dtype=float)
    c, zn = np.broadcast_arrays(c, zn)
    if beta == 0.0 and not centered:
        return np.full(c.shape, (2.0 * math.pi) ** (0.5 * (quad.d - 1)))
    x, w = quad.nodes, quad.weights
    x1 = x[:, 0]
    c2 = (c * c).ravel()
    z = zn.ravel()
    out = np.empty(c2.size)
    step = max(1, (1 << 22) // w.size)
    if centered:
        r2 = np.sum(x * x, axis=1)
        for s in range(0, c2.size, step):
            e = s + step
            shift = np.exp(-x1[None, :] * z[s:e, None] - 0.5 * z[s:e, None] ** 2)
            power = (c2[s:e, None] + r2[None, :]) ** beta if beta != 0.0 else 1.0
            out[s:e] = (shift * power) @ w
        return out.reshape(c.shape)
    rest = np.sum(x[:, 1:] ** 2, axis=1)
    for s in range(0, c2.size, step):
        e = s + step
        dist2 = (x1[None, :] - z[s:e, None]) ** 2 + rest[None, :]
        out[s:e] = ((c2[s:e, None] + dist2) ** beta) @ w
    return out.reshape(c.shape)


# ------------------------------------------------------------------------------
# Tabulated plane integral
# ------------------------------------------------------------------------------
_PLANE_C_MIN = 1e-6
_PLANE_TAIL = 12.0


def plane_value(c: float, zeta_norm: float, beta: float, d: int, rtol: float = 1e-10) -> float:
    """
    Adaptive reference value of planar_integral. With rho = c sinh(y) the factor
    (c^2 + rho^2)^beta becomes c^{2 beta} cosh(y)^{2 beta}, smooth at rho = 0.
    """
    c, z = float(c), float(zeta_norm)
    if c <= 0.0:
        raise SingularEvaluationError("plane integral needs c > 0")
    if d == 2:
        lo, hi = math.asinh((-z - _PLANE_TAIL) / c), math.asinh((_PLANE_TAIL - z) / c)

        def f(y):
            return math.cosh(y) ** (2.0 * beta + 1.0) * math.exp(-0.5 * (c * math.sinh(y) + z) ** 2)

        scale = c ** (2.0 * beta + 1.0)
        breaks = [0.0, math.asinh(-z / c)]
    else:
        lo, hi = 0.0, math.asinh((z + _PLANE_TAIL) / c)

        def f(y):
            rho = c * math.sinh(y)
            return (math.sinh(y) * math.cosh(y) ** (2.0 * beta + 1.0) * math.exp(-0.5 * (rho - z) ** 2)
                    * special.ive(0, z * rho))

        scale = 2.0 * math.pi * c ** (2.0 * beta + 2.0)
        breaks = [math.asinh(z / c)]
    points = sorted({b for b in breaks if lo < b < hi})
    with warnings.catch_warnings(record=True) as messages:
        warnings.simplefilter("always", category=IntegrationWarning)
        val, err = integrate.quad(f, lo, hi, points=points or None, epsrel=rtol, epsabs=0.0, limit=400)
        for warning in messages:
            log.warning(f"[plane] c={c:.6g} zeta={z:.6g}: {warning.message}")
    if err > 1e3 * rtol * abs(val):
        raise QuadratureToleranceError(f"plane integral at c={c:.6g} zeta={z:.6g} not converged", err / abs(val))
    return scale * val


@dataclass(frozen=True)
class PlaneTable:
    """
    Bicubic spline of log planar_integral over (log c, |zeta|) on
    [1e-6, c_max] x [0, z_max]. Points outside the box fall back to the
    Gauss-Hermite rule.
    """
    d: int
    beta: float
    c_max: float
    z_max: float
    size: int = 160
    spline: RectBivariateSpline = field(init=False, repr=False)

    def __post_init__(self):
        t0 = time.perf_counter()
        logc = np.linspace(math.log(_PLANE_C_MIN), math.log(self.c_max), self.size)
        zs = np.linspace(0.0, self.z_max, self.size)
        vals = np.array([[plane_value(math.exp(a), z, self.beta, self.d) for z in zs] for a in logc])
        object.__setattr__(self, "spline", RectBivariateSpline(logc, zs, np.log(vals), kx=3, ky=3, s=0))
        log.info(f"[plane] d={self.d} beta={self.beta:g} table {self.size}x{self.size} "
                 f"built in {time.perf_counter() - t0:.1f}s")

    def inside(self, c: np.ndarray, zn: np.ndarray) -> np.ndarray:
        return (c >= _PLANE_C_MIN) & (c <= self.c_max) & (zn <= self.z_max)

    def evaluate(self, c, zeta_norm, fallback: PlanarQuadrature) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        zn = np.asarray(zeta_norm, dtype=float)
        c, zn = np.broadcast_arrays(c, zn)
        out = np.empty(c.shape)
        ok = self.inside(c, zn)
        if np.any(ok):
            out[ok] = np.exp(self.spline.ev(np.log(c[ok]), zn[ok]))
        if not np.all(ok):
            out[~ok] = planar_integral(c[~ok], zn[~ok], self.beta, fallback)
        return out


@lru_cache(maxsize=8)
def plane_table(d: int, beta: float, V: float, size: int = 160) -> PlaneTable:
    """Table covering every (|xi - v|, |zeta|) pair of [-V, V)^d."""
    root = math.sqrt(d) * V
    return PlaneTable(d=d, beta=beta, c_max=2.0 * root * 1.01, z_max=root * 1.01, size=size)


# ------------------------------------------------------------------------------
# Kernels
# ------------------------------------------------------------------------------
def _require_integrable(params: OperatorParams):
    if not params.integrable:
        raise UnsupportedCrossSectionError(f"Grad splitting needs alpha < 0, got alpha={params.alpha}")


def k1_values(v: np.ndarray, xi: np.ndarray, params: OperatorParams, sb: float) -> np.ndarray:
    d = params.d
    rn = np.sqrt(np.sum((xi - v) ** 2, axis=-1))
    gauss = np.exp(-0.25 * (np.sum(v * v, axis=-1) + np.sum(xi * xi, axis=-1)))
    power = rn ** params.gamma if params.gamma != 0.0 else 1.0
    return sb * (2.0 * math.pi) ** (-0.5 * d) * gauss * power


def k2_values(v: np.ndarray, xi: np.ndarray, params: OperatorParams, cs: CrossSection,
              quad: PlanarQuadrature, analytic: Optional[bool] = None,
              table: Optional[PlaneTable] = None) -> np.ndarray:
    d = params.d
    r = xi - v
    rn = np.sqrt(np.sum(r * r, axis=-1))
    rhat = r / rn[..., None]
    mid = 0.5 * (xi + v)
    along = np.sum(mid * rhat, axis=-1)  # (|xi|^2 - |v|^2) / (2|xi - v|)
    zn = np.sqrt(np.maximum(np.sum(mid * mid, axis=-1) - along * along, 0.0))
    expo = np.exp(-0.125 * rn * rn - 0.5 * along * along)
    pref = 2.0 ** d * cs.amplitude * (2.0 * math.pi) ** (-0.5 * d) * rn ** (-d - params.alpha)
    beta = params.beta
    if analytic is None:
        analytic = beta == 0.0
    if analytic:
        if beta != 0.0:
            raise ValueError("closed-form k2 only holds for gamma + 1 + alpha = 0")
        plane = (2.0 * math.pi) ** (0.5 * (d - 1))
    elif beta == 0.0:
        plane = planar_integral(rn, zn, beta, quad, centered=True)
    elif table is not None:
        plane = table.evaluate(rn, zn, quad)
    else:
        plane = planar_integral(rn, zn, beta, quad)
    return pref * expo * plane


def kernel_k1(v, xi, params: OperatorParams) -> float:
    _require_integrable(params)
    v = np.asarray(v, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if params.gamma < 0 and np.array_equal(v, xi):
        raise SingularEvaluationError("k1 evaluated at v = xi with gamma < 0")
    sb = sphere_integral_b(cross_section(params))
    return float(k1_values(v, xi, params, sb))


def kernel_k2(v, xi, params: OperatorParams, quad: Optional[PlanarQuadrature] = None,
              analytic: Optional[bool] = None) -> float:
    _require_integrable(params)
    v = np.asarray(v, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if np.array_equal(v, xi):
        raise SingularEvaluationError("k2 evaluated at v = xi")
    quad = quad or PlanarQuadrature(d=params.d)
    cs = cross_section(params)
    if analytic is None and params.beta != 0.0:
        # explicit plane orientation; the integral only sees |zeta|
        basis = quad.orientation(v, xi)
        z, along_vec = zeta(v, xi)
        zn = float(np.linalg.norm(basis @ z))
        rn = float(np.linalg.norm(xi - v))
        along = float(np.linalg.norm(along_vec))
        d = params.d
        pref = 2.0 ** d * cs.amplitude * (2.0 * math.pi) ** (-0.5 * d) * rn ** (-d - params.alpha)
        expo = math.exp(-0.125 * rn * rn - 0.5 * along * along)
        return float(pref * expo * planar_integral(rn, zn, params.beta, quad))
    return float(k2_values(v, xi, params, cs, quad, analytic=analytic))


# ------------------------------------------------------------------------------
# Near-pair rules (unit cells, cell k centred at 0, cell m centred at delta)
# ------------------------------------------------------------------------------
def _duffy_cube(d: int, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Rule on [0,1]^d for integrands singular at the origin corner."""
    x, wx = gauss_01(n)
    if d == 1:
        return x[:, None], wx
    yl, wy = tensor_rule(n, d - 1)
    y = yl + 0.5
    pts, wts = [], []
    for i in range(d):
        t = np.empty((x.size, y.shape[0], d))
        t[:, :, i] = x[:, None]
        others = [j for j in range(d) if j != i]
        t[:, :, others] = x[:, None, None] * y[None, :, :]
        pts.append(t.reshape(-1, d))
        wts.append((wx[:, None] * x[:, None] ** (d - 1) * wy[None, :]).ravel())
    return np.concatenate(pts), np.concatenate(wts)


@lru_cache(maxsize=256)
def near_rule(delta: Tuple[int, ...], n_duffy: int, n_inner: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Nodes (x, rho) and weights W with

        int_{[-1/2,1/2]^d} int_{delta + [-1/2,1/2]^d} f(x, y) dy dx ~ sum W f(x, x + rho)

    The weights sum to 1.
    """
    d = len(delta)
    delta_arr = np.asarray(delta, dtype=float)
    xin, win = tensor_rule(n_inner, d)
    xin = xin + 0.5
    xs, rhos, ws = [], [], []
    for signs in itertools.product((-1, 1), repeat=d):
        lo = delta_arr + np.where(np.asarray(signs) > 0, 0.0, -1.0)
        hi = lo + 1.0
        if np.all((lo == 0.0) | (hi == 0.0)):
            t, wt = _duffy_cube(d, n_duffy)
            rho = t * np.where(lo == 0.0, 1.0, -1.0)
        else:
            t, wt = tensor_rule(n_duffy, d)
            rho = lo + t + 0.5
        s = rho - delta_arr
        width = 1.0 - np.abs(s)
        lower = -0.5 + np.maximum(0.0, -s)
        x = lower[:, None, :] + width[:, None, :] * xin[None, :, :]
        w = wt[:, None] * np.prod(width, axis=-1)[:, None] * win[None, :]
        xs.append(x.reshape(-1, d))
        rhos.append(np.broadcast_to(rho[:, None, :], x.shape).reshape(-1, d))
        ws.append(w.ravel())
    return np.concatenate(xs), np.concatenate(rhos), np.concatenate(ws)


# ------------------------------------------------------------------------------
# Assembly
# ------------------------------------------------------------------------------
@dataclass
class _GradContext:
    mesh: Mesh
    basis: BasisSpec
    params: OperatorParams
    cs: CrossSection
    sb: float
    nu: Optional[NuProfile]
    settings: QuadratureSettings
    quad: PlanarQuadrature
    centers: np.ndarray
    multi: np.ndarray
    representation: Representation = Representation.F
    table: Optional[PlaneTable] = None

    def weight(self, v: np.ndarray):
        """s(v): 1 in the F-representation, mu^{1/2}(v) in the g-representation."""
        if self.representation is Representation.F:
            return 1.0
        return np.sqrt(maxwellian_weight(v))


def _kernel(ctx: _GradContext, v: np.ndarray, xi: np.ndarray) -> np.ndarray:
    k = k1_values(v, xi, ctx.params, ctx.sb) - k2_values(v, xi, ctx.params, ctx.cs, ctx.quad, table=ctx.table)
    return k * ctx.weight(v) * ctx.weight(xi)


def _grad_row_block(ctx: _GradContext, k: int) -> np.ndarray:
    mesh, basis, st = ctx.mesh, ctx.basis, ctx.settings
    nl, n_el, dv, d = basis.n_local, mesh.n_elements, mesh.dv, mesh.d
    vol = mesh.volume
    wk = ctx.centers[k]
    out = np.zeros((nl, n_el, nl))

    if ctx.nu is not None:
        loc, w = tensor_rule(st.nu_order, d)
        pts = wk + dv * loc
        nuv = ctx.nu.evaluate(pts) * ctx.weight(pts) ** 2
        phi = basis.evaluate(loc)
        out[:, k, :] += np.einsum("q,q,ql,qm->lm", w, nuv, phi, phi)

    cheb = np.max(np.abs(ctx.multi - ctx.multi[k]), axis=1)

    # far pairs
    loc, w = tensor_rule(st.kernel_order, d)
    phi = basis.evaluate(loc)
    v = wk + dv * loc
    far = np.nonzero(cheb >= 2)[0]
    q = w.size
    step = max(1, (1 << 20) // (q * q))
    for s in range(0, far.size, step):
        ms = far[s:s + step]
        xi = ctx.centers[ms][:, None, :] + dv * loc[None, :, :]
        vb, xb = np.broadcast_arrays(v[None, :, None, :], xi[:, None, :, :])
        K = _kernel(ctx, vb, xb)
        out[:, ms, :] += vol * np.einsum("a,b,al,bj,mab->lmj", w, w, phi, phi, K)

    # near pairs
    for m in np.nonzero(cheb <= 1)[0]:
        delta = tuple(int(x) for x in ctx.multi[m] - ctx.multi[k])
        x, rho, W = near_rule(delta, st.near_order, st.kernel_order)
        v_n = wk + dv * x
        xi_n = v_n + dv * rho
        K = _kernel(ctx, v_n, xi_n)
        phi_v = basis.evaluate(x)
        phi_x = basis.evaluate(x + rho - np.asarray(delta, dtype=float))
        out[:, m, :] += vol * np.einsum("n,n,nl,nj->lj", W, K, phi_v, phi_x)

    return out.reshape(nl, n_el * nl)


def _context(mesh: Mesh, basis: BasisSpec, params: OperatorParams, nu: Optional[NuProfile],
             settings: QuadratureSettings, representation: Representation = Representation.F) -> _GradContext:
    cs = cross_section(params)
    table = None
    if settings.plane_table and params.beta != 0.0:
        table = plane_table(params.d, params.beta, float(mesh.V), settings.plane_table_size)
    return _GradContext(
        mesh=mesh, basis=basis, params=params, cs=cs, sb=sphere_integral_b(cs), nu=nu,
        settings=settings, quad=PlanarQuadrature(d=params.d, order=settings.plane_order),
        centers=mesh.centers(), multi=mesh.multi_index(np.arange(mesh.n_elements)),
        representation=Representation.coerce(representation), table=table,
    )


def _assemble_rows(ctx: _GradContext, threads: int) -> np.ndarray:
    rows = map_blocks(_grad_row_block, ctx, list(range(ctx.mesh.n_elements)), threads)
    return np.vstack(rows)


def kernel_block_table(mesh: Mesh, basis: BasisSpec, params: OperatorParams,
                       settings: Optional[QuadratureSettings] = None, threads: int = 1,
                       representation=Representation.F) -> np.ndarray:
    """Kernel-only (k1 - k2) Galerkin matrix, without the nu term."""
    _require_integrable(params)
    settings = settings or QuadratureSettings()
    return _assemble_rows(_context(mesh, basis, params, None, settings, representation), threads)


def assemble_grad(mesh: Mesh, basis: BasisSpec, params: OperatorParams, nu: Optional[NuProfile] = None,
                  settings: Optional[QuadratureSettings] = None, threads: int = 1,
                  memory_budget_gb: float = 8.0, representation=Representation.F) -> CollisionMatrix:
    _require_integrable(params)
    settings = settings or QuadratureSettings()
    rep = Representation.coerce(representation)
    M = basis.n_dofs(mesh)
    check_memory(M, memory_budget_gb)
    if nu is None:
        nu = nu_profile(params, mesh.V, mesh.dv, settings.nu_table_size, settings.nu_rtol)
    t0 = time.perf_counter()
    ctx = _context(mesh, basis, params, nu, settings, rep)
    raw = _assemble_rows(ctx, threads)
    diagnostics = {
        "far_nodes_per_pair": tensor_rule(settings.kernel_order, mesh.d)[1].size ** 2,
        "near_nodes_per_cell": int(sum(
            near_rule(delta, settings.near_order, settings.kernel_order)[2].size
            for delta in itertools.product((-1, 0, 1), repeat=mesh.d))),
        "plane_nodes": int(ctx.quad.weights.size) if params.beta != 0.0 and ctx.table is None else 0,
        "plane_table": ctx.table.size if ctx.table is not None else 0,
    }
    G = symmetrize(raw, settings.asym_bound, diagnostics, tag="[grad]", strict=settings.strict_symmetry)
    diagnostics["seconds"] = time.perf_counter() - t0
    log.info(f"[grad] assembled M={M} {rep.value} in {diagnostics['seconds']:.2f}s "
             f"asym={diagnostics['max_symmetrization_correction']:.2e}")
    return CollisionMatrix(entries=G, representation=rep, backend="grad", params=params,
                           mesh=mesh, basis=basis, diagnostics=diagnostics)
