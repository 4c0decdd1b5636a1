"""
Direct (sphere quadrature) assembly of the g-representation collision matrix.

With v* = v - u and the Dirichlet form written against the test function at v only,

    G[(k,l),(m,i)] = -(1/|E|) int_{E_k} int_Omega mu(v) mu(v*) |u|^gamma phi_l(v)
                      [A_{m,i}(v, u) + A_{m,i}(v*, -u)] dv* dv

where A is the angular integral of sphere_quadrature; A(v*, -u) carries the
gain at v*' and the loss at v*. Each (v_j, v*_j) pair of intervals is the unit
square of a TriangleRule, split along u_j = w_k - w_kbar.
"""
import logging
import time
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from boltzgap.collision.matrix import CollisionMatrix, check_memory, symmetrize
from boltzgap.collision.sphere_quadrature import AngularContext, accumulate_angular
from boltzgap.collision.workers import map_blocks
from boltzgap.config import OperatorParams, QuadratureSettings
from boltzgap.errors import QuadratureToleranceError
from boltzgap.kernels import cross_section
from boltzgap.mesh_basis import BasisSpec, Mesh, Representation, maxwellian_weight
from boltzgap.quadrature import TriangleRule

log = logging.getLogger(__name__)


@dataclass
class _DirectContext:
    angular: AngularContext
    params: OperatorParams
    rule: TriangleRule
    corners: np.ndarray
    s: np.ndarray
    t: np.ndarray
    w: np.ndarray


def _pair_nodes(ctx: _DirectContext, k: int, kbar: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(v, v*, weight) at the triangle nodes of one source pair, weight without sign."""
    h = ctx.angular.mesh.dv
    v = ctx.corners[k] + h * ctx.s
    vs = ctx.corners[kbar] + h * ctx.t
    u = v - vs
    un = np.sqrt(np.sum(u * u, axis=1))
    gamma = ctx.params.gamma
    W = ctx.angular.mesh.volume * ctx.w * maxwellian_weight(v) * maxwellian_weight(vs)
    if gamma != 0.0:
        W = W * un ** gamma
    return v, vs, W


def _kept_pairs(ctx: _DirectContext, k: int) -> np.ndarray:
    """Source cells kbar for row cell k after Maxwellian pruning."""
    mesh = ctx.angular.mesh
    h = mesh.dv
    vs = ctx.corners[:, None, :] + h * ctx.t[None, :, :]
    peak = np.max(np.exp(-0.5 * np.sum(vs * vs, axis=-1)), axis=1)
    return np.nonzero(peak >= ctx.angular.settings.prune_tol)[0]


def _row_points(ctx: _DirectContext, k: int, kbars: np.ndarray):
    mesh, basis = ctx.angular.mesh, ctx.angular.basis
    pts, rel, coef = [], [], []
    local = ctx.s - 0.5
    phi = basis.evaluate(local)
    for kbar in kbars:
        v, vs, W = _pair_nodes(ctx, k, int(kbar))
        c = -W[:, None] * phi
        pts += [v, vs]
        rel += [v - vs, vs - v]
        coef += [c, c]
    if not pts:
        return np.zeros((0, mesh.d)), np.zeros((0, mesh.d)), np.zeros((0, basis.n_local))
    return np.concatenate(pts), np.concatenate(rel), np.concatenate(coef)


def _locate_failure(ctx: _DirectContext, k: int, kbars: np.ndarray, err: QuadratureToleranceError):
    """Re-run pair by pair to attach (k, kbar, m) to a tolerance failure."""
    for kbar in kbars:
        p, w, coef = _row_points(ctx, k, np.array([kbar]))
        try:
            accumulate_angular(ctx.angular, p, w, coef)
        except QuadratureToleranceError as pair_err:
            # dominant target cell of the offending pair
            loose = QuadratureSettings(**{**ctx.angular.settings.model_dump(), "ang_tol": 1e-3})
            rough = accumulate_angular(AngularContext(mesh=ctx.angular.mesh, basis=ctx.angular.basis,
                                                      cs=ctx.angular.cs, settings=loose), p, w, coef)
            m = int(np.argmax(np.max(np.abs(rough), axis=(0, 2))))
            raise QuadratureToleranceError("angular integral did not reach tolerance", pair_err.achieved,
                                           where=(k, int(kbar), m)) from pair_err
    raise QuadratureToleranceError(str(err), err.achieved, where=(k, -1, -1)) from err


def _direct_row_block(ctx: _DirectContext, k: int) -> Tuple[np.ndarray, int]:
    mesh, basis = ctx.angular.mesh, ctx.angular.basis
    kbars = _kept_pairs(ctx, k)
    p, w, coef = _row_points(ctx, k, kbars)
    try:
        acc = accumulate_angular(ctx.angular, p, w, coef)
    except QuadratureToleranceError as err:
        _locate_failure(ctx, k, kbars, err)
    pruned = mesh.n_elements - kbars.size
    return acc.reshape(basis.n_local, mesh.n_elements * basis.n_local), pruned


def assemble_direct(mesh: Mesh, basis: BasisSpec, params: OperatorParams, rule: Optional[TriangleRule] = None,
                    ang_tol: Optional[float] = None, settings: Optional[QuadratureSettings] = None,
                    threads: int = 1, memory_budget_gb: float = 8.0) -> CollisionMatrix:
    settings = settings or QuadratureSettings()
    if ang_tol is not None:
        settings = QuadratureSettings(**{**settings.model_dump(), "ang_tol": ang_tol})
    rule = rule or TriangleRule(settings.tri_order)
    M = basis.n_dofs(mesh)
    check_memory(M, memory_budget_gb)
    if params.alpha >= 1.0:
        log.warning(f"[direct] alpha={params.alpha}: piecewise-discontinuous bases have an unbounded "
                    f"Dirichlet form for alpha >= 1; entries grow under quadrature refinement")
    s, t, w = rule.nodes(mesh.d)
    ctx = _DirectContext(
        angular=AngularContext(mesh=mesh, basis=basis, cs=cross_section(params), settings=settings),
        params=params, rule=rule, corners=mesh.lower_corners(), s=s, t=t, w=w,
    )
    t0 = time.perf_counter()
    blocks: List[Tuple[np.ndarray, int]] = map_blocks(_direct_row_block, ctx, list(range(mesh.n_elements)), threads)
    raw = np.vstack([b for b, _ in blocks])
    diagnostics = {
        "triangle_nodes_per_pair": int(w.size),
        "pruned_pairs": int(sum(n for _, n in blocks)),
        "total_pairs": mesh.n_elements ** 2,
    }
    G = symmetrize(raw, settings.asym_bound, diagnostics, tag="[direct]", strict=settings.strict_symmetry)
    diagnostics["seconds"] = time.perf_counter() - t0
    log.info(f"[direct] assembled M={M} in {diagnostics['seconds']:.2f}s pruned={diagnostics['pruned_pairs']}/"
             f"{diagnostics['total_pairs']} asym={diagnostics['max_symmetrization_correction']:.2e}")
    return CollisionMatrix(entries=G, representation=Representation.G, backend="direct", params=params,
                           mesh=mesh, basis=basis, diagnostics=diagnostics)
