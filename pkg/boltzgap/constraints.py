"""
Conservation constraints C u = 0 for the d+2 collision invariants, the QR
null-space reduction, and the Lagrange-multiplier correction

    G_c = [Id - D^{-1} C^T (C D^{-1} C^T)^{-1} C] G
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np
from scipy import linalg

from boltzgap.collision.matrix import CollisionMatrix
from boltzgap.errors import ConditioningError, RankDeficiencyError, RepresentationMismatchError
from boltzgap.mesh_basis import BasisSpec, BlockDiagonal, Mesh, Representation, element_nodes, mass_matrix, \
    maxwellian_weight

log = logging.getLogger(__name__)

RANK_TOL = 1e-10
COND_LIMIT = 1e12


@dataclass
class ConstraintSet:
    C: np.ndarray
    D: BlockDiagonal
    representation: Representation
    mesh: Optional[Mesh] = None
    basis: Optional[BasisSpec] = None
    _chol: Any = field(default=None, init=False, repr=False)

    @property
    def n_constraints(self) -> int:
        return self.C.shape[0]

    def dinv_ct(self) -> np.ndarray:
        return self.D.solve(self.C.T)

    def schur(self) -> np.ndarray:
        """C D^{-1} C^T."""
        S = self.C @ self.dinv_ct()
        return 0.5 * (S + S.T)

    def schur_factor(self):
        """Cholesky factor of C D^{-1} C^T, with a condition check."""
        if self._chol is None:
            S = self.schur()
            cond = float(np.linalg.cond(S))
            if not np.isfinite(cond) or cond > COND_LIMIT:
                raise ConditioningError(f"C D^-1 C^T condition estimate {cond:.3e} exceeds {COND_LIMIT:.0e}")
            try:
                self._chol = linalg.cho_factor(S)
            except linalg.LinAlgError as e:
                raise ConditioningError(f"C D^-1 C^T is not positive definite: {e}") from e
        return self._chol


def check_representation(G: CollisionMatrix, cs: ConstraintSet):
    if G.representation is not cs.representation:
        raise RepresentationMismatchError(
            f"matrix is {G.representation.value}, constraints are {cs.representation.value}")
    if G.size != cs.C.shape[1]:
        raise RepresentationMismatchError(f"matrix size {G.size} != constraint width {cs.C.shape[1]}")


def constraint_matrix(mesh: Mesh, basis: BasisSpec, representation, order: int = 6) -> ConstraintSet:
    """Galerkin moments of weight x {1, v, |v|^2}; weight mu^{1/2} for F-rep, mu for g-rep."""
    rep = Representation.coerce(representation)
    pts, local, w = element_nodes(mesh, order)
    mu = maxwellian_weight(pts)
    weight = np.sqrt(mu) if rep is Representation.F else mu
    moments = np.concatenate([np.ones(pts.shape[:2] + (1,)), pts, np.sum(pts * pts, axis=-1, keepdims=True)], axis=-1)
    phi = basis.evaluate(local)
    C = np.einsum("eq,q,eqr,ql->rel", weight, w, moments, phi).reshape(mesh.d + 2, basis.n_dofs(mesh))
    return ConstraintSet(C=C, D=mass_matrix(mesh, basis, rep, order), representation=rep, mesh=mesh, basis=basis)


def nullspace_basis(cs: ConstraintSet) -> np.ndarray:
    """Orthonormal basis of {u : C u = 0} from the last M - (d+2) columns of Q in C^T = QR."""
    r = cs.n_constraints
    Q, R = linalg.qr(cs.C.T, mode="full")
    diag = np.abs(np.diag(R[:r, :r]))
    if diag.size < r or diag.min() <= RANK_TOL * max(diag.max(), 1e-300):
        raise RankDeficiencyError(f"constraint matrix rank below {r}: |diag R| = {diag}")
    return Q[:, r:]


def projector(cs: ConstraintSet) -> np.ndarray:
    """Pi_D = Id - D^{-1} C^T (C D^{-1} C^T)^{-1} C as a dense matrix."""
    M = cs.C.shape[1]
    return np.eye(M) - cs.dinv_ct() @ linalg.cho_solve(cs.schur_factor(), cs.C)


def conservation_correct(G: CollisionMatrix, cs: ConstraintSet) -> CollisionMatrix:
    check_representation(G, cs)
    Y = cs.dinv_ct()
    Gc = G.entries - Y @ linalg.cho_solve(cs.schur_factor(), cs.C @ G.entries)
    diagnostics = dict(G.diagnostics)
    diagnostics["schur_condition"] = float(np.linalg.cond(cs.schur()))
    return CollisionMatrix(entries=Gc, representation=G.representation, backend=G.backend, params=G.params,
                           mesh=G.mesh, basis=G.basis, diagnostics=diagnostics)


@dataclass
class CorrectedProblem:
    """Symmetric form of the corrected operator in the D = L L^T metric: H = Q (L^-1 G L^-T) Q."""
    H: np.ndarray
    L: BlockDiagonal

    def to_coefficients(self, y: np.ndarray) -> np.ndarray:
        return self.L.solve_lower(y, trans=True)


def symmetric_corrected(G: CollisionMatrix, cs: ConstraintSet) -> CorrectedProblem:
    check_representation(G, cs)
    L = cs.D.cholesky()
    Y = L.solve_lower(cs.C.T)  # (L^-1 C^T), columns span the null modes
    Z = linalg.cho_solve(cs.schur_factor(), Y.T)
    X = L.solve_lower(G.entries)
    Gh = L.solve_lower(X.T)
    Gh = 0.5 * (Gh + Gh.T)
    T = Gh - Y @ (Z @ Gh)
    H = T - (T @ Y) @ Z
    return CorrectedProblem(H=0.5 * (H + H.T), L=L)


def log_constraint_summary(cs: ConstraintSet, logger: Optional[logging.Logger] = None) -> Dict[str, float]:
    logger = logger or log
    S = cs.schur()
    info = {"schur_condition": float(np.linalg.cond(S)), "constraints": cs.n_constraints}
    logger.debug(f"[constraints] rows={cs.n_constraints} cond(CD^-1C^T)={info['schur_condition']:.3e}")
    return info
