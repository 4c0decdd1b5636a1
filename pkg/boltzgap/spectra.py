"""
Symmetric (generalized) eigensolves, spectral-gap extraction and the exact
Maxwell-molecule eigenvalues used as an oracle.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Dict, Literal, Optional, Tuple

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, eigsh
from scipy.special import eval_legendre

from boltzgap.collision.matrix import CollisionMatrix
from boltzgap.constraints import ConstraintSet, check_representation, nullspace_basis, symmetric_corrected
from boltzgap.errors import EigenSolverError, NullModeCountError

log = logging.getLogger(__name__)

ITERATIVE_TOL = 1e-8


@dataclass
class SpectralResult:
    eigenvalues: np.ndarray
    zero_tol: float
    gap: float
    method: str
    zeros: int
    vector: Optional[np.ndarray] = None
    seconds: float = 0.0
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def gap_exists(self) -> bool:
        return bool(np.isfinite(self.gap) and self.gap > self.zero_tol)

    def leading(self, count: int = 9) -> np.ndarray:
        """The `count` smallest eigenvalues, NaN padded."""
        out = np.full(count, np.nan)
        n = min(count, self.eigenvalues.size)
        out[:n] = self.eigenvalues[:n]
        return out


# ------------------------------------------------------------------------------
# Eigensolvers
# ------------------------------------------------------------------------------
def _dense(A: np.ndarray, B: Optional[np.ndarray], vectors: bool):
    try:
        if vectors:
            return linalg.eigh(A, B)
        return linalg.eigh(A, B, eigvals_only=True), None
    except linalg.LinAlgError as e:
        raise EigenSolverError(f"generalized eigensolve failed (B not positive definite?): {e}") from e


def _iterative(A: np.ndarray, B: Optional[np.ndarray], k: int, vectors: bool):
    n = A.shape[0]
    k = min(k, n - 1)
    scale = float(np.max(np.abs(np.diag(A)))) or 1.0
    try:
        # shift just below zero so the wanted end of a PSD pencil is nearest
        vals, vecs = eigsh(A, k=k, M=B, sigma=-1e-3 * scale, which="LM", tol=ITERATIVE_TOL)
    except (ArpackNoConvergence, ArpackError) as e:
        raise EigenSolverError(f"shift-invert Lanczos did not converge: {e}") from e
    order = np.argsort(vals)
    return vals[order], (vecs[:, order] if vectors else None)


def eig_sym(A: np.ndarray, B: Optional[np.ndarray] = None, mode: Literal["dense", "iterative"] = "dense",
            k: int = 12, vectors: bool = False) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Ascending eigenvalues (and optionally vectors) of the pencil (A, B); B = None means identity."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise EigenSolverError(f"A must be square, got {A.shape}")
    if B is not None:
        B = np.asarray(B, dtype=float)
        if B.shape != A.shape:
            raise EigenSolverError(f"A is {A.shape} but B is {B.shape}")
    if mode == "iterative" and A.shape[0] > k + 1:
        return _iterative(A, B, k, vectors)
    return _dense(A, B, vectors)


# ------------------------------------------------------------------------------
# Spectral gap
# ------------------------------------------------------------------------------
def spectral_gap(G: CollisionMatrix, cs: ConstraintSet, method: Literal["nullspace", "corrected"] = "nullspace",
                 zero_tol: Optional[float] = None, zero_tol_rel: float = 1e-8, keep_vector: bool = False,
                 eig_mode: Literal["dense", "iterative"] = "dense", n_eigs: int = 12) -> SpectralResult:
    check_representation(G, cs)
    if zero_tol is None:
        zero_tol = zero_tol_rel * G.norm()
    r = cs.n_constraints
    t0 = time.perf_counter()
    if method == "nullspace":
        P = nullspace_basis(cs)
        A = P.T @ G.entries @ P
        B = P.T @ cs.D.matvec(P)
        vals, vecs = eig_sym(0.5 * (A + A.T), 0.5 * (B + B.T), mode=eig_mode, k=n_eigs, vectors=keep_vector)
        zeros = int(np.sum(np.abs(vals) < zero_tol))
        if zeros:
            log.warning(f"[eig] nullspace path: {zeros} eigenvalues below zero_tol={zero_tol:.3e}")
        gap = float(vals[0])
        vector = P @ vecs[:, 0] if keep_vector else None
    elif method == "corrected":
        problem = symmetric_corrected(G, cs)
        vals, vecs = eig_sym(problem.H, None, mode=eig_mode, k=n_eigs + r, vectors=keep_vector)
        zeros = int(np.sum(np.abs(vals) < zero_tol))
        if zeros != r:
            raise NullModeCountError(zeros, r)
        gap = float(vals[r])
        vector = problem.to_coefficients(vecs[:, r]) if keep_vector else None
    else:
        raise ValueError(f"unknown method {method!r}")
    seconds = time.perf_counter() - t0
    log.debug(f"[eig] method={method} M={G.size} gap={gap:.10g} zeros={zeros} t={seconds:.2f}s")
    return SpectralResult(eigenvalues=np.asarray(vals), zero_tol=zero_tol, gap=gap, method=method, zeros=zeros,
                          vector=vector, seconds=seconds,
                          metadata={"backend": G.backend, "representation": G.representation.value})


# ------------------------------------------------------------------------------
# Maxwell molecules, d = 3, constant b
# ------------------------------------------------------------------------------
@dataclass(frozen=True)
class MaxwellEigenOracle:
    b: float = 1.0 / (4.0 * math.pi)
    order: int = 64
    max_index: int = 8
    d: int = 3

    def __post_init__(self):
        if self.d != 3:
            raise ValueError("the Maxwell eigenvalue formula is three-dimensional")


def maxwell_lambda(n: int, l: int, oracle: Optional[MaxwellEigenOracle] = None) -> float:
    """
    lambda_nl = int_{S^2} b [cos^{2n+l}(t/2) P_l(cos(t/2)) + sin^{2n+l}(t/2) P_l(sin(t/2)) - 1 - delta_n0 delta_l0] dsigma
    """
    if n < 0 or l < 0:
        raise ValueError("n and l must be nonnegative")
    oracle = oracle or MaxwellEigenOracle()
    x, w = np.polynomial.legendre.leggauss(oracle.order)
    c = np.sqrt(0.5 * (1.0 + x))
    s = np.sqrt(0.5 * (1.0 - x))
    k = 2 * n + l
    f = c ** k * eval_legendre(l, c) + s ** k * eval_legendre(l, s) - 1.0 - (1.0 if n == 0 and l == 0 else 0.0)
    return float(2.0 * math.pi * oracle.b * (w @ f))


def maxwell_spectrum(oracle: Optional[MaxwellEigenOracle] = None) -> Dict[Tuple[int, int], float]:
    oracle = oracle or MaxwellEigenOracle()
    return {(n, l): maxwell_lambda(n, l, oracle)
            for n in range(oracle.max_index + 1) for l in range(oracle.max_index + 1)}


def maxwell_gap(oracle: Optional[MaxwellEigenOracle] = None, tol: float = 1e-12) -> float:
    """Smallest nonzero |lambda_nl| over n, l <= max_index."""
    vals = np.abs(np.array(list(maxwell_spectrum(oracle).values())))
    return float(vals[vals > tol].min())
