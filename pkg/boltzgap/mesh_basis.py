"""
Truncated velocity domain [-V, V)^d, uniform Cartesian DG mesh, local bases,
point location, L2 projection and mass matrices.

Scaling convention: every Galerkin integral (numerator and denominator of the
Rayleigh quotient) is divided by the element volume |E| = dv^d.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Tuple, Union

import numpy as np

from boltzgap.config import OperatorParams
from boltzgap.errors import ConfigError, RepresentationMismatchError
from boltzgap.quadrature import tensor_rule

__all__ = [
    "OperatorParams", "Representation", "Mesh", "BasisSpec", "CoefficientVector", "BlockDiagonal",
    "OUTSIDE", "build_mesh", "locate", "locate_many", "mass_matrix", "l2_project", "element_nodes",
    "maxwellian_weight",
]

OUTSIDE = None


class Representation(str, Enum):
    F = "F-rep"
    G = "g-rep"

    @classmethod
    def coerce(cls, value: Union[str, "Representation"]) -> "Representation":
        if isinstance(value, cls):
            return value
        s = str(value).strip()
        for r in cls:
            if s in (r.value, r.name, r.value.split("-")[0]):
                return r
        raise RepresentationMismatchError(f"unknown representation {value!r}")


@dataclass(frozen=True)
class Mesh:
    V: float
    N: int
    d: int

    @property
    def dv(self) -> float:
        return 2.0 * self.V / self.N

    @property
    def n_elements(self) -> int:
        return self.N ** self.d

    @property
    def volume(self) -> float:
        return self.dv ** self.d

    def axis_centers(self) -> np.ndarray:
        return -self.V + (np.arange(self.N) + 0.5) * self.dv

    def multi_index(self, flat: np.ndarray) -> np.ndarray:
        """flat(k) = k_1 + N k_2 (+ N^2 k_3) -> (..., d) multi-index."""
        flat = np.asarray(flat)
        return np.stack([(flat // self.N ** i) % self.N for i in range(self.d)], axis=-1)

    def flat_index(self, k: np.ndarray) -> np.ndarray:
        k = np.asarray(k)
        return sum(k[..., i] * self.N ** i for i in range(self.d))

    def centers(self) -> np.ndarray:
        """Element centers in flat order, shape (n_elements, d)."""
        return -self.V + (self.multi_index(np.arange(self.n_elements)) + 0.5) * self.dv

    def lower_corners(self) -> np.ndarray:
        return self.centers() - 0.5 * self.dv


def build_mesh(V: float, N: int, d: int) -> Mesh:
    if not V > 0:
        raise ConfigError(f"V must be positive, got {V}")
    if int(N) != N or N < 2:
        raise ConfigError(f"N must be an integer >= 2, got {N}")
    if d not in (2, 3):
        raise ConfigError(f"unsupported dimension d={d}")
    return Mesh(V=float(V), N=int(N), d=int(d))


def locate_many(mesh: Mesh, v: np.ndarray) -> np.ndarray:
    """Flat element index for each row of v, -1 outside [-V, V)^d."""
    v = np.atleast_2d(np.asarray(v, dtype=float))
    k = np.floor((v + mesh.V) / mesh.dv).astype(np.int64)
    # v just below V can round up to N
    k = np.where((k == mesh.N) & (v < mesh.V), mesh.N - 1, k)
    inside = np.all((v >= -mesh.V) & (v < mesh.V), axis=-1)
    flat = mesh.flat_index(np.clip(k, 0, mesh.N - 1))
    return np.where(inside, flat, -1)


def locate(mesh: Mesh, v) -> Optional[Tuple[int, ...]]:
    """Element multi-index containing v (half-open cells), or OUTSIDE."""
    flat = int(locate_many(mesh, np.asarray(v, dtype=float)[None, :])[0])
    if flat < 0:
        return OUTSIDE
    return tuple(int(x) for x in mesh.multi_index(flat))


# ------------------------------------------------------------------------------
# Local basis
# ------------------------------------------------------------------------------
@dataclass(frozen=True)
class BasisSpec:
    p: int
    d: int

    def __post_init__(self):
        if self.p not in (0, 1):
            raise ConfigError(f"basis degree p={self.p} not supported (0 or 1)")

    @property
    def n_local(self) -> int:
        return 1 if self.p == 0 else self.d + 1

    def n_dofs(self, mesh: Mesh) -> int:
        return mesh.n_elements * self.n_local

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Local functions at local coordinates x = (v - w_k)/dv, shape (..., n_local)."""
        x = np.asarray(x, dtype=float)
        one = np.ones(x.shape[:-1] + (1,))
        if self.p == 0:
            return one
        return np.concatenate([one, x], axis=-1)

    def gradient(self, dv: float) -> np.ndarray:
        """Constant gradients of the local functions, shape (n_local, d)."""
        g = np.zeros((self.n_local, self.d))
        if self.p == 1:
            g[1:] = np.eye(self.d) / dv
        return g

    def norms(self) -> np.ndarray:
        """(1/|E|) integral of phi_l^2 over an element."""
        out = np.ones(self.n_local)
        out[1:] = 1.0 / 12.0
        return out


@dataclass
class CoefficientVector:
    values: np.ndarray
    representation: Representation

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.representation = Representation.coerce(self.representation)

    def __len__(self) -> int:
        return self.values.size


# ------------------------------------------------------------------------------
# Block-diagonal matrices (mass matrices)
# ------------------------------------------------------------------------------
@dataclass
class BlockDiagonal:
    blocks: np.ndarray  # (n_elements, n_local, n_local)

    @property
    def size(self) -> int:
        return self.blocks.shape[0] * self.blocks.shape[1]

    @property
    def n_local(self) -> int:
        return self.blocks.shape[1]

    def toarray(self) -> np.ndarray:
        n, nl, _ = self.blocks.shape
        out = np.zeros((n * nl, n * nl))
        for e in range(n):
            out[e * nl:(e + 1) * nl, e * nl:(e + 1) * nl] = self.blocks[e]
        return out

    def diagonal(self) -> np.ndarray:
        return np.einsum("eii->ei", self.blocks).ravel()

    def _split(self, x: np.ndarray) -> Tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=float)
        vec = x.ndim == 1
        x2 = x[:, None] if vec else x
        return x2.reshape(self.blocks.shape[0], self.n_local, x2.shape[1]), vec

    def _join(self, y: np.ndarray, vec: bool) -> np.ndarray:
        y = y.reshape(self.size, -1)
        return y[:, 0] if vec else y

    def matvec(self, x: np.ndarray) -> np.ndarray:
        xb, vec = self._split(x)
        return self._join(np.matmul(self.blocks, xb), vec)

    def solve(self, x: np.ndarray) -> np.ndarray:
        xb, vec = self._split(x)
        return self._join(np.linalg.solve(self.blocks, xb), vec)

    def cholesky(self) -> "BlockDiagonal":
        return BlockDiagonal(np.linalg.cholesky(self.blocks))

    def solve_lower(self, x: np.ndarray, trans: bool = False) -> np.ndarray:
        """For a Cholesky factor L: L^{-1} x, or L^{-T} x when trans."""
        xb, vec = self._split(x)
        mats = np.swapaxes(self.blocks, 1, 2) if trans else self.blocks
        return self._join(np.linalg.solve(mats, xb), vec)


# ------------------------------------------------------------------------------
# Element quadrature, projection, mass
# ------------------------------------------------------------------------------
def element_nodes(mesh: Mesh, order: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Tensor Gauss nodes on every element.

    Returns (points (n_el, q, d), local coords (q, d), weights (q,) summing to 1).
    """
    local, w = tensor_rule(order, mesh.d)
    pts = mesh.centers()[:, None, :] + mesh.dv * local[None, :, :]
    return pts, local, w


def maxwellian_weight(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    d = v.shape[-1]
    return (2.0 * np.pi) ** (-0.5 * d) * np.exp(-0.5 * np.sum(v * v, axis=-1))


def mass_matrix(mesh: Mesh, basis: BasisSpec, representation, order: int = 6) -> BlockDiagonal:
    rep = Representation.coerce(representation)
    nl = basis.n_local
    if rep is Representation.F:
        block = np.diag(basis.norms())
        return BlockDiagonal(np.broadcast_to(block, (mesh.n_elements, nl, nl)).copy())
    pts, local, w = element_nodes(mesh, order)
    phi = basis.evaluate(local)
    mu = maxwellian_weight(pts)
    blocks = np.einsum("eq,q,ql,qm->elm", mu, w, phi, phi)
    return BlockDiagonal(blocks)


def l2_project(f: Callable[[np.ndarray], np.ndarray], mesh: Mesh, basis: BasisSpec,
               representation="F-rep", order: int = 6) -> CoefficientVector:
    """Element-wise L2 projection; exact for polynomials of degree <= p."""
    pts, local, w = element_nodes(mesh, order)
    vals = np.asarray(f(pts.reshape(-1, mesh.d)), dtype=float).reshape(pts.shape[:2])
    phi = basis.evaluate(local)
    coef = np.einsum("eq,q,ql->el", vals, w, phi) / basis.norms()[None, :]
    return CoefficientVector(coef.ravel(), representation)
