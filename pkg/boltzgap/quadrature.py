"""
Fixed quadrature rules shared by the assembly backends.

All rules return (nodes, weights) as numpy arrays; tensor rules return nodes
with the point axis first and the coordinate axis last.
"""
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Tuple

import numpy as np


@lru_cache(maxsize=64)
def _leggauss(n: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_01(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule on [0, 1]."""
    x, w = _leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def gauss_interval(n: int, a: float, b: float) -> Tuple[np.ndarray, np.ndarray]:
    x, w = gauss_01(n)
    return a + (b - a) * x, (b - a) * w


def tensor_rule(n: int, d: int) -> Tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss rule on the centred unit cube [-1/2, 1/2]^d; weights sum to 1."""
    x, w = gauss_01(n)
    x = x - 0.5
    grids = np.meshgrid(*([x] * d), indexing="ij")
    wgrids = np.meshgrid(*([w] * d), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return nodes, weights


@lru_cache(maxsize=16)
def hermite_rule(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Hermite rule for the weight exp(-x^2/2) on the real line."""
    x, w = np.polynomial.hermite_e.hermegauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def hermite_tensor(n: int, dim: int) -> Tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Hermite rule on R^dim for exp(-|x|^2/2)."""
    x, w = hermite_rule(n)
    if dim == 1:
        return x[:, None].copy(), w.copy()
    g = np.meshgrid(*([x] * dim), indexing="ij")
    gw = np.meshgrid(*([w] * dim), indexing="ij")
    nodes = np.stack([a.ravel() for a in g], axis=-1)
    weights = np.prod(np.stack([a.ravel() for a in gw], axis=-1), axis=-1)
    return nodes, weights


# ------------------------------------------------------------------------------
# Triangle rules (barycentric, weights normalized to 1)
# ------------------------------------------------------------------------------
def _sym_rule(order: int) -> Tuple[np.ndarray, np.ndarray]:
    if order == 1:
        bary = np.array([[1 / 3, 1 / 3, 1 / 3]])
        w = np.array([1.0])
    elif order == 3:
        bary = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
        w = np.full(3, 1 / 3)
    elif order == 6:
        a, wa = 0.445948490915965, 0.223381589678011
        b, wb = 0.091576213509771, 0.109951743655322
        bary = np.array([
            [1 - 2 * a, a, a], [a, 1 - 2 * a, a], [a, a, 1 - 2 * a],
            [1 - 2 * b, b, b], [b, 1 - 2 * b, b], [b, b, 1 - 2 * b],
        ])
        w = np.array([wa] * 3 + [wb] * 3)
    elif order == 7:
        a1, w1 = 0.470142064105115, 0.132394152788506
        a2, w2 = 0.101286507323456, 0.125939180544827
        bary = np.array([
            [1 / 3, 1 / 3, 1 / 3],
            [1 - 2 * a1, a1, a1], [a1, 1 - 2 * a1, a1], [a1, a1, 1 - 2 * a1],
            [1 - 2 * a2, a2, a2], [a2, 1 - 2 * a2, a2], [a2, a2, 1 - 2 * a2],
        ])
        w = np.array([0.225] + [w1] * 3 + [w2] * 3)
    else:
        raise ValueError(f"unsupported triangle rule order {order}")
    return bary, w / w.sum()


@dataclass(frozen=True)
class TriangleRule:
    """
    Pair-of-triangles rule over one (v_i, u_i) parallelogram.

    The parallelogram {v_i in cell k_i, v_i - u_i in cell kbar_i} is the unit
    square in (s, t) = ((v_i - a)/h, (v*_i - a')/h), split along s = t, i.e. along
    u_i = w_k - w_kbar, so u_i = 0 only ever lies on a triangle edge.
    """
    order: int = 3
    s: np.ndarray = field(init=False, repr=False)
    t: np.ndarray = field(init=False, repr=False)
    w: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        bary, w = _sym_rule(self.order)
        # lower triangle (0,0),(1,0),(1,1) and upper triangle (0,0),(1,1),(0,1)
        lower = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
        upper = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        pts = np.concatenate([bary @ lower, bary @ upper])
        object.__setattr__(self, "s", pts[:, 0].copy())
        object.__setattr__(self, "t", pts[:, 1].copy())
        object.__setattr__(self, "w", np.concatenate([w, w]) * 0.5)

    @property
    def n_points(self) -> int:
        return self.w.size

    def nodes(self, d: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Tensor product over d dimensions.

        Returns (s, t, w) with s, t of shape (n, d) in unit-square coordinates
        and w of shape (n,) summing to 1.
        """
        idx = np.meshgrid(*([np.arange(self.n_points)] * d), indexing="ij")
        idx = np.stack([a.ravel() for a in idx], axis=-1)
        return self.s[idx], self.t[idx], np.prod(self.w[idx], axis=-1)
