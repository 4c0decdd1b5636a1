"""
Dense collision matrix container, quadratic form, and the binary dump format.

Dump layout: 32-byte header struct '<4sIIIIII4x'
(magic b"BGAP", version, d, N, p, representation 0=F/1=g, backend 0=grad/1=direct)
followed by M*M float64 little-endian values, row-major.
"""
import logging
import os
import struct
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np

from boltzgap.config import OperatorParams
from boltzgap.errors import AsymmetryError, MemoryBudgetError, RepresentationMismatchError
from boltzgap.mesh_basis import BasisSpec, CoefficientVector, Mesh, Representation

log = logging.getLogger(__name__)

MAGIC = b"BGAP"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIII4x")
_BACKENDS = ("grad", "direct")


@dataclass
class CollisionMatrix:
    entries: np.ndarray
    representation: Representation
    backend: str
    params: Optional[OperatorParams] = None
    mesh: Optional[Mesh] = None
    basis: Optional[BasisSpec] = None
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def norm(self) -> float:
        """max |diag(G)|, the scale used for every relative tolerance."""
        return float(np.max(np.abs(np.diag(self.entries)))) if self.size else 0.0


def check_memory(M: int, budget_gb: float, copies: int = 3):
    needed = int(M) * int(M) * 8 * copies
    budget = int(budget_gb * 2**30)
    if needed > budget:
        raise MemoryBudgetError(needed, budget)


def symmetrize(raw: np.ndarray, bound: float, diagnostics: Dict[str, Any], tag: str = "",
               strict: bool = False) -> np.ndarray:
    """
    Symmetric part of an assembled matrix. An asymmetry above bound means the
    quadrature is under-resolved: logged at ERROR, or raised when strict.
    """
    scale = float(np.max(np.abs(raw))) or 1.0
    asym = float(np.max(np.abs(raw - raw.T))) / scale
    diagnostics["max_symmetrization_correction"] = asym
    diagnostics["asymmetry_within_bound"] = asym <= bound
    if asym > bound:
        if strict:
            raise AsymmetryError(asym, bound)
        log.error(f"{tag} pre-symmetrization asymmetry {asym:.3e} exceeds bound {bound:.1e}; "
                  f"raise the quadrature order")
    G = 0.5 * (raw + raw.T)
    return G


def quadratic_form(G: CollisionMatrix, x: CoefficientVector) -> float:
    if x.representation is not G.representation:
        raise RepresentationMismatchError(
            f"vector is {x.representation.value}, matrix is {G.representation.value}")
    if x.values.size != G.size:
        raise RepresentationMismatchError(f"vector length {x.values.size} != matrix size {G.size}")
    return float(x.values @ G.entries @ x.values)


# ------------------------------------------------------------------------------
# Binary dump
# ------------------------------------------------------------------------------
def dump_matrix(G: CollisionMatrix, path: str):
    if G.mesh is None or G.basis is None:
        raise ValueError("matrix has no mesh/basis metadata to dump")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    rep = 0 if G.representation is Representation.F else 1
    header = _HEADER.pack(MAGIC, VERSION, G.mesh.d, G.mesh.N, G.basis.p, rep, _BACKENDS.index(G.backend))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(G.entries, dtype="<f8").tobytes(order="C"))
    log.info(f"[dump] wrote {G.size}x{G.size} {G.backend} matrix to {path}")


def load_matrix(path: str, V: Optional[float] = None) -> CollisionMatrix:
    """Read a dump; V is not stored in the header and may be supplied to rebuild the mesh."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, version, d, N, p, rep, backend = _HEADER.unpack(head)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        basis = BasisSpec(p=p, d=d)
        M = N ** d * basis.n_local
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != M * M:
        raise ValueError(f"{path}: expected {M * M} values, found {data.size}")
    mesh = Mesh(V=float(V), N=N, d=d) if V is not None else None
    return CollisionMatrix(
        entries=data.reshape(M, M).astype(float),
        representation=Representation.F if rep == 0 else Representation.G,
        backend=_BACKENDS[backend],
        mesh=mesh,
        basis=basis,
    )
