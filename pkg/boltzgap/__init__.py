"""
boltzgap: spectral gaps of linearized Boltzmann collision operators on a DG velocity mesh.
"""
__version__ = "0.1.0"

from boltzgap.config import OperatorParams, QuadratureSettings, RunConfig  # noqa: E402
from boltzgap.mesh_basis import BasisSpec, Mesh, Representation, build_mesh  # noqa: E402
from boltzgap.collision.direct import assemble_direct  # noqa: E402
from boltzgap.collision.grad_splitting import assemble_grad  # noqa: E402
from boltzgap.constraints import constraint_matrix  # noqa: E402
from boltzgap.spectra import spectral_gap  # noqa: E402

__all__ = [
    "__version__", "OperatorParams", "QuadratureSettings", "RunConfig", "BasisSpec", "Mesh", "Representation",
    "build_mesh", "assemble_grad", "assemble_direct", "constraint_matrix", "spectral_gap",
]
