"""fieldtriple core - the Tulczyjew triple for first-order field theories.

Modules:
- exterior: sparse k-forms, pullbacks, kernels and l-Lagrangian classification
- fields: expression parser and second-order forward differentiation
- geometry: bundle coordinates, connections, sections and chart changes
- triple: exchange map, A_pi, flat_Omega and Omega-tilde
- dynamics: Lagrangians, Hamiltonians, Legendre maps and field equations

Usage:
    from fieldtriple_core import BundleDims, LagrangianDensity, el_residual
    from fieldtriple_core.geometry import SectionE

    dims = BundleDims(m=2, n=1)
    L = LagrangianDensity.from_source("0.5*(u1_1^2 + u1_2^2)", dims)
    el_residual(L, SectionE.from_sources(["x1^2 - x2^2"], 2), [0.3, 0.7])
"""

from pathlib import Path

_VERSION_FILE = Path(__file__).parent.parent / "VERSION"
__version__ = _VERSION_FILE.read_text().strip() if _VERSION_FILE.exists() else "0.0.0"


def get_version() -> str:
    """Get the installed fieldtriple version."""
    return __version__


from fieldtriple_core.config import TripleConfig, get_config, reset_config  # noqa: E402
from fieldtriple_core.dynamics import (  # noqa: E402
    HamiltonianDensity,
    InducedHamiltonian,
    LagrangianDensity,
    el_residual,
    hdw_residual,
    invert_leg,
    legendre_ext,
    legendre_red,
)
from fieldtriple_core.errors import TripleError  # noqa: E402
from fieldtriple_core.geometry import BundleDims, Connection  # noqa: E402
from fieldtriple_core.triple import exchange, flat_omega, omega_tilde, tulczyjew_A  # noqa: E402

__all__ = [
    "__version__",
    "get_version",
    "TripleConfig",
    "get_config",
    "reset_config",
    "BundleDims",
    "Connection",
    "LagrangianDensity",
    "HamiltonianDensity",
    "InducedHamiltonian",
    "el_residual",
    "hdw_residual",
    "invert_leg",
    "legendre_ext",
    "legendre_red",
    "exchange",
    "tulczyjew_A",
    "flat_omega",
    "omega_tilde",
    "TripleError",
]
