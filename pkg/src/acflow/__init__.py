"""Allen-Cahn gradient-flow laboratory on non-convex 2D domains.

Integrates the scaled reaction-diffusion flow with zero-flux boundary
conditions and measures the geometric quantities its sharp-interface limit
is built from: energy dissipation, discrepancy norms, reflected-kernel
monotonicity, density ratios, first-variation identities, and the contact
angle of the zero level set.
"""

__version__ = "0.1.0"

from .errors import NumericalAbort, ValidationError

__all__ = ["NumericalAbort", "ValidationError", "__version__"]
