"""Numerical engine for invariant tori of rapidly forced Hamiltonians.

Subpackages: spectral series algebra (`series`), analytic smoothing
(`smoothing`), divisor checks and measure estimation (`diophantine`),
iteration schedules (`schedule`), generating-function transforms
(`transforms`), the normal-form iteration (`engine`), oscillator networks
(`duffing`), and the CLI (`cli`).
"""

from .series import Domain, FourierTaylorSeries, ModeIndex

__version__ = "0.1.0"

__all__ = ["Domain", "FourierTaylorSeries", "ModeIndex", "__version__"]
