"""Simulation laboratory for coalescing-walk voter fields on the integer lattice.

The package samples the equilibrium two-valued field attached to a backward
coalescing-walk graph, evaluates the matching limit constants and covariance
kernels by quadrature, and provides the estimators used to compare the two.

Layout
------
``steplaw``
    Symmetric heavy-tailed integer step laws: exact tails, sampling,
    characteristic function.
``analytic``
    Limit constants and kernels: ``c_alpha``, the ``V`` integral, Green-norm
    ``q_norm_squared``, the space-time Gaussian covariance, exact Gaussian
    reference sampling, and the weighted-noise variance form.
``coalesce``
    Backward coalescing-frontier simulation, component labelings, and
    pairwise coalescence probabilities (Monte Carlo and quadrature).
``field``
    Equilibrium sign fields over a window and time slices; partial sums and
    their rescaling.
``heatkernel``
    Walk transition kernels: windowed convolution powers, return
    probabilities, sup-norm decay, occupation sums.
``stats``
    Replicate statistics: covariances, Hurst estimation, Gaussianity checks,
    weighted-noise functionals, component-moment scaling.
``cli``
    Deterministic experiment runner with CSV/JSON artifacts.
"""

__version__ = "0.1.0"

from .steplaw import StepLaw

__all__ = ["StepLaw", "__version__"]
