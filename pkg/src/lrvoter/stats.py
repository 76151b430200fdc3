"""Replicate statistics: the estimators that turn simulations into verdicts.

Everything here consumes immutable replicate arrays (or sampled fields) and
returns plain numbers with uncertainty, so the comparison against the
analytic module stays a one-line assertion at the call site.  Estimators are
permutation-invariant in the replicate axis up to floating-point summation
order.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dataclass_field
from typing import NamedTuple

import numpy as np
from scipy import stats as scipy_stats

from .analytic import AnalyticConstants, GridFunction, sigma_n
from .coalesce import run_backward
from .errors import CutoffCertificationError
from .field import SpaceTimeField
from .steplaw import StepLaw

__all__ = [
    "ComponentScalingReport",
    "ExperimentResult",
    "GaussianityReport",
    "HurstEstimate",
    "component_moment_scaling",
    "empirical_covariance",
    "fgn_functional",
    "gaussianity",
    "hurst_estimate",
]


@dataclass(frozen=True)
class ExperimentResult:
    """Finished-estimator record: estimates with uncertainty and provenance."""

    estimator: str
    estimates: tuple
    stderrs: tuple
    replicates: int
    seeds: tuple
    config: dict = dataclass_field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "estimates",
                           tuple(float(v) for v in self.estimates))
        object.__setattr__(self, "stderrs",
                           tuple(float(v) for v in self.stderrs))
        if not self.estimator:
            raise ValueError("estimator name must be nonempty")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not all(math.isfinite(v) for v in self.estimates):
            raise ValueError("estimates must be finite")
        if any(not math.isfinite(s) or s < 0.0 for s in self.stderrs):
            raise ValueError("stderrs must be finite and nonnegative")
        if self.replicates >= 2 and any(s <= 0.0 for s in self.stderrs):
            raise ValueError("stderr must be > 0 once replicates >= 2")


def empirical_covariance(samples) -> tuple[np.ndarray, np.ndarray]:
    """Unbiased sample covariance of replicate rows, with stderr matrix.

    The standard error uses the Gaussian fourth-moment approximation
    ``Var(c_ij) ~ (c_ii c_jj + c_ij^2)/(reps - 1)`` — approximate for
    non-Gaussian replicates, which is fine for the 3-sigma comparisons it
    feeds.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    reps, k = samples.shape
    if reps < 2:
        raise ValueError("need at least 2 replicates for a covariance")
    if reps < 30:
        warnings.warn(
            f"{reps} replicates is below the 30-replicate precondition; "
            "stderr estimates are unreliable", stacklevel=2)
    cov = np.atleast_2d(np.cov(samples, rowvar=False, ddof=1))
    diag = np.diag(cov)
    stderr = np.sqrt((np.outer(diag, diag) + cov**2) / (reps - 1))
    return cov, stderr


class HurstEstimate(NamedTuple):
    h: float
    stderr: float


def hurst_estimate(path) -> HurstEstimate:
    """Aggregated-variance Hurst exponent of a centered partial-sum path.

    For block sizes m on the dyadic grid 8..len/8, computes the variance of
    the block increments ``path[i+m] - path[i]`` and regresses log variance
    on log m; H is half the slope, with the stderr taken from the
    regression.  Increments are taken at every offset and left uncentered:
    the paths this is for (rescaled partial sums, Gaussian references) have
    exactly centered increments, and estimating a per-block mean from
    long-range-dependent samples would bias the variance — and hence H —
    visibly downward at these lengths.
    """
    path = np.asarray(path, dtype=np.float64)
    if path.ndim != 1:
        raise ValueError("path must be one-dimensional")
    length = len(path)
    if length < 1024 or length & (length - 1):
        raise ValueError("path length must be a power of two >= 1024")
    block_sizes = [1 << j for j in range(3, length.bit_length() - 3)]
    log_var = []
    for m in block_sizes:
        increments = path[m:] - path[:-m]
        v = float(np.mean(increments**2))
        if v <= 0.0:
            raise ValueError("path has zero variance at block size "
                             f"{m}; nothing to estimate")
        log_var.append(math.log(v))
    log_m = np.log(np.asarray(block_sizes, dtype=float))
    design = np.column_stack([log_m, np.ones_like(log_m)])
    coef, *_ = np.linalg.lstsq(design, np.asarray(log_var), rcond=None)
    resid = np.asarray(log_var) - design @ coef
    dof = len(block_sizes) - 2
    gram_inv = np.linalg.inv(design.T @ design)
    slope_var = float(resid @ resid) / dof * gram_inv[0, 0]
    return HurstEstimate(h=0.5 * float(coef[0]),
                         stderr=0.5 * math.sqrt(slope_var))


class GaussianityReport(NamedTuple):
    skewness: float
    excess_kurtosis: float
    ks_distance: float


def gaussianity(replicates) -> GaussianityReport:
    """Moment statistics and KS distance against a mean/variance-matched normal."""
    x = np.asarray(replicates, dtype=np.float64)
    if x.ndim != 1 or len(x) < 500:
        raise ValueError("need at least 500 replicates in a flat vector")
    mean = float(np.mean(x))
    std = float(np.std(x, ddof=1))
    ks = scipy_stats.kstest(x, "norm", args=(mean, std)).statistic
    return GaussianityReport(
        skewness=float(scipy_stats.skew(x)),
        excess_kurtosis=float(scipy_stats.kurtosis(x, fisher=True)),
        ks_distance=float(ks),
    )


def fgn_functional(field: SpaceTimeField, phi: GridFunction, p: float,
                   sigma: float) -> float:
    """``(1/(sigma sqrt(alpha (alpha/2 + 1/2)))) sum_i phi(i/n) (xi(i) - (2p-1))``.

    xi is the field's first stored slice.  phi is sampled at the window
    points i/n by linear interpolation (zero outside its grid) and must
    carry essentially all its mass inside the window [0, 1].
    """
    n = field.window_width
    if n < 1:
        raise ValueError("field window must contain at least two sites")
    if not sigma > 0.0:
        raise ValueError("sigma must be positive")
    phi_x = phi.start + phi.spacing * np.arange(len(phi.values))
    total_mass = float(np.sum(np.abs(phi.values)))
    if total_mass == 0.0:
        return 0.0
    outside = (phi_x < 0.0) | (phi_x > 1.0)
    if float(np.sum(np.abs(phi.values[outside]))) > 1e-3 * total_mass:
        raise ValueError("phi carries more than 1e-3 relative mass outside "
                         "the window [0, 1]")
    weights = np.interp(np.arange(n + 1) / n, phi_x, phi.values,
                        left=0.0, right=0.0)
    xi = field.values[0].astype(np.float64)
    alpha = field.law.alpha
    prefactor = 1.0 / (sigma * math.sqrt(alpha * (alpha / 2.0 + 0.5)))
    return prefactor * float(weights @ (xi - (2.0 * p - 1.0)))


@dataclass(frozen=True)
class ComponentScalingReport:
    """Per-window component-moment statistics and their fitted exponents.

    ``second_moments[i]`` is the replicate mean of ``sum_sites |T(site)|^2 /
    (n+1)`` (equivalently ``sum_beta size_beta^3 / (n+1)``) at ``n_grid[i]``;
    ``vn_variances[i]`` is the replicate variance of ``V_n = sum_beta
    size_beta^2 / sigma_n^2``.  Exponents are least-squares slopes in log n;
    the variance exponent is NaN when some variance is exactly zero (the
    deterministic t_max=0 case).
    """

    n_grid: tuple
    reps: int
    p: float
    t_max: tuple
    second_moments: tuple
    vn_means: tuple
    vn_variances: tuple
    second_moment_exponent: float
    vn_variance_exponent: float


def component_moment_scaling(law: StepLaw, n_grid, reps: int,
                             rng: np.random.Generator,
                             t_max: int | None = None,
                             p: float = 0.5) -> ComponentScalingReport:
    """Fit how slice-component moments grow with the window width.

    For each n, samples ``reps`` single-slice labelings over sites 0..n
    (backward horizon ``t_max`` if given, else the ``4 n^alpha log n``
    policy) and records the per-site second moment of the containing
    component and the normalized square-sum ``V_n``.  Raises a cutoff error
    when a positive horizon still produces only all-singleton labelings.
    """
    ns = sorted(int(n) for n in n_grid)
    if len(ns) < 2 or ns[0] < 1:
        raise ValueError("n_grid needs at least two window widths >= 1")
    if len(set(ns)) != len(ns):
        raise ValueError("n_grid values must be distinct")
    if ns[-1] < 10 * ns[0]:
        raise ValueError("n_grid must span at least one decade")
    reps = int(reps)
    if reps < 100:
        raise ValueError("need at least 100 replicates per window")
    if t_max is not None and t_max < 0:
        raise ValueError("t_max must be >= 0")
    constants = AnalyticConstants.from_law(law)
    horizons = []
    second_moments = []
    vn_means = []
    vn_variances = []
    for n in ns:
        horizon = (int(4.0 * n**law.alpha * math.log(n + 1)) + 1
                   if t_max is None else int(t_max))
        horizons.append(horizon)
        sites = [(i, 0) for i in range(n + 1)]
        sigma2 = sigma_n(constants, law, p, n) ** 2
        m2 = np.empty(reps)
        vn = np.empty(reps)
        merged = False
        for r in range(reps):
            labeling = run_backward(sites, law, horizon, rng)
            sizes = labeling.component_sizes().astype(np.float64)
            if sizes.max() > 1.0:
                merged = True
            m2[r] = float(np.sum(sizes**3)) / (n + 1)
            vn[r] = float(np.sum(sizes**2)) / sigma2
        if horizon > 0 and not merged:
            raise CutoffCertificationError(
                f"all {reps} labelings at n={n} are all-singleton; backward "
                f"horizon {horizon} is too small")
        second_moments.append(float(np.mean(m2)))
        vn_means.append(float(np.mean(vn)))
        variance = float(np.var(vn, ddof=1))
        # A deterministic ensemble (e.g. t_max=0, all singletons) leaves
        # only float rounding in the variance; treat that as exactly zero
        # so the fitted decay exponent is reported as NaN, not noise.
        if variance < (np.finfo(float).eps * np.mean(vn)) ** 2 * reps:
            variance = 0.0
        vn_variances.append(variance)
    log_n = np.log(np.asarray(ns, dtype=float))
    m2_exponent = float(np.polyfit(log_n, np.log(second_moments), 1)[0])
    if min(vn_variances) > 0.0:
        var_exponent = float(np.polyfit(log_n, np.log(vn_variances), 1)[0])
    else:
        var_exponent = math.nan
    return ComponentScalingReport(
        n_grid=tuple(ns),
        reps=reps,
        p=p,
        t_max=tuple(horizons),
        second_moments=tuple(second_moments),
        vn_means=tuple(vn_means),
        vn_variances=tuple(vn_variances),
        second_moment_exponent=m2_exponent,
        vn_variance_exponent=var_exponent,
    )
