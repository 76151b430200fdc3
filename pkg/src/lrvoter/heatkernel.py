"""Transition-kernel tables, return probabilities, and occupation sums.

Two complementary routes to the walk's heat kernel:

* `convolve_power` builds the kernel table on a finite window by repeated
  FFT convolution with the one-step law, truncating outside the window after
  every step.  Truncation only removes mass, so table entries underestimate
  the true kernel pointwise by at most the reported `leaked_mass`.  Because
  the step law is heavy tailed, a window proportional to the bulk scale
  t**(1/alpha) always leaks a *constant* fraction (single-big-jump mass
  ~ 2 L / 50**alpha for the default window) — the leak is reported, never
  hidden, and the table is still a faithful lower bound.

* Fourier quadrature: p_t(0) = (1/2pi) int P(x)**t dx needs no window at
  all.  For even t the kernel is maximal at the origin (p_{2s}(n) =
  sum_m p_s(m) p_s(n-m) <= p_{2s}(0) by Cauchy-Schwarz), so certified
  quadrature of the return probability *is* a certified supnorm — this is
  what the decay-exponent fits use, with the quadrature error estimate
  playing the role of the leak and a hard failure when it cannot be
  certified below tolerance.

Occupation sums over a window are reduced to a single Dirichlet-kernel
integral per horizon (sum_{t<=T} P**t = (1 - P**(T+1))/(1 - P) pointwise),
with the t > T tail bounded by a fitted supnorm amplitude times a Hurwitz
zeta tail — reported, and fatal if it exceeds 1% of the sum.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad
from scipy.special import zeta

from .analytic import c_alpha
from .errors import CutoffCertificationError
from .steplaw import StepLaw

__all__ = [
    "KernelTable",
    "OccupationSum",
    "SupnormScaling",
    "convolve_power",
    "occupation_sum",
    "q_norm_series",
    "return_prob",
    "supnorm_exponent",
]


# -- kernel tables ---------------------------------------------------------------


@dataclass(frozen=True)
class KernelTable:
    """t-step kernel masses on the window [-M, M], plus the leaked mass.

    ``masses[j]`` is a lower bound for p_t(j - M); ``masses.sum() +
    leaked_mass == 1`` by construction, and every entry underestimates the
    true kernel by at most ``leaked_mass``.
    """

    t: int
    window_halfwidth: int
    masses: np.ndarray
    leaked_mass: float

    def mass(self, n: int) -> float:
        """Mass at lattice point n (0 outside the window)."""
        j = n + self.window_halfwidth
        if not 0 <= j < len(self.masses):
            return 0.0
        return float(self.masses[j])


def convolve_power(law: StepLaw, t: int, M: int | None = None) -> KernelTable:
    """p_t on [-M, M] by t-fold windowed convolution of the one-step law.

    The FFT size is the next power of two >= 2 (2M+1), so one convolution of
    window-supported masses never wraps; after each step the result is
    truncated back to the window and the missing mass added to the leak.
    Warns (does not fail) when the final leak exceeds 1e-3.

    M defaults to ``max(10**4, 50 t**(1/alpha))`` capped by memory sanity;
    pass a smaller window explicitly for quick lower-resolution tables.
    """
    t = int(t)
    if t < 1:
        raise ValueError("t must be >= 1")
    if M is None:
        M = max(10**4, int(math.ceil(50.0 * t ** (1.0 / law.alpha))))
    M = int(M)
    if M < 1:
        raise ValueError("window halfwidth must be >= 1")
    if 2 * M + 1 > 1 << 26:
        raise ValueError(
            f"window halfwidth {M} needs more than 2**26 lattice points; "
            "pass an explicit smaller M (the leak is reported)"
        )
    base = np.asarray(law.pmf(np.arange(-M, M + 1)), dtype=np.float64)
    size = 1 << int(2 * (2 * M + 1) - 1).bit_length()
    base_hat = np.fft.rfft(base, size)
    cur = base
    for _ in range(t - 1):
        full = np.fft.irfft(np.fft.rfft(cur, size) * base_hat, size)
        cur = full[M : 3 * M + 1]
        cur = np.maximum(cur, 0.0)
        cur = 0.5 * (cur + cur[::-1])
    leaked = 1.0 - float(cur.sum())
    if leaked > 1e-3:
        warnings.warn(
            f"kernel table at t={t} leaks {leaked:.3e} outside [-{M}, {M}]",
            stacklevel=2,
        )
    return KernelTable(t=t, window_halfwidth=M, masses=cur, leaked_mass=leaked)


# -- Fourier route ---------------------------------------------------------------


def _concentration_scale(law: StepLaw, t: float) -> float:
    """x below which P(x)**t stays away from 0 (rough, for panel placement)."""
    rate = 2.0 * law.per_side_tail_constant * c_alpha(law.alpha)
    return (60.0 / (rate * max(t, 1.0))) ** (1.0 / law.alpha)


def _return_prob_certified(law: StepLaw, t: int) -> tuple[float, float]:
    """(p_t(0), quadrature error bound) via (1/pi) int_0^pi P(x)**t dx."""
    x_star = _concentration_scale(law, t)
    points = [p for p in (x_star * 1e-2, x_star * 0.1, x_star, x_star * 10,
                          x_star * 100) if 0.0 < p < math.pi]

    def integrand(x: float) -> float:
        return (1.0 - law.one_minus_char(x)) ** t

    value, err = quad(integrand, 0.0, math.pi, points=points or None,
                      epsabs=1e-14, epsrel=1e-10, limit=400)
    return value / math.pi, err / math.pi


def return_prob(law: StepLaw, t: int) -> float:
    """P(walk is back at its start after t steps), by quadrature."""
    t = int(t)
    if t < 1:
        raise ValueError("t must be >= 1")
    return _return_prob_certified(law, t)[0]


@dataclass(frozen=True)
class SupnormScaling:
    """Least-squares fit of log sup_n p_t(n) against log t."""

    slope: float
    intercept: float
    t_grid: tuple[int, ...]
    supnorms: tuple[float, ...]
    error_bounds: tuple[float, ...]
    residuals: tuple[float, ...]


def supnorm_exponent(law: StepLaw, t_grid) -> SupnormScaling:
    """Fit the decay exponent of ``sup_n p_t(n)`` over an even-t grid.

    For even t the supremum sits at the origin (Cauchy-Schwarz on
    p_{2s} = p_s * p_s), so each grid value is the certified return
    probability; the certified quadrature error takes the role of the
    window leak and must stay below 1e-3 of each value.

    The grid must contain at least two distinct even times spanning at
    least two decades (max/min >= 100).
    """
    ts = sorted(int(t) for t in t_grid)
    if len(ts) < 2:
        raise ValueError("t_grid needs at least two points")
    if len(set(ts)) != len(ts):
        raise ValueError("t_grid values must be distinct")
    if any(t < 2 or t % 2 for t in ts):
        raise ValueError("t_grid values must be even and >= 2 (sup-at-origin "
                         "identity holds for even step counts)")
    if ts[-1] < 100 * ts[0]:
        raise ValueError("t_grid must span at least two decades")
    values = []
    errors = []
    for t in ts:
        value, err = _return_prob_certified(law, t)
        if not err <= 1e-3 * value:
            raise CutoffCertificationError(
                f"return probability at t={t} certified only to {err:.2e} "
                f"(value {value:.2e})"
            )
        values.append(value)
        errors.append(err)
    log_t = np.log(np.asarray(ts, dtype=float))
    log_v = np.log(np.asarray(values))
    design = np.column_stack([log_t, np.ones_like(log_t)])
    (slope, intercept), *_ = np.linalg.lstsq(design, log_v, rcond=None)
    residuals = log_v - design @ np.array([slope, intercept])
    return SupnormScaling(
        slope=float(slope),
        intercept=float(intercept),
        t_grid=tuple(ts),
        supnorms=tuple(values),
        error_bounds=tuple(errors),
        residuals=tuple(float(r) for r in residuals),
    )


# -- shared certified panel grid ---------------------------------------------


def _panel_grid(law: StepLaw, x_lo: float, order: int,
                extra_splits: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on (0, pi], geometric near the origin.

    Panels double from ``x_lo`` up to 0.5 and continue uniformly to pi; the
    initial segment (0, x_lo] is one panel (integrands here are smooth).
    ``extra_splits`` halves every panel that many times — used to certify
    by node doubling.
    """
    edges = [0.0]
    x = min(x_lo, 0.5)
    while x < 0.5:
        edges.append(x)
        x *= 2.0
    edges.extend(np.linspace(0.5, math.pi, 6)[:-1])
    edges.append(math.pi)
    edges = np.asarray(edges)
    for _ in range(extra_splits):
        edges = np.sort(np.concatenate([edges, 0.5 * (edges[1:] + edges[:-1])]))
    y, w = leggauss(order)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * y[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def q_norm_series(law: StepLaw, t_terms: int = 2048) -> float:
    """Green normalizer as ``sum_t p_{2t}(0)`` with tail extrapolation.

    Partial sum over t <= t_terms from one certified integral of the
    geometric sum; the tail is extrapolated by a two-term fit
    ``a1 (2t)**(-1/alpha) + a2 (2t)**(-1/alpha-1)`` over the last octave of
    computed terms (the kernel's local expansion has O(1/t) corrections, so
    the two-term tail is accurate to ~T**(-2) relatively).  Independent of
    `analytic.q_norm_squared` — that is the point: the two routes are
    cross-checked in acceptance.
    """
    T = int(t_terms)
    if T < 64:
        raise ValueError("t_terms must be >= 64 for a stable tail fit")
    inv_alpha = 1.0 / law.alpha
    x_lo = _concentration_scale(law, 2.0 * T) * 1e-2

    def evaluate(extra: int) -> tuple[float, np.ndarray]:
        nodes, weights = _panel_grid(law, x_lo, 24, extra)
        omc = np.asarray(law.one_minus_char(nodes), dtype=np.float64)
        p2 = (1.0 - omc) ** 2
        # sum_{t=0}^{T} p2**t, stable where p2 -> 1
        with np.errstate(divide="ignore", invalid="ignore"):
            series = np.where(
                omc < 0.5,
                -np.expm1((T + 1) * np.log1p(p2 - 1.0)) / (1.0 - p2),
                (1.0 - p2 ** (T + 1)) / (1.0 - p2),
            )
        partial = float(weights @ series) / math.pi
        fit_t = np.unique(np.geomspace(T // 2, T, 33).astype(np.int64))
        powers = p2[None, :] ** fit_t[:, None]
        p_fit = (powers @ weights) / math.pi
        return partial, np.column_stack([fit_t, p_fit])

    partial, fit_data = evaluate(0)
    partial_fine, _ = evaluate(1)
    if abs(partial_fine - partial) > 1e-7 * abs(partial_fine):
        raise CutoffCertificationError(
            "panel quadrature for the return-probability series did not "
            f"converge: {partial} vs {partial_fine}"
        )

    x = 2.0 * fit_data[:, 0]
    basis = np.column_stack([x ** -inv_alpha, x ** (-inv_alpha - 1.0)])
    coef, *_ = np.linalg.lstsq(basis, fit_data[:, 1], rcond=None)
    tail = (
        coef[0] * 2.0 ** -inv_alpha * zeta(inv_alpha, T + 1)
        + coef[1] * 2.0 ** (-inv_alpha - 1.0) * zeta(inv_alpha + 1.0, T + 1)
    )
    return partial_fine + float(tail)


# -- occupation sums -----------------------------------------------------------


@dataclass(frozen=True)
class OccupationSum:
    """Windowed occupation value with its certified truncation tail bound."""

    value: float
    tail_bound: float
    t_cut: int

    def __float__(self) -> float:
        return self.value


def occupation_sum(law: StepLaw, k: int, n: int, t_cut: int = 2048) -> OccupationSum:
    """``sum_{t=0}^{t_cut} sum_{n1=0}^{n} p_t(n1 - k)`` plus a tail bound.

    One Fourier integral does the whole double sum: the spatial window sum
    is a Dirichlet kernel and the time sum a finite geometric series, so the
    value equals ``(1/pi) int_0^pi D(x) G(x) dx`` with ``D(x) =
    sin((n+1)x/2) cos((n-2k)x/2) / sin(x/2)`` and ``G = (1 - P**(T+1)) /
    (1 - P)``.  Quadrature uses Gauss panels at the combined oscillation
    frequency with geometric refinement below the t_cut concentration
    scale; when the window sits far from the origin the cos factor is too
    fast for panels and is handled by oscillatory-weight quadrature
    instead.

    The t > t_cut remainder is bounded by ``2 (n+1) sum_{even t >= t_cut}
    p_t(0)`` (odd-step supnorms are dominated by the preceding even step),
    evaluated as a fitted amplitude times a Hurwitz zeta tail.  The bound
    is *reported*, not subtracted; callers fitting growth exponents must
    hold it below 1% of the value (the stated precondition on t_cut) —
    for windows far outside the walk's t_cut-step range the windowed sum
    is near zero and this k-independent bound necessarily dominates it.
    A `CutoffCertificationError` propagates when the bound itself cannot
    be certified (uncertified return-probability quadrature).
    """
    k, n, T = int(k), int(n), int(t_cut)
    if n < 0:
        raise ValueError("window width must be >= 0")
    if T < 2:
        raise ValueError("t_cut must be >= 2")
    if T % 2:
        T += 1  # even horizon keeps P**(T+1) sign-safe at negative P

    def geometric(x):
        omc = np.asarray(law.one_minus_char(x), dtype=np.float64)
        p = 1.0 - omc
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(
                omc < 0.5,
                -np.expm1((T + 1) * np.log1p(-omc)) / omc,
                (1.0 - p ** (T + 1)) / omc,
            )

    # depth at which the geometric factor is flat to ~3%: omc(x) (T+1) ~ 0.03
    # (the x**alpha derivative kink at 0 needs geometric panels down to here)
    x_lo = _concentration_scale(law, T) * 5e-4 ** (1.0 / law.alpha)
    combined_freq = (n + 1) + abs(n - 2 * k)
    if combined_freq <= 80_000:
        def integrand(x: np.ndarray) -> np.ndarray:
            return (np.sin(0.5 * (n + 1) * x) * np.cos(0.5 * (n - 2 * k) * x)
                    / np.sin(0.5 * x)) * geometric(x)

        spacing = 2.0 * math.pi / combined_freq
        x_lo = min(x_lo, 0.5 * spacing)
        geo = [x_lo]
        while geo[-1] < min(spacing, math.pi):
            geo.append(min(2.0 * geo[-1], spacing))
        breaks = np.arange(1, combined_freq // 2 + 2) * spacing
        edges = np.unique(np.concatenate([[0.0], geo, breaks]))
        edges = np.append(edges[edges < math.pi - 1e-15], math.pi)
        y, w = leggauss(16)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        nodes = (mid[:, None] + half[:, None] * y[None, :]).ravel()
        weights = (half[:, None] * w[None, :]).ravel()
        value = float(weights @ integrand(nodes)) / math.pi
    else:
        # window far from the origin: integrate the slow factor against the
        # fast cos((k - n/2)x) weight segment by segment
        def slow(x: float) -> float:
            x = float(x)
            if x < 1e-300:
                return (n + 1.0) * float(geometric(np.float64(x_lo * 1e-3)))
            return (math.sin(0.5 * (n + 1) * x) / math.sin(0.5 * x)
                    * float(geometric(np.float64(x))))

        w_fast = abs(float(k) - 0.5 * n)
        lo = [min(x_lo, 0.05)]
        while lo[-1] < 0.1:
            lo.append(min(2.0 * lo[-1], 0.1))
        hi_edges = np.linspace(0.1, math.pi, max(16, (n + 1) // 6 + 2))
        edges = np.unique(np.concatenate([[0.0], lo, hi_edges]))
        value = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            piece, _ = quad(slow, a, b, weight="cos", wvar=w_fast,
                            epsabs=1e-11, epsrel=1e-9, limit=200)
            value += piece
        value /= math.pi

    # tail: fitted even-return amplitude, 50% safety, times Hurwitz zeta
    inv_alpha = 1.0 / law.alpha
    amp = 0.0
    for t_fit in (T, T + T // 2):
        p0, _ = _return_prob_certified(law, t_fit)
        amp = max(amp, p0 * float(t_fit) ** inv_alpha)
    amp *= 1.5
    if not math.isfinite(amp) or amp <= 0.0:
        raise CutoffCertificationError(
            f"occupation tail amplitude fit failed at t_cut={T}")
    even_tail = amp * 2.0 ** -inv_alpha * float(zeta(inv_alpha, T // 2 + 1))
    tail_bound = 2.0 * (n + 1) * even_tail
    return OccupationSum(value=value, tail_bound=tail_bound, t_cut=T)
