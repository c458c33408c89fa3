"""Disorder averaging of single-spin noise over a distribution of rates.

The cross-relaxation exponent lambda is uniform on [0, lambda_max], which
induces the probability density p(rate) = 1 / (lambda_max * (rate - rate_B))
on [rate_min, rate_max], where rate_B is the field-induced direct rate.
Averaging the longitudinal Lorentzian over this density has a closed form;
the transverse channel is averaged by deterministic adaptive quadrature.
A seeded Monte Carlo estimator provides an independent cross-check.

All frequencies, rates, and spectra use the dimensionless units of
:mod:`fluxnoise.spin`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .errors import QuadratureError
from .spin import (
    RateModel,
    Spectrum,
    SpinEnvironment,
    chi_parallel_static,
    chi_perpendicular_static,
    thermal_weight,
)

__all__ = [
    "DisorderDistribution",
    "AveragedSpectrum",
    "rate_density",
    "averaged_noise_parallel_closed",
    "averaged_noise_parallel_mc",
    "averaged_noise_parallel_quad",
    "averaged_noise_perpendicular",
    "parallel_spectrum",
    "perpendicular_spectrum",
    "local_log_slope",
    "slope_table",
]

_MC_CHUNK = 1_000_000


@dataclass(frozen=True)
class DisorderDistribution:
    """Distribution of relaxation rates induced by lambda ~ U[0, lambda_max]."""

    rate_model: RateModel

    def rate_parallel(self, env: SpinEnvironment, lam):
        """Longitudinal rate(s) at the given lambda value(s)."""
        m = self.rate_model
        return m.gamma0 * np.exp(-np.asarray(lam, dtype=float)) + m.direct_rate(env)

    def support(self, env: SpinEnvironment) -> tuple[float, float]:
        """(rate_min, rate_max) interval carrying all probability mass."""
        return self.rate_model.rate_min(env), self.rate_model.rate_max(env)


@dataclass(frozen=True)
class AveragedSpectrum(Spectrum):
    """Disorder-averaged spectrum plus the metadata needed to reproduce it.

    ``method`` is one of ``closed_form``, ``monte_carlo``, ``quadrature``;
    ``details`` records the method parameters (seed and sample count, or
    tolerance and panel budget).  Monte Carlo results also carry the
    per-point standard error of the mean.
    """

    method: str = "closed_form"
    details: dict = field(default_factory=dict)
    stderr: np.ndarray | None = None


def rate_density(dist: DisorderDistribution, env: SpinEnvironment, gamma):
    """Probability density p(rate) on [rate_min, rate_max], zero outside."""
    m = dist.rate_model
    lo, hi = dist.support(env)
    scalar = np.ndim(gamma) == 0
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    inside = (gamma >= lo) & (gamma <= hi)
    dens = np.zeros_like(gamma)
    core = gamma[inside] - m.direct_rate(env)
    dens[inside] = 1.0 / (m.lambda_max * core)
    if scalar:
        return float(dens[0])
    return dens


def averaged_noise_parallel_closed(dist: DisorderDistribution, env: SpinEnvironment, x):
    """Closed-form disorder average of the longitudinal single-spin noise.

    Evaluates, with w(x) = x / (1 - e^-x) and chi the static longitudinal
    susceptibility,

        S_avg(x) = 2 w(x) chi * { (1/lambda_max) * x^2/(x^2 + rate_B^2)
                                  * [atan(rate_max/x) - atan(rate_min/x)] / x
                   + [1 - log((rate_max^2 + x^2)/(rate_min^2 + x^2))
                          / (2 lambda_max)] * rate_B / (x^2 + rate_B^2) }

    which is the exact integral of the single-spin Lorentzian against
    p(rate).  Mid-band (rate_min << |x| << rate_max, zero field) this
    reduces to w(x) chi pi / (lambda_max |x|), i.e. 1/|x| noise.

    The arctan difference is computed through the identity
    atan(a) - atan(c) = atan((a - c) / (1 + a c)), and the log through
    log1p, so the result stays accurate over 20+ decades of x.  The x = 0
    point takes the analytic limit: the arctan term contributes
    (1/rate_min - 1/rate_max)/lambda_max at zero field and vanishes
    otherwise, while the log term is continuous as written.
    """
    m = dist.rate_model
    lam = m.lambda_max
    rate_b = m.direct_rate(env)
    lo, hi = dist.support(env)
    span = m.gamma0 * (-math.expm1(-lam))  # rate_max - rate_min, no cancellation
    chi = chi_parallel_static(env)

    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    zero = ax == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        datan = np.arctan(ax * span / (ax * ax + hi * lo))
        term1 = (ax * ax / (ax * ax + rate_b * rate_b)) * datan / ax / lam
    if np.any(zero):
        limit1 = (1.0 / lo - 1.0 / hi) / lam if rate_b == 0.0 else 0.0
        term1 = np.where(zero, limit1, term1)
    if rate_b > 0.0:
        log_ratio = np.log1p(span * (hi + lo) / (lo * lo + ax * ax))
        term2 = (1.0 - log_ratio / (2.0 * lam)) * rate_b / (ax * ax + rate_b * rate_b)
    else:
        term2 = 0.0
    out = 2.0 * thermal_weight(x) * chi * (term1 + term2)
    if np.ndim(out) == 0:
        return float(out)
    return out


def _mc_stream_indices(ax: np.ndarray) -> np.ndarray:
    """Stream index per grid point: first occurrence of each |x| value.

    Points that differ only in sign share a stream, so the sampled
    average inherits detailed balance exactly.
    """
    first: dict[float, int] = {}
    idx = np.empty(ax.size, dtype=np.int64)
    for i, val in enumerate(ax.ravel()):
        idx[i] = first.setdefault(float(val), i)
    return idx


def averaged_noise_parallel_mc(
    dist: DisorderDistribution,
    env: SpinEnvironment,
    x,
    samples: int,
    seed: int,
):
    """Monte Carlo disorder average of the longitudinal noise.

    Draws lambda ~ U[0, lambda_max] from a counter-based Philox generator
    keyed by (seed, stream index), one independent stream per grid point,
    so results are deterministic for fixed (seed, samples) and independent
    of evaluation order or parallel partitioning.

    Returns
    -------
    (mean, stderr) : tuple of ndarray
        Sample mean of the single-spin noise and the standard error of
        that mean, matching the shape of ``x``.
    """
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    m = dist.rate_model
    rate_b = m.direct_rate(env)
    chi = chi_parallel_static(env)

    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    ax = np.abs(x)
    streams = _mc_stream_indices(ax)

    mean = np.empty_like(ax)
    stderr = np.empty_like(ax)
    cache: dict[int, tuple[float, float]] = {}
    for i, xi in enumerate(ax):
        key = int(streams[i])
        if key in cache and key != i:
            mean[i], stderr[i] = cache[key]
            continue
        rng = np.random.Generator(
            np.random.Philox(key=np.array([seed, key], dtype=np.uint64))
        )
        total = 0.0
        total_sq = 0.0
        remaining = int(samples)
        while remaining > 0:
            n = min(remaining, _MC_CHUNK)
            lam = rng.random(n) * m.lambda_max
            rate = m.gamma0 * np.exp(-lam) + rate_b
            f = 2.0 * rate / (xi * xi + rate * rate)
            total += float(np.sum(f))
            total_sq += float(np.sum(f * f))
            remaining -= n
        avg = total / samples
        if samples > 1:
            var = max(total_sq - samples * avg * avg, 0.0) / (samples - 1)
            sem = math.sqrt(var / samples)
        else:
            sem = 0.0
        mean[i], stderr[i] = avg, sem
        cache[key] = (avg, sem)

    w = np.atleast_1d(thermal_weight(x))
    mean = w * chi * mean
    stderr = w * chi * stderr
    if scalar:
        return float(mean[0]), float(stderr[0])
    return mean, stderr


def _disorder_quad(integrand, lambda_max: float, tolerance: float, panels: int, label: str) -> float:
    """Adaptive quadrature over lambda in [0, lambda_max]; loud on failure."""
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            value, _ = quad(
                integrand, 0.0, lambda_max, epsabs=0.0, epsrel=tolerance, limit=panels
            )
        except IntegrationWarning as exc:
            raise QuadratureError(
                f"{label}: quadrature failed to reach relative tolerance "
                f"{tolerance:g} within {panels} panels ({exc})"
            ) from exc
    return value


def averaged_noise_parallel_quad(
    dist: DisorderDistribution,
    env: SpinEnvironment,
    x,
    tolerance: float = 1e-8,
    panels: int = 200,
):
    """Disorder average of the longitudinal noise by adaptive quadrature.

    Deterministic oracle for the closed form: integrates the bare
    Lorentzian over lambda and applies the common w(x) * chi prefactor.
    Raises :class:`QuadratureError` instead of returning an unconverged
    estimate.
    """
    if not tolerance > 0.0:
        raise ValueError("tolerance must be > 0")
    m = dist.rate_model
    rate_b = m.direct_rate(env)
    chi = chi_parallel_static(env)
    x = np.asarray(x, dtype=float)

    def bare(xi: float) -> float:
        def integrand(lam: float) -> float:
            rate = m.gamma0 * math.exp(-lam) + rate_b
            return 2.0 * rate / (xi * xi + rate * rate) / m.lambda_max

        return _disorder_quad(
            integrand, m.lambda_max, tolerance, panels, f"parallel average at x={xi:g}"
        )

    vals = np.array([bare(float(xi)) for xi in np.atleast_1d(x)])
    out = thermal_weight(x) * chi * vals.reshape(np.shape(x))
    if np.ndim(out) == 0:
        return float(out)
    return out


def averaged_noise_perpendicular(
    dist: DisorderDistribution,
    env: SpinEnvironment,
    x,
    tolerance: float = 1e-8,
    panels: int = 200,
):
    """Disorder average of the transverse (precession-peak) noise.

    No closed form exists for this channel; the average is a deterministic
    adaptive quadrature over lambda, with the transverse rate fully
    correlated to the longitudinal one of the same spin
    (rate_perp = transverse_ratio * rate_par).  At low field the peaks
    acquire 1/|x -+ b| disorder wings; once the direct rate dominates they
    collapse to Lorentzians of width rate_B.
    """
    if not tolerance > 0.0:
        raise ValueError("tolerance must be > 0")
    m = dist.rate_model
    rate_b = m.direct_rate(env)
    ratio = m.transverse_ratio
    b = env.zeeman_ratio
    chi = chi_perpendicular_static(env)
    x = np.asarray(x, dtype=float)

    def bare(xi: float) -> float:
        lo = xi - b
        hi = xi + b

        def integrand(lam: float) -> float:
            rate = ratio * (m.gamma0 * math.exp(-lam) + rate_b)
            g2 = rate * rate
            return rate * (1.0 / (lo * lo + g2) + 1.0 / (hi * hi + g2)) / m.lambda_max

        return _disorder_quad(
            integrand, m.lambda_max, tolerance, panels,
            f"perpendicular average at x={xi:g}",
        )

    vals = np.array([bare(float(xi)) for xi in np.atleast_1d(x)])
    out = thermal_weight(x) * chi * vals.reshape(np.shape(x))
    if np.ndim(out) == 0:
        return float(out)
    return out


def parallel_spectrum(
    dist: DisorderDistribution,
    env: SpinEnvironment,
    grid,
    method: str = "closed_form",
    *,
    samples: int = 1_000_000,
    seed: int = 0,
    tolerance: float = 1e-8,
    panels: int = 200,
) -> AveragedSpectrum:
    """Disorder-averaged longitudinal spectrum with method metadata."""
    grid = np.asarray(grid, dtype=float)
    if method == "closed_form":
        values = averaged_noise_parallel_closed(dist, env, grid)
        return AveragedSpectrum(grid, values, "parallel", "closed_form", {})
    if method == "monte_carlo":
        values, stderr = averaged_noise_parallel_mc(dist, env, grid, samples, seed)
        return AveragedSpectrum(
            grid, values, "parallel", "monte_carlo",
            {"samples": int(samples), "seed": int(seed)}, stderr,
        )
    if method == "quadrature":
        values = averaged_noise_parallel_quad(dist, env, grid, tolerance, panels)
        return AveragedSpectrum(
            grid, values, "parallel", "quadrature",
            {"tolerance": tolerance, "panels": panels},
        )
    raise ValueError(f"unknown averaging method {method!r}")


def perpendicular_spectrum(
    dist: DisorderDistribution,
    env: SpinEnvironment,
    grid,
    *,
    tolerance: float = 1e-8,
    panels: int = 200,
) -> AveragedSpectrum:
    """Disorder-averaged transverse spectrum (always quadrature)."""
    grid = np.asarray(grid, dtype=float)
    values = averaged_noise_perpendicular(dist, env, grid, tolerance, panels)
    return AveragedSpectrum(
        grid, values, "perpendicular", "quadrature",
        {"tolerance": tolerance, "panels": panels},
    )


def local_log_slope(spectrum: Spectrum, x: float) -> float:
    """Local spectral exponent alpha(x) = -d log S / d log x.

    Centered finite difference on the log-log grid at the grid point
    nearest to ``x``.  The point must be interior, with positive
    frequencies and positive spectrum values on both neighbors.
    """
    grid = spectrum.grid
    i = int(np.argmin(np.abs(grid - x)))
    if i == 0 or i == grid.size - 1:
        raise ValueError(f"x={x:g} falls on a grid boundary; slope undefined")
    xl, xr = grid[i - 1], grid[i + 1]
    if xl <= 0.0:
        raise ValueError("log-log slope needs strictly positive frequencies")
    sl, sr = spectrum.values[i - 1], spectrum.values[i + 1]
    if sl <= 0.0 or sr <= 0.0:
        raise ValueError("log-log slope needs strictly positive spectrum values")
    return -(math.log(sr) - math.log(sl)) / (math.log(xr) - math.log(xl))


def slope_table(spectrum: Spectrum) -> tuple[np.ndarray, np.ndarray]:
    """alpha(x) at every interior grid point where the slope is defined.

    Returns the interior frequencies and their exponents, skipping points
    whose stencil touches non-positive frequencies or values.
    """
    grid, vals = spectrum.grid, spectrum.values
    if grid.size < 3:
        return np.empty(0), np.empty(0)
    ok = (grid[:-2] > 0.0) & (vals[:-2] > 0.0) & (vals[2:] > 0.0)
    xs = grid[1:-1][ok]
    num = np.log(vals[2:][ok]) - np.log(vals[:-2][ok])
    den = np.log(grid[2:][ok]) - np.log(grid[:-2][ok])
    return xs, -num / den
