"""Analytic single-spin quantities for a spin-1/2 impurity in a magnetic field.

Everything here is expressed in a dimensionless internal unit system:

* energies in units of k_B*T, so the field enters as b = g*mu_B*B / (k_B*T);
* rates and angular frequencies in units of k_B*T/hbar, so a frequency
  omega appears as x = hbar*omega / (k_B*T);
* noise spectra in units of hbar/(k_B*T), i.e. the returned values are
  S(omega) * k_B*T/hbar.

SI conversions live in :mod:`fluxnoise.units` and are applied only at the
I/O boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import HBAR, K_B, MU_B

__all__ = [
    "SpinEnvironment",
    "RateModel",
    "Spectrum",
    "thermal_weight",
    "equilibrium_polarization",
    "chi_parallel_static",
    "chi_perpendicular_static",
    "larmor_frequency",
    "relaxation_rates",
    "single_spin_noise_parallel",
    "single_spin_noise_perpendicular",
]

# Below this |x| the prefactor x/(1 - e^-x) switches to its Taylor series.
SERIES_CUTOFF = 1e-6


@dataclass(frozen=True)
class SpinEnvironment:
    """Thermodynamic environment of the impurity spins.

    Attributes
    ----------
    temperature : float
        Bath temperature in kelvin, > 0.
    field : float
        Static magnetic field magnitude in tesla, >= 0.
    g_factor : float
        Impurity g-factor (default 2.0).
    curie_weiss_temperature : float
        Mean-field Curie-Weiss temperature in kelvin encoding residual
        spin-spin interactions; must stay below ``temperature``.
    """

    temperature: float
    field: float = 0.0
    g_factor: float = 2.0
    curie_weiss_temperature: float = 0.0

    def __post_init__(self):
        if not self.temperature > 0.0:
            raise ValueError(f"temperature must be > 0 K, got {self.temperature}")
        if self.field < 0.0:
            raise ValueError(f"field must be >= 0 T, got {self.field}")
        if not self.g_factor > 0.0:
            raise ValueError(f"g_factor must be > 0, got {self.g_factor}")
        if not self.temperature > self.curie_weiss_temperature:
            raise ValueError(
                "temperature must exceed the Curie-Weiss temperature "
                f"(T={self.temperature} K, T_CW={self.curie_weiss_temperature} K)"
            )

    @property
    def zeeman_ratio(self) -> float:
        """Dimensionless field b = g*mu_B*B / (k_B*T)."""
        return self.g_factor * MU_B * self.field / (K_B * self.temperature)

    @property
    def curie_weiss_factor(self) -> float:
        """Static-susceptibility enhancement T / (T - T_CW)."""
        return self.temperature / (self.temperature - self.curie_weiss_temperature)


@dataclass(frozen=True)
class RateModel:
    """Relaxation-rate model combining cross and direct spin relaxation.

    The longitudinal rate of spin j is (in units of k_B*T/hbar)

        rate_par(lambda_j) = gamma0 * exp(-lambda_j) + gamma_tilde * b**n

    with lambda_j drawn uniformly from [0, lambda_max].  The first term is
    field-independent cross relaxation mediated by two-level systems; the
    second is direct phonon emission, with n = 2 for hyperfine modulation
    and n = 4 for spin-orbit admixture.  The transverse (decoherence) rate
    is ``transverse_ratio`` times the longitudinal one; ratios below 1/2
    violate the T2 <= 2*T1 bound and are rejected.

    Attributes
    ----------
    gamma0 : float
        Cross-relaxation prefactor in units k_B*T/hbar, > 0.
    gamma_tilde : float
        Direct-relaxation prefactor (dimensionless), >= 0.
    exponent : int
        Field exponent n of the direct term, 2 or 4.
    lambda_max : float
        Upper edge of the uniform lambda distribution, > 0.
    transverse_ratio : float
        rate_perp / rate_par, >= 0.5.  0.5 corresponds to relaxation
        dominated by spin energy decay, 1.0 to isotropic decay.
    """

    gamma0: float
    gamma_tilde: float = 0.0
    exponent: int = 4
    lambda_max: float = 30.0
    transverse_ratio: float = 0.5

    def __post_init__(self):
        if not self.gamma0 > 0.0:
            raise ValueError(f"gamma0 must be > 0, got {self.gamma0}")
        if self.gamma_tilde < 0.0:
            raise ValueError(f"gamma_tilde must be >= 0, got {self.gamma_tilde}")
        if self.exponent not in (2, 4):
            raise ValueError(f"exponent must be 2 or 4, got {self.exponent}")
        if not self.lambda_max > 0.0:
            raise ValueError(f"lambda_max must be > 0, got {self.lambda_max}")
        if self.transverse_ratio < 0.5:
            raise ValueError(
                f"transverse_ratio must be >= 0.5, got {self.transverse_ratio}"
            )

    def direct_rate(self, env: SpinEnvironment) -> float:
        """Field-induced direct rate gamma_tilde * b**n."""
        return self.gamma_tilde * env.zeeman_ratio**self.exponent

    def rate_min(self, env: SpinEnvironment) -> float:
        """Slowest longitudinal rate, at lambda = lambda_max."""
        return self.gamma0 * math.exp(-self.lambda_max) + self.direct_rate(env)

    def rate_max(self, env: SpinEnvironment) -> float:
        """Fastest longitudinal rate, at lambda = 0."""
        return self.gamma0 + self.direct_rate(env)


@dataclass(frozen=True)
class Spectrum:
    """Sampled noise spectrum on a dimensionless frequency grid.

    ``grid`` holds x = hbar*omega/(k_B*T) values, strictly increasing and
    possibly spanning negative frequencies; ``values`` holds the
    corresponding non-negative noise samples.
    """

    grid: np.ndarray
    values: np.ndarray
    channel: str = "parallel"

    _CHANNELS = ("parallel", "perpendicular", "total")

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        if grid.ndim != 1 or values.shape != grid.shape:
            raise ValueError("grid and values must be 1-d arrays of equal length")
        if grid.size and not np.all(np.diff(grid) > 0.0):
            raise ValueError("grid must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise ValueError("spectrum values must be finite")
        if np.any(values < 0.0):
            raise ValueError("spectrum values must be non-negative")
        if self.channel not in self._CHANNELS:
            raise ValueError(f"unknown channel {self.channel!r}")


def thermal_weight(x):
    """Detailed-balance weight x / (1 - exp(-x)).

    Evaluated with ``expm1`` away from zero and by the Taylor series
    1 + x/2 + x**2/12 for |x| < 1e-6, which removes the 0/0 singularity
    without cancellation.  Accepts scalars or arrays; strictly positive
    for every finite x and satisfies w(-x) = exp(-x) * w(x).
    """
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < SERIES_CUTOFF
    # Guard the denominator where the series branch will be used anyway.
    denom = -np.expm1(-np.where(small, 1.0, x))
    out = np.where(small, 1.0 + x / 2.0 + x * x / 12.0, x / denom)
    if out.ndim == 0:
        return float(out)
    return out


def equilibrium_polarization(env: SpinEnvironment) -> float:
    """Thermal-equilibrium spin polarization -tanh(b/2) / 2.

    Zero at b = 0 and saturating to -1/2 as b grows; monotone
    decreasing in the field.
    """
    return -0.5 * math.tanh(0.5 * env.zeeman_ratio)


def chi_parallel_static(env: SpinEnvironment) -> float:
    """Static longitudinal susceptibility in units 1/(k_B*T).

    Returns [T/(T - T_CW)] / [4 cosh^2(b/2)]; the Curie-Weiss factor
    models residual spin-spin interactions, which affect the static
    susceptibility but not the decay rates.
    """
    half_b = 0.5 * env.zeeman_ratio
    return env.curie_weiss_factor / (4.0 * math.cosh(half_b) ** 2)


def chi_perpendicular_static(env: SpinEnvironment) -> float:
    """Static transverse susceptibility tanh(b/2) / (2b) in units 1/(k_B*T).

    The b -> 0 limit is 1/4, taken by series below |b| = 1e-6 so the
    zero-field value joins the longitudinal susceptibility continuously.
    """
    b = env.zeeman_ratio
    if abs(b) < SERIES_CUTOFF:
        # tanh(b/2)/(2b) = 1/4 - b^2/48 + O(b^4)
        return 0.25 - b * b / 48.0
    return math.tanh(0.5 * b) / (2.0 * b)


def larmor_frequency(env: SpinEnvironment) -> tuple[float, float]:
    """Spin precession frequency.

    Returns
    -------
    (omega, b) : tuple of float
        Angular frequency omega = g*mu_B*B/hbar in rad/s, and its
        dimensionless counterpart x = b.
    """
    omega = env.g_factor * MU_B * env.field / HBAR
    return omega, env.zeeman_ratio


def relaxation_rates(
    model: RateModel, env: SpinEnvironment, lam: float
) -> tuple[float, float]:
    """Longitudinal and transverse rates of a spin with disorder variable lam.

    Parameters
    ----------
    lam : float
        Cross-relaxation suppression exponent, in [0, lambda_max].

    Returns
    -------
    (rate_par, rate_perp) : tuple of float
        Rates in units k_B*T/hbar; rate_par lies in
        [rate_min, rate_max] by construction.
    """
    if not 0.0 <= lam <= model.lambda_max:
        raise ValueError(
            f"lambda must lie in [0, {model.lambda_max}], got {lam}"
        )
    rate_par = model.gamma0 * math.exp(-lam) + model.direct_rate(env)
    return rate_par, model.transverse_ratio * rate_par


def single_spin_noise_parallel(env: SpinEnvironment, rate_par: float, x):
    """Longitudinal spin noise of a single spin, in units hbar/(k_B*T).

        S_par(x) = [2x / (1 - e^-x)] * rate_par * chi_par / (x^2 + rate_par^2)

    A Lorentzian of half-width ``rate_par`` centered at x = 0, weighted by
    the detailed-balance factor.  Strictly positive for all finite x.
    """
    if not rate_par > 0.0:
        raise ValueError(f"rate_par must be > 0, got {rate_par}")
    x = np.asarray(x, dtype=float)
    chi = chi_parallel_static(env)
    out = 2.0 * thermal_weight(x) * rate_par * chi / (x * x + rate_par * rate_par)
    if np.ndim(out) == 0:
        return float(out)
    return out


def single_spin_noise_perpendicular(env: SpinEnvironment, rate_perp: float, x):
    """Transverse spin noise of a single spin, in units hbar/(k_B*T).

        S_perp(x) = [x / (1 - e^-x)] * rate_perp * chi_perp
                    * [ 1/((x - b)^2 + rate_perp^2)
                      + 1/((x + b)^2 + rate_perp^2) ]

    Two precession Lorentzians centered at x = +/- b; they merge into the
    longitudinal form at b = 0 when the rates coincide.
    """
    if not rate_perp > 0.0:
        raise ValueError(f"rate_perp must be > 0, got {rate_perp}")
    x = np.asarray(x, dtype=float)
    b = env.zeeman_ratio
    chi = chi_perpendicular_static(env)
    g2 = rate_perp * rate_perp
    bracket = 1.0 / ((x - b) ** 2 + g2) + 1.0 / ((x + b) ** 2 + g2)
    out = thermal_weight(x) * rate_perp * chi * bracket
    if np.ndim(out) == 0:
        return float(out)
    return out
