"""Independent verification of the analytic spectra via spin dynamics.

A single spin in a static field (taken along z) is integrated through its
deterministic equation of motion under a small oscillatory field
perturbation,

    ds/dt = (b z_hat + db(t)) x s
            - rate_par  [(s - s_ie) . z_hat] z_hat
            - rate_perp [z_hat x (s - s_ie)] x z_hat,

where the instantaneous equilibrium s_ie tracks the drive through the
static susceptibilities.  Projecting the periodic steady-state response
onto the drive quadratures yields the dynamical susceptibility, and the
fluctuation-dissipation theorem turns its imaginary part into a noise
spectrum that can be compared against the closed-form channel spectra.
Everything is dimensionless (time in hbar/(k_B T)).

This path shares nothing with the analytic formulas except the static
susceptibilities that define the equation of motion itself, which makes it
a genuinely independent oracle: fixed-step classical RK4, periodic
steady-state detection, quadrature projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SteadyStateError
from .spin import (
    SpinEnvironment,
    chi_parallel_static,
    chi_perpendicular_static,
    equilibrium_polarization,
    thermal_weight,
)

__all__ = ["BlochState", "DriveSpec", "step", "extract_susceptibility", "fdt_noise"]

STABILITY_MARGIN = 0.1   # hard bound on dt * fastest scale accepted by step()
ACCURACY_MARGIN = 0.05   # dt * fastest scale used by the extraction driver
MIN_STEPS_PER_PERIOD = 32


@dataclass(frozen=True)
class BlochState:
    """Spin expectation vector and the trajectory time, both dimensionless."""

    s: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        if s.shape != (3,):
            raise ValueError("spin state must be a 3-vector")
        object.__setattr__(self, "s", s)


@dataclass(frozen=True)
class DriveSpec:
    """Oscillatory field perturbation db(t) = amplitude * cos(frequency * t).

    ``direction`` selects the drive axis relative to the static field:
    ``longitudinal`` drives along z, ``transverse`` along x.  The default
    amplitude 1e-4 keeps the response deep in the linear regime.
    """

    direction: str
    frequency: float
    amplitude: float = 1e-4

    def __post_init__(self):
        if self.direction not in ("longitudinal", "transverse"):
            raise ValueError(f"unknown drive direction {self.direction!r}")
        if self.frequency < 0.0:
            raise ValueError("drive frequency must be >= 0")
        if self.amplitude < 0.0:
            raise ValueError("drive amplitude must be >= 0")


def _unpack_rates(rates) -> tuple[float, float]:
    rate_par, rate_perp = float(rates[0]), float(rates[1])
    if rate_par < 0.0 or rate_perp < 0.0:
        raise ValueError("relaxation rates must be >= 0")
    return rate_par, rate_perp


def _dt_bound(rate_par, rate_perp, b, freq) -> float:
    scale = max(rate_par, rate_perp, abs(b), freq)
    return math.inf if scale == 0.0 else STABILITY_MARGIN / scale


def _rk4_span(
    sx, sy, sz, t0, dt, n_steps,
    b, rate_par, rate_perp, s_eq, chi_l, chi_t,
    amp, freq, longitudinal,
    project=False,
):
    """Advance n_steps RK4 steps; optionally accumulate drive-quadrature sums.

    Scalar arithmetic on purpose: the 3-component right-hand side is far
    cheaper this way than through small-array numpy calls, and the
    projection sums ride along in the same loop.
    """
    cos, sin = math.cos, math.sin
    acc_c = 0.0
    acc_s = 0.0

    def rhs(t, x, y, z):
        db = amp * cos(freq * t)
        if longitudinal:
            # precession about (0, 0, b + db); equilibrium shifts along z
            w = b + db
            px = -w * y
            py = w * x
            pz = 0.0
            iex = 0.0
            iez = s_eq - chi_l * db
        else:
            # precession about (db, 0, b); equilibrium tilts along x
            px = -b * y
            py = b * x - db * z
            pz = db * y
            iex = -chi_t * db
            iez = s_eq
        return (
            px - rate_perp * (x - iex),
            py - rate_perp * y,
            pz - rate_par * (z - iez),
        )

    for k in range(n_steps):
        t = t0 + k * dt
        if project:
            delta = (sz - s_eq) if longitudinal else sx
            phase = freq * t
            acc_c += delta * cos(phase)
            acc_s += delta * sin(phase)
        k1x, k1y, k1z = rhs(t, sx, sy, sz)
        h2 = 0.5 * dt
        k2x, k2y, k2z = rhs(t + h2, sx + h2 * k1x, sy + h2 * k1y, sz + h2 * k1z)
        k3x, k3y, k3z = rhs(t + h2, sx + h2 * k2x, sy + h2 * k2y, sz + h2 * k2z)
        k4x, k4y, k4z = rhs(t + dt, sx + dt * k3x, sy + dt * k3y, sz + dt * k3z)
        sixth = dt / 6.0
        sx += sixth * (k1x + 2.0 * (k2x + k3x) + k4x)
        sy += sixth * (k1y + 2.0 * (k2y + k3y) + k4y)
        sz += sixth * (k1z + 2.0 * (k2z + k3z) + k4z)

    return sx, sy, sz, t0 + n_steps * dt, acc_c, acc_s


def step(
    state: BlochState,
    env: SpinEnvironment,
    rates,
    drive: DriveSpec | None,
    dt: float,
) -> BlochState:
    """One classical fourth-order Runge-Kutta step of the equation of motion.

    ``rates`` is the (rate_par, rate_perp) pair in units k_B*T/hbar.
    ``dt`` must respect dt <= 0.1 / max(rate_par, rate_perp, b, frequency);
    larger steps are rejected rather than silently degrading accuracy.
    """
    rate_par, rate_perp = _unpack_rates(rates)
    b = env.zeeman_ratio
    freq = drive.frequency if drive is not None else 0.0
    amp = drive.amplitude if drive is not None else 0.0
    longitudinal = drive is None or drive.direction == "longitudinal"
    bound = _dt_bound(rate_par, rate_perp, b, freq)
    if not 0.0 < dt <= bound:
        raise ValueError(
            f"dt={dt:g} violates the step bound 0 < dt <= {bound:g} "
            "(0.1 over the fastest rate/frequency scale)"
        )
    sx, sy, sz, t, _, _ = _rk4_span(
        float(state.s[0]), float(state.s[1]), float(state.s[2]), state.time,
        dt, 1,
        b, rate_par, rate_perp,
        equilibrium_polarization(env),
        chi_parallel_static(env), chi_perpendicular_static(env),
        amp, freq, longitudinal,
    )
    return BlochState(np.array([sx, sy, sz]), t)


def extract_susceptibility(
    env: SpinEnvironment,
    rates,
    drive: DriveSpec,
    *,
    transient_factor: float = 10.0,
    projection_periods: int = 20,
    drift_tolerance: float = 1e-8,
    max_extra_periods: int = 500,
) -> complex:
    """Dynamical susceptibility at the drive frequency by linear response.

    Integrates from equilibrium until the trajectory is periodic (state
    drift per drive period below ``drift_tolerance``; the initial discard
    is ``transient_factor`` relaxation times rounded up to whole periods),
    then projects the response component onto cos/sin of the drive phase
    over ``projection_periods`` whole periods.  The sign convention makes
    the static longitudinal limit equal +chi_parallel_static, i.e. the
    returned quantity is the magnetization response; the longitudinal
    result satisfies chi(x) = chi_par(0) * rate_par / (rate_par - i x).

    Raises
    ------
    SteadyStateError
        If the drift criterion is still violated after
        ``max_extra_periods`` additional periods.
    """
    rate_par, rate_perp = _unpack_rates(rates)
    if rate_par <= 0.0 or rate_perp <= 0.0:
        raise ValueError("susceptibility extraction needs strictly positive rates")
    if drive.frequency <= 0.0:
        raise ValueError("drive frequency must be > 0")
    if drive.amplitude <= 0.0:
        raise ValueError("drive amplitude must be > 0")

    b = env.zeeman_ratio
    s_eq = equilibrium_polarization(env)
    chi_l = chi_parallel_static(env)
    chi_t = chi_perpendicular_static(env)
    longitudinal = drive.direction == "longitudinal"
    freq, amp = drive.frequency, drive.amplitude

    period = 2.0 * math.pi / freq
    dt_max = ACCURACY_MARGIN / max(rate_par, rate_perp, abs(b), freq)
    steps_per_period = max(int(math.ceil(period / dt_max)), MIN_STEPS_PER_PERIOD)
    dt = period / steps_per_period

    args = (b, rate_par, rate_perp, s_eq, chi_l, chi_t, amp, freq, longitudinal)

    sx, sy, sz, t = 0.0, 0.0, s_eq, 0.0
    transient_time = transient_factor / min(rate_par, rate_perp)
    n_transient = max(int(math.ceil(transient_time / period)), 1)
    sx, sy, sz, t, _, _ = _rk4_span(
        sx, sy, sz, t, dt, n_transient * steps_per_period, *args
    )

    drift = math.inf
    for _ in range(max_extra_periods):
        px, py, pz = sx, sy, sz
        sx, sy, sz, t, _, _ = _rk4_span(sx, sy, sz, t, dt, steps_per_period, *args)
        drift = max(abs(sx - px), abs(sy - py), abs(sz - pz))
        if drift < drift_tolerance:
            break
    else:
        raise SteadyStateError(
            f"state drift {drift:.3e} per period still above {drift_tolerance:g} "
            f"after {max_extra_periods} periods (freq={freq:g})"
        )

    n_steps = projection_periods * steps_per_period
    sx, sy, sz, t, acc_c, acc_s = _rk4_span(
        sx, sy, sz, t, dt, n_steps, *args, project=True
    )
    # Riemann sums over whole periods of a periodic integrand are
    # spectrally accurate, so no endpoint correction is needed.
    span = projection_periods * period
    re_chi = -2.0 * acc_c * dt / (amp * span)
    im_chi = -2.0 * acc_s * dt / (amp * span)
    return complex(re_chi, im_chi)


def fdt_noise(chi: complex, x: float) -> float:
    """Noise from the fluctuation-dissipation theorem, in units hbar/(k_B T).

        S(x) = 2 Im chi(x) / (1 - e^-x)

    with the small-|x| prefactor evaluated by the shared stable series.
    ``x`` must be nonzero; the x -> 0 limit requires the slope of Im chi,
    not a single sample.
    """
    if x == 0.0:
        raise ValueError("fdt_noise needs x != 0; evaluate at a small finite x")
    return 2.0 * thermal_weight(x) * chi.imag / x
