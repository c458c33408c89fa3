"""Device-level flux noise assembled from per-spin spectra and flux vectors.

Each impurity spin couples to the device through a flux vector F_j (in Wb
per unit spin).  Relative to the static-field direction the contribution
splits into a longitudinal weight |F . B_hat|^2 multiplying the
zero-frequency-peaked channel and a transverse weight |F x B_hat|^2
multiplying the precession-peak channel.  Band-power accounting quantifies
how an applied field expels noise from the low-frequency band.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .constants import HBAR, K_B, PHI_0
from .disorder import DisorderDistribution
from .spin import (
    Spectrum,
    SpinEnvironment,
    single_spin_noise_parallel,
    single_spin_noise_perpendicular,
)

__all__ = [
    "FluxEnsemble",
    "FluxNoiseSpectrum",
    "BandPowerReport",
    "LowBandReduction",
    "decompose",
    "assemble_flux_noise",
    "assemble_flux_noise_per_spin",
    "band_power",
    "band_power_report",
    "low_band_reduction",
    "reduction_conventions",
]

_trapezoid = getattr(np, "trapezoid", None) or np.trapz

# Wb^2/Hz -> (micro Phi_0)^2 / Hz
UPHI0SQ_PER_WB2 = 1e12 / PHI_0**2

ORIENTATIONS = ("isotropic_3d", "fixed_parallel", "fixed_perpendicular", "planar_2d")

UNIT_TOL = 1e-12


def _check_unit(vec, name: str) -> np.ndarray:
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector")
    norm = float(np.linalg.norm(vec))
    if abs(norm - 1.0) > UNIT_TOL:
        raise ValueError(f"{name} must be a unit vector, |v| = {norm!r}")
    return vec


def decompose(flux_vector, field_direction) -> tuple[float, float]:
    """Split |F|^2 into weights parallel and perpendicular to the field.

    Returns (|F . B_hat|^2, |F x B_hat|^2); the two add up to |F|^2.
    """
    b_hat = _check_unit(field_direction, "field_direction")
    f = np.asarray(flux_vector, dtype=float)
    if f.shape != (3,):
        raise ValueError("flux_vector must be a 3-vector")
    if not np.all(np.isfinite(f)):
        raise ValueError("flux_vector components must be finite")
    par = float(np.dot(f, b_hat)) ** 2
    perp = float(np.dot(np.cross(f, b_hat), np.cross(f, b_hat)))
    return par, perp


def _orthonormal_pair(axis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors spanning the plane perpendicular to ``axis``."""
    helper = np.array([1.0, 0.0, 0.0])
    if abs(axis[0]) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    e1 = np.cross(axis, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    return e1, e2


@dataclass(frozen=True)
class FluxEnsemble:
    """Collection of per-spin flux vectors plus the field direction.

    ``vectors`` has shape (count, 3) in Wb per unit spin.  ``metadata``
    records how the ensemble was produced (generation policy, seed,
    rounding), enough to regenerate it bit for bit.
    """

    vectors: np.ndarray
    field_direction: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        vecs = np.asarray(self.vectors, dtype=float)
        if vecs.ndim != 2 or vecs.shape[1] != 3 or vecs.shape[0] < 1:
            raise ValueError("vectors must have shape (count >= 1, 3)")
        if not np.all(np.isfinite(vecs)):
            raise ValueError("flux vectors must be finite")
        object.__setattr__(self, "vectors", vecs)
        object.__setattr__(
            self, "field_direction", _check_unit(self.field_direction, "field_direction")
        )

    @property
    def count(self) -> int:
        return self.vectors.shape[0]

    def weights(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-spin (parallel, perpendicular) weights in Wb^2."""
        b_hat = self.field_direction
        par_comp = self.vectors @ b_hat
        cross = np.cross(self.vectors, b_hat)
        return par_comp**2, np.einsum("ij,ij->i", cross, cross)

    def weight_sums(self) -> tuple[float, float]:
        """Compensated sums of the parallel and perpendicular weights.

        Uses exact (fsum) accumulation so the totals do not depend on how
        the ensemble might be partitioned across workers.
        """
        w_par, w_perp = self.weights()
        return math.fsum(w_par.tolist()), math.fsum(w_perp.tolist())

    @classmethod
    def from_vectors(cls, vectors, field_direction) -> "FluxEnsemble":
        return cls(np.asarray(vectors, dtype=float), field_direction,
                   {"source": "explicit"})

    @classmethod
    def from_csv(cls, path, field_direction) -> "FluxEnsemble":
        """Read explicit flux vectors from CSV with columns Fx, Fy, Fz (Wb)."""
        with open(path, newline="") as handle:
            reader = csv.DictReader(handle)
            cols = reader.fieldnames or []
            if [c.strip() for c in cols[:3]] != ["Fx", "Fy", "Fz"]:
                raise ValueError(
                    f"{path}: expected CSV header 'Fx,Fy,Fz', got {cols!r}"
                )
            rows = [
                (float(r["Fx"]), float(r["Fy"]), float(r["Fz"])) for r in reader
            ]
        if not rows:
            raise ValueError(f"{path}: no flux vectors found")
        return cls(np.array(rows, dtype=float), field_direction,
                   {"source": "csv", "path": str(path)})

    @classmethod
    def generate(
        cls,
        *,
        field_direction,
        count: int | None = None,
        areal_density: float | None = None,
        area: float | None = None,
        magnitude=1.0,
        orientation: str = "isotropic_3d",
        plane_normal=(0.0, 0.0, 1.0),
        seed: int = 0,
    ) -> "FluxEnsemble":
        """Sample an ensemble of flux vectors from a generative policy.

        Either ``count`` or both ``areal_density`` (1/m^2) and ``area``
        (m^2) must be given; the product is rounded half-to-even to an
        integer spin count.  ``magnitude`` is a constant in Wb, or a
        histogram ``(bin_edges, weights)`` sampled by bin probability and
        uniformly within the chosen bin.  Orientations are drawn with a
        counter-based generator keyed by ``seed``:

        * ``isotropic_3d``: uniform over the sphere (two uniform variates);
        * ``fixed_parallel``: along the field direction;
        * ``fixed_perpendicular``: uniform azimuth in the plane normal to
          the field;
        * ``planar_2d``: uniform azimuth in the plane normal to
          ``plane_normal``.
        """
        b_hat = _check_unit(field_direction, "field_direction")
        if orientation not in ORIENTATIONS:
            raise ValueError(f"unknown orientation policy {orientation!r}")
        meta: dict = {"source": "generated", "orientation": orientation,
                      "seed": int(seed)}
        if count is None:
            if areal_density is None or area is None:
                raise ValueError("give either count or areal_density and area")
            if areal_density <= 0.0 or area <= 0.0:
                raise ValueError("areal_density and area must be > 0")
            exact = areal_density * area
            count = int(round(exact))  # round-half-to-even
            meta.update(areal_density=areal_density, area=area,
                        rounded_from=exact)
        count = int(count)
        if count < 1:
            raise ValueError(f"ensemble count must be >= 1, got {count}")
        meta["count"] = count

        rng = np.random.Generator(
            np.random.Philox(key=np.array([seed, 0], dtype=np.uint64))
        )

        if isinstance(magnitude, (int, float)):
            mags = np.full(count, float(magnitude))
            meta["magnitude"] = float(magnitude)
        else:
            edges, weights = magnitude
            edges = np.asarray(edges, dtype=float)
            weights = np.asarray(weights, dtype=float)
            if edges.ndim != 1 or edges.size != weights.size + 1:
                raise ValueError("histogram needs len(bin_edges) == len(weights) + 1")
            if np.any(weights < 0.0) or weights.sum() <= 0.0:
                raise ValueError("histogram weights must be non-negative, sum > 0")
            if np.any(np.diff(edges) <= 0.0):
                raise ValueError("histogram bin edges must be strictly increasing")
            probs = weights / weights.sum()
            bins = rng.choice(weights.size, size=count, p=probs)
            frac = rng.random(count)
            mags = edges[bins] + frac * (edges[bins + 1] - edges[bins])
            meta["magnitude"] = "histogram"

        if orientation == "fixed_parallel":
            dirs = np.tile(b_hat, (count, 1))
        elif orientation == "fixed_perpendicular":
            e1, e2 = _orthonormal_pair(b_hat)
            phi = 2.0 * np.pi * rng.random(count)
            dirs = np.outer(np.cos(phi), e1) + np.outer(np.sin(phi), e2)
        elif orientation == "planar_2d":
            normal = _check_unit(plane_normal, "plane_normal")
            e1, e2 = _orthonormal_pair(normal)
            phi = 2.0 * np.pi * rng.random(count)
            dirs = np.outer(np.cos(phi), e1) + np.outer(np.sin(phi), e2)
        else:  # isotropic_3d
            z = 2.0 * rng.random(count) - 1.0
            phi = 2.0 * np.pi * rng.random(count)
            rho = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
            dirs = np.column_stack((rho * np.cos(phi), rho * np.sin(phi), z))

        return cls(mags[:, None] * dirs, b_hat, meta)


@dataclass(frozen=True)
class FluxNoiseSpectrum:
    """Device flux-noise spectrum with SI and flux-quantum unit tags.

    ``values_wb2_per_hz`` is S_Phi(omega) in Wb^2/Hz (equivalently Wb^2*s);
    ``values_uphi0sq_per_hz`` is the same data in (micro Phi_0)^2/Hz.
    """

    grid: np.ndarray
    values_wb2_per_hz: np.ndarray
    values_uphi0sq_per_hz: np.ndarray
    spin_count: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "grid", np.asarray(self.grid, dtype=float))
        object.__setattr__(
            self, "values_wb2_per_hz", np.asarray(self.values_wb2_per_hz, dtype=float)
        )
        object.__setattr__(
            self,
            "values_uphi0sq_per_hz",
            np.asarray(self.values_uphi0sq_per_hz, dtype=float),
        )


def _flux_metadata(env: SpinEnvironment, ensemble: FluxEnsemble) -> dict:
    meta = dict(ensemble.metadata)
    meta["count"] = ensemble.count
    warnings_list = []
    if env.field < 1e-4:  # below 1 G the wire's own field is not negligible
        warnings_list.append(
            "field below 1 G: the local field may deviate from the applied field"
        )
    if warnings_list:
        meta["warnings"] = warnings_list
    return meta


def assemble_flux_noise(
    ensemble: FluxEnsemble,
    parallel: Spectrum,
    perpendicular: Spectrum,
    env: SpinEnvironment,
) -> FluxNoiseSpectrum:
    """Combine channel spectra and ensemble weights into device flux noise.

    All spins share the two supplied (typically disorder-averaged) channel
    spectra, so the device spectrum is

        S_Phi(x) = sum_j [w_par_j * S_par(x) + w_perp_j * S_perp(x)]

    with the weight sums accumulated exactly.  Channel spectra must share
    one grid; dimensionless values are converted to Wb^2/Hz through the
    hbar/(k_B T) time unit.
    """
    if parallel.grid.shape != perpendicular.grid.shape or not np.array_equal(
        parallel.grid, perpendicular.grid
    ):
        raise ValueError("parallel and perpendicular spectra must share one grid")
    w_par, w_perp = ensemble.weight_sums()
    dimless = w_par * parallel.values + w_perp * perpendicular.values
    si = dimless * HBAR / (K_B * env.temperature)
    return FluxNoiseSpectrum(
        parallel.grid,
        si,
        si * UPHI0SQ_PER_WB2,
        ensemble.count,
        _flux_metadata(env, ensemble),
    )


def assemble_flux_noise_per_spin(
    ensemble: FluxEnsemble,
    dist: DisorderDistribution,
    env: SpinEnvironment,
    grid,
    seed: int = 0,
) -> FluxNoiseSpectrum:
    """Flux noise with an individual relaxation rate drawn for every spin.

    Monte Carlo counterpart of :func:`assemble_flux_noise`: spin j gets its
    own lambda_j ~ U[0, lambda_max] (Philox, keyed by ``seed``) and its own
    single-spin channel spectra.  Per-grid-point accumulation over spins
    uses exact summation, so the result is independent of spin ordering.
    """
    grid = np.asarray(grid, dtype=float)
    m = dist.rate_model
    rng = np.random.Generator(
        np.random.Philox(key=np.array([seed, 1], dtype=np.uint64))
    )
    lam = rng.random(ensemble.count) * m.lambda_max
    rates_par = m.gamma0 * np.exp(-lam) + m.direct_rate(env)
    w_par, w_perp = ensemble.weights()

    contributions = np.empty((ensemble.count, grid.size))
    for j in range(ensemble.count):
        s_par = single_spin_noise_parallel(env, float(rates_par[j]), grid)
        s_perp = single_spin_noise_perpendicular(
            env, float(m.transverse_ratio * rates_par[j]), grid
        )
        contributions[j] = w_par[j] * s_par + w_perp[j] * s_perp
    dimless = np.array(
        [math.fsum(contributions[:, k].tolist()) for k in range(grid.size)]
    )
    si = dimless * HBAR / (K_B * env.temperature)
    meta = _flux_metadata(env, ensemble)
    meta["per_spin_seed"] = int(seed)
    return FluxNoiseSpectrum(
        grid, si, si * UPHI0SQ_PER_WB2, ensemble.count, meta
    )


def band_power(grid, values, low: float, high: float) -> float:
    """Trapezoidal integral of a sampled spectrum over [low, high].

    The band must lie inside the grid; the integrand is interpolated
    linearly at the band edges.  Accepts a :class:`Spectrum`-like pair of
    arrays.
    """
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    if not low < high:
        raise ValueError(f"band must satisfy low < high, got [{low}, {high}]")
    if low < grid[0] or high > grid[-1]:
        raise ValueError(
            f"band [{low:g}, {high:g}] outside grid coverage "
            f"[{grid[0]:g}, {grid[-1]:g}]"
        )
    inner = (grid > low) & (grid < high)
    xs = np.concatenate(([low], grid[inner], [high]))
    ys = np.concatenate(
        ([np.interp(low, grid, values)], values[inner], [np.interp(high, grid, values)])
    )
    return float(_trapezoid(ys, xs))


@dataclass(frozen=True)
class BandPowerReport:
    """Band-resolved noise power of one spectrum against a baseline.

    ``low_band`` integrates |x| <= x_cut; ``precession_band`` integrates
    the windows |x -+ b| <= width around both precession peaks; the two
    bands are disjoint by construction.  ``retained_fraction`` compares
    the low band against the same band of the zero-field baseline.
    """

    low_band: float
    precession_band: float
    retained_fraction: float
    x_cut: float
    peak_center: float
    peak_width: float


def band_power_report(
    spectrum: Spectrum,
    baseline: Spectrum,
    x_cut: float,
    peak_center: float,
    peak_width: float,
) -> BandPowerReport:
    """Low-band and precession-band powers of ``spectrum`` vs a baseline.

    Requires x_cut < peak_center - peak_width so the bands cannot overlap.
    Works equally on device flux spectra by passing the value arrays
    through :class:`Spectrum` first.
    """
    if not x_cut > 0.0 or not peak_width > 0.0:
        raise ValueError("x_cut and peak_width must be > 0")
    if x_cut >= peak_center - peak_width:
        raise ValueError(
            "bands overlap: require x_cut < peak_center - peak_width, got "
            f"x_cut={x_cut:g}, peak_center={peak_center:g}, width={peak_width:g}"
        )
    low = band_power(spectrum.grid, spectrum.values, -x_cut, x_cut)
    peaks = band_power(
        spectrum.grid, spectrum.values, peak_center - peak_width, peak_center + peak_width
    ) + band_power(
        spectrum.grid, spectrum.values, -peak_center - peak_width, -peak_center + peak_width
    )
    base = band_power(baseline.grid, baseline.values, -x_cut, x_cut)
    retained = low / base if base > 0.0 else math.inf
    return BandPowerReport(low, peaks, retained, x_cut, peak_center, peak_width)


@dataclass(frozen=True)
class LowBandReduction:
    """Shortcut prediction for low-frequency noise retention under field.

    ``parallel_factor`` multiplies the parallel-weight fraction of the
    zero-field low-band power; perpendicular weight is assumed to leave
    the low band entirely (valid for b much larger than both the
    transverse rate and the band cutoff).  The transverse amplitude factor
    relative to zero field is reported separately for the precession band.
    """

    parallel_factor: float
    retained_fraction: float
    perpendicular_amplitude_factor: float


def low_band_reduction(env: SpinEnvironment, parallel_fraction: float) -> LowBandReduction:
    """Predicted retained fraction of low-band power at field b.

    The parallel contribution shrinks by 1/cosh^2(b/2); with parallel
    weight fraction p the retained low-band fraction is p/cosh^2(b/2).
    The perpendicular channel's amplitude factor 2 tanh(b/2)/b (its static
    susceptibility relative to the zero-field value) applies to the power
    relocated to the precession band.
    """
    if not 0.0 <= parallel_fraction <= 1.0:
        raise ValueError(f"parallel_fraction must be in [0, 1], got {parallel_fraction}")
    b = env.zeeman_ratio
    factor = 1.0 / math.cosh(0.5 * b) ** 2
    if b < 1e-6:
        amp = 1.0 - b * b / 12.0  # series limit of 2 tanh(b/2)/b
    else:
        amp = 2.0 * math.tanh(0.5 * b) / b
    return LowBandReduction(factor, parallel_fraction * factor, amp)


def reduction_conventions(env: SpinEnvironment) -> dict:
    """Low-band reduction quoted under both weighting and both wordings.

    The split of flux weight between parallel and perpendicular is not
    unique (an equal 1/2-1/2 split and the isotropic 1/3-2/3 split are
    both natural), and "a reduction of R" can mean the power drops *to* R
    or *by* R.  This returns all four readings so callers need not guess.
    """
    b = env.zeeman_ratio
    factor = 1.0 / math.cosh(0.5 * b) ** 2
    retained_half = 0.5 * factor
    retained_iso = factor / 3.0
    return {
        "parallel_factor": factor,
        "perpendicular_amplitude_factor": low_band_reduction(env, 0.0).perpendicular_amplitude_factor,
        "equal_split": {"retained": retained_half, "removed": 1.0 - retained_half},
        "isotropic_split": {"retained": retained_iso, "removed": 1.0 - retained_iso},
    }
