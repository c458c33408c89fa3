"""Conversions between SI quantities and the dimensionless internal units.

All physics in this package happens in dimensionless units; conversions
are exact, use the documented constants, and round-trip to machine
precision.
"""

from __future__ import annotations

import math

import numpy as np

from .constants import GAUSS_PER_TESLA, HBAR, K_B, PHI_0, TESLA_PER_GAUSS
from .spin import SpinEnvironment

__all__ = ["convert_units", "SUPPORTED_UNITS"]

# (micro Phi_0)^2 per Wb^2
_UPHI0SQ_PER_WB2 = 1e12 / PHI_0**2

SUPPORTED_UNITS = (
    "gauss", "tesla", "hz", "dimensionless", "wb2_per_hz", "uphi0sq_per_hz",
)


def _x_per_hz(env: SpinEnvironment) -> float:
    # x = hbar * omega / (k_B T) with omega = 2 pi f
    return 2.0 * math.pi * HBAR / (K_B * env.temperature)


def convert_units(value, from_unit: str, to_unit: str,
                  env: SpinEnvironment | None = None):
    """Convert ``value`` between a supported pair of units.

    Supported pairs: gauss <-> tesla, hz <-> dimensionless (requires
    ``env`` for the temperature), wb2_per_hz <-> uphi0sq_per_hz.
    Converting a unit to itself is the identity.  Scalars stay scalars,
    arrays stay arrays.
    """
    src, dst = from_unit.lower(), to_unit.lower()
    for unit in (src, dst):
        if unit not in SUPPORTED_UNITS:
            raise ValueError(f"unsupported unit {unit!r}; known: {SUPPORTED_UNITS}")
    if src == dst:
        return value

    pair = (src, dst)
    if pair == ("gauss", "tesla"):
        factor = TESLA_PER_GAUSS
    elif pair == ("tesla", "gauss"):
        factor = GAUSS_PER_TESLA
    elif pair == ("wb2_per_hz", "uphi0sq_per_hz"):
        factor = _UPHI0SQ_PER_WB2
    elif pair == ("uphi0sq_per_hz", "wb2_per_hz"):
        factor = 1.0 / _UPHI0SQ_PER_WB2
    elif pair in (("hz", "dimensionless"), ("dimensionless", "hz")):
        if env is None:
            raise ValueError(f"conversion {src} -> {dst} needs a SpinEnvironment")
        scale = _x_per_hz(env)
        factor = scale if src == "hz" else 1.0 / scale
    else:
        raise ValueError(f"unsupported conversion {src!r} -> {dst!r}")

    out = np.asarray(value, dtype=float) * factor
    if np.ndim(value) == 0:
        return float(out)
    return out
