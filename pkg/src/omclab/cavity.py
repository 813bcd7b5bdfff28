"""One-port cavity response: reflection, coupling regime, photon number.

All detunings and linewidths are ordinary frequencies in Hz; the angular
conversion happens inside each formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import hbar

from .core import Frequency, MechanicalMode, OpticalCavity


@dataclass(frozen=True)
class ReflectionPoint:
    """Complex reflection coefficient at one laser-cavity detuning."""

    detuning: Frequency
    amplitude: complex

    def __post_init__(self):
        if abs(self.amplitude) > 1 + 1e-9:
            raise ValueError("reflection amplitude cannot exceed unit modulus")


def reflection_amplitude(delta, cavity: OpticalCavity):
    """Steady-state reflection r(delta) = 1 - kappa_e / (i*delta + kappa/2).

    ``delta`` is the laser-minus-cavity detuning (Hz, signed); scalar or
    array.  |r|^2 is the reflected power fraction; the dip reaches zero at
    critical coupling (kappa_e = kappa/2).
    """
    two_pi = 2 * math.pi
    delta = np.asarray(delta, dtype=float)
    r = 1 - two_pi * cavity.kappa_e / (1j * two_pi * delta + two_pi * cavity.kappa / 2)
    return r if r.ndim else complex(r)


def coupling_efficiency(cavity: OpticalCavity) -> tuple[float, bool]:
    """(eta_dev, over_coupled): extraction efficiency kappa_e/kappa and regime.

    A one-port reflection dip alone leaves two solutions for eta_dev; the
    regime flag resolves the ambiguity: over-coupled iff kappa_e > kappa/2,
    equivalently iff the reflection phase winds through a full 2*pi across
    the resonance.
    """
    return cavity.kappa_e / cavity.kappa, cavity.kappa_e > cavity.kappa / 2


def phase_winding_over_coupled(cavity: OpticalCavity, span: float = 200.0,
                               n_points: int = 20001) -> bool:
    """Classify the coupling regime from the reflection phase trajectory.

    Sweeps ``delta`` over +-span*kappa and accumulates the unwrapped phase of
    r(delta): over-coupled resonances wind the phase by 2*pi, under-coupled
    ones return it to the start.  Mirrors a swept-sideband measurement of the
    complex response and cross-checks the analytic kappa_e > kappa/2 rule.
    """
    grid = np.linspace(-span * cavity.kappa, span * cavity.kappa, n_points)
    phase = np.unwrap(np.angle(reflection_amplitude(grid, cavity)))
    # under-coupling: phase excursion stays below pi; over-coupling: ~2*pi
    return bool((phase.max() - phase.min()) > math.pi)


def sideband_metrics(cavity: OpticalCavity, mode: MechanicalMode) -> dict[str, float]:
    """Sideband-resolution figure (kappa/4f_m)^2 and 2f_m suppression in dB.

    The suppression compares the cavity Lorentzian at resonance with its
    value one mechanical-frequency-doubled offset away:
    10*log10(((2 f_m)^2 + (kappa/2)^2) / (kappa/2)^2).
    """
    if mode.f_m <= 0:
        raise ValueError("sideband_metrics: f_m must be positive")
    resolution = (cavity.kappa / (4 * mode.f_m)) ** 2
    half = cavity.kappa / 2
    if half == 0:
        suppression = math.inf
    else:
        suppression = 10 * math.log10(((2 * mode.f_m) ** 2 + half**2) / half**2)
    return {"resolution": resolution, "suppression_db": suppression}


def filter_stage_suppression_db(offset: Frequency, fwhm: Frequency, stages: int = 1) -> float:
    """Power rejection of ``stages`` cascaded Lorentzian filters at ``offset``."""
    if fwhm <= 0 or stages < 1:
        raise ValueError("filter suppression: fwhm > 0 and stages >= 1 required")
    per_stage = 10 * math.log10(1 + (2 * offset / fwhm) ** 2)
    return stages * per_stage


def intracavity_photons(power_at_device: float, delta: Frequency,
                        cavity: OpticalCavity, f_l: Frequency) -> float:
    """Steady-state intracavity photon number for a drive at detuning delta.

    n_c = kappa_e * P / (hbar * w_l) / (delta^2 + (kappa/2)^2), with every
    frequency converted to angular inside.
    """
    if power_at_device < 0:
        raise ValueError("intracavity_photons: power must be non-negative")
    two_pi = 2 * math.pi
    rate_in = two_pi * cavity.kappa_e * power_at_device / (hbar * two_pi * f_l)
    return rate_in / ((two_pi * delta) ** 2 + (two_pi * cavity.kappa / 2) ** 2)


def absorbed_fraction(delta, cavity: OpticalCavity):
    """Fraction of incident power lost to intrinsic channels at detuning delta.

    Complements |r|^2: |r|^2 + absorbed = 1 for the one-port cavity.
    """
    delta = np.asarray(delta, dtype=float)
    out = cavity.kappa_i * cavity.kappa_e / (delta**2 + (cavity.kappa / 2) ** 2)
    return out if out.ndim else float(out)


def reflection_spectrum(cavity: OpticalCavity, span: float = 4.0,
                        n_points: int = 801) -> np.ndarray:
    """(detuning_hz, power_reflectance, phase_rad) rows over +-span*kappa."""
    grid = np.linspace(-span * cavity.kappa, span * cavity.kappa, n_points)
    r = reflection_amplitude(grid, cavity)
    return np.column_stack([grid, np.abs(r) ** 2, np.angle(r)])
