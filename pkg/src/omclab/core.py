"""Shared domain types, unit conventions, and configuration parsing.

Unit conventions used throughout this package:

* All stored frequencies are ordinary frequencies ``f`` in Hz.  Angular
  frequencies never appear in data structures; the factor ``2*pi`` is applied
  inside formulas, at exactly one place per formula.  A quantity quoted as
  "2*pi x 5.14 GHz" is therefore stored as ``5.14e9``.
* Times are seconds, powers watts, energies joules, capacitances farads.
* Mode occupations are dimensionless phonon numbers.

All types are frozen dataclasses: immutable after construction and safe to
share between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal

from .transducer import PiezoInterface

Frequency = float  # ordinary frequency in Hz (f, not omega)

Side = Literal["red", "blue"]


class ConfigError(ValueError):
    """Configuration file cannot be parsed or refers to unknown keys."""


class ValidationError(ConfigError):
    """A domain-type invariant is violated; the message names the invariant."""


class ModelValidityError(ValueError):
    """Inputs are outside the validity range of the physical model."""


class ConvergenceError(RuntimeError):
    """A numerical routine failed to converge."""


# relative tolerance for the kappa = kappa_i + kappa_e consistency check
_KAPPA_CONSISTENCY_RTOL = 1e-6


@dataclass(frozen=True)
class OpticalCavity:
    """One-port optical cavity: resonance and linewidth budget (all in Hz)."""

    f_c: Frequency
    kappa: Frequency
    kappa_i: Frequency
    kappa_e: Frequency

    def __post_init__(self):
        if self.f_c <= 0:
            raise ValidationError("cavity: f_c must be positive")
        if not (0 < self.kappa_i <= self.kappa):
            raise ValidationError("cavity: 0 < kappa_i <= kappa required")
        if self.kappa_e < 0:
            raise ValidationError("cavity: kappa_e must be non-negative")
        if abs(self.kappa - (self.kappa_i + self.kappa_e)) > _KAPPA_CONSISTENCY_RTOL * self.kappa:
            raise ValidationError(
                "cavity: kappa = kappa_i + kappa_e violated beyond 1 ppm "
                f"(kappa={self.kappa!r}, kappa_i + kappa_e={self.kappa_i + self.kappa_e!r})"
            )

    @classmethod
    def from_linewidths(cls, f_c: Frequency, kappa: Frequency, kappa_i: Frequency,
                        kappa_e: Frequency | None = None) -> "OpticalCavity":
        """Build a cavity, deriving kappa_e = kappa - kappa_i when not given.

        When all three linewidths are supplied they must be consistent within
        1 ppm; inconsistent triples are rejected rather than renormalized.
        """
        if kappa_e is None:
            kappa_e = kappa - kappa_i
        return cls(f_c=f_c, kappa=kappa, kappa_i=kappa_i, kappa_e=kappa_e)


@dataclass(frozen=True)
class HeatingParams:
    """Pulse-induced heating model parameters.

    The delayed-heating response to a single pulse is
    ``A * exp(-tau/tau_decay) * (1 - exp(-tau/tau_rise)) + n_instant``,
    with the amplitude ``A`` and the instantaneous occupation ``n_instant``
    looked up from a measured calibration table versus scattering
    probability (piecewise-linear interpolation, linear extrapolation
    clamped at zero).  An empty table means no pulse heating at all.
    """

    tau_rise: float = 165e-9
    tau_decay: float = 22e-6
    # rows of (p_s, amplitude, n_instant), sorted by p_s
    calibration: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self):
        if not (self.tau_rise > 0 and self.tau_decay > 0):
            raise ValidationError("heating: tau_rise and tau_decay must be positive")
        if self.tau_decay <= self.tau_rise:
            raise ValidationError("heating: tau_decay > tau_rise required")
        ps = [row[0] for row in self.calibration]
        if ps != sorted(ps) or len(set(ps)) != len(ps):
            raise ValidationError("heating: calibration p_s values must be strictly increasing")

    def _lookup(self, p_s: float, column: int) -> float:
        table = self.calibration
        if not table:
            return 0.0
        xs = [row[0] for row in table]
        ys = [row[column] for row in table]
        if len(table) == 1:
            return max(0.0, ys[0])
        # piecewise linear with linear extrapolation from the end segments
        if p_s <= xs[0]:
            i = 0
        elif p_s >= xs[-1]:
            i = len(xs) - 2
        else:
            i = next(j for j in range(len(xs) - 1) if xs[j] <= p_s < xs[j + 1])
        slope = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])
        return max(0.0, ys[i] + slope * (p_s - xs[i]))

    def amplitude(self, p_s: float) -> float:
        """Delayed-heating amplitude A for a pulse of scattering probability p_s."""
        return self._lookup(p_s, 1)

    def instant_occupation(self, p_s: float) -> float:
        """Quasi-instantaneous occupation added by the pulse itself."""
        return self._lookup(p_s, 2)


@dataclass(frozen=True)
class MechanicalMode:
    """Mechanical mode: frequency, linewidth, baseline occupation, heating."""

    f_m: Frequency
    gamma_m: Frequency
    n_baseline: float = 0.0
    heating: HeatingParams = field(default_factory=HeatingParams)

    def __post_init__(self):
        if self.gamma_m <= 0:
            raise ValidationError("mode: gamma_m must be positive")
        if self.f_m <= self.gamma_m:
            raise ValidationError("mode: f_m > gamma_m required (resolved resonance)")
        if self.n_baseline < 0:
            raise ValidationError("mode: n_baseline must be non-negative")


@dataclass(frozen=True)
class DetectionChain:
    """Detection efficiencies, filtering, and dark counts.

    ``eta_dev`` is the cavity-waveguide extraction efficiency, ``eta_fc`` the
    waveguide-fiber coupling, and ``eta_rest`` lumps filter transmission and
    detector efficiency.  ``filter_suppression_db`` is the net power rejection
    the chain applies to off-resonant pump light.
    """

    eta_dev: float
    eta_fc: float
    eta_rest: float
    dark_rate: float = 0.0  # Hz
    filter_suppression_db: float = math.inf

    def __post_init__(self):
        for name in ("eta_dev", "eta_fc", "eta_rest"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValidationError(f"detection: {name} must lie in [0, 1]")
        if not (0.0 < self.eta_det <= 1.0):
            raise ValidationError("detection: eta_dev*eta_fc*eta_rest must lie in (0, 1]")
        if self.dark_rate < 0:
            raise ValidationError("detection: dark_rate must be non-negative")

    @property
    def eta_det(self) -> float:
        """Overall photon detection efficiency from cavity to detector click."""
        return self.eta_dev * self.eta_fc * self.eta_rest


@dataclass(frozen=True)
class Pulse:
    """A single drive pulse.  ``peak_power`` is the peak power in the fiber.

    ``window`` is the detector gating window opened at the pulse start; it
    defaults to the pulse duration and may extend beyond it (dark counts
    accumulate over the whole window).
    """

    side: Side
    duration: float
    peak_power: float
    start: float
    window: float | None = None

    def __post_init__(self):
        if self.side not in ("red", "blue"):
            raise ValidationError("pulse: side must be 'red' or 'blue'")
        if self.duration <= 0:
            raise ValidationError("pulse: duration must be positive")
        if self.peak_power < 0:
            raise ValidationError("pulse: peak_power must be non-negative")
        if self.start < 0:
            raise ValidationError("pulse: start must be non-negative")
        if self.window is not None and self.window < self.duration:
            raise ValidationError("pulse: window must cover the pulse duration")

    @property
    def end(self) -> float:
        return self.start + self.duration

    @property
    def window_length(self) -> float:
        return self.duration if self.window is None else self.window

    @property
    def label(self) -> str:
        # blue pulses create excitations (write), red pulses read them out
        return "write" if self.side == "blue" else "read"


@dataclass(frozen=True)
class PulseSequence:
    """Ordered pulses repeated at ``repetition_rate`` for ``n_sequences``."""

    pulses: tuple[Pulse, ...]
    repetition_rate: float
    n_sequences: int

    def __post_init__(self):
        if self.repetition_rate <= 0:
            raise ValidationError("sequence: repetition_rate must be positive")
        if self.n_sequences < 0:
            raise ValidationError("sequence: n_sequences must be non-negative")
        ordered = sorted(self.pulses, key=lambda p: p.start)
        if tuple(ordered) != self.pulses:
            raise ValidationError("sequence: pulses must be listed in time order")
        for a, b in zip(self.pulses, self.pulses[1:]):
            if b.start < a.end:
                raise ValidationError("sequence: pulses must not overlap in time")
        if self.pulses and self.pulses[-1].end >= self.period:
            raise ValidationError("sequence: period 1/repetition_rate must exceed last pulse end")

    @property
    def period(self) -> float:
        return 1.0 / self.repetition_rate


@dataclass(frozen=True)
class ExperimentConfig:
    """Full experiment description: device, detection, drive, and options."""

    cavity: OpticalCavity
    mode: MechanicalMode
    detection: DetectionChain
    sequence: PulseSequence
    g0: Frequency
    piezo: PiezoInterface | None = None

    def __post_init__(self):
        if self.g0 <= 0:
            raise ValidationError("g0 must be positive")


# --- flat key = value configuration files ------------------------------------
#
# One `key = value` per line, `#` starts a comment, blank lines ignored.
# All values in SI base units (Hz, s, W, F); see the README for the key table.

_PIEZO_KEYS = {
    "f_s", "f_p", "k_eff2", "c_piezo", "c_parasitic", "f_m", "gamma_m",
    "q_uw", "n_m", "eta_e",
}


def _parse_flat(text: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        entries[key] = value
    return entries


class _KeyReader:
    """Typed access to flat-file entries with unknown-key detection."""

    def __init__(self, entries: dict[str, str]):
        self.entries = entries
        self.seen: set[str] = set()

    def _raw(self, key: str, default=None, required=False):
        if key in self.entries:
            self.seen.add(key)
            return self.entries[key]
        if required:
            raise ConfigError(f"missing required key {key!r}")
        return default

    def number(self, key: str, default: float | None = None, required: bool = False) -> float | None:
        raw = self._raw(key, required=required)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"key {key!r}: not a number: {raw!r}") from exc

    def integer(self, key: str, default: int | None = None, required: bool = False) -> int | None:
        value = self.number(key, required=required)
        if value is None:
            return default
        if value != int(value):
            raise ConfigError(f"key {key!r}: expected an integer, got {value!r}")
        return int(value)

    def string(self, key: str, default: str | None = None, required: bool = False) -> str | None:
        return self._raw(key, default=default, required=required)

    def indexed(self, prefix: str) -> list[int]:
        """Sorted indices i for which any key '<prefix>.<i>.*' exists."""
        found = set()
        for key in self.entries:
            if key.startswith(prefix + "."):
                rest = key[len(prefix) + 1:].split(".", 1)[0]
                if rest.isdigit():
                    found.add(int(rest))
        return sorted(found)

    def unknown(self) -> list[str]:
        return sorted(set(self.entries) - self.seen)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a flat key = value configuration string."""
    reader = _KeyReader(_parse_flat(text))

    cavity = OpticalCavity.from_linewidths(
        f_c=reader.number("cavity.f_c", required=True),
        kappa=reader.number("cavity.kappa", required=True),
        kappa_i=reader.number("cavity.kappa_i", required=True),
        kappa_e=reader.number("cavity.kappa_e"),
    )

    calib = []
    for i in reader.indexed("heating.calib"):
        calib.append((
            reader.number(f"heating.calib.{i}.p_s", required=True),
            reader.number(f"heating.calib.{i}.amplitude", required=True),
            reader.number(f"heating.calib.{i}.n_instant", required=True),
        ))
    heating = HeatingParams(
        tau_rise=reader.number("heating.tau_rise", default=165e-9),
        tau_decay=reader.number("heating.tau_decay", default=22e-6),
        calibration=tuple(calib),
    )

    mode = MechanicalMode(
        f_m=reader.number("mode.f_m", required=True),
        gamma_m=reader.number("mode.gamma_m", required=True),
        n_baseline=reader.number("mode.n_baseline", default=0.0),
        heating=heating,
    )

    detection = DetectionChain(
        eta_dev=reader.number("detection.eta_dev", required=True),
        eta_fc=reader.number("detection.eta_fc", required=True),
        eta_rest=reader.number("detection.eta_rest", required=True),
        dark_rate=reader.number("detection.dark_rate", default=0.0),
        filter_suppression_db=reader.number("detection.filter_suppression_db", default=math.inf),
    )

    pulses = []
    for i in reader.indexed("pulse"):
        pulses.append(Pulse(
            side=reader.string(f"pulse.{i}.side", required=True),
            duration=reader.number(f"pulse.{i}.duration", required=True),
            peak_power=reader.number(f"pulse.{i}.peak_power", required=True),
            start=reader.number(f"pulse.{i}.start", required=True),
            window=reader.number(f"pulse.{i}.window"),
        ))
    sequence = PulseSequence(
        pulses=tuple(pulses),
        repetition_rate=reader.number("sequence.repetition_rate", required=True),
        n_sequences=reader.integer("sequence.n_sequences", default=0),
    )

    piezo = None
    if any(reader.string(f"piezo.{k}") is not None for k in _PIEZO_KEYS):
        piezo = PiezoInterface(
            f_s=reader.number("piezo.f_s", required=True),
            f_p=reader.number("piezo.f_p", required=True),
            c_piezo=reader.number("piezo.c_piezo", required=True),
            c_parasitic=reader.number("piezo.c_parasitic", default=0.0),
            f_m=reader.number("piezo.f_m", required=True),
            gamma_m=reader.number("piezo.gamma_m", required=True),
            k_eff2=reader.number("piezo.k_eff2"),
            q_uw=reader.number("piezo.q_uw"),
            n_m=reader.number("piezo.n_m"),
            eta_e=reader.number("piezo.eta_e", default=1.0),
        )

    g0 = reader.number("g0", required=True)
    stray = reader.unknown()
    if stray:
        raise ConfigError(f"unknown configuration keys: {', '.join(stray)}")

    return ExperimentConfig(cavity=cavity, mode=mode, detection=detection,
                            sequence=sequence, g0=g0, piezo=piezo)


def load_config(path: str | Path) -> ExperimentConfig:
    """Load, parse, and validate a configuration file."""
    return parse_config(Path(path).read_text())


def _fmt(value: float) -> str:
    return repr(float(value))


def serialize_config(config: ExperimentConfig) -> str:
    """Render a config back to flat key = value text (exact float round trip)."""
    lines = [
        f"cavity.f_c = {_fmt(config.cavity.f_c)}",
        f"cavity.kappa = {_fmt(config.cavity.kappa)}",
        f"cavity.kappa_i = {_fmt(config.cavity.kappa_i)}",
        f"cavity.kappa_e = {_fmt(config.cavity.kappa_e)}",
        f"mode.f_m = {_fmt(config.mode.f_m)}",
        f"mode.gamma_m = {_fmt(config.mode.gamma_m)}",
        f"mode.n_baseline = {_fmt(config.mode.n_baseline)}",
        f"g0 = {_fmt(config.g0)}",
        f"heating.tau_rise = {_fmt(config.mode.heating.tau_rise)}",
        f"heating.tau_decay = {_fmt(config.mode.heating.tau_decay)}",
    ]
    for i, (p_s, amp, n_i) in enumerate(config.mode.heating.calibration):
        lines += [
            f"heating.calib.{i}.p_s = {_fmt(p_s)}",
            f"heating.calib.{i}.amplitude = {_fmt(amp)}",
            f"heating.calib.{i}.n_instant = {_fmt(n_i)}",
        ]
    det = config.detection
    lines += [
        f"detection.eta_dev = {_fmt(det.eta_dev)}",
        f"detection.eta_fc = {_fmt(det.eta_fc)}",
        f"detection.eta_rest = {_fmt(det.eta_rest)}",
        f"detection.dark_rate = {_fmt(det.dark_rate)}",
    ]
    if math.isfinite(det.filter_suppression_db):
        lines.append(f"detection.filter_suppression_db = {_fmt(det.filter_suppression_db)}")
    for i, pulse in enumerate(config.sequence.pulses):
        lines += [
            f"pulse.{i}.side = {pulse.side}",
            f"pulse.{i}.duration = {_fmt(pulse.duration)}",
            f"pulse.{i}.peak_power = {_fmt(pulse.peak_power)}",
            f"pulse.{i}.start = {_fmt(pulse.start)}",
        ]
        if pulse.window is not None:
            lines.append(f"pulse.{i}.window = {_fmt(pulse.window)}")
    lines += [
        f"sequence.repetition_rate = {_fmt(config.sequence.repetition_rate)}",
        f"sequence.n_sequences = {config.sequence.n_sequences}",
    ]
    if config.piezo is not None:
        pz = config.piezo
        lines += [
            f"piezo.f_s = {_fmt(pz.f_s)}",
            f"piezo.f_p = {_fmt(pz.f_p)}",
            f"piezo.c_piezo = {_fmt(pz.c_piezo)}",
            f"piezo.c_parasitic = {_fmt(pz.c_parasitic)}",
            f"piezo.f_m = {_fmt(pz.f_m)}",
            f"piezo.gamma_m = {_fmt(pz.gamma_m)}",
        ]
        if pz.k_eff2 is not None:
            lines.append(f"piezo.k_eff2 = {_fmt(pz.k_eff2)}")
        if pz.q_uw is not None:
            lines.append(f"piezo.q_uw = {_fmt(pz.q_uw)}")
        if pz.n_m is not None:
            lines.append(f"piezo.n_m = {_fmt(pz.n_m)}")
        lines.append(f"piezo.eta_e = {_fmt(pz.eta_e)}")
    return "\n".join(lines) + "\n"


def with_sequence(config: ExperimentConfig, sequence: PulseSequence) -> ExperimentConfig:
    """Copy of ``config`` with a different pulse sequence."""
    return replace(config, sequence=sequence)
