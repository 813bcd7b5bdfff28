"""Monte Carlo generation of time-tagged detector clicks.

For every repetition of the configured pulse sequence the engine draws, per
pulse, a threshold-detector click from the exact Fock-space statistics of
that pulse, OR-ed with dark counts (Poisson over the detector gating window)
and residual pump leakage (Poisson per pulse, set by the configured filter
suppression applied to the pump photon number).  The first pair-creation
pulse and the following state-swap pulse are correlated by sampling the joint
click table computed by the Fock oracle, so simulator and oracle agree by
construction; any extra occupation the read pulse sees from pulse heating
enters as an additional independent thermal click source (exact for the
rates used here, where per-pulse click probabilities are far below one).

Randomness is counter-based: sequence ``i`` always consumes the same fixed,
counter-aligned slice of the Philox stream keyed by the master seed, so a
given (config, seed) yields bit-identical records no matter how the work is
chunked or parallelized, and disjoint seeds give independent streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.constants import hbar

from . import dynamics, fock, optomech
from .core import (
    ExperimentConfig,
    Pulse,
    PulseSequence,
    ValidationError,
    serialize_config,
    with_sequence,
)

CHUNK_SEQUENCES = 1 << 18

_ORIGINS = ("signal", "dark", "leakage")


@dataclass(frozen=True)
class TimeTagRecord:
    """One detector click: which sequence, which pulse, when, and (unless the
    stream is blinded) the ground-truth origin of the click."""

    sequence_index: int
    pulse_label: str
    click_time: float  # seconds within the sequence
    origin: str | None = None


@dataclass(frozen=True)
class RecordBatch:
    """Column-oriented click stream; the common currency of the estimators."""

    n_sequences: int
    sequence_index: np.ndarray   # int64
    pulse_index: np.ndarray      # int16, position of the pulse in the sequence
    pulse_label: np.ndarray      # str
    click_time: np.ndarray       # float64 seconds
    origin: np.ndarray | None    # str, None when blinded

    def __len__(self) -> int:
        return int(self.sequence_index.size)

    def to_records(self) -> list[TimeTagRecord]:
        origins = self.origin if self.origin is not None else [None] * len(self)
        return [TimeTagRecord(int(s), str(l), float(t), o if o is None else str(o))
                for s, l, t, o in zip(self.sequence_index, self.pulse_label,
                                      self.click_time, origins)]

    def label_totals(self) -> dict[str, int]:
        labels, counts = np.unique(self.pulse_label, return_counts=True)
        return {str(l): int(c) for l, c in zip(labels, counts)}


@dataclass(frozen=True)
class SimReport:
    """Run provenance: config echo, seed, ground truth, and click totals."""

    config_text: str
    seed: int
    n_sequences: int
    pulse_labels: tuple[str, ...]
    pulse_ps: tuple[float, ...]
    pulse_occupations: tuple[float, ...]
    pulse_totals: tuple[dict[str, int], ...]  # per pulse: origin -> count

    def label_totals(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for label, totals in zip(self.pulse_labels, self.pulse_totals):
            out[label] = out.get(label, 0) + sum(totals.values())
        return out


def pulse_energy_at_device(pulse, eta_fc: float) -> float:
    """Pulse energy delivered to the device: peak power x duration x fiber coupling."""
    return pulse.peak_power * pulse.duration * eta_fc


def single_pulse_config(config: ExperimentConfig, side: str, p_s: float,
                        n_sequences: int, duration: float = 40e-9,
                        window: float | None = None) -> ExperimentConfig:
    """Variant of ``config`` driving one pulse per sequence at the fiber power
    that produces the requested scattering probability."""
    scale = optomech.scattering_exponent(1.0, config.g0, config.cavity, config.mode)
    x = -math.log1p(-p_s) if side == "red" else math.log1p(p_s)
    power = x / scale / duration / config.detection.eta_fc
    pulse = Pulse(side=side, duration=duration, peak_power=power, start=0.0, window=window)
    seq = PulseSequence((pulse,), config.sequence.repetition_rate, n_sequences)
    return with_sequence(config, seq)


def pump_leakage_probability(pulse, config: ExperimentConfig) -> float:
    """Probability of >= 1 residual-pump click in the pulse window.

    The configured filter suppression is the net rejection from pump photons
    in the fiber to detector clicks; leakage clicks are Poisson with mean
    N_pump * 10^(-suppression/10).
    """
    db = config.detection.filter_suppression_db
    if math.isinf(db):
        return 0.0
    f_l = config.cavity.f_c + (config.mode.f_m if pulse.side == "blue" else -config.mode.f_m)
    photons = pulse.peak_power * pulse.duration / (hbar * 2 * math.pi * f_l)
    mean_clicks = photons * 10 ** (-db / 10.0)
    return -math.expm1(-mean_clicks)


def _paired_indices(sequence: PulseSequence) -> tuple[int, int] | None:
    """(write, read) pulse indices for the first pair-creation/state-swap pair."""
    write = next((i for i, p in enumerate(sequence.pulses) if p.side == "blue"), None)
    if write is None:
        return None
    read = next((i for i, p in enumerate(sequence.pulses)
                 if p.side == "red" and p.start >= sequence.pulses[write].end), None)
    if read is None:
        return None
    return write, read


def _sequence_statistics(config: ExperimentConfig):
    """Static per-pulse probabilities shared by every sequence."""
    seq = config.sequence
    det = config.detection
    eta = det.eta_det
    heating = config.mode.heating

    p_s = []
    for pulse in seq.pulses:
        energy = pulse_energy_at_device(pulse, det.eta_fc)
        p_s.append(optomech.scattering_probability(pulse.side, energy, config.g0,
                                                   config.cavity, config.mode))
    occupations = [
        dynamics.occupation_at_pulse(seq, heating, p_s, i, config.mode.n_baseline)
        for i in range(len(seq.pulses))
    ]

    pair = _paired_indices(seq)
    table = None
    extra_read = 0.0
    if pair is not None:
        w, r = pair
        table = fock.two_pulse_click_table(occupations[w], p_s[w], p_s[r], eta)
        # heating accumulated between write and read enters as an independent
        # extra thermal click source on the read window
        delta_n = occupations[r] - occupations[w]
        if delta_n > 0:
            extra_read = fock.single_pulse_click_probability("red", delta_n, p_s[r], eta)

    singles = []
    for i, pulse in enumerate(seq.pulses):
        if pair is not None and i in pair:
            singles.append(0.0)
        else:
            singles.append(fock.single_pulse_click_probability(pulse.side, occupations[i],
                                                               p_s[i], eta))

    darks = [-math.expm1(-det.dark_rate * p.window_length) for p in seq.pulses]
    leaks = [pump_leakage_probability(p, config) for p in seq.pulses]
    return p_s, occupations, pair, table, extra_read, singles, darks, leaks


def _chunk_generator(seed: int, start_sequence: int, slots4: int) -> np.random.Generator:
    # every sequence owns raw outputs [i*slots4, (i+1)*slots4) of the Philox
    # stream keyed by the master seed; slots4 is a multiple of 4 so chunk
    # starts are always counter-aligned and chunking cannot change the draws
    bit_gen = np.random.Philox(key=seed, counter=start_sequence * (slots4 // 4))
    return np.random.Generator(bit_gen)


def simulate(config: ExperimentConfig, seed: int,
             blind: bool = False) -> tuple[RecordBatch, SimReport]:
    """Run the configured pulse sequence for config.sequence.n_sequences
    repetitions; deterministic given (config, seed)."""
    if not (0 <= seed < 2**63):
        raise ValueError("seed must fit in a non-negative 63-bit integer")
    seq = config.sequence
    for pulse in seq.pulses:
        if pulse.start + pulse.window_length > seq.period:
            raise ValidationError("sequence: detection window extends past the period")

    p_s, occupations, pair, table, extra_read, singles, darks, leaks = \
        _sequence_statistics(config)
    n_pulses = len(seq.pulses)
    slots = 1 + 4 * n_pulses  # pair draw + per pulse (signal, dark, leak, time)
    slots4 = -(-slots // 4) * 4  # per-sequence raw-draw allocation (counter-aligned)

    if table is not None:
        cum0 = table.p00
        cum1 = cum0 + table.p01
        cum2 = cum1 + table.p10

    seq_cols: list[np.ndarray] = []
    pulse_cols: list[np.ndarray] = []
    time_cols: list[np.ndarray] = []
    origin_cols: list[np.ndarray] = []
    totals = [dict.fromkeys(_ORIGINS, 0) for _ in range(n_pulses)]

    n_total = seq.n_sequences
    n_chunks = (n_total + CHUNK_SEQUENCES - 1) // CHUNK_SEQUENCES
    for chunk in range(n_chunks):
        start = chunk * CHUNK_SEQUENCES
        rows = min(CHUNK_SEQUENCES, n_total - start)
        u = _chunk_generator(seed, start, slots4).random((rows, slots4))

        if table is not None:
            u_pair = u[:, 0]
            pair_w = u_pair >= cum1
            pair_r = ((u_pair >= cum0) & (u_pair < cum1)) | (u_pair >= cum2)

        for i, pulse in enumerate(seq.pulses):
            base = 1 + 4 * i
            if pair is not None and i == pair[0]:
                signal = pair_w
            elif pair is not None and i == pair[1]:
                signal = pair_r
                if extra_read > 0.0:
                    signal = signal | (u[:, base] < extra_read)
            else:
                signal = u[:, base] < singles[i]
            dark = u[:, base + 1] < darks[i]
            leak = u[:, base + 2] < leaks[i]
            click = signal | dark | leak
            idx = np.nonzero(click)[0]
            if idx.size == 0:
                continue
            sig_i, leak_i = signal[idx], leak[idx]
            origin = np.where(sig_i, "signal", np.where(leak_i, "leakage", "dark"))
            u_time = u[idx, base + 3]
            is_dark = ~sig_i & ~leak_i
            span = np.where(is_dark, pulse.window_length, pulse.duration)
            times = pulse.start + u_time * span

            seq_cols.append(start + idx.astype(np.int64))
            pulse_cols.append(np.full(idx.size, i, dtype=np.int16))
            time_cols.append(times)
            origin_cols.append(origin)
            for name in _ORIGINS:
                totals[i][name] += int(np.count_nonzero(origin == name))

    if seq_cols:
        seq_idx = np.concatenate(seq_cols)
        pulse_idx = np.concatenate(pulse_cols)
        times = np.concatenate(time_cols)
        origins = np.concatenate(origin_cols)
        order = np.lexsort((times, seq_idx))
        seq_idx, pulse_idx, times, origins = (a[order] for a in
                                              (seq_idx, pulse_idx, times, origins))
    else:
        seq_idx = np.empty(0, dtype=np.int64)
        pulse_idx = np.empty(0, dtype=np.int16)
        times = np.empty(0, dtype=float)
        origins = np.empty(0, dtype="<U7")

    labels = np.array([p.label for p in seq.pulses] or ["none"])
    batch = RecordBatch(
        n_sequences=n_total,
        sequence_index=seq_idx,
        pulse_index=pulse_idx,
        pulse_label=labels[pulse_idx] if len(seq.pulses) else np.empty(0, dtype="<U5"),
        click_time=times,
        origin=None if blind else origins,
    )
    report = SimReport(
        config_text=serialize_config(config),
        seed=seed,
        n_sequences=n_total,
        pulse_labels=tuple(p.label for p in seq.pulses),
        pulse_ps=tuple(p_s),
        pulse_occupations=tuple(occupations),
        pulse_totals=tuple(totals),
    )
    return batch, report


# --- windowed counting ----------------------------------------------------------


def assign_pulse_indices(batch: RecordBatch, sequence: PulseSequence) -> RecordBatch:
    """Recover pulse indices from click times (for records re-read from CSV).

    Matches on label first within the pulse span, then within the (possibly
    overlapping) detector window for dark counts.
    """
    idx = np.full(len(batch), -1, dtype=np.int16)
    for spans in ("duration", "window"):
        for i, pulse in enumerate(sequence.pulses):
            length = pulse.duration if spans == "duration" else pulse.window_length
            mine = ((batch.pulse_label == pulse.label)
                    & (batch.click_time >= pulse.start)
                    & (batch.click_time < pulse.start + length)
                    & (idx < 0))
            idx[mine] = i
    if np.any(idx < 0):
        raise ValueError("records contain click times outside all pulse windows")
    return RecordBatch(n_sequences=batch.n_sequences,
                       sequence_index=batch.sequence_index, pulse_index=idx,
                       pulse_label=batch.pulse_label, click_time=batch.click_time,
                       origin=batch.origin)


def count_in_windows(batch: RecordBatch, sequence: PulseSequence,
                     windows: dict[str, tuple[float, float]]) -> dict[str, int]:
    """Per-label click totals restricted to fraction-of-pulse windows.

    ``windows`` maps a pulse label to (lo, hi) fractions of the pulse
    duration measured from the pulse start; labels without an entry keep
    their full record count.  Empty or inverted windows are rejected.
    """
    return trim_records(batch, sequence, windows).label_totals()


def trim_records(batch: RecordBatch, sequence: PulseSequence,
                 windows: dict[str, tuple[float, float]]) -> RecordBatch:
    """Subset of ``batch`` whose click times fall inside the given windows."""
    for label, (lo, hi) in windows.items():
        if not (hi > lo):
            raise ValueError(f"window for {label!r} is empty")
    keep = np.ones(len(batch), dtype=bool)
    for i, pulse in enumerate(sequence.pulses):
        if pulse.label not in windows:
            continue
        lo, hi = windows[pulse.label]
        t0 = pulse.start + lo * pulse.duration
        t1 = pulse.start + hi * pulse.duration
        mine = batch.pulse_index == i
        keep &= ~mine | ((batch.click_time >= t0) & (batch.click_time < t1))
    return RecordBatch(
        n_sequences=batch.n_sequences,
        sequence_index=batch.sequence_index[keep],
        pulse_index=batch.pulse_index[keep],
        pulse_label=batch.pulse_label[keep],
        click_time=batch.click_time[keep],
        origin=None if batch.origin is None else batch.origin[keep],
    )


# --- record CSV I/O ---------------------------------------------------------------


def write_records_csv(batch: RecordBatch, path: str | Path,
                      header_lines: list[str] | None = None) -> None:
    """Record stream as CSV: sequence_index, pulse_label, click_time_ns[, origin]."""
    blind = batch.origin is None
    lines = [f"# {line}" for line in (header_lines or [])]
    lines.append(f"# n_sequences={batch.n_sequences}")
    columns = "sequence_index,pulse_label,click_time_ns" + ("" if blind else ",origin")
    lines.append(columns)
    for i in range(len(batch)):
        row = (f"{int(batch.sequence_index[i])},{batch.pulse_label[i]},"
               f"{batch.click_time[i] * 1e9:.6f}")
        if not blind:
            row += f",{batch.origin[i]}"
        lines.append(row)
    Path(path).write_text("\n".join(lines) + "\n")


def read_records_csv(path: str | Path) -> RecordBatch:
    """Parse a record CSV written by ``write_records_csv``."""
    n_sequences = None
    rows = []
    header = None
    for raw in Path(path).read_text().splitlines():
        if raw.startswith("#"):
            stripped = raw[1:].strip()
            if stripped.startswith("n_sequences="):
                n_sequences = int(stripped.split("=", 1)[1])
            continue
        if header is None:
            header = raw.split(",")
            continue
        rows.append(raw.split(","))
    if header is None or n_sequences is None:
        raise ValueError(f"{path}: not a record CSV (missing header or n_sequences)")
    has_origin = "origin" in header
    seq = np.array([int(r[0]) for r in rows], dtype=np.int64)
    labels = np.array([r[1] for r in rows]) if rows else np.empty(0, dtype="<U5")
    times = np.array([float(r[2]) * 1e-9 for r in rows], dtype=float)
    origin = (np.array([r[3] for r in rows]) if rows else np.empty(0, dtype="<U7")) \
        if has_origin else None
    return RecordBatch(n_sequences=n_sequences, sequence_index=seq,
                       pulse_index=np.zeros(len(rows), dtype=np.int16),
                       pulse_label=labels, click_time=times, origin=origin)
