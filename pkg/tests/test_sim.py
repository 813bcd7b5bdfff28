import dataclasses
import math

import numpy as np
import pytest
from scipy.stats import chi2, poisson

from omclab import fock, sim, stats
from omclab.core import (
    DetectionChain,
    HeatingParams,
    MechanicalMode,
    Pulse,
    PulseSequence,
    with_sequence,
)


def _config(device_config, *, n_baseline=0.2, eta_rest=0.5, dark_rate=0.0,
            suppression=math.inf, pulses=(), rep_rate=25e3, n_sequences=1000,
            heating=None):
    detection = DetectionChain(eta_dev=1.0, eta_fc=1.0, eta_rest=eta_rest,
                               dark_rate=dark_rate, filter_suppression_db=suppression)
    mode = MechanicalMode(f_m=2.905e9, gamma_m=13.8e3, n_baseline=n_baseline,
                          heating=heating or HeatingParams())
    return dataclasses.replace(device_config, detection=detection, mode=mode,
                               sequence=PulseSequence(pulses, rep_rate, n_sequences))


def _pair_config(device_config, p_w, p_r, n_baseline, n_sequences, **kwargs):
    base = _config(device_config, n_baseline=n_baseline, n_sequences=n_sequences, **kwargs)
    write = sim.single_pulse_config(base, "blue", p_w, 1).sequence.pulses[0]
    read_raw = sim.single_pulse_config(base, "red", p_r, 1).sequence.pulses[0]
    read = dataclasses.replace(read_raw, start=190e-9)
    seq = PulseSequence((write, read), base.sequence.repetition_rate, n_sequences)
    return with_sequence(base, seq)


def test_no_drive_no_darks_no_records(device_config):
    pulses = (Pulse("red", 40e-9, 0.0, 0.0),)
    config = _config(device_config, pulses=pulses, n_sequences=5000)
    batch, report = sim.simulate(config, 1)
    assert len(batch) == 0
    assert report.pulse_ps == (0.0,)
    assert sum(report.pulse_totals[0].values()) == 0


def test_reproducibility_bit_identical(device_config):
    config = _pair_config(device_config, 0.03, 0.08, 0.3, 30000, eta_rest=0.4)
    b1, _ = sim.simulate(config, 7)
    b2, _ = sim.simulate(config, 7)
    for field in ("sequence_index", "pulse_index", "click_time", "origin"):
        assert np.array_equal(getattr(b1, field), getattr(b2, field))


def test_chunking_does_not_change_the_stream(device_config):
    config = _pair_config(device_config, 0.03, 0.08, 0.3, 3000, eta_rest=0.4)
    b1, _ = sim.simulate(config, 99)
    old = sim.CHUNK_SEQUENCES
    try:
        sim.CHUNK_SEQUENCES = 700  # force several unaligned chunks
        b2, _ = sim.simulate(config, 99)
    finally:
        sim.CHUNK_SEQUENCES = old
    assert np.array_equal(b1.sequence_index, b2.sequence_index)
    assert np.array_equal(b1.click_time, b2.click_time)


def test_report_totals_match_record_counts(device_config):
    config = _pair_config(device_config, 0.03, 0.08, 0.3, 20000,
                          eta_rest=0.4, dark_rate=5.0)
    batch, report = sim.simulate(config, 3)
    assert report.label_totals() == batch.label_totals()


def test_rate_recovery_against_closed_form(device_config):
    # empirical click rates must reproduce p_s*n*eta and p_s*(n+1)*eta
    grid = [(0.041, 0.02, 0.023), (0.1, 0.01, 0.1), (1.0, 0.005, 0.2)]
    n_seq = 10**6
    for i, (n_th, p_s, eta) in enumerate(grid):
        for side in ("red", "blue"):
            base = _config(device_config, n_baseline=n_th, eta_rest=eta,
                           n_sequences=n_seq)
            config = sim.single_pulse_config(base, side, p_s, n_seq)
            _, report = sim.simulate(config, 100 + i)
            clicks = sum(report.pulse_totals[0].values())
            factor = n_th if side == "red" else n_th + 1
            expected = p_s * factor * eta
            sigma = math.sqrt(expected * n_seq)
            assert abs(clicks - expected * n_seq) < 3 * sigma, (n_th, p_s, eta, side)


def test_paired_statistics_match_oracle(device_config):
    n_th, p_w, p_r, eta = 0.2, 0.05, 0.1, 0.5
    n_seq = 200_000
    config = _pair_config(device_config, p_w, p_r, n_th, n_seq, eta_rest=eta)
    batch, report = sim.simulate(config, 123)
    table = fock.two_pulse_click_table(n_th, report.pulse_ps[0], report.pulse_ps[1], eta)

    w = np.zeros(n_seq, dtype=bool)
    r = np.zeros(n_seq, dtype=bool)
    w[batch.sequence_index[batch.pulse_label == "write"]] = True
    r[batch.sequence_index[batch.pulse_label == "read"]] = True

    for emp_p, true_p, label in [
        (w.mean(), table.p_write, "write marginal"),
        (r.mean(), table.p_read, "read marginal"),
    ]:
        sigma = math.sqrt(true_p * (1 - true_p) / n_seq)
        assert abs(emp_p - true_p) < 3 * sigma, label

    # heralded read-click probability against the oracle conditional
    n_w = int(w.sum())
    cond = (w & r).sum() / n_w
    true_cond = table.p_read_given_write
    sigma = math.sqrt(true_cond * (1 - true_cond) / n_w)
    assert abs(cond - true_cond) < 3 * sigma

    est = stats.g2_crosscorr(batch, 0)
    oracle = fock.oracle_g2(n_th, report.pulse_ps[0], report.pulse_ps[1], eta)
    lo, hi = stats.coincidence_ci(*est.counts, level=0.997)
    assert lo <= oracle <= hi


def test_seed_independence_over_pairs(device_config):
    n_seq, blocks = 12800, 32
    base = _config(device_config, n_baseline=0.5, eta_rest=0.5, n_sequences=n_seq)
    config = sim.single_pulse_config(base, "red", 0.05, n_seq)
    block_size = n_seq // blocks

    def block_totals(seed):
        batch, _ = sim.simulate(config, seed)
        return np.bincount(batch.sequence_index // block_size, minlength=blocks)

    corrs = []
    for k in range(100):
        t1 = block_totals(2 * k)
        t2 = block_totals(2 * k + 1)
        c = np.corrcoef(t1, t2)[0, 1]
        corrs.append(c)
    # mean correlation over pairs: standard error 1/sqrt(n_pairs*(blocks-3))
    z = np.mean(corrs) * math.sqrt(100 * (blocks - 3))
    assert abs(z) < 3.0


def test_poisson_statistics_across_sequences(device_config):
    n_seq = 200_000
    base = _config(device_config, n_baseline=0.4, eta_rest=0.5, n_sequences=n_seq)
    config = sim.single_pulse_config(base, "red", 0.1, n_seq)
    batch, report = sim.simulate(config, 11)
    lam_block = len(batch) / 200
    totals = np.bincount(batch.sequence_index // (n_seq // 200), minlength=200)
    # chi-square goodness of fit of block totals against Poisson(lam_block)
    edges = [0, 14, 17, 19, 21, 23, 26, np.inf]
    observed = np.histogram(totals, bins=edges)[0]
    probs = np.diff([poisson.cdf(e - 1, lam_block) if np.isfinite(e) else 1.0
                     for e in edges])
    expected = probs * 200
    mask = expected > 3
    stat = float((((observed - expected) ** 2) / expected)[mask].sum())
    dof = int(mask.sum()) - 1
    assert stat < chi2.ppf(0.999, dof)


def test_dark_rate_expectation(device_config):
    # dark-only run: clicks per window = rate * window length
    window = 20e-6
    pulses = (Pulse("blue", 40e-9, 0.0, 0.0, window=window),)
    config = _config(device_config, dark_rate=40.0, pulses=pulses, n_sequences=200_000)
    batch, report = sim.simulate(config, 5)
    expected = (1 - math.exp(-40.0 * window)) * 200_000
    assert abs(len(batch) - expected) < 3 * math.sqrt(expected)
    assert set(np.unique(batch.origin)) == {"dark"}
    # dark click times fill the whole window, not just the pulse
    assert batch.click_time.max() > 10e-6


def test_leakage_rate_scales_with_suppression(device_config):
    # ground-state mode: a red pulse scatters nothing, so clicks are leakage only
    pulses = (Pulse("red", 40e-9, 1e-6, 0.0),)
    config = _config(device_config, n_baseline=0.0, suppression=90.0, pulses=pulses,
                     n_sequences=100_000)
    batch, _ = sim.simulate(config, 6)
    expected_per_pulse = sim.pump_leakage_probability(pulses[0], config)
    expected = expected_per_pulse * 100_000
    assert expected > 20
    assert abs(len(batch) - expected) < 4 * math.sqrt(expected)
    config10 = dataclasses.replace(
        config, detection=dataclasses.replace(config.detection,
                                              filter_suppression_db=100.0))
    p90 = sim.pump_leakage_probability(pulses[0], config)
    p100 = sim.pump_leakage_probability(pulses[0], config10)
    assert p90 / p100 == pytest.approx(10.0, rel=1e-3)


def test_blind_mode_hides_origin(device_config):
    config = _pair_config(device_config, 0.03, 0.08, 0.3, 5000, eta_rest=0.4)
    batch, _ = sim.simulate(config, 8, blind=True)
    assert batch.origin is None


def test_count_in_windows_full_equals_totals(device_config):
    config = _pair_config(device_config, 0.03, 0.08, 0.3, 30000, eta_rest=0.4)
    batch, _ = sim.simulate(config, 9)
    totals = sim.count_in_windows(batch, config.sequence,
                                  {"write": (0.0, 1.0), "read": (0.0, 1.0)})
    assert totals == batch.label_totals()


def test_count_in_windows_half_read(device_config):
    config = _pair_config(device_config, 0.03, 0.2, 0.5, 40000, eta_rest=0.5)
    batch, _ = sim.simulate(config, 10)
    full = batch.label_totals()
    half = sim.count_in_windows(batch, config.sequence, {"read": (0.0, 0.5)})
    expected = full["read"] / 2
    assert abs(half["read"] - expected) < 3 * math.sqrt(expected)
    assert half["write"] == full["write"]


def test_count_in_windows_trims_darks_proportionally(device_config):
    window = 20e-6
    pulses = (Pulse("red", 400e-9, 0.0, 0.0, window=window),)
    config = _config(device_config, dark_rate=3000.0, pulses=pulses, n_sequences=100_000)
    batch, _ = sim.simulate(config, 12)
    kept = sim.count_in_windows(batch, config.sequence, {"read": (0.0, 0.5)})
    # darks are uniform over the 20 us window; keeping half the 400 ns pulse
    # keeps a fraction 0.5 * duration / window of them
    frac = 0.5 * 400e-9 / window
    expected = len(batch) * frac
    assert abs(kept["read"] - expected) < 4 * math.sqrt(expected)


def test_count_in_windows_rejects_empty_window(device_config):
    config = _pair_config(device_config, 0.03, 0.08, 0.3, 100, eta_rest=0.4)
    batch, _ = sim.simulate(config, 13)
    with pytest.raises(ValueError, match="empty"):
        sim.count_in_windows(batch, config.sequence, {"read": (0.6, 0.6)})


def test_records_csv_round_trip(tmp_path, device_config):
    config = _pair_config(device_config, 0.03, 0.08, 0.3, 20000,
                          eta_rest=0.4, dark_rate=2.0)
    batch, _ = sim.simulate(config, 14)
    path = tmp_path / "records.csv"
    sim.write_records_csv(batch, path, header_lines=["omclab test"])
    again = sim.read_records_csv(path)
    assert again.n_sequences == batch.n_sequences
    assert np.array_equal(again.sequence_index, batch.sequence_index)
    assert np.array_equal(again.pulse_label, batch.pulse_label)
    assert np.allclose(again.click_time, batch.click_time, atol=1e-15)
    assert np.array_equal(again.origin, batch.origin)
    restored = sim.assign_pulse_indices(again, config.sequence)
    assert np.array_equal(restored.pulse_index, batch.pulse_index)


def test_occupations_include_heating(device_config):
    heating = HeatingParams(calibration=((0.0, 0.0, 0.0), (0.05, 2.0, 0.3)))
    config = _pair_config(device_config, 0.01, 0.05, 0.1, 100,
                          heating=heating, eta_rest=0.5)
    _, report = sim.simulate(config, 15)
    assert report.pulse_occupations[0] == pytest.approx(0.1 + 0.3 * 0.01 / 0.05)
    assert report.pulse_occupations[1] > report.pulse_occupations[0]
