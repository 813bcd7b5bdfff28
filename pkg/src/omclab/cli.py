"""Command-line entry point wiring the toolkit together.

One binary, subcommand style.  Every artifact file starts with a header line
``# omclab <version> config=<hash> seed=<seed>`` so runs are traceable; JSON
artifacts carry the same header line before the JSON body (strip the first
line before parsing, or use ``read_artifact_json``).

Exit codes: 0 success, 2 configuration error, 3 numerical failure
(non-convergence, model validity, undefined estimate), 4 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, cavity, dynamics, fock, optomech, sim, stats, transducer
from .core import (
    ConfigError,
    ExperimentConfig,
    ModelValidityError,
    PulseSequence,
    load_config,
    serialize_config,
    with_sequence,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

_NUMERICAL_ERRORS = (
    ModelValidityError,
    stats.UndefinedEstimateError,
    fock.TruncationError,
    fock.HeraldingError,
)


def _config_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def _header(config_hash: str, seed: int | None) -> str:
    seed_part = "none" if seed is None else str(seed)
    return f"# omclab {__version__} config={config_hash} seed={seed_part}"


def _write_csv(path: Path, header: str, columns: list[str], rows) -> None:
    lines = [header, ",".join(columns)]
    for row in rows:
        lines.append(",".join(f"{v:.10g}" if isinstance(v, float) else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _write_json(path: Path, header: str, payload: dict) -> None:
    path.write_text(header + "\n" + json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_artifact_json(path: str | Path) -> dict:
    """Parse a JSON artifact, skipping the provenance header line."""
    text = Path(path).read_text()
    body = text.split("\n", 1)[1] if text.startswith("#") else text
    return json.loads(body)


def _pmap(fn, items, threads: int):
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args) -> tuple[ExperimentConfig, str]:
    config = load_config(args.config)
    return config, _config_hash(serialize_config(config))


# --- subcommands -----------------------------------------------------------------


def cmd_cavity_probe(args) -> int:
    config, chash = _load(args)
    out = _out_dir(args)
    header = _header(chash, None)
    spectrum = cavity.reflection_spectrum(config.cavity, span=args.span, n_points=args.points)
    _write_csv(out / "reflection_spectrum.csv", header,
               ["detuning_hz", "power_reflectance", "phase_rad"],
               ([float(a), float(b), float(c)] for a, b, c in spectrum))
    eta_dev, over = cavity.coupling_efficiency(config.cavity)
    metrics = cavity.sideband_metrics(config.cavity, config.mode)
    _write_json(out / "cavity_report.json", header, {
        "eta_dev": eta_dev,
        "over_coupled": over,
        "over_coupled_phase_winding": cavity.phase_winding_over_coupled(config.cavity),
        "sideband_resolution": metrics["resolution"],
        "sideband_suppression_db": metrics["suppression_db"],
    })
    print(f"cavity-probe: eta_dev={eta_dev:.3f} over_coupled={over}")
    return EXIT_OK


def _read_table_csv(path: Path) -> list[list[str]]:
    rows = []
    header = None
    for raw in path.read_text().splitlines():
        if raw.startswith("#") or not raw.strip():
            continue
        if header is None:
            header = [c.strip() for c in raw.split(",")]
            continue
        rows.append([c.strip() for c in raw.split(",")])
    if header is None:
        raise ConfigError(f"{path}: empty table")
    return [header, *rows]


def cmd_thermometry(args) -> int:
    config, chash = _load(args)
    out = _out_dir(args)
    header_line = _header(chash, None)
    table = _read_table_csv(Path(args.counts))
    cols = {name: i for i, name in enumerate(table[0])}
    required = {"side", "pulse_energy_j", "clicks", "n_pulses"}
    if not required.issubset(cols):
        raise ConfigError(f"counts file must have columns {sorted(required)}")
    red_rows = [r for r in table[1:] if r[cols["side"]] == "red"]
    blue_rows = [r for r in table[1:] if r[cols["side"]] == "blue"]
    if not red_rows or not blue_rows:
        raise ConfigError("counts file needs both red and blue rows")

    eta_det = config.detection.eta_det
    results = []
    for red, blue in zip(red_rows, blue_rows):
        e_red = float(red[cols["pulse_energy_j"]])
        e_blue = float(blue[cols["pulse_energy_j"]])
        p_r = optomech.scattering_probability("red", e_red, config.g0, config.cavity, config.mode)
        p_b = optomech.scattering_probability("blue", e_blue, config.g0, config.cavity, config.mode)
        n_th, err = optomech.occupation_from_counts(
            int(red[cols["clicks"]]), int(red[cols["n_pulses"]]), p_r,
            int(blue[cols["clicks"]]), int(blue[cols["n_pulses"]]), p_b, eta_det)
        # cooperativity of the read pulse drive at this energy
        duration = config.sequence.pulses[0].duration if config.sequence.pulses else 40e-9
        power_device = e_red / duration
        f_l = config.cavity.f_c - config.mode.f_m
        n_c = cavity.intracavity_photons(power_device, config.mode.f_m, config.cavity, f_l)
        coop = optomech.cooperativity(config.g0, n_c, config.cavity, config.mode)
        results.append([p_r, p_b, n_th, err, coop])
    _write_csv(out / "thermometry.csv", header_line,
               ["p_s_read", "p_s_write", "n_th", "n_th_err", "cooperativity"], results)
    print(f"thermometry: {len(results)} asymmetry points -> {out / 'thermometry.csv'}")
    return EXIT_OK


def cmd_heating(args) -> int:
    config, chash = _load(args)
    out = _out_dir(args)
    heating = config.mode.heating
    ps_values = ([float(x) for x in args.ps.split(",")] if args.ps
                 else [row[0] for row in heating.calibration])
    if not ps_values:
        raise ConfigError("no scattering probabilities: none given and no calibration table")
    taus = np.geomspace(args.tmin, args.tmax, args.points)
    rows = []
    for p_s in ps_values:
        amp = heating.amplitude(p_s)
        n_i = heating.instant_occupation(p_s)
        for tau in taus:
            n = config.mode.n_baseline + dynamics.heating_occupation(float(tau), heating, amp, n_i)
            rows.append([p_s, float(tau), n])
    _write_csv(out / "heating_curves.csv", _header(chash, None),
               ["p_s", "tau_s", "n_th"], rows)
    print(f"heating: {len(ps_values)} curves -> {out / 'heating_curves.csv'}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    config, chash = _load(args)
    if args.sequences is not None:
        seq = config.sequence
        config = with_sequence(config, PulseSequence(seq.pulses, seq.repetition_rate,
                                                     args.sequences))
    batch, report = sim.simulate(config, args.seed, blind=args.blind)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    sim.write_records_csv(batch, out_path,
                          header_lines=[_header(chash, args.seed)[2:]])
    report_path = out_path.with_suffix(".report.json")
    _write_json(report_path, _header(chash, args.seed), {
        "n_sequences": report.n_sequences,
        "pulse_labels": list(report.pulse_labels),
        "pulse_ps": list(report.pulse_ps),
        "pulse_occupations": list(report.pulse_occupations),
        "pulse_totals": list(report.pulse_totals),
    })
    print(f"simulate: {len(batch)} clicks over {report.n_sequences} sequences -> {out_path}")
    return EXIT_OK


def _parse_dn_range(text: str) -> list[int]:
    lo, hi = text.split("..")
    lo_i, hi_i = int(lo), int(hi)
    if hi_i < lo_i:
        raise ConfigError(f"bad dn range {text!r}")
    return list(range(lo_i, hi_i + 1))


def cmd_g2(args) -> int:
    if args.oracle:
        if not args.config:
            raise ConfigError("g2 --oracle requires --config")
        config, chash = _load(args)
        pair = sim._paired_indices(config.sequence)
        if pair is None:
            raise ConfigError("g2 --oracle: config has no write/read pulse pair")
        p_s, occupations, *_ = sim._sequence_statistics(config)
        w, r = pair
        darks = tuple(-math.expm1(-config.detection.dark_rate
                                  * config.sequence.pulses[i].window_length) for i in pair)
        value = fock.oracle_g2(occupations[w], p_s[w], p_s[r],
                               config.detection.eta_det, darks)
        payload = {"oracle_g2": value, "n_th": occupations[w], "p_write": p_s[w],
                   "p_read": p_s[r], "eta_det": config.detection.eta_det,
                   "dark_write": darks[0], "dark_read": darks[1]}
        if args.out:
            _write_json(Path(args.out), _header(chash, None), payload)
        print(f"g2 oracle: {value:.3f}")
        return EXIT_OK

    if not args.records:
        raise ConfigError("g2 requires --records (or --oracle)")
    batch = sim.read_records_csv(args.records)
    dns = _parse_dn_range(args.dn_range)
    threads = args.threads

    def estimate(dn: int):
        return stats.g2_crosscorr(batch, dn)

    estimates = _pmap(estimate, dns, threads)
    payload = {"estimates": [
        {"delta_n": e.delta_n, "g2": e.value, "ci_low": e.ci_low, "ci_high": e.ci_high,
         "counts": {"n_coinc": e.counts[0], "n_write": e.counts[1],
                    "n_read": e.counts[2], "n_pairs": e.counts[3]}}
        for e in estimates
    ]}
    source_hash = _config_hash(Path(args.records).read_text())
    if args.out:
        _write_json(Path(args.out), _header(source_hash, None), payload)
    for e in estimates:
        print(f"g2(dn={e.delta_n:+d}) = {e.value:.3f}  CI68 [{e.ci_low:.3f}, {e.ci_high:.3f}]")
    return EXIT_OK


def cmd_fit(args) -> int:
    table = _read_table_csv(Path(args.data))
    pts = np.array([[float(r[0]), float(r[1])] for r in table[1:]])
    fitters = {
        "lorentzian": stats.fit_lorentzian_with_offset,
        "biexp": stats.fit_biexponential,
        "linear": stats.fit_linear,
    }
    result = fitters[args.model](pts)
    payload = {
        "model": result.model,
        "params": result.params,
        "stderr": result.stderr,
        "residual_norm": result.residual_norm,
        "converged": result.converged,
        "n_points": result.n_points,
    }
    source_hash = _config_hash(Path(args.data).read_text())
    if args.out:
        _write_json(Path(args.out), _header(source_hash, None), payload)
    print(json.dumps(payload, indent=2, sort_keys=True))
    if not result.converged:
        raise stats.UndefinedEstimateError(f"{args.model} fit did not converge")
    return EXIT_OK


def cmd_budget(args) -> int:
    config, chash = _load(args)
    if config.piezo is None:
        raise ConfigError("budget: config has no piezo.* section")
    if config.piezo.q_uw is None or config.piezo.n_m is None:
        raise ConfigError("budget: piezo.q_uw and piezo.n_m must be configured")
    out = _out_dir(args)
    header = _header(chash, None)
    budget = transducer.conversion_budget(config.piezo)
    _write_json(out / "budget.json", header, {
        "k_eff2": budget.k_eff2,
        "k_eff2_reduced": budget.k_eff2_reduced,
        "c_em": budget.c_em,
        "q_uw": budget.q_uw,
        "added_noise_photons": budget.added_noise,
        "impedance_ohm": budget.impedance,
    })
    qs = np.geomspace(args.q_min, args.q_max, args.q_points)
    rows = []
    for q in qs:
        c_em = transducer.electromech_cooperativity(
            budget.k_eff2_reduced, config.piezo.f_m, config.piezo.f_m / q,
            config.piezo.gamma_m)
        rows.append([float(q), c_em,
                     transducer.added_noise(config.piezo.n_m, config.piezo.eta_e, c_em)])
    _write_csv(out / "noise_vs_q.csv", header, ["q_uw", "c_em", "added_noise"], rows)
    print(f"budget: N={budget.added_noise:.4f} photons at C_em={budget.c_em:.2f} "
          f"-> {out / 'budget.json'}")
    return EXIT_OK


# --- figure reproduction pipelines -------------------------------------------------


def _reproduce_fig1b(config, chash, out, args):
    header = _header(chash, None)
    grid = np.linspace(-3 * config.cavity.kappa, 3 * config.cavity.kappa, 601)
    r = cavity.reflection_amplitude(grid, config.cavity)
    power = np.abs(r) ** 2
    fit = stats.fit_lorentzian_with_offset(np.column_stack([grid, power]))
    _write_csv(out / "fig1b_reflection.csv", header,
               ["detuning_hz", "power_reflectance"],
               ([float(x), float(y)] for x, y in zip(grid, power)))
    _write_json(out / "fig1b_fit.json", header, {
        "kappa_fit_hz": fit.params["fwhm"],
        "kappa_true_hz": config.cavity.kappa,
        "converged": fit.converged,
    })


def _reproduce_fig1c(config, chash, out, args):
    header = _header(chash, None)
    mode = config.mode
    grid = np.linspace(mode.f_m - 40 * mode.gamma_m, mode.f_m + 40 * mode.gamma_m, 801)
    psd = dynamics.mechanical_psd(grid, mode, mode.n_baseline)
    fit = stats.fit_lorentzian_with_offset(np.column_stack([grid, psd]))
    _write_json(out / "fig1c_fit.json", header, {
        "gamma_m_fit_hz": fit.params["fwhm"],
        "gamma_m_true_hz": mode.gamma_m,
        "q_factor": mode.f_m / fit.params["fwhm"] if fit.params["fwhm"] else None,
        "converged": fit.converged,
    })
    _write_csv(out / "fig1c_psd.csv", header, ["frequency_hz", "psd"],
               ([float(x), float(y)] for x, y in zip(grid, psd)))


def _reproduce_fig2(config, chash, out, args):
    header = _header(chash, args.seed)
    n_seq = args.sequences or 2_000_000
    ps_grid = np.geomspace(0.004, 0.05, 6)

    def point(item):
        i, p_s = item
        red_cfg = sim.single_pulse_config(config, "red", p_s, n_seq)
        blue_cfg = sim.single_pulse_config(config, "blue", p_s, n_seq)
        _, red_rep = sim.simulate(red_cfg, args.seed + 2 * i)
        _, blue_rep = sim.simulate(blue_cfg, args.seed + 2 * i + 1)
        clicks_r = sum(red_rep.pulse_totals[0].values()) - red_rep.pulse_totals[0]["leakage"]
        clicks_b = sum(blue_rep.pulse_totals[0].values()) - blue_rep.pulse_totals[0]["leakage"]
        n_th, err = optomech.occupation_from_counts(
            clicks_r, n_seq, red_rep.pulse_ps[0],
            clicks_b, n_seq, blue_rep.pulse_ps[0],
            config.detection.eta_det)
        power_device = red_cfg.sequence.pulses[0].peak_power * config.detection.eta_fc
        n_c = cavity.intracavity_photons(power_device, config.mode.f_m, config.cavity,
                                         config.cavity.f_c - config.mode.f_m)
        coop = optomech.cooperativity(config.g0, n_c, config.cavity, config.mode)
        return [float(p_s), n_th, err, coop, red_rep.pulse_occupations[0]]

    rows = _pmap(point, list(enumerate(ps_grid)), args.threads)
    _write_csv(out / "fig2_thermometry.csv", header,
               ["p_s", "n_th_est", "n_th_err", "cooperativity", "n_th_true"], rows)


def _reproduce_fig3a(config, chash, out, args):
    cmd_args = argparse.Namespace(config=args.config, out=str(out), ps=None,
                                  tmin=2e-8, tmax=1e-4, points=240)
    cmd_heating(cmd_args)
    (out / "heating_curves.csv").rename(out / "fig3a_heating.csv")


def _reproduce_fig3b(config, chash, out, args):
    header = _header(chash, args.seed)
    n_seq = args.sequences or config.sequence.n_sequences or 1_000_000
    seq = config.sequence
    run_cfg = with_sequence(config, PulseSequence(seq.pulses, seq.repetition_rate, n_seq))
    batch, report = sim.simulate(run_cfg, args.seed)
    estimates = []
    for dn in range(-4, 5):
        try:
            e = stats.g2_crosscorr(batch, dn)
        except stats.UndefinedEstimateError:
            continue
        estimates.append({"delta_n": e.delta_n, "g2": e.value,
                          "ci_low": e.ci_low, "ci_high": e.ci_high,
                          "counts": list(e.counts)})
    pair = sim._paired_indices(seq)
    oracle = None
    if pair is not None:
        w, r = pair
        darks = tuple(-math.expm1(-config.detection.dark_rate
                                  * seq.pulses[i].window_length) for i in pair)
        oracle = fock.oracle_g2(report.pulse_occupations[w], report.pulse_ps[w],
                                report.pulse_ps[r], config.detection.eta_det, darks)
    _write_json(out / "fig3b_g2.json", header,
                {"estimates": estimates, "oracle_g2": oracle, "n_sequences": n_seq})


def _reproduce_figs1(config, chash, out, args):
    header = _header(chash, None)
    powers_uw = np.geomspace(0.005, 1.0, 10)
    duration = 40e-9
    rows = []
    for p_uw in powers_uw:
        energy = p_uw * 1e-6 * duration * config.detection.eta_fc
        p_s = optomech.scattering_probability("red", energy, config.g0,
                                              config.cavity, config.mode)
        rows.append([float(p_uw), p_s])
    fit = stats.fit_linear(np.array(rows))
    _write_csv(out / "figs1_calibration.csv", header, ["peak_power_uw", "p_s"], rows)
    g0, g0_err = optomech.g0_from_calibration(
        [[r[0] * 1e-6 * duration * config.detection.eta_fc, r[1]] for r in rows],
        config.cavity, config.mode)
    _write_json(out / "figs1_fit.json", header, {
        "slope_per_uw": fit.params["slope"],
        "g0_hz": g0, "g0_err_hz": g0_err, "g0_true_hz": config.g0,
    })


def _reproduce_budget(config, chash, out, args):
    cmd_args = argparse.Namespace(config=args.config, out=str(out),
                                  q_min=20.0, q_max=2000.0, q_points=40)
    cmd_budget(cmd_args)


_REPRODUCE = {
    "fig1b": _reproduce_fig1b,
    "fig1c": _reproduce_fig1c,
    "fig2": _reproduce_fig2,
    "fig3a": _reproduce_fig3a,
    "fig3b": _reproduce_fig3b,
    "figs1": _reproduce_figs1,
    "budget": _reproduce_budget,
}


def cmd_reproduce(args) -> int:
    config, chash = _load(args)
    out = _out_dir(args)
    targets = list(_REPRODUCE) if args.figure == "all" else [args.figure]
    for target in targets:
        _REPRODUCE[target](config, chash, out, args)
        print(f"reproduce {target}: artifacts in {out}")
    return EXIT_OK


# --- argument parsing ---------------------------------------------------------------


def _env_default(name: str, cast, fallback):
    raw = os.environ.get(name)
    if raw is None:
        return fallback
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"bad environment value {name}={raw!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="omclab",
                                     description="pulsed optomechanics toolkit")
    parser.add_argument("--threads", type=int,
                        default=_env_default("OMCLAB_THREADS", int, 1),
                        help="worker pool size for parallel grids")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(func=func)
        return p

    p = add("cavity-probe", cmd_cavity_probe, help="reflection spectrum and coupling report")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=_env_default("OMCLAB_OUT", str, "out"))
    p.add_argument("--span", type=float, default=4.0, help="sweep span in units of kappa")
    p.add_argument("--points", type=int, default=801)

    p = add("thermometry", cmd_thermometry, help="occupation and cooperativity from counts")
    p.add_argument("--config", required=True)
    p.add_argument("--counts", required=True, help="CSV: side,pulse_energy_j,clicks,n_pulses")
    p.add_argument("--out", default=_env_default("OMCLAB_OUT", str, "out"))

    p = add("heating", cmd_heating, help="heating response curves")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=_env_default("OMCLAB_OUT", str, "out"))
    p.add_argument("--ps", default=None, help="comma-separated scattering probabilities")
    p.add_argument("--tmin", type=float, default=2e-8)
    p.add_argument("--tmax", type=float, default=1e-4)
    p.add_argument("--points", type=int, default=240)

    p = add("simulate", cmd_simulate, help="Monte Carlo click generation")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=_env_default("OMCLAB_SEED", int, 0))
    p.add_argument("--out", required=True, help="records CSV path")
    p.add_argument("--sequences", type=int, default=None)
    p.add_argument("--blind", action="store_true", help="suppress the origin column")

    p = add("g2", cmd_g2, help="cross-correlation estimates or the exact oracle")
    p.add_argument("--records", default=None)
    p.add_argument("--dn-range", default="-4..4")
    p.add_argument("--oracle", action="store_true")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)

    p = add("fit", cmd_fit, help="least-squares model fits")
    p.add_argument("--model", required=True, choices=["lorentzian", "biexp", "linear"])
    p.add_argument("--data", required=True, help="CSV with x,y columns")
    p.add_argument("--out", default=None)

    p = add("budget", cmd_budget, help="microwave-to-optics conversion budget")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=_env_default("OMCLAB_OUT", str, "out"))
    p.add_argument("--q-min", type=float, default=20.0)
    p.add_argument("--q-max", type=float, default=2000.0)
    p.add_argument("--q-points", type=int, default=40)

    p = add("reproduce", cmd_reproduce, help="scripted figure pipelines")
    p.add_argument("figure", choices=[*_REPRODUCE, "all"])
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=_env_default("OMCLAB_OUT", str, "out"))
    p.add_argument("--seed", type=int, default=_env_default("OMCLAB_SEED", int, 0))
    p.add_argument("--sequences", type=int, default=None)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"omclab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (*_NUMERICAL_ERRORS, ValueError, ArithmeticError) as exc:
        print(f"omclab: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"omclab: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
