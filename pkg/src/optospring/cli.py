"""Batch command-line frontend.

Subcommands: map, spectrum, cool, retherm, scan, check.  Every command
writes plot-ready CSV plus a JSON manifest (config hash, seed, argv,
version) so a run can be reproduced byte-identically.  Exit codes: 0 on
success, 1 on runtime/numerical failure, 2 on usage or validation errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .coherence import feasibility_budget
from .dynamics import (SimPlan, detuning_scan, off_state_mode, predicted_rate,
                       reduced_model, run_ensemble, write_ensemble_csv,
                       write_scan_csv)
from .errors import ConfigParseError, OptospringError, ValidationError
from .model import TWO_PI, load_config, resolve_config_path
from .response import (cancellation_gain, closed_loop_response, extract_mode,
                       mech_susceptibility, servo_response, stability_map,
                       write_map_csv, write_response_csv)
from .spectra import (build_frequency_grid, displacement_to_voltage,
                      freqnoise_spectrum, mode_temperature, occupations,
                      thermal_spectrum, voltage_to_displacement,
                      write_spectrum_csv, Spectrum)


def _parse_range(text: str, name: str) -> np.ndarray:
    try:
        start, stop, count = text.split(":")
        values = np.linspace(float(start), float(stop), int(count))
    except ValueError as exc:
        raise ValidationError(f"{name} parses as start:stop:count",
                              name, text) from exc
    if values.size < 1:
        raise ValidationError(f"{name} nonempty", name, text)
    return values


def _config_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out_dir: Path, command: str, args: argparse.Namespace,
                    config_path: Path | None, outputs: list[Path],
                    seed: int | None, extra: dict | None = None) -> Path:
    manifest = {
        "command": command,
        "argv": getattr(args, "invoked_argv", sys.argv[1:]),
        "config": None if config_path is None else str(config_path),
        "config_sha256": None if config_path is None else _config_hash(config_path),
        "master_seed": seed,
        "outputs": [str(p) for p in outputs],
        "toolkit_version": __version__,
        "timestamp_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args):
    path = resolve_config_path(args.config)
    return load_config(path), path


def _auto_delta_range(config) -> np.ndarray:
    return np.linspace(0.0, 1.5 * config.cavity.kappa / TWO_PI, 13)


def _auto_gel_range(config) -> np.ndarray:
    # scale off the cancellation gain where the spring is strongest
    cfg = config.with_detuning(config.cavity.kappa)
    model = reduced_model(cfg, config.noise)
    g_c = cancellation_gain(cfg, model.omega_ref)
    return np.linspace(0.0, 2.0 * g_c, 9)


def cmd_map(args) -> int:
    config, path = _load(args)
    out = _out_dir(args)
    deltas = (_auto_delta_range(config) if args.delta_range == "auto"
              else _parse_range(args.delta_range, "--delta-range")) * TWO_PI
    gels = (_auto_gel_range(config) if args.gel_range == "auto"
            else _parse_range(args.gel_range, "--gel-range"))
    smap = stability_map(config, deltas, gels)
    csv_path = out / "map.csv"
    write_map_csv(csv_path, smap, comment=f"stability map for {config.label}")
    _write_manifest(out, "map", args, path, [csv_path], None,
                    {"delta_range_hz": [float(d) / TWO_PI for d in deltas],
                     "gel_range": [float(g) for g in gels]})
    print(f"map: {smap.deltas.size} x {smap.gels.size} cells -> {csv_path}")
    return 0


def _spectrum_bundle(config, temperature: float, engaged: bool = True):
    """(chi_eff, thermal, freq-noise, total) on the default grid."""
    gel = config.servo.g_el if engaged else (config.servo.off_gain or 0.0)
    mode = extract_mode(config, gel=gel)
    grid_hz = build_frequency_grid(
        peaks=((mode.omega_eff / TWO_PI, max(abs(mode.gamma_eff),
                                             config.mirror1.gamma0)),))
    w = grid_hz * TWO_PI
    chi_eff = closed_loop_response(config, w, engaged=engaged)
    s_th = thermal_spectrum(temperature, config.mirror1, chi_eff)
    s_fr = freqnoise_spectrum(
        config.noise, config, chi_eff,
        mech_susceptibility(config.mirror1, w),
        mech_susceptibility(config.mirror2, w),
        servo_response(config.servo, w, engaged=engaged))
    total = Spectrum(grid=grid_hz, values=s_th.values + s_fr.values,
                     kind="displacement")
    return mode, chi_eff, s_th, s_fr, total


def cmd_spectrum(args) -> int:
    config, path = _load(args)
    out = _out_dir(args)
    noise = config.noise
    if args.noise_model == "off":
        noise = dataclasses.replace(noise, freq_noise_amp=0.0)
    if args.noise_amp is not None:
        noise = dataclasses.replace(noise, freq_noise_amp=args.noise_amp)
    if args.temperature is not None:
        noise = dataclasses.replace(noise, temperature=args.temperature)
    config = dataclasses.replace(config, noise=noise, raw_items=())
    temperature = noise.temperature

    mode, chi_eff, s_th, s_fr, total = _spectrum_bundle(config, temperature)
    s_v = displacement_to_voltage(total, config, mode.omega_eff)
    outputs = []
    for name, spec in (("thermal", s_th), ("freqnoise", s_fr),
                       ("total", total), ("voltage", s_v)):
        p = out / f"spectrum_{name}.csv"
        write_spectrum_csv(p, spec, comment=f"{name} spectrum, "
                           f"f_eff_Hz = {float(mode.omega_eff / TWO_PI)!r}")
        outputs.append(p)
    sweep_path = out / "response_chi_eff.csv"
    write_response_csv(sweep_path, chi_eff,
                       comment="closed-loop susceptibility chi_eff, m/N")
    outputs.append(sweep_path)

    if args.calibrate_then_invert:
        back = voltage_to_displacement(s_v, config, mode.omega_eff)
        nonzero = total.values > 0
        err = 0.0 if not nonzero.any() else float(np.max(
            np.abs(back.values[nonzero] / total.values[nonzero] - 1.0)))
        print(f"calibration round trip max rel err = {err:.3e}")

    _write_manifest(out, "spectrum", args, path, outputs, None,
                    {"temperature_K": temperature,
                     "f_eff_Hz": mode.omega_eff / TWO_PI})
    print(f"spectrum: f_eff = {mode.omega_eff / TWO_PI:.4g} Hz -> {out}")
    return 0


def cmd_cool(args) -> int:
    config, path = _load(args)
    out = _out_dir(args)
    gains = ([config.servo.g_el] if args.gel_range is None
             else list(_parse_range(args.gel_range, "--gel-range")))
    lines = ["gel,f_eff_Hz,gamma_eff_Hz,T_eff_mK,n_th_prime,n_freq,n_th_bare,stable"]
    for gel in gains:
        gel = float(gel)
        cfg = config.with_gain(gel)
        mode, chi_eff, s_th, s_fr, total = _spectrum_bundle(cfg, config.noise.temperature)
        head = (f"{gel!r},{float(mode.omega_eff / TWO_PI)!r},"
                f"{float(mode.gamma_eff / TWO_PI)!r}")
        try:
            temp = mode_temperature(total, mode.omega_eff, mode.gamma_eff,
                                    config.mirror1)
            n_th_p, n_fr, n_bare = occupations(cfg, config.noise, mode, s_fr)
            lines.append(f"{head},{float(temp.t_eff * 1e3)!r},"
                         f"{n_th_p!r},{n_fr!r},{n_bare!r},{int(mode.stable)}")
        except OptospringError as exc:
            lines.append(f"{head},nan,nan,nan,nan,{int(mode.stable)}")
            print(f"gel = {gel:.4g}: {exc}", file=sys.stderr)
    csv_path = out / "cool.csv"
    csv_path.write_text("\n".join(lines) + "\n")
    _write_manifest(out, "cool", args, path, [csv_path], None)
    print(f"cool: {len(gains)} gain point(s) -> {csv_path}")
    return 0


def _plan_from_args(args) -> SimPlan:
    return SimPlan(duration=args.duration, n_trajectories=args.n_trajectories,
                   master_seed=args.seed, dt=args.dt,
                   record_stride=args.record_stride)


def cmd_retherm(args) -> int:
    config, path = _load(args)
    out = _out_dir(args)
    plan = _plan_from_args(args)
    result = run_ensemble(config, config.noise, plan, threads=args.threads)
    mode_off = off_state_mode(config, config.noise)
    total_pred, thermal_pred, trap_pred = predicted_rate(config, config.noise,
                                                         mode_off)
    csv_path = out / "retherm_mean_n.csv"
    write_ensemble_csv(csv_path, result, comment=f"rethermalization, "
                       f"{config.label}, seed {plan.master_seed}")
    fit_path = out / "retherm_fit.json"
    fit_path.write_text(json.dumps({
        "fitted_rate": result.fitted_rate,
        "fitted_rate_err": result.fitted_rate_err,
        "fitted_gamma_eff": result.fitted_gamma_eff,
        "n_osc": result.n_osc,
        "f_ref_Hz": result.omega_ref / TWO_PI,
        "n_segments": result.n_segments,
        "predicted_rate": total_pred,
        "predicted_thermal": thermal_pred,
        "predicted_trap": trap_pred,
    }, indent=2, sort_keys=True) + "\n")
    _write_manifest(out, "retherm", args, path, [csv_path, fit_path],
                    plan.master_seed,
                    {"plan": {"duration": plan.duration,
                              "n_trajectories": plan.n_trajectories,
                              "dt": plan.dt,
                              "record_stride": plan.record_stride}})
    print(f"retherm: rate = {result.fitted_rate:.4g} +- "
          f"{result.fitted_rate_err:.2g} /s (predicted {total_pred:.4g}) "
          f"-> {csv_path}")
    return 0


def cmd_scan(args) -> int:
    config, path = _load(args)
    out = _out_dir(args)
    deltas = _parse_range(args.deltas, "--deltas") * TWO_PI
    plan = _plan_from_args(args)
    rows = detuning_scan(config, config.noise, plan, deltas,
                         threads=args.threads)
    csv_path = out / "scan.csv"
    write_scan_csv(csv_path, rows, comment=f"detuning scan, {config.label}, "
                   f"seed {plan.master_seed}")
    _write_manifest(out, "scan", args, path, [csv_path], plan.master_seed,
                    {"deltas_hz": [float(d) / TWO_PI for d in deltas]})
    n_fail = sum(1 for r in rows if not r.ok)
    print(f"scan: {len(rows)} detunings ({n_fail} failed) -> {csv_path}")
    if n_fail:
        for r in rows:
            if not r.ok:
                print(f"  delta = {r.delta / TWO_PI:.4g} Hz: {r.error}",
                      file=sys.stderr)
    return 0


_CHECK_SCALARS = ("m1_mg", "f_eff_Hz", "noise_mHz_rtHz", "length_cm",
                  "q1", "f1_Hz", "temperature_K")


def cmd_check(args) -> int:
    if args.config is not None:
        config, path = _load(args)
        mode = off_state_mode(config, config.noise)
        f_eff = mode.omega_eff / TWO_PI
        budget = feasibility_budget(
            m1=config.mirror1.mass, omega_eff=mode.omega_eff,
            noise_amp_at_omega_eff=float(config.noise.sqrt_sphidot(f_eff)),
            length=config.cavity.length,
            q1=config.mirror1.quality_factor, omega1=config.mirror1.omega0,
            temperature=config.noise.temperature,
            omega_laser=config.cavity.omega_laser)
    else:
        missing = [name for name in _CHECK_SCALARS
                   if getattr(args, name.lower()) is None]
        if missing:
            raise ValidationError(
                "check needs --config or every scalar; missing: "
                + ", ".join("--" + m.lower().replace("_", "-") for m in missing),
                "check", missing)
        budget = feasibility_budget(
            m1=args.m1_mg * 1e-6,
            omega_eff=TWO_PI * args.f_eff_hz,
            noise_amp_at_omega_eff=args.noise_mhz_rthz * 1e-3,
            length=args.length_cm * 1e-2,
            q1=args.q1, omega1=TWO_PI * args.f1_hz,
            temperature=args.temperature_k)
    print(budget.verdict_line())
    if args.json_out:
        Path(args.json_out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.json_out).write_text(budget.to_json() + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="optospring",
        description="Optically trapped suspended-mirror toolkit: stability "
                    "maps, noise spectra, cooling, and rethermalization "
                    "Monte Carlo.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, seeded=False):
        p.add_argument("--config", required=True,
                       help="config file path or preset name "
                            "(experiment, ideal; $OPTOSPRING_PRESET_DIR searched)")
        p.add_argument("--out-dir", default="runs", help="output directory")
        if seeded:
            p.add_argument("--seed", type=int, default=2024,
                           help="master seed for the trajectory streams")
            p.add_argument("--threads", type=int, default=1,
                           help="worker cap for trajectory batches")

    p_map = sub.add_parser("map", help="stability map over detuning and gain")
    add_common(p_map)
    p_map.add_argument("--delta-range", default="auto",
                       help="start:stop:count in Hz (default auto)")
    p_map.add_argument("--gel-range", default="auto",
                       help="start:stop:count in N*s/m (default auto)")
    p_map.set_defaults(func=cmd_map)

    p_spec = sub.add_parser("spectrum",
                            help="thermal / trap-noise / total / voltage spectra")
    add_common(p_spec)
    p_spec.add_argument("--temperature", type=float, default=None,
                        help="bath temperature override, K")
    p_spec.add_argument("--noise-model", choices=("one-over-f", "off"),
                        default="one-over-f")
    p_spec.add_argument("--noise-amp", type=float, default=None,
                        help="override the 1/f amplitude, Hz^2/sqrt(Hz)")
    p_spec.add_argument("--calibrate-then-invert", action="store_true",
                        help="report the voltage-calibration round-trip error")
    p_spec.set_defaults(func=cmd_spectrum)

    p_cool = sub.add_parser("cool", help="cooled-mode temperatures vs gain")
    add_common(p_cool)
    p_cool.add_argument("--gel-range", default=None,
                        help="start:stop:count in N*s/m (default: config gain)")
    p_cool.set_defaults(func=cmd_cool)

    for name, helptext in (("retherm", "rethermalization ensemble"),
                           ("scan", "decoherence rate vs detuning")):
        p = sub.add_parser(name, help=helptext)
        add_common(p, seeded=True)
        p.add_argument("--duration", type=float, default=1.0,
                       help="seconds past the first switch-off")
        p.add_argument("--n-trajectories", type=int, default=100)
        p.add_argument("--dt", type=float, default=None)
        p.add_argument("--record-stride", type=int, default=10)
        if name == "scan":
            p.add_argument("--deltas", required=True,
                           help="start:stop:count in Hz")
            p.set_defaults(func=cmd_scan)
        else:
            p.set_defaults(func=cmd_retherm)

    p_check = sub.add_parser("check",
                             help="coherence condition and 1/n_osc budget")
    p_check.add_argument("--config", default=None)
    p_check.add_argument("--out-dir", default="runs")
    p_check.add_argument("--m1-mg", type=float, default=None, dest="m1_mg")
    p_check.add_argument("--f-eff-hz", type=float, default=None, dest="f_eff_hz")
    p_check.add_argument("--noise-mhz-rthz", type=float, default=None,
                         dest="noise_mhz_rthz",
                         help="sqrt(S_phidot) at f_eff, mHz/sqrt(Hz)")
    p_check.add_argument("--length-cm", type=float, default=None,
                         dest="length_cm")
    p_check.add_argument("--q1", type=float, default=None)
    p_check.add_argument("--f1-hz", type=float, default=None, dest="f1_hz")
    p_check.add_argument("--temperature-k", type=float, default=None,
                         dest="temperature_k")
    p_check.add_argument("--json-out", default=None)
    p_check.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(argv)
    args.invoked_argv = argv
    try:
        return args.func(args)
    except (ValidationError, ConfigParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OptospringError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
