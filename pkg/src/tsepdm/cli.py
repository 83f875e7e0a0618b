"""Command-line front end: one subcommand per experiment.

Every simulation command resolves its parameters (packaged defaults, an
optional key-value config file, then flags), writes delimiter-separated
output files plus a ``<out>.manifest`` recording the resolved parameters,
and optionally prints a machine-readable JSON summary. Identical inputs
produce byte-identical outputs.

Exit codes: 0 success, 2 usage/configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys

import numpy as np

from . import analysis, datafiles, experiments, gssa, modulator, ntf, plant

USAGE_ERROR = 2
NUMERIC_ERROR = 3

_CHANNEL_FLAGS = {"u1i1": "u1->i1", "u1i2": "u1->i2",
                  "u2i1": "u2->i1", "u2i2": "u2->i2"}


def _add_ntf_flags(p: argparse.ArgumentParser, default_kind: str = "tse"):
    p.add_argument("--ntf", choices=experiments.NTF_KINDS, default=default_kind,
                   help="noise transfer function (default %(default)s)")
    p.add_argument("--rho", type=float, default=0.075,
                   help="notch frequency ratio omega_e/omega_s (default %(default)s)")
    p.add_argument("--r", type=float, default=0.9,
                   help="notch pole radius (default %(default)s)")


def _build_parser() -> argparse.ArgumentParser:
    root = argparse.ArgumentParser(
        prog="tsepdm",
        description="Pulse-density modulation experiments for an "
                    "SS-compensated wireless power link.")
    sub = root.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ntf", help="design, check, or sweep a noise transfer function")
    p.add_argument("action", choices=("design", "bode", "check"))
    p.add_argument("--order", type=int, choices=(1, 3), default=3)
    p.add_argument("--rho", type=float, default=0.075)
    p.add_argument("--r", type=float, default=0.9)
    p.add_argument("--points", type=int, default=512)
    p.add_argument("--out", help="output file (design: coefficients; bode: response rows)")
    p.add_argument("--pz", help="pole-zero output file (design only)")
    p.set_defaults(func=cmd_ntf)

    p = sub.add_parser("modulate", help="run the modulator at a constant density")
    p.add_argument("--d", type=float, required=True)
    _add_ntf_flags(p)
    p.add_argument("--ticks", type=int, default=16384)
    p.add_argument("--window", choices=("rectangular", "hann"), default="rectangular")
    p.add_argument("--out", required=True, help="(tick, d, y, e, s) rows")
    p.add_argument("--spectrum", help="optional spectrum file (ratio, magnitude)")
    p.add_argument("--json-summary", action="store_true")
    p.set_defaults(func=cmd_modulate)

    p = sub.add_parser("simulate", help="co-simulate the tank with PDM bridges")
    p.add_argument("--config", help="key-value parameter file (defaults: packaged constants)")
    p.add_argument("--d1", type=float, default=1.0)
    p.add_argument("--d2", type=float, default=1.0)
    _add_ntf_flags(p)
    p.add_argument("--duration", type=float, default=3e-3)
    p.add_argument("--steps", type=int, default=256)
    p.add_argument("--blanking", type=float, default=0.25)
    p.add_argument("--trace", required=True, help="sample rows (t,i1,i2,vC1,vC2,u1,u2)")
    p.add_argument("--events", help="gate event rows (tick, side, y, s, t_event)")
    p.add_argument("--json-summary", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="density sweep with fluctuation reports")
    p.add_argument("--config")
    p.add_argument("--side", choices=("primary", "secondary"), required=True)
    _add_ntf_flags(p)
    p.add_argument("--grid", default="standard", help="'standard' or start:step:stop")
    p.add_argument("--duration", type=float, default=5e-3)
    p.add_argument("--steps", type=int, default=256)
    p.add_argument("--settle", type=float, default=2e-3)
    p.add_argument("--window", type=float, default=3e-3)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True, help="(d, Imax, Imin, Imean, fluct_percent) rows")
    p.add_argument("--json-summary", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gssa", help="envelope small-signal frequency response")
    p.add_argument("--config")
    p.add_argument("--k", type=float, help="override the coupling coefficient")
    p.add_argument("--channel", choices=sorted(_CHANNEL_FLAGS), default="u1i1")
    p.add_argument("--fmin", type=float, default=0.01, help="low edge, ratio units")
    p.add_argument("--fmax", type=float, default=0.25, help="high edge, ratio units")
    p.add_argument("--points", type=int, default=600)
    p.add_argument("--out", required=True, help="(delta_omega_ratio, mag_dB) rows")
    p.add_argument("--json-summary", action="store_true")
    p.set_defaults(func=cmd_gssa)

    p = sub.add_parser("stability", help="quantization-error range probes")
    _add_ntf_flags(p)
    p.add_argument("--probe", choices=("grid", "sin", "ramp", "all"), default="all")
    p.add_argument("--ticks", type=int, default=100_000)
    p.add_argument("--grid", default="standard")
    p.add_argument("--out", required=True,
                   help="(probe, d, e_min, e_max, violations, mean_density_error) rows")
    p.add_argument("--json-summary", action="store_true")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("dynamic", help="sinusoidal density tracking on the secondary")
    p.add_argument("--config")
    p.add_argument("--vg", type=float, default=15.0)
    p.add_argument("--vo", type=float, default=15.0)
    _add_ntf_flags(p)
    p.add_argument("--duration", type=float, default=8e-3)
    p.add_argument("--freq", type=float, default=500.0)
    p.add_argument("--steps", type=int, default=256)
    p.add_argument("--out", required=True, help="(t, d2, i1_envelope, i2_envelope) rows")
    p.add_argument("--json-summary", action="store_true")
    p.set_defaults(func=cmd_dynamic)

    return root


def _make_ntf_from_args(args) -> ntf.RationalTransferFunction:
    return experiments.make_ntf(args.ntf, args.rho, args.r)


def _params_from_args(args, **overrides) -> plant.PlantParams:
    return datafiles.params_from_config(getattr(args, "config", None), **overrides)


def _emit_summary(args, summary: dict):
    if getattr(args, "json_summary", False):
        print(json.dumps(summary, sort_keys=True))


def cmd_ntf(args) -> int:
    if args.order == 1:
        tf = ntf.build_first_order()
        spec = ntf.NtfDesignSpec(notch_ratio=args.rho, pole_radius=args.r)
    else:
        spec = ntf.NtfDesignSpec(notch_ratio=args.rho, pole_radius=args.r)
        tf = ntf.build_third_order(spec)

    if args.action == "design":
        if not args.out:
            raise datafiles.ConfigError("ntf design requires --out")
        num = tuple(tf.num) + (0.0,) * (len(tf.den) - len(tf.num))
        datafiles.write_rows(args.out, ["label"] + [f"z{len(tf.den)-1-i}" for i in range(len(tf.den))],
                             [["num", *num], ["den", *tf.den]])
        if args.pz:
            zeros, poles = ntf.zeros_poles(tf)
            rows = [[z.real, z.imag, "zero"] for z in zeros]
            rows += [[pp.real, pp.imag, "pole"] for pp in poles]
            datafiles.write_rows(args.pz, ["re", "im", "kind"], rows)
    elif args.action == "bode":
        if not args.out:
            raise datafiles.ConfigError("ntf bode requires --out")
        rows = ntf.bode_data(tf, args.points)
        datafiles.write_rows(args.out, ["ratio", "mag_db", "phase_rad"], rows)
    else:  # check
        report = ntf.check_requirements(tf, spec)
        print(f"dc_gain_zero: {'pass' if report.dc_gain_zero else 'FAIL'} "
              f"(residual {report.dc_residual:.3e})")
        print(f"realizable:   {'pass' if report.realizable else 'FAIL'} "
              f"(residual {report.realizability_residual:.3e})")
        print(f"notch_zero:   {'pass' if report.notch_ok else 'FAIL'} "
              f"(gain {report.notch_gain:.6f} at ratio {report.notch_ratio})")
        print(f"notes: {report.notes}")
    return 0


def cmd_modulate(args) -> int:
    tf = _make_ntf_from_args(args)
    y, e = modulator.run(tf, args.d, n_ticks=args.ticks)
    gates = modulator.gate_split(y)
    rows = zip(gates.tick, np.full(args.ticks, args.d), y, e, gates.s)
    datafiles.write_rows(args.out, ["tick", "d", "y", "e", "s"], rows)
    if args.spectrum:
        spec = analysis.spectrum_of_sequence(y, window=args.window)
        datafiles.write_rows(args.spectrum, ["ratio", "magnitude"],
                             zip(spec.ratios, spec.magnitudes))
    _emit_summary(args, {
        "d": args.d, "ticks": args.ticks, "ntf": args.ntf,
        "mean_y": float(y.mean()),
        "e_min": float(e.min()), "e_max": float(e.max()),
        "violations": modulator.count_violations(e),
    })
    return 0


def cmd_simulate(args) -> int:
    params = _params_from_args(args)
    tf = _make_ntf_from_args(args)
    cfg = plant.SimConfig(steps_per_half_cycle=args.steps, duration=args.duration,
                          blanking_fraction=args.blanking)
    trace = plant.simulate(params, cfg,
                           modulator.PulseDensityModulator(tf),
                           modulator.PulseDensityModulator(tf),
                           args.d1, args.d2)
    rows = np.column_stack([trace.t, trace.states, trace.u])
    datafiles.write_rows(args.trace, ["t", "i1", "i2", "vC1", "vC2", "u1", "u2"], rows)
    if args.events:
        datafiles.write_rows(args.events, ["tick", "side", "y", "s", "t_event"],
                             [[ev.tick, ev.side, ev.y, ev.s, ev.t] for ev in trace.events])
    datafiles.write_manifest(args.trace, {
        **dataclasses.asdict(params),
        "d1": args.d1, "d2": args.d2, "ntf": args.ntf, "rho": args.rho, "r": args.r,
        "duration": args.duration, "steps_per_half_cycle": args.steps,
        "blanking_fraction": args.blanking,
    })
    tail = trace.envelope_t > 0.8 * args.duration
    _emit_summary(args, {
        "i1_steady": float(trace.envelope_i1[tail].mean()),
        "i2_steady": float(trace.envelope_i2[tail].mean()),
        "events": len(trace.events),
        "diagnostics": trace.diagnostics,
    })
    return 0


def cmd_sweep(args) -> int:
    params = _params_from_args(args)
    preset = experiments.ExperimentPreset(
        name=f"sweep-{args.side}-{args.ntf}", side=args.side,
        densities=experiments.parse_density_grid(args.grid),
        ntf_kind=args.ntf, rho=args.rho, r=args.r,
        duration=args.duration, steps_per_half_cycle=args.steps,
        settle=args.settle, window=args.window)
    reports = experiments.run_density_sweep(params, preset, workers=args.workers)
    datafiles.write_rows(args.out, ["d", "i_max", "i_min", "i_mean", "fluct_percent"],
                         [[rep.d, rep.i_max, rep.i_min, rep.i_mean, rep.fluctuation_pct]
                          for rep in reports])
    datafiles.write_manifest(args.out, {
        **dataclasses.asdict(params),
        **{f"preset_{key}": val for key, val in dataclasses.asdict(preset).items()
           if key != "densities"},
        "grid": args.grid, "n_points": len(reports),
    })
    worst = max(reports, key=lambda rep: rep.fluctuation_pct)
    _emit_summary(args, {
        "side": args.side, "ntf": args.ntf, "n_points": len(reports),
        "worst_d": worst.d, "worst_fluct_pct": worst.fluctuation_pct,
        "mean_fluct_pct": float(np.mean([rep.fluctuation_pct for rep in reports])),
    })
    return 0


def cmd_gssa(args) -> int:
    overrides = {"k": args.k} if args.k is not None else {}
    params = _params_from_args(args, **overrides)
    model = gssa.build_envelope_model(params)
    if not (0.0 < args.fmin < args.fmax):
        raise datafiles.ConfigError("require 0 < fmin < fmax")
    dw = np.linspace(args.fmin, args.fmax, args.points) * params.ws
    channel = _CHANNEL_FLAGS[args.channel]
    rows = gssa.amplitude_bode(model, channel, dw)
    datafiles.write_rows(args.out, ["delta_omega_ratio", "mag_db"], rows)
    datafiles.write_manifest(args.out, {
        **dataclasses.asdict(params), "channel": args.channel,
        "fmin": args.fmin, "fmax": args.fmax, "points": args.points,
    })
    peak_ratio, peak_db = gssa.find_bode_peak(model, channel, args.fmin, args.fmax,
                                              args.points)
    _emit_summary(args, {
        "channel": args.channel, "peak_ratio": peak_ratio, "peak_db": peak_db,
        "predicted_ratio": 0.5 * params.k,
        "i1_amp": model.i1_amp, "i2_amp": model.i2_amp,
    })
    return 0


def cmd_stability(args) -> int:
    tf = _make_ntf_from_args(args)
    rows = []
    total_violations = 0
    e_min, e_max = math.inf, -math.inf

    if args.probe in ("grid", "all"):
        grid = experiments.parse_density_grid(args.grid)
        y_all, e_all = modulator.run_const_grid(tf, grid, args.ticks)
        for j, d in enumerate(grid):
            v = modulator.count_violations(e_all[:, j])
            total_violations += v
            e_min = min(e_min, float(e_all[:, j].min()))
            e_max = max(e_max, float(e_all[:, j].max()))
            rows.append(["const", d, float(e_all[:, j].min()),
                         float(e_all[:, j].max()), v,
                         float(abs(y_all[:, j].mean() - d))])
    if args.probe in ("sin", "all"):
        d = modulator.sinusoid_density(args.ticks)
        y, e = modulator.run(tf, d)
        rows.append(["sin", 0.5, float(e.min()), float(e.max()),
                     modulator.count_violations(e), float(abs(y.mean() - d.mean()))])
        total_violations += modulator.count_violations(e)
        e_min = min(e_min, float(e.min()))
        e_max = max(e_max, float(e.max()))
    if args.probe in ("ramp", "all"):
        d = modulator.ramp_density(args.ticks)
        y, e = modulator.run(tf, d)
        rows.append(["ramp", 0.5, float(e.min()), float(e.max()),
                     modulator.count_violations(e), float(abs(y.mean() - d.mean()))])
        total_violations += modulator.count_violations(e)
        e_min = min(e_min, float(e.min()))
        e_max = max(e_max, float(e.max()))

    datafiles.write_rows(args.out,
                         ["probe", "d", "e_min", "e_max", "violations",
                          "mean_density_error"], rows)
    datafiles.write_manifest(args.out, {
        "ntf": args.ntf, "rho": args.rho, "r": args.r,
        "probe": args.probe, "ticks": args.ticks, "grid": args.grid,
    })
    _emit_summary(args, {
        "ntf": args.ntf, "rho": args.rho,
        "total_violations": total_violations,
        "e_min": e_min, "e_max": e_max, "stable": total_violations == 0,
    })
    return 0


def cmd_dynamic(args) -> int:
    params = _params_from_args(args, Vg=args.vg, Vo=args.vo)
    resp = experiments.run_dynamic_response(params, args.ntf, args.rho, args.r,
                                            duration=args.duration,
                                            mod_freq=args.freq,
                                            steps_per_half_cycle=args.steps)
    d_ref = 0.5 * np.sin(2.0 * math.pi * args.freq * resp.env_t) + 0.5
    datafiles.write_rows(args.out, ["t", "d2", "i1_envelope", "i2_envelope"],
                         np.column_stack([resp.env_t, d_ref, resp.env_i1, resp.env_i2]))
    datafiles.write_manifest(args.out, {
        **dataclasses.asdict(params), "ntf": args.ntf, "rho": args.rho, "r": args.r,
        "duration": args.duration, "mod_freq": args.freq,
        "steps_per_half_cycle": args.steps,
    })
    _emit_summary(args, {
        "ntf": args.ntf,
        "density_amplitude": resp.density_amplitude,
        "amplitude_error_pct": resp.amplitude_error_pct,
        "corr_i1": resp.corr_i1, "corr_i2": resp.corr_i2,
    })
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (datafiles.ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except ArithmeticError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return NUMERIC_ERROR


if __name__ == "__main__":
    sys.exit(main())
