"""Command-line entry point: ``vitalcloak {keygen,simulate,extract,eval,bench}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import fmcw, spectrogram
from .config import ConfigError, ScenarioConfig, load_config
from .extraction import ExtractionError, HeartRateEstimate, estimate
from .obfuscation import (FrequencySpace, ObfuscationError, ObfuscationKey, collision_bound, gen,
                          guess_probability, load_key, save_key)
from .privacy_eval import (EvalError, TrialConfig, _random_guess, estimate_rows,
                           invariant_suite, report, rows_to_csv, run_abstract_game, run_game,
                           trial_config_dict)
from .signal_model import (DisplacementSignal, PulseTrainSpec, SignalError, generate_pulse_train, superimpose,
                           synthesize_decoys, synthesize_heartbeat)

SWEEPS = ("snr", "amplitude", "p", "distance-proxy")
# received power falls as d^-4, so the distance proxy loses 40 dB per decade
PATH_LOSS_DB_PER_DECADE = 40.0
SIMULATE_SEPARATION_BPM = 12.0


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ helpers

def _space_arg(text: str) -> FrequencySpace:
    """LOW:HIGH:RESOLUTION or LOW:HIGH:N=POINTS."""
    parts = text.split(":")
    try:
        if len(parts) != 3:
            raise ValueError
        low, high = float(parts[0]), float(parts[1])
        if parts[2].startswith("N="):
            return FrequencySpace.with_points(low, high, int(parts[2][2:]))
        return FrequencySpace(low, high, float(parts[2]))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad frequency space {text!r}: {exc or 'want LOW:HIGH:RES'}")


def _float_list(text: str) -> list[float]:
    if not text.strip():
        return []
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def write_displacement_csv(path: Path, sig: DisplacementSignal) -> None:
    buf = io.StringIO()
    buf.write("t_s,displacement_mm\n")
    for t, x in zip(sig.times, sig.samples):
        buf.write(f"{t:.9g},{x:.9g}\n")
    path.write_text(buf.getvalue())


def read_displacement_csv(path: Path) -> DisplacementSignal:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [(float(a), float(b)) for a, b in reader]
    except (OSError, StopIteration, ValueError) as exc:
        raise UsageError(f"cannot read displacement CSV {path}: {exc}") from exc
    if [h.strip() for h in header] != ["t_s", "displacement_mm"]:
        raise UsageError(f"{path}: header must be t_s,displacement_mm")
    if len(rows) < 2:
        raise UsageError(f"{path}: need at least two samples")
    t = np.array([r[0] for r in rows])
    dt = np.diff(t)
    if np.any(dt <= 0) or not np.allclose(dt, dt.mean(), rtol=1e-3):
        raise UsageError(f"{path}: samples must be uniformly spaced")
    return DisplacementSignal(np.array([r[1] for r in rows]), 1.0 / dt.mean(), "composite")


def _write_phase_csv(path: Path, series: fmcw.PhaseSeries) -> None:
    t = np.arange(len(series.phase)) / series.sample_rate
    lines = ["t_s,phase_rad"] + [f"{a:.9g},{b:.9g}" for a, b in zip(t, series.phase)]
    path.write_text("\n".join(lines) + "\n")


def _out_dir(args, cfg: ScenarioConfig) -> Path:
    out = Path(args.out if args.out is not None else cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _config(args) -> ScenarioConfig:
    return load_config(args.config).with_overrides(seed=args.seed)


def _draw_key_for(m: float, cfg: TrialConfig, rng: np.random.Generator,
                  min_separation: float | None = None) -> tuple[float, ...]:
    """Key whose rates sit at least ``min_separation`` from each other and from ``m``."""
    space = cfg.space
    sep = cfg.min_separation if min_separation is None else min_separation
    for _ in range(100_000):
        key = space.value(space.sample_indices(rng, cfg.p))
        vals = np.sort(np.append(key, m))
        if np.all(np.diff(vals) >= sep - 1e-9):
            return tuple(float(v) for v in key)
    raise UsageError("could not place decoys: min_separation too large for the space")


# ----------------------------------------------------------------- commands

def cmd_keygen(args) -> int:
    if args.p < 1:
        raise UsageError("--p must be >= 1")
    space = args.space or FrequencySpace()
    seed = args.seed if args.seed is not None else 0
    key = gen(args.p, space, seed, distinct=args.distinct)
    out = Path(args.out) if args.out is not None else Path("key.json")
    if out.suffix != ".json":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "key.json"
    save_key(key, out)
    print(f"wrote {out}")
    print(f"frequencies (BPM) = {', '.join(f'{f:.6g}' for f in key.frequencies)}")
    print(f"N = {space.N}")
    print(f"random-guess success = {guess_probability(args.p):.6g}")
    print(f"collision bound = {collision_bound(args.p, space.N):.6g}")
    return 0


def cmd_simulate(args) -> int:
    cfg = _config(args)
    tp = cfg.trial_plan
    duration = args.duration if args.duration is not None else tp.duration
    if duration <= 0:
        raise UsageError("duration must be positive")
    cfg = replace(cfg, trial_plan=replace(tp, duration=duration))
    tcfg = cfg.trial_config(trials=1, duration=max(duration, 10.0))
    out = _out_dir(args, cfg)
    profile = cfg.sensor
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xC0FFEE]))
    m = cfg.source.heart_rate
    manifest = {"config": cfg.to_dict(), "recordings": []}
    for ks in range(tp.key_sets):
        # two spectrogram bins apart so every decoy is its own ridge, when the space allows
        try:
            key_freqs = _draw_key_for(m, tcfg, rng, max(tcfg.min_separation, SIMULATE_SEPARATION_BPM))
        except UsageError:
            key_freqs = _draw_key_for(m, tcfg, rng)
        key = ObfuscationKey(key_freqs, cfg.space, cfg.seed)
        key_path = out / f"key_{ks}.json"
        save_key(key, key_path)
        for rec in range(tp.recordings_per_key):
            tag = f"k{ks}_r{rec}"
            true = synthesize_heartbeat(cfg.source, duration, tp.sample_rate, rng)
            decoys = synthesize_decoys(key.frequencies, duration, tp.sample_rate, cfg.decoy_config(), rng,
                                       template=cfg.source)
            comp = superimpose(true, decoys)
            scene = fmcw.Scene(cfg.scene.base_distance, comp, cfg.scene.amplitude_scale, cfg.scene.snr_db)
            noise_seed = int(rng.integers(2**63))
            recovered, series = fmcw.sense(profile, scene, np.random.default_rng(noise_seed))
            write_displacement_csv(out / f"displacement_{tag}.csv", recovered)
            write_displacement_csv(out / f"ground_truth_{tag}.csv", comp)
            _write_phase_csv(out / f"phase_{tag}.csv", series)
            entry = {"tag": tag, "key_file": key_path.name, "heart_rate_bpm": m,
                     "range_bin": series.range_bin, "phase_rate_hz": series.sample_rate}
            if ks == 0 and rec == 0:
                n_if = min(tp.if_export_frames, fmcw.frame_count(profile, scene))
                frames = fmcw.simulate_frames(profile, scene, np.random.default_rng(noise_seed), n_if)
                fmcw.write_if_matrix(out / "if_k0_r0.bin", frames)
                entry["if_file"] = "if_k0_r0.bin"
                entry["if_frames"] = n_if
                # raw valve drive and what the sensor recovers, 6 BPM resolution
                if not key.frequencies:
                    manifest["recordings"].append(entry)
                    continue
                spec = PulseTrainSpec(key.frequencies, base_duration=duration / cfg.pulse_train.repetitions,
                                      pulse_width=cfg.pulse_train.pulse_width,
                                      repetitions=cfg.pulse_train.repetitions)
                train = generate_pulse_train(spec)
                for name, x, fs in (("pulse_train", train.samples.astype(float), train.sample_rate),
                                    ("recovered", recovered.samples, recovered.sample_rate)):
                    try:
                        t, f, pw = spectrogram.spectrogram(x, fs)
                    except ValueError:
                        continue  # shorter than one 10 s window
                    spectrogram.save_matrix(out / f"spectrogram_{name}.txt", t, f, pw)
                    entry[f"spectrogram_{name}"] = f"spectrogram_{name}.txt"
            manifest["recordings"].append(entry)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(manifest['recordings'])} recordings to {out} "
          f"({profile.name}, phase rate {profile.frame_rate:.6g} Hz)")
    return 0


def cmd_extract(args) -> int:
    sig = read_displacement_csv(Path(args.input))
    key = load_key(args.key) if args.key else None
    modes = {"both": ("unauthorized", "authorized"), "unauthorized": ("unauthorized",),
             "authorized": ("authorized",)}[args.mode if args.mode else ("both" if key else "unauthorized")]
    if "authorized" in modes and key is None:
        raise UsageError("authorized extraction needs --key")
    truth = args.truth if args.truth is not None else float("nan")
    rows = []
    for mode in modes:
        est: HeartRateEstimate = estimate(sig, mode, key=key, method=args.method)
        rows.append({"trial_id": 0, "mode": mode, "method": est.method, "bpm": est.bpm,
                     "confidence": est.confidence, "ground_truth_bpm": truth,
                     "abs_error": abs(est.bpm - truth)})
        print(f"{mode}: {est.bpm:.2f} BPM (confidence {est.confidence:.3g})")
    cfg = _config(args)
    out = _out_dir(args, cfg)
    (out / "estimates.csv").write_text(rows_to_csv(rows))
    return 0


def _check_and_print(checks) -> bool:
    ok = True
    for c in checks:
        print(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}")
        ok &= c.passed
    return ok


def cmd_eval(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    if args.abstract:
        p = args.p if args.p is not None else cfg.trial_plan.p
        space = args.space or FrequencySpace()
        trials = args.trials or 1_000_000
        g = run_abstract_game(p, space, trials, seed=cfg.seed, good_only=args.good_only)
        summary = {"p": p, "N": g.N, "trials": trials, "good_only": g.good_only,
                   "success_rate": g.success_rate, "advantage": g.advantage,
                   "random_guess": _random_guess(p), "collision_rate": g.collision_rate,
                   "analytic_bound": g.analytic_bound, "success_sigma": g.success_sigma,
                   "collision_sigma": g.collision_sigma}
        (out / "abstract_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        print(f"advantage = {g.advantage:.3g}, collision rate = {g.collision_rate:.3g}, "
              f"bound = {g.analytic_bound:.4g}")
        if args.check:
            passed = g.advantage <= g.analytic_bound + 3 * g.success_sigma and \
                g.collision_rate <= g.analytic_bound + 3 * g.collision_sigma
            print(f"[{'PASS' if passed else 'FAIL'}] abstract game within bound + 3 sigma")
            return 0 if passed else 1
        return 0

    overrides = {}
    if args.trials:
        overrides["trials"] = args.trials
    if args.p is not None:
        overrides["p"] = args.p
    if args.key:
        key = load_key(args.key)
        overrides.update(fixed_key=key.frequencies, p=key.p, space=key.space)
    elif args.mode == "authorized":
        raise UsageError("--mode authorized evaluates a given key; pass --key")
    if args.workers:
        overrides["workers"] = args.workers
    tcfg = cfg.trial_config(**overrides)
    rep = run_game(tcfg)
    files = report(rep, out, config=trial_config_dict(tcfg))
    if args.mode != "both":
        rows = [r for r in estimate_rows(rep) if r["mode"] == args.mode]
        files["trials"].write_text(rows_to_csv(rows))
    s = rep.summary()
    print(f"trials={rep.trials} MAE_u={s['mae_unauthorized']:.2f} MAE_a={s['mae_authorized']:.2f} "
          f"ratio={s['protection_ratio']:.2f} success={s['empirical_success']:.3f} "
          f"(random {s['random_guess']:.3f}) p={s['paired_p_value']:.3g}")
    if args.check:
        csv_text = rows_to_csv(estimate_rows(rep))
        ok = _check_and_print(invariant_suite(cfg.seed, rep=rep, rows_csv=csv_text))
        return 0 if ok else 1
    return 0


def cmd_bench(args) -> int:
    if args.sweep not in SWEEPS:
        raise UsageError(f"unknown sweep axis {args.sweep!r}; choose from {SWEEPS}")
    if not args.values:
        raise UsageError("--values must list at least one point")
    cfg = _config(args)
    out = _out_dir(args, cfg)
    base = cfg.trial_config(**({"trials": args.trials} if args.trials else {}))
    fields_ = ("axis", "value", "p", "random_guess", "snr_db", "trials", "empirical_success", "advantage",
               "mae_unauthorized", "mae_authorized", "protection_ratio", "paired_p_value",
               "collision_rate", "analytic_bound")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields_)
    for v in args.values:
        if args.sweep == "snr":
            tc = replace(base, snr_db=v)
        elif args.sweep == "amplitude":
            tc = replace(base, decoy=replace(base.decoy, amplitude=v))
        elif args.sweep == "p":
            if v != int(v) or v < 0:
                raise UsageError("p values must be non-negative integers")
            tc = replace(base, p=int(v))
        else:
            if v <= 0:
                raise UsageError("distance values must be positive")
            snr = base.snr_db - PATH_LOSS_DB_PER_DECADE * math.log10(v / base.base_distance)
            tc = replace(base, base_distance=v, snr_db=snr)
        rep = run_game(tc)
        s = rep.summary()
        row = [args.sweep, v, tc.p, _random_guess(tc.p), tc.snr_db, rep.trials] + \
            [s[k] for k in fields_[6:]]
        w.writerow([repr(x) if isinstance(x, float) else x for x in row])
        print(f"{args.sweep}={v:g}: MAE_u={s['mae_unauthorized']:.2f} MAE_a={s['mae_authorized']:.2f}")
    path = out / f"bench_{args.sweep}.csv"
    path.write_text(buf.getvalue())
    print(f"wrote {path}")
    return 0


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="scenario JSON file")
    common.add_argument("--seed", type=int, metavar="U64", help="overrides the config seed")
    common.add_argument("--out", metavar="DIR", help="output directory (keygen: file or directory)")
    common.add_argument("--check", action="store_true", help="run the invariant suite (eval)")

    # subcommands repeat the global flags; SUPPRESS keeps a flag given before
    # the subcommand from being reset by the subparser default
    sub_common = argparse.ArgumentParser(add_help=False)
    for action in common._actions:
        kw = {"help": action.help, "default": argparse.SUPPRESS}
        if isinstance(action, argparse._StoreTrueAction):
            kw["action"] = "store_true"
        else:
            kw.update(metavar=action.metavar, type=action.type)
        sub_common.add_argument(*action.option_strings, **kw)

    parser = argparse.ArgumentParser(prog="vitalcloak", parents=[common],
                                     description="Decoy-based heartbeat obfuscation simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    k = sub.add_parser("keygen", parents=[sub_common], help="draw a decoy key")
    k.add_argument("--p", type=int, required=True, help="number of decoy frequencies")
    k.add_argument("--space", type=_space_arg, help="LOW:HIGH:RES or LOW:HIGH:N=POINTS (BPM)")
    k.add_argument("--distinct", action="store_true", help="draw without replacement")
    k.set_defaults(func=cmd_keygen)

    s = sub.add_parser("simulate", parents=[sub_common], help="synthesize and sense recordings")
    s.add_argument("--duration", type=float, help="seconds per recording (overrides config)")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("extract", parents=[sub_common], help="estimate heart rate from a CSV")
    e.add_argument("input", help="displacement CSV (t_s,displacement_mm)")
    e.add_argument("--key", help="key file for authorized extraction")
    e.add_argument("--mode", choices=("both", "unauthorized", "authorized"))
    e.add_argument("--method", choices=("fft_peak", "peak_rr"), default="fft_peak")
    e.add_argument("--truth", type=float, help="ground-truth BPM for the error column")
    e.set_defaults(func=cmd_extract)

    v = sub.add_parser("eval", parents=[sub_common], help="run the privacy game")
    v.add_argument("--key", help="use this key in every trial")
    v.add_argument("--mode", choices=("both", "unauthorized", "authorized"), default="both",
                   help="rows written to trials.csv")
    v.add_argument("--trials", type=int)
    v.add_argument("--p", type=int)
    v.add_argument("--workers", type=int)
    v.add_argument("--abstract", action="store_true", help="multiset-level game, no DSP")
    v.add_argument("--space", type=_space_arg, help="abstract game space (default N = 2^16)")
    v.add_argument("--good-only", action="store_true", help="abstract game on non-colliding draws only")
    v.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", parents=[sub_common], help="sweep one axis of the desk benchmark")
    b.add_argument("--sweep", required=True, help=f"one of {', '.join(SWEEPS)}")
    b.add_argument("--values", type=_float_list, required=True, help="comma-separated points")
    b.add_argument("--trials", type=int)
    b.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in ("config", "seed", "out"):
        if not hasattr(args, name):
            setattr(args, name, None)
    if not hasattr(args, "check"):
        args.check = False
    if args.seed is not None and args.seed < 0:
        parser.error("--seed must be non-negative")
    try:
        return args.func(args)
    except (UsageError, ConfigError, ObfuscationError, SignalError, fmcw.FMCWError) as exc:
        parser.error(str(exc))
    except ExtractionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except EvalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
