"""Decoy rendering ablation: ideal heartbeat mimic vs valve-driven chamber.

Runs the displacement-level game (no FMCW front end) for each decoy model and
amplitude and reports how often the keyless fft_peak lands on the true rate.
With perfect indistinguishability that rate is 1/(p+1).
"""

import argparse
import csv
from dataclasses import replace
from pathlib import Path

from vitalcloak.privacy_eval import TrialConfig, run_game
from vitalcloak.signal_model import DecoyConfig


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=400)
    ap.add_argument("--amplitudes", default="0.25,0.5,1,2")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv", default="runs/pneumatic_ablation.csv")
    args = ap.parse_args()

    base = TrialConfig(pipeline="displacement", sample_rate=250.0, trials=args.trials, seed=args.seed)
    rows = []
    for model in ("mimic", "pneumatic"):
        for amp in (float(v) for v in args.amplitudes.split(",")):
            cfg = replace(base, decoy=DecoyConfig(model=model, amplitude=amp))
            rep = run_game(cfg)
            rows.append({"model": model, "amplitude_mm": amp, "trials": rep.trials,
                         "true_rate_picked": rep.empirical_success, "random_guess": rep.random_guess,
                         "mae_unauthorized": rep.mae_unauthorized, "mae_authorized": rep.mae_authorized})
            print(f"{model:9s} {amp:4.2f} mm  picked true {rep.empirical_success:.3f} "
                  f"(guess {rep.random_guess:.2f})  MAE_u {rep.mae_unauthorized:5.1f}  "
                  f"MAE_a {rep.mae_authorized:4.2f}")
    Path(args.csv).parent.mkdir(parents=True, exist_ok=True)
    with open(args.csv, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


if __name__ == "__main__":
    main()
