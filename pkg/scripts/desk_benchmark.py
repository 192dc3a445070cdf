"""Full FMCW privacy game for both sensing modalities at one SNR.

Writes <out>/<modality>/summary.json and trials.csv and prints one line per
modality.

    python3 scripts/desk_benchmark.py --trials 50 --out runs/desk
"""

import argparse
import time
from pathlib import Path

from vitalcloak.privacy_eval import TrialConfig, report, run_game, trial_config_dict


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--snr", type=float, default=20.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--modalities", default="mmwave,acoustic")
    ap.add_argument("--out", default="runs/desk")
    args = ap.parse_args()

    for name in args.modalities.split(","):
        cfg = TrialConfig(profile=name, trials=args.trials, snr_db=args.snr, seed=args.seed,
                          workers=args.workers)
        t0 = time.perf_counter()
        rep = run_game(cfg)
        report(rep, Path(args.out) / name, trial_config_dict(cfg))
        print(f"{name:9s} MAE_u {rep.mae_unauthorized:6.2f}  MAE_a {rep.mae_authorized:5.2f}  "
              f"ratio {rep.protection_ratio:7.1f}  p {rep.paired_p_value:.2g}  "
              f"success {rep.empirical_success:.3f} (guess {rep.random_guess:.3f})  "
              f"{time.perf_counter() - t0:.0f} s")


if __name__ == "__main__":
    main()
