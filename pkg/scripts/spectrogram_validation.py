"""Ridge check for the {53, 79, 101} BPM decoy train at 6 BPM resolution.

Compares the raw valve drive, the mmWave view of the actuator alone, and the
actuator worn over a heartbeat for a range of chamber strokes. Matrices for
external plotting go to --out.
"""

import argparse
from pathlib import Path

import numpy as np

from vitalcloak import fmcw
from vitalcloak import spectrogram as sg
from vitalcloak.signal_model import (DecoyConfig, PulseTrainSpec, VitalSignSource, generate_pulse_train,
                                     superimpose, synthesize_decoys, synthesize_heartbeat)

KEY = (53.0, 79.0, 101.0)


def observe(x, seed, snr_db, distance):
    disp, _ = fmcw.sense(fmcw.MMWAVE, fmcw.Scene(distance, x, snr_db=snr_db), np.random.default_rng(seed))
    return sg.signal_spectrogram(disp)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--strokes", default="0.5,1,2,3", help="decoy amplitudes in mm")
    ap.add_argument("--heart-rates", default="66,72,90")
    ap.add_argument("--snr", type=float, default=20.0)
    ap.add_argument("--distance", type=float, default=0.30)
    ap.add_argument("--out", default="runs/spectrogram")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    train = generate_pulse_train(PulseTrainSpec(KEY))
    t, f, p = sg.spectrogram(train.samples.astype(float), train.sample_rate)
    sg.save_matrix(out / "pulse_train.txt", t, f, p)
    print(f"pulse train        ridges {np.round(sg.ridges(f, p)[:4]).tolist()}  match {sg.ridges_match(f, p, KEY)}")

    rng = np.random.default_rng(0)
    decoys = synthesize_decoys(KEY, 30.0, 2000.0, DecoyConfig(model="pneumatic"), rng)
    t, f, p = observe(decoys, 1, args.snr, args.distance)
    sg.save_matrix(out / "mmwave_actuator.txt", t, f, p)
    print(f"mmWave, actuator   ridges {np.round(sg.ridges(f, p)[:4]).tolist()}  match {sg.ridges_match(f, p, KEY)}")

    rates = [float(v) for v in args.heart_rates.split(",")]
    for stroke in (float(v) for v in args.strokes.split(",")):
        hits = total = 0
        for seed in range(args.seeds):
            for hr in rates:
                rng = np.random.default_rng([seed, int(hr * 10)])
                heart = synthesize_heartbeat(VitalSignSource(heart_rate=hr), 30.0, 2000.0, rng)
                dec = synthesize_decoys(KEY, 30.0, 2000.0, DecoyConfig(model="pneumatic", amplitude=stroke), rng)
                t, f, p = observe(superimpose(heart, dec), seed, args.snr, args.distance)
                hits += sg.ridges_match(f, p, KEY)
                total += 1
        print(f"worn, stroke {stroke:3.1f} mm  ridges at all decoys in {hits}/{total} recordings")
    if args.strokes:
        sg.save_matrix(out / "mmwave_worn_last.txt", t, f, p)


if __name__ == "__main__":
    main()
