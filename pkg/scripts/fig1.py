"""Oscillator expansion: fidelity vs ramp time for both ramps, noisy and noise-free."""
import argparse

from _sweep import run_preset, table

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--output", default=None)
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args()
    out = run_preset("fig1", args.output, args.threads)
    for name in ("ErmakovSP", "ConstantMu"):
        print(f"\n{name}")
        table(out / f"{name}.csv", ["t_f", "gamma", "fidelity", "mu_max"])
