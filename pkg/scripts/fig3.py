"""Fixed SP at the first ARP peak time: fidelity and C_R against noise strength."""
import argparse

from _sweep import run_preset, table

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--output", default=None)
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args()
    out = run_preset("fig3", args.output, args.threads)
    table(out / "SP.csv", ["gamma", "fidelity", "c_r", "g_d"])
