"""Two-level inversion: fidelity, G_D and C_R vs protocol time for SP and ARP."""
import argparse

from _sweep import run_preset, table

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--output", default=None)
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args()
    out = run_preset("fig2", args.output, args.threads)
    for name in ("SP", "ARP"):
        print(f"\n{name}")
        table(out / f"{name}.csv", ["t_f", "gamma", "fidelity", "g_d", "c_r"])
