"""SP family at t_f = 0.1 s, gamma = 0.01 s: fidelity against M on both branches."""
import argparse

from _sweep import run_preset, table

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--output", default=None)
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args()
    out = run_preset("fig4", args.output, args.threads)
    table(out / "scan.csv", ["branch", "knob", "m_param", "mu_max", "fidelity"])
