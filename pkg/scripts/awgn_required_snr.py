"""Required Es/N0 at the two NGMI thresholds, printed as a gap table against T1.

Usage: python scripts/awgn_required_snr.py [n_samples] [seed]
"""
import sys

from prs8d import air
from prs8d.air import es_n0_to_snr_eff_db
from prs8d.experiments import FIBER_FORMATS, NGMI_TARGETS


def main(argv):
    n = int(float(argv[1])) if len(argv) > 1 else 10**6
    seed = int(argv[2]) if len(argv) > 2 else 1
    req = {f: [air.required_snr(f, t, n_samples=n, seed=seed) for t in NGMI_TARGETS] for f in FIBER_FORMATS}
    print("format,ngmi,es_n0_db,snr_eff_db,gap_to_T1_db")
    for f, vals in req.items():
        for t, v, ref in zip(NGMI_TARGETS, vals, req["8D-2048PRS-T1"]):
            print(f"{f},{t},{v:.3f},{es_n0_to_snr_eff_db(v):.3f},{v - ref:.3f}")


if __name__ == "__main__":
    main(sys.argv)
