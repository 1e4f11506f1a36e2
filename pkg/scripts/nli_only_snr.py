"""Effective SNR with amplifier noise switched off, to isolate nonlinear interference.

Usage: python scripts/nli_only_snr.py [p_ch_dbm] [seed]
"""
import sys
import time

from prs8d.config import desk_scale_link, desk_scale_wdm
from prs8d.fiber import transmit
from prs8d.rx import effective_snr, genie_receive

FORMATS = ("PM-8QAM", "5.5b4D-2A8PSK", "8D-2048PRS-T1", "8D-2048PRS-T2")
REPORT_SPANS = (10, 20)


def main(argv):
    p = float(argv[1]) if len(argv) > 1 else 0.0
    seed = int(argv[2]) if len(argv) > 2 else 1
    print("format,p_ch_dbm,spans,snr_eff_db,seconds")
    for fmt in FORMATS:
        t0 = time.time()
        out = {}

        def probe(k, field, rec):
            if k in REPORT_SPANS:
                out[k] = effective_snr(*genie_receive(field, rec, k))

        transmit(desk_scale_wdm(p), desk_scale_link(max(REPORT_SPANS)), None, fmt, seed, probe, ase=False)
        for k in REPORT_SPANS:
            print(f"{fmt},{p:.1f},{k},{out[k]:.3f},{time.time() - t0:.0f}", flush=True)


if __name__ == "__main__":
    main(sys.argv)
