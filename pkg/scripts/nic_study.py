"""QCM series and news impact curves for one return series.

With no input file a GARCH-normal series is simulated so the script runs
standalone:

    python3 scripts/nic_study.py --out results/nic
    python3 scripts/nic_study.py --input prices.csv --mode prices --tar-order 3 --out results/nic
"""
import argparse
import datetime as dt
import os
import sys

from qcm import dgp
from qcm.cli import main as qcm_main


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--input")
    ap.add_argument("--mode", choices=("prices", "returns"), default="returns")
    ap.add_argument("--tar-order", type=int, default=1)
    ap.add_argument("--length", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/nic")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    src = args.input
    if src is None:
        src = os.path.join(args.out, "simulated_returns.csv")
        y = dgp.simulate_garch(args.length, seed=args.seed).y
        with open(src, "w") as fh:
            fh.write("date,return\n")
            for i, v in enumerate(y):
                fh.write(f"{dt.date(2000, 1, 1) + dt.timedelta(days=i)},{float(v)!r}\n")
    qdir = os.path.join(args.out, "qcm")
    code = qcm_main(["compute", "--input", src, "--mode", args.mode, "--seed", str(args.seed), "--out", qdir])
    if code == 0:
        code = qcm_main(["nic", "--input", src, "--mode", args.mode, "--qcm", os.path.join(qdir, "qcm.csv"),
                         "--tar-order", str(args.tar_order), "--out", os.path.join(args.out, "curves")])
    sys.exit(code)


if __name__ == "__main__":
    main()
