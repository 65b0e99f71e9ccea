import argparse
import sys

import pandas as pd

from tractconn.bench import PROPOSED_MAX_GROWTH, TRADITIONAL_MIN_GROWTH_PER_N, summarize


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description="Summarize a tractconn bench report")
    ap.add_argument("--in", dest="report_csv", required=True)
    ap.add_argument("--strict", action="store_true", help="Exit 1 when a scaling trend check fails")
    args = ap.parse_args(argv)

    report = pd.read_csv(args.report_csv)
    summary = summarize(report)
    print(summary.table.to_string(index=False, float_format=lambda x: f"{x:.3f}"))

    growth = ", ".join(
        f"{t:.2f}x time for {n:.1f}x N" for t, n in zip(summary.traditional_growth, summary.n_growth)
    )
    print(f"traditional growth: {growth or 'n/a'} (need >= {TRADITIONAL_MIN_GROWTH_PER_N:g} x N ratio) "
          f"-> {'ok' if summary.traditional_ok else 'FAIL'}")
    print(f"proposed growth across sweep: {summary.proposed_growth:.2f}x (need <= {PROPOSED_MAX_GROWTH:g}x) "
          f"-> {'ok' if summary.proposed_ok else 'FAIL'}")
    print(f"speedup strictly increasing: {'ok' if summary.speedup_increasing else 'FAIL'}")

    if args.strict and not summary.passed:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
