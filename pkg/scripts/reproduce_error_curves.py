#!/usr/bin/env python3
"""Reproduce the two headline experiments at shipped defaults.

Runs the error-vs-training-set-size sweep (both network variants, paired
seeds) followed by the error-vs-epoch curve for the clonal variant, writing
CSV tables, SVG plots, and the final antibody pools under --out. Expect
roughly ten minutes on a laptop-class machine.
"""

import argparse

from clonalnet.cli import main as cli_main


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data-dir", default="data",
                        help="corpus directory; synthesized when missing")
    parser.add_argument("--out", default="out",
                        help="artifact directory (default: out)")
    args = parser.parse_args()
    common = ["--data-dir", args.data_dir, "--out", args.out]
    rc = cli_main(["size-sweep", *common])
    if rc != 0:
        return rc
    return cli_main(["epoch-curve", *common])


if __name__ == "__main__":
    raise SystemExit(main())
