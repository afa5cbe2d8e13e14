#!/usr/bin/env python3
"""Write the bundled synthetic digit corpus as index-format files.

The training tools generate these files on demand when they are missing;
this script exists for pre-seeding a data directory explicitly (or for
regenerating it after experiments that touched the files).
"""

import argparse

from clonalnet import synthdigits


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data",
                        help="target directory (default: data)")
    args = parser.parse_args()
    out = synthdigits.write_corpus(args.out)
    for name in (synthdigits.TRAIN_IMAGES, synthdigits.TRAIN_LABELS,
                 synthdigits.TEST_IMAGES, synthdigits.TEST_LABELS):
        print(f"wrote {out / name}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
