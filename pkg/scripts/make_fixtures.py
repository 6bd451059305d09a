#!/usr/bin/env python3
"""Generate the shared mesh fixtures (humanoid poses, shirt, regions)."""

import argparse
from pathlib import Path

from garment_retarget.fixtures import write_fixture_files


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--out",
        default=Path(__file__).resolve().parent.parent / "fixtures",
        help="output directory (default: repository fixtures/)",
    )
    args = parser.parse_args()
    paths = write_fixture_files(args.out)
    for name, path in sorted(paths.items()):
        print(f"{name}: {path}")


if __name__ == "__main__":
    main()
