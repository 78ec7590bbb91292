#!/usr/bin/env python3
"""Materialize the bundled fixtures as feeder JSON + profiles CSV files."""

import argparse

from phasebal import fixtures


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out_dir", nargs="?", default="fixtures")
    args = parser.parse_args()
    for name in fixtures.FIXTURE_NAMES:
        fpath, ppath = fixtures.write_fixture(name, args.out_dir)
        print(f"{name}: {fpath} {ppath}")


if __name__ == "__main__":
    main()
