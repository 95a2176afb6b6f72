"""plotview --in <files...> --kind {profile,scaling,hitting} --out <path>"""

from __future__ import annotations

import argparse

from .figures import KINDS, PlotSpec, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plotview", description="render figures from scanmix result files"
    )
    parser.add_argument("--in", dest="inputs", nargs="+", required=True, help="result files")
    parser.add_argument("--kind", choices=KINDS, required=True)
    parser.add_argument("--out", required=True, help="output directory for figures")
    args = parser.parse_args(argv)
    for path in render(PlotSpec(inputs=args.inputs, kind=args.kind, out=args.out)):
        print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
