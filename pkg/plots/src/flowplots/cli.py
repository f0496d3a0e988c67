"""Figure command line: ``plot <kind> --in ... --out ...``."""

from __future__ import annotations

import argparse
import sys

from .figures import SchemaError, plot_density_force, plot_energy_trace, plot_metrics


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="plot",
                                description="Render figures from simulator CSV files.")
    sub = p.add_subparsers(dest="kind", required=True)

    d = sub.add_parser("density-force", help="heatmap with force quiver")
    d.add_argument("--in", dest="inputs", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--quiver-step", type=int, default=4)

    e = sub.add_parser("energy-trace", help="total-energy traces per replica")
    e.add_argument("--in", dest="inputs", required=True, nargs="+")
    e.add_argument("--out", required=True)

    m = sub.add_parser("metrics", help="training metric curves")
    m.add_argument("--in", dest="inputs", required=True)
    m.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.kind == "density-force":
            plot_density_force(args.inputs, args.out, quiver_step=args.quiver_step)
        elif args.kind == "energy-trace":
            plot_energy_trace(list(args.inputs), args.out)
        else:
            plot_metrics(args.inputs, args.out)
    except SchemaError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
