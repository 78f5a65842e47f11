"""Command-line entry point: ``python3 -m sdipbit <command> ...``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from .. import __version__
from ..certification import CertificationParams, Reason, certification_rate, certify_batch
from ..control import calibrate, curve_to_csv, gbit_sample
from ..entropy import EntropyStream
from ..photonics import (DetectionParams, PhotonicSource, auto_range, pmf_to_csv, sample_analog,
                         sdi_output_pmf)
from .figures import FIGURES, emit_figure_data
from .problem import load_problem, ring
from .solve import IdealEngine, PhotonicEngine, bench_flips, solve

GENERATED_BY = f"sdipbit {__version__}"


def _source_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("operating point")
    g.add_argument("--source", choices=("fock", "poisson"), default="fock")
    g.add_argument("--photons", type=float, default=10_000, help="photon number (Fock) or mean (Poisson)")
    g.add_argument("--ratio", type=float, default=0.5, help="beamsplitter splitting ratio r")
    g.add_argument("--alpha-d", type=float, default=1.0, help="volts per photon of the difference channel")
    g.add_argument("--sigma-d", type=float, default=None, help="electronics noise (default: half the shot noise)")
    g.add_argument("--bit-depth", type=int, default=8)
    g.add_argument("--v-min", type=float, default=None, help="ADC range; auto-ranged when omitted")
    g.add_argument("--v-max", type=float, default=None)


def _operating_point(args) -> tuple[PhotonicSource, DetectionParams]:
    if args.source == "fock":
        source = PhotonicSource.fock(int(args.photons), args.ratio)
    else:
        source = PhotonicSource.poisson(args.photons, args.ratio)
    sigma = args.sigma_d if args.sigma_d is not None else max(0.5 * args.alpha_d * np.sqrt(args.photons), 1e-3)
    if args.v_min is not None and args.v_max is not None:
        det = DetectionParams(sigma, args.alpha_d, args.v_min, args.v_max, args.bit_depth)
    else:
        det = auto_range(source.with_ratio(0.5), args.alpha_d, sigma, args.bit_depth)
    return source, det


def _rows_csv(header, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# generated-by {GENERATED_BY}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _cmd_pmf(args) -> str:
    source, det = _operating_point(args)
    pmf = sdi_output_pmf(source, det)
    if args.format == "json":
        return json.dumps({"V_min": det.V_min, "V_max": det.V_max, "bit_depth": det.bit_depth,
                           "probabilities": pmf.tolist()})
    return pmf_to_csv(pmf, det, GENERATED_BY)


def _cmd_curve(args) -> str:
    source, det = _operating_point(args)
    curve = calibrate(args.method, source, det, size=args.points)
    if args.format == "json":
        return json.dumps({"kind": curve.kind, "orientation": curve.orientation,
                           "settings": curve.settings.tolist(), "mean_state": curve.values.tolist()})
    return curve_to_csv(curve, generated_by=GENERATED_BY)


def _cmd_sample(args) -> str:
    source, det = _operating_point(args)
    stream = EntropyStream(args.seed)
    if args.gbit:
        g = gbit_sample(source, det, stream, args.count)
        if args.format == "json":
            return json.dumps({"mean": g.mean, "std": g.std, "saturation_fraction": g.saturation_fraction,
                               "warning": g.warning, "values": g.values.tolist()})
        return _rows_csv(["index", "value"], enumerate(g.values.tolist()))
    v, n = sample_analog(source, det, args.count, stream)
    codes = det.digitize(v)
    if args.format == "json":
        return json.dumps({"codes": codes.tolist(), "photons": n.tolist()})
    return _rows_csv(["index", "photons", "voltage", "code"], zip(range(args.count), n.tolist(), v.tolist(),
                                                                  codes.tolist()))


def _cmd_certify(args) -> str:
    source, det = _operating_point(args)
    cert = CertificationParams.for_photons(args.photons, z=args.z)
    stream = EntropyStream(args.seed)
    photons = None
    if args.dropout_at is not None:
        base = sample_analog(source, det, args.count, stream)[1]
        photons = np.where(np.arange(args.count) >= args.dropout_at, 0, base)
    v, n = sample_analog(source, det, args.count, stream, photons=photons)
    sums = cert.alpha_S * n + cert.sigma_S * stream.normal(args.count)
    n_hat, ok, reason = certify_batch(det.digitize(v), sums, cert, det)
    rate = certification_rate(ok, args.window)
    if args.format == "json":
        return json.dumps({"certified_fraction": float(ok.mean()), "n_hat": n_hat.tolist(),
                           "certified": ok.tolist(), "rate": rate.tolist()})
    return _rows_csv(["index", "n_hat", "certified", "reason", "rolling_rate"],
                     zip(range(args.count), n_hat.tolist(), ok.astype(int).tolist(),
                         [Reason(int(x)).label for x in reason], rate.tolist()))


def _engine(args):
    if args.engine == "ideal":
        return IdealEngine()
    return PhotonicEngine(physical=args.physical, kind=args.control)


def _report_out(report, args) -> str:
    if args.format == "json":
        return report.to_json()
    d = report.to_dict()
    prov = d.pop("provenance")
    d.update({f"provenance.{k}": json.dumps(v) if isinstance(v, dict) else v for k, v in prov.items()})
    return _rows_csv(["field", "value"], [(k, json.dumps(v) if isinstance(v, list) else v) for k, v in d.items()])


def _cmd_solve(args) -> str:
    problem = load_problem(args.problem)
    report = solve(problem, _engine(args), args.sweeps, replicas=args.replicas, seed=args.seed)
    return _report_out(report, args)


def _cmd_bench(args) -> str:
    problem = ring(args.logical, 0.5)
    report = bench_flips(_engine(args), args.duration, problem, seed=args.seed or 0)
    return _report_out(report, args)


def _cmd_figure(args) -> str:
    params = {}
    for item in args.param or []:
        key, _, value = item.partition("=")
        params[key] = json.loads(value)
    if args.seed is not None:
        params["seed"] = args.seed
    return emit_figure_data(args.figure, params, GENERATED_BY)


def _global_args(p: argparse.ArgumentParser, default, format_default) -> None:
    p.add_argument("--seed", type=int, default=default)
    p.add_argument("--config", type=Path, default=default, help="JSON file of option defaults")
    p.add_argument("--out", type=Path, default=default, help="write output here instead of stdout")
    p.add_argument("--format", choices=("csv", "json"), default=format_default)


def _subparser(common: argparse.ArgumentParser):
    class SubParser(argparse.ArgumentParser):
        def __init__(self, **kwargs):
            super().__init__(parents=[common], **kwargs)

    return SubParser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdipbit", description="Photonic p-bit simulator and solver harness.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_args(parser, None, "csv")
    # the same options are accepted after the subcommand; SUPPRESS keeps earlier values
    common = argparse.ArgumentParser(add_help=False)
    _global_args(common, argparse.SUPPRESS, argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_subparser(common))

    p = sub.add_parser("pmf", help="digitized output PMF")
    _source_args(p)
    p.set_defaults(func=_cmd_pmf)

    p = sub.add_parser("curve", help="calibrated bias curve of a control method")
    _source_args(p)
    p.add_argument("--method", choices=("splitting_ratio", "comparator", "digital_threshold"),
                   default="digital_threshold")
    p.add_argument("--points", type=int, default=None, help="grid size for the continuous knobs")
    p.set_defaults(func=_cmd_curve)

    p = sub.add_parser("sample", help="simulated detector samples or g-bit values")
    _source_args(p)
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--gbit", action="store_true", help="emit continuous g-bit values")
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("certify", help="certification trace, optionally with a source dropout")
    _source_args(p)
    p.add_argument("--count", type=int, default=10_000)
    p.add_argument("--dropout-at", type=int, default=None)
    p.add_argument("--window", type=int, default=1000)
    p.add_argument("--z", type=float, default=3.0)
    p.set_defaults(func=_cmd_certify)

    for name, helptext in (("solve", "anneal an Ising problem file"), ("bench", "measure flips per second")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--engine", choices=("ideal", "photonic"), default="ideal")
        p.add_argument("--physical", type=int, default=4)
        p.add_argument("--control", choices=("splitting_ratio", "comparator", "digital_threshold"),
                       default="digital_threshold")
        if name == "solve":
            p.add_argument("problem", type=Path)
            p.add_argument("--sweeps", type=int, default=1000)
            p.add_argument("--replicas", type=int, default=1)
            p.set_defaults(func=_cmd_solve)
        else:
            p.add_argument("--duration", type=float, default=1.0)
            p.add_argument("--logical", type=int, default=64)
            p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("figure", help="data series behind a published figure")
    p.add_argument("figure", choices=sorted(FIGURES))
    p.add_argument("--param", action="append", help="override, as key=<json value>")
    p.set_defaults(func=_cmd_figure)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    config = json.loads(args.config.read_text())
    if not isinstance(config, dict):
        parser.error(f"{args.config}: config must be a JSON object")
    config = {k.replace("-", "_"): v for k, v in config.items()}
    parser.set_defaults(**config)
    for action in parser._subparsers._group_actions:
        for sp in action.choices.values():
            sp.set_defaults(**{k: v for k, v in config.items()
                               if any(a.dest == k and a.default is not argparse.SUPPRESS for a in sp._actions)})
    # command-line values still win: reparse with the config as defaults
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    args = _apply_config(parser, argv)
    try:
        text = args.func(args)
    except (ValueError, OSError) as exc:
        print(f"sdipbit {args.command}: error: {exc}", file=sys.stderr)
        return 2
    if args.out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        args.out.write_text(text if text.endswith("\n") else text + "\n")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
