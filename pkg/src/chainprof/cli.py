"""chainprof command line.

Exit codes: 0 ok, 1 spec or semantic error, 2 I/O error, 3 backend failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from chainprof import __version__
from chainprof.backend.base import BackendConfig
from chainprof.configio import load_bundle, load_experiment, write_normalized, writable_directory
from chainprof.errors import (BackendError, BaselineError, BundleIntegrityError, ChainprofError,
                              ValidationError)
from chainprof.model import enumerate_configurations

EXIT_OK, EXIT_SPEC, EXIT_IO, EXIT_BACKEND = 0, 1, 2, 3

log = logging.getLogger("chainprof")


class Output:
    def __init__(self, fmt: str):
        self.structured = fmt == "structured"

    def emit(self, text_lines, doc):
        if self.structured:
            json.dump(doc, sys.stdout, indent=2, default=str)
            sys.stdout.write("\n")
        else:
            for line in text_lines:
                print(line)


def _fail(code, message, out: Output, issues=None, path=None):
    doc = {"ok": False, "exit_code": code, "error": message}
    if issues:
        doc["issues"] = issues
    if path:
        doc["path"] = path
    if out.structured:
        json.dump(doc, sys.stdout, indent=2)
        sys.stdout.write("\n")
    print(f"error: {message}", file=sys.stderr)
    for issue in issues or ():
        print(f"  - {issue}", file=sys.stderr)
    return code


def _load_spec(args):
    spec = load_experiment(args.spec)
    if args.seed is not None:
        spec = spec.with_overrides(seed=args.seed)
    return spec


def cmd_validate(args, out):
    spec = _load_spec(args)
    configs = enumerate_configurations(spec.sweep, spec.topology)
    from chainprof.model import validate_topology
    warnings = validate_topology(spec.topology).warnings
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    out.emit([f"{args.spec}: valid ({len(configs)} configurations x {spec.repetitions} repetitions, "
              f"{len(spec.metrics)} metrics)"],
             {"ok": True, "name": spec.name, "configurations": len(configs),
              "repetitions": spec.repetitions, "metrics": len(spec.metrics), "warnings": warnings,
              "spec_digest": spec.digest})
    return EXIT_OK


def cmd_enumerate(args, out):
    spec = _load_spec(args)
    configs = enumerate_configurations(spec.sweep, spec.topology)
    out.emit([f"{c.index}\t{c.label()}" for c in configs], [c.to_dict() for c in configs])
    return EXIT_OK


def cmd_run(args, out):
    from chainprof.engine import run_profiling

    spec = _load_spec(args)
    if args.backend or args.endpoint:
        btype = args.backend or spec.backend.type
        try:
            backend = BackendConfig(type=btype, endpoint=args.endpoint if btype == "container" else None,
                                    volume_root=spec.backend.volume_root)
        except ValidationError as exc:
            return _fail(EXIT_SPEC, str(exc), out)
        spec = spec.with_overrides(backend=backend)
    configs = enumerate_configurations(spec.sweep, spec.topology)
    if args.dry_run:
        out.emit([f"dry run: {len(configs)} configurations x {spec.repetitions} repetitions "
                  f"= {len(configs) * spec.repetitions} runs"] + [f"{c.index}\t{c.label()}" for c in configs],
                 {"dry_run": True, "runs": len(configs) * spec.repetitions,
                  "configurations": [c.to_dict() for c in configs]})
        return EXIT_OK
    if not writable_directory(args.out):
        return _fail(EXIT_IO, f"output directory {args.out} is not writable", out)
    bundle = run_profiling(spec, destination=args.out, workers=args.workers)
    m = bundle.manifest
    out.emit([f"bundle: {Path(args.out).resolve()}",
              f"configurations: {m.config_count}  repetitions: {m.repetitions}  "
              f"metrics: {m.metric_count}  records: {m.record_count}  flagged runs: {len(m.flagged_runs)}"],
             {"bundle": str(Path(args.out).resolve()), "config_count": m.config_count,
              "repetitions": m.repetitions, "metric_count": m.metric_count,
              "record_count": m.record_count, "flagged_runs": [f.to_dict() for f in m.flagged_runs]})
    return EXIT_OK


def cmd_normalize(args, out):
    from chainprof.engine import measure_baseline
    from chainprof.normalize import load_baseline, normalize_profile

    bundle = load_bundle(args.bundle)
    if args.measure_baseline:
        baseline = measure_baseline(bundle.manifest.metrics, bundle.manifest.host)
    elif args.baseline:
        baseline = load_baseline(args.baseline)
    else:
        return _fail(EXIT_SPEC, "give a baseline file or --measure-baseline", out)
    normalized = [normalize_profile(p, baseline) for p in bundle.profiles]
    if args.dry_run:
        out.emit([f"dry run: would normalize {len(normalized)} profiles"],
                 {"dry_run": True, "profiles": len(normalized), "baseline": baseline.to_dict()})
        return EXIT_OK
    write_normalized(args.bundle, normalized, baseline)
    out.emit([f"normalized {len(normalized)} profiles ({baseline.provenance} baseline) "
              f"into {Path(args.bundle) / 'normalized'}"],
             {"profiles": len(normalized), "baseline": baseline.to_dict(),
              "directory": str(Path(args.bundle) / "normalized")})
    return EXIT_OK


def _parse_sla(items):
    sla = {}
    for item in items or ():
        metric, sep, value = item.partition("=")
        if not sep:
            raise ValidationError(f"--sla expects metric=value, got {item!r}")
        try:
            sla[metric] = float(value)
        except ValueError:
            raise ValidationError(f"--sla value for {metric!r} is not a number") from None
    return sla


def cmd_analyze(args, out):
    from chainprof.predict import analyze_bundle

    bundle = load_bundle(args.bundle)
    sla = _parse_sla(args.sla)
    known = {m.name for m in bundle.manifest.metrics}
    unknown = sorted(set(sla) - known)
    if unknown:
        return _fail(EXIT_SPEC, f"unknown SLA metric(s): {', '.join(unknown)}", out)
    analysis = analyze_bundle(bundle, sla, args.dimension, args.bottleneck, args.normalized)
    lines = []
    for fit in analysis.report["fits"]:
        line = (f"{fit['scope']} {fit['subject']} {fit['metric']} vs {fit['node']}.{fit['dimension']}: "
                f"{fit['kind']} ({fit['behavior_class']}")
        if fit["saturation_point"] is not None:
            line += f", knee {fit['saturation_point']:g}"
        line += ")"
        if "sla" in fit:
            alloc = fit["sla"]["allocation"]
            line += f"  SLA {fit['metric']}>={fit['sla']['target']:g}: " + (
                alloc if isinstance(alloc, str) else f"{fit['dimension']}={alloc:g}")
        lines.append(line)
    for b in analysis.report.get("bottlenecks", ()):
        lines.append(f"bottleneck for {b['metric']} in {b['dimension']}: "
                     + (b.get("error") or str(b["bottleneck"] or "none")))
    if not args.dry_run:
        dest = Path(args.out) if args.out else Path(args.bundle) / "analysis"
        (dest / "plots").mkdir(parents=True, exist_ok=True)
        with open(dest / "report.json", "w") as fh:
            json.dump(analysis.report, fh, indent=2)
            fh.write("\n")
        for name, rows in analysis.plots.items():
            with open(dest / "plots" / name, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(("x", "mean", "ci_low", "ci_high", "fitted"))
                w.writerows(rows)
        lines.append(f"report: {dest / 'report.json'}")
    out.emit(lines, analysis.report)
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("text", "structured"), default="text",
                        help="output format (structured = JSON)")
    common.add_argument("--seed", type=int, help="override the experiment seed")
    common.add_argument("--dry-run", action="store_true", help="validate only, write nothing")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="chainprof", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"chainprof {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="validate an experiment spec")
    p.add_argument("spec")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("enumerate", parents=[common], help="list sweep configurations")
    p.add_argument("spec")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("run", parents=[common], help="run a profiling campaign")
    p.add_argument("spec")
    p.add_argument("out", help="bundle directory")
    p.add_argument("--backend", choices=("simulated", "container"))
    p.add_argument("--endpoint", help="container engine API URL")
    p.add_argument("--workers", type=int, default=1, help="parallel runs (simulated backend only)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("normalize", parents=[common], help="add host-normalized profiles to a bundle")
    p.add_argument("bundle")
    p.add_argument("baseline", nargs="?", help="baseline JSON file")
    p.add_argument("--measure-baseline", action="store_true",
                   help="measure the baseline with the calibration run")
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("analyze", parents=[common], help="fit scaling models and answer SLA queries")
    p.add_argument("bundle")
    p.add_argument("--sla", action="append", metavar="METRIC=VALUE")
    p.add_argument("--dimension", help="restrict to one dimension (name or node:name)")
    p.add_argument("--bottleneck", metavar="METRIC", help="run chain sensitivity on an end-to-end metric")
    p.add_argument("--normalized", action="store_true", help="analyze normalized profiles")
    p.add_argument("--out", help="report directory (default BUNDLE/analysis)")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    out = Output(args.format)
    try:
        return args.func(args, out)
    except BackendError as exc:
        return _fail(EXIT_BACKEND, str(exc), out)
    except ValidationError as exc:
        return _fail(EXIT_SPEC, str(exc), out, exc.issues, exc.path)
    except BaselineError as exc:
        return _fail(EXIT_SPEC, str(exc), out)
    except BundleIntegrityError as exc:
        return _fail(EXIT_IO, str(exc), out)
    except OSError as exc:
        return _fail(EXIT_IO, str(exc), out)
    except ChainprofError as exc:
        return _fail(EXIT_SPEC, str(exc), out)


if __name__ == "__main__":
    sys.exit(main())
