"""Command-line interface: ``graphcpd detect | cidr | simulate | scenarios``.

Every flag can also be set through an environment variable named
``GRAPHCPD_`` followed by the flag in upper case with dashes replaced by
underscores (``--k-trees`` -> ``GRAPHCPD_K_TREES``). Command-line values
take precedence.

Exit codes: 0 success, 1 usage or input error, 2 infeasible graph
configuration, 3 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .detect import DetectionConfig, amoc_test, binary_segmentation
from .edgestats import StatKind
from .errors import CapacityError, GraphCPDError
from .fdata import cidr_transform
from .graphs import TreeKind
from .io import file_digest, format_sample, read_prices, read_sample

ENV_PREFIX = "GRAPHCPD_"
EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_INTERNAL = 0, 1, 2, 3
LOW_PRECISION_REPLICATES = 20


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _env(flag: str, default, cast=str):
    raw = os.environ.get(ENV_PREFIX + flag.lstrip("-").replace("-", "_").upper())
    if raw is None:
        return default
    if cast is bool:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    try:
        return cast(raw)
    except ValueError:
        raise UsageError(f"environment override for {flag} is not a valid value: {raw!r}") from None


def _add(p, flag, cast=str, default=None, **kw):
    if kw.get("action") == "store_true":
        p.add_argument(flag, default=_env(flag, False, bool), **kw)
    else:
        p.add_argument(flag, type=cast, default=_env(flag, default, cast), **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="graphcpd", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"graphcpd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("detect", help="test a functional sample for change points")
    d.add_argument("input", help="CSV file, one curve per row")
    _add(d, "--stat", str, "maxtype", choices=[s.value for s in StatKind])
    _add(d, "--tree", str, "mst", choices=[t.value for t in TreeKind])
    _add(d, "--k-trees", int, 15)
    _add(d, "--p", float, 2.0, help="L^p norm order, p >= 1")
    _add(d, "--alpha", float, 0.05)
    _add(d, "--shuffles", int, 1000)
    _add(d, "--seed", int, None)
    _add(d, "--multiple", action="store_true", help="binary segmentation for multiple changes")
    _add(d, "--min-segment", int, 10)
    _add(d, "--threads", int, 1)
    _add(d, "--out", str, "graphcpd-out")

    c = sub.add_parser("cidr", help="convert price curves to cumulative intraday returns")
    c.add_argument("input", help="CSV of strictly positive prices, one day per row")
    _add(c, "--out", str, None, help="directory for cidr.csv (default: stdout)")

    s = sub.add_parser("simulate", help="run a simulation scenario")
    s.add_argument("scenario", help="bundled scenario name or path to a JSON descriptor")
    _add(s, "--replicates", int, None)
    _add(s, "--shuffles", int, None)
    _add(s, "--seed", int, None)
    _add(s, "--threads", int, 1)
    _add(s, "--out", str, "graphcpd-out")

    sub.add_parser("scenarios", help="list bundled scenarios")
    return parser


def manifest_for(command: str, config: dict, input_digest: str | None, seed) -> dict:
    """Deterministic manifest fields and their hash (wall time kept apart)."""
    core = {
        "command": command,
        "config": config,
        "input_digest": input_digest,
        "seed": seed,
        "version": __version__,
    }
    blob = json.dumps(core, sort_keys=True, separators=(",", ":"))
    core["hash"] = hashlib.sha256(blob.encode()).hexdigest()[:16]
    return core


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _write_manifest(out: Path, manifest: dict, started: float) -> None:
    full = dict(manifest, wall_time_seconds=round(time.perf_counter() - started, 3))
    _write_json(out / "manifest.json", full)


def cmd_detect(args) -> int:
    from .plotting import plot_trace

    started = time.perf_counter()
    sample = read_sample(args.input)
    seed = args.seed if args.seed is not None else int(np.random.SeedSequence().entropy % 2**63)
    cfg = DetectionConfig(
        statistic=args.stat, tree=args.tree, k_trees=args.k_trees, p=args.p,
        alpha=args.alpha, shuffles=args.shuffles, seed=seed, min_segment=args.min_segment,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = cfg.to_dict() | {"multiple": bool(args.multiple), "input": Path(args.input).name}
    manifest = manifest_for("detect", config, file_digest(args.input), seed)

    if args.multiple:
        seg = binary_segmentation(sample, cfg)
        top = seg.tests[0] if seg.tests else None
        changes = seg.locations
        result = seg.to_dict()
        summary = (f"{len(changes)} significant change(s) at {changes}" if changes
                   else "no significant change")
    else:
        top = amoc_test(sample, cfg)
        changes = [top.k_hat] if top.significant else []
        result = top.to_dict()
        summary = (f"significant change at k={top.k_hat} (p={top.p_value:.4g})"
                   if top.significant else f"no significant change (p={top.p_value:.4g})")

    report = {"manifest": manifest, "mode": "segmentation" if args.multiple else "amoc",
              "summary": summary, "change_points": changes, "result": result}
    _write_json(out / "report.json", report)

    lines = [f"# manifest {manifest['hash']}", "k,statistic"]
    if top is not None:
        for k, v in zip(top.trace.ks, top.trace.trace):
            lines.append(f"{int(k) + top.start},{'' if not np.isfinite(v) else repr(float(v))}")
        plot_trace(top.trace, out / "trace.svg", threshold=top.threshold, changes=changes,
                   offset=top.start, title=f"{cfg.tree.value.upper()}-{cfg.k_trees} "
                   f"{cfg.statistic.value}, n={sample.n}", manifest_hash=manifest["hash"])
    (out / "trace.csv").write_text("\n".join(lines) + "\n")
    _write_manifest(out, manifest, started)
    print(summary)
    return EXIT_OK


def cmd_cidr(args) -> int:
    prices = read_prices(args.input)
    curves = cidr_transform(prices)
    manifest = manifest_for("cidr", {"input": Path(args.input).name}, file_digest(args.input), None)
    text = format_sample(curves, comment=f"manifest {manifest['hash']}")
    if args.out is None:
        sys.stdout.write(text)
    else:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "cidr.csv").write_text(text)
        _write_json(out / "manifest.json", manifest)
    return EXIT_OK


def cmd_simulate(args) -> int:
    from . import plotting
    from .scenarios import load_descriptor, run_scenario

    started = time.perf_counter()
    desc = load_descriptor(args.scenario)
    if args.replicates is not None and args.replicates < LOW_PRECISION_REPLICATES:
        print(f"warning: {args.replicates} replicate(s) gives low-precision rates", file=sys.stderr)
    report = run_scenario(desc, replicates=args.replicates, seed=args.seed,
                          shuffles=args.shuffles, workers=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = {"scenario": desc, "replicates": report.replicates, "shuffles": args.shuffles}
    manifest = manifest_for("simulate", config, None, report.seed)
    h = manifest["hash"]
    body = report.to_dict()
    body.pop("runtime_seconds")
    _write_json(out / "report.json", {"manifest": manifest, "report": body})
    (out / "report.csv").write_text(report.to_csv(header_comment=f"manifest {h}"))
    if report.kind == "size":
        plotting.plot_size_table(report, out / "size_table.svg", h)
    elif report.kind == "power":
        plotting.plot_power_curves(report, out / "power_curves.svg", h)
    else:
        plotting.plot_location_histogram(report, out / "locations.svg", h)
    manifest_full = dict(manifest, runtime_seconds=report.runtime_seconds)
    _write_manifest(out, manifest_full, started)
    print(f"{report.scenario}: {len(report.rows)} rows written to {out}")
    return EXIT_OK


def cmd_scenarios(args) -> int:
    from .scenarios import bundled_names, load_descriptor

    for name in bundled_names():
        print(f"{name:24s} {load_descriptor(name).get('description', '')}")
    return EXIT_OK


COMMANDS = {"detect": cmd_detect, "cidr": cmd_cidr, "simulate": cmd_simulate,
            "scenarios": cmd_scenarios}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except CapacityError as err:
        print(f"error: {err}. A smaller value of --k-trees is recommended"
              f"{f' (at most {err.max_feasible})' if err.max_feasible else ''}.", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (GraphCPDError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as err:  # noqa: BLE001
        print(f"internal error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
