"""Scenario descriptor files for the simulation harness.

A descriptor is a JSON object; unknown keys at any level are rejected
with the key named. Bundled descriptors live in ``graphcpd/scenarios``.
"""

from __future__ import annotations

import json
from dataclasses import replace
from importlib import resources
from pathlib import Path

from .detect import DetectionConfig
from .edgestats import StatKind
from .errors import InvalidParameterError
from .simlab import (
    ArklConfig,
    Change,
    Detector,
    ErrorFamily,
    ExperimentReport,
    run_experiment,
    run_segmentation_experiment,
)

TOP_KEYS = {"name", "description", "kind", "replicates", "seed", "data", "detection",
            "sweep", "size_adjusted", "tolerance"}
DATA_KEYS = {"n", "m", "basis", "n_basis", "kappa", "variances", "psi_seed", "error",
             "changes", "burn_in"}
ERROR_KEYS = {"family", "param"}
CHANGE_KEYS = {"location", "kind", "magnitude", "family"}
DETECTION_KEYS = {"trees", "k_trees", "statistics", "p", "shuffles", "alpha",
                  "statistic", "tree", "min_segment"}
SWEEP_KEYS = {"parameter", "values", "change"}
SWEEP_PARAMS = {"magnitude", "location", "kappa", "n", "error_param"}
KINDS = ("size", "power", "segmentation")


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise InvalidParameterError(f"{where} must be a JSON object")
    for key in obj:
        if key not in allowed:
            raise InvalidParameterError(f"unknown key {key!r} in {where}")


def bundled_names() -> list[str]:
    root = resources.files("graphcpd") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_descriptor(name_or_path) -> dict:
    path = Path(name_or_path)
    if path.suffix == ".json" and path.exists():
        text = path.read_text()
    else:
        res = resources.files("graphcpd") / "scenarios" / f"{name_or_path}.json"
        if not res.is_file():
            raise InvalidParameterError(
                f"no scenario file or bundled scenario named {name_or_path!r}; "
                f"bundled: {', '.join(bundled_names())}"
            )
        text = res.read_text()
    try:
        desc = json.loads(text)
    except json.JSONDecodeError as err:
        raise InvalidParameterError(f"scenario is not valid JSON: {err}") from err
    validate(desc)
    return desc


def validate(desc: dict) -> None:
    _check_keys(desc, TOP_KEYS, "scenario")
    if desc.get("kind", "power") not in KINDS:
        raise InvalidParameterError(f"scenario kind must be one of {KINDS}")
    _check_keys(desc.get("data", {}), DATA_KEYS, "data")
    if "error" in desc.get("data", {}):
        _check_keys(desc["data"]["error"], ERROR_KEYS, "data.error")
    for i, ch in enumerate(desc.get("data", {}).get("changes", [])):
        _check_keys(ch, CHANGE_KEYS, f"data.changes[{i}]")
        if "family" in ch:
            _check_keys(ch["family"], ERROR_KEYS, f"data.changes[{i}].family")
    _check_keys(desc.get("detection", {}), DETECTION_KEYS, "detection")
    if "sweep" in desc:
        _check_keys(desc["sweep"], SWEEP_KEYS, "sweep")
        if desc["sweep"].get("parameter") not in SWEEP_PARAMS:
            raise InvalidParameterError(
                f"sweep parameter must be one of {sorted(SWEEP_PARAMS)}"
            )


def _family(obj) -> ErrorFamily:
    if obj is None:
        return ErrorFamily()
    return ErrorFamily(obj.get("family", "normal"), obj.get("param"))


def _location(loc, n: int) -> int:
    if loc == "mid":
        return n // 2
    if isinstance(loc, float) and 0 < loc < 1:
        return int(round(loc * n))
    return int(loc)


def _data_config(data: dict, n: int | None = None, overrides: dict | None = None) -> ArklConfig:
    data = dict(data)
    n = int(n if n is not None else data.get("n", 50))
    changes_raw = [dict(c) for c in data.get("changes", [])]
    overrides = overrides or {}
    idx = overrides.get("change", 0)
    if "magnitude" in overrides or "location" in overrides:
        if not changes_raw:
            raise InvalidParameterError("sweeping a change parameter needs data.changes")
        changes_raw[idx].update({k: overrides[k] for k in ("magnitude", "location") if k in overrides})
    changes = []
    for c in changes_raw:
        family = _family(c["family"]) if "family" in c else None
        mag = c.get("magnitude", 0.0)
        if c["kind"] == "distribution" and family is not None and "magnitude" in c:
            family = ErrorFamily(family.name, mag)
        changes.append(Change(_location(c.get("location", "mid"), n), c["kind"],
                              float(mag) if mag is not None else 0.0, family))
    err = _family(data.get("error"))
    if "error_param" in overrides:
        err = ErrorFamily(err.name, overrides["error_param"])
    return ArklConfig(
        n=n, m=int(data.get("m", 50)), basis=data.get("basis", "bspline"),
        n_basis=int(data.get("n_basis", 4)),
        kappa=float(overrides.get("kappa", data.get("kappa", 0.0))),
        variances=tuple(data.get("variances", (3.0, 2.0, 1.0, 0.5))),
        psi_seed=data.get("psi_seed"), error_family=err, changes=tuple(changes),
        burn_in=int(data.get("burn_in", 50)),
    )


def _as_list(v):
    return v if isinstance(v, list) else [v]


def _detectors(det: dict) -> list[Detector]:
    stats = tuple(StatKind.parse(s) for s in det.get("statistics",
                                                      ["original", "weighted", "maxtype", "generalized"]))
    out = []
    for p in _as_list(det.get("p", 2.0)):
        for tree in _as_list(det.get("trees", ["mst"])):
            for k in _as_list(det.get("k_trees", [15])):
                out.append(Detector(tree, int(k), float(p), int(det.get("shuffles", 1000)),
                                    float(det.get("alpha", 0.05)), stats))
    return out


def points(desc: dict) -> list:
    data = desc.get("data", {})
    sweep = desc.get("sweep")
    if desc.get("kind") == "size" or sweep is None:
        cfg = _data_config(data)
        if desc.get("kind") == "size":
            cfg = cfg.without_changes()
        return [("none", None, cfg)]
    param = sweep["parameter"]
    out = []
    for v in sweep["values"]:
        ov = {"change": sweep.get("change", 0)}
        if param == "n":
            cfg = _data_config(data, n=int(v), overrides=ov)
        else:
            ov[param] = v
            cfg = _data_config(data, overrides=ov)
        out.append((param, v, cfg))
    return out


def run_scenario(desc: dict, replicates: int | None = None, seed: int | None = None,
                 shuffles: int | None = None, workers: int = 1) -> ExperimentReport:
    validate(desc)
    reps = int(replicates if replicates is not None else desc.get("replicates", 100))
    seed = int(seed if seed is not None else desc.get("seed", 0))
    det = dict(desc.get("detection", {}))
    if shuffles is not None:
        det["shuffles"] = shuffles
    name = desc.get("name", "custom")
    kind = desc.get("kind", "power")
    if kind == "segmentation":
        cfg = DetectionConfig(
            statistic=det.get("statistic", "maxtype"), tree=det.get("tree", "mst"),
            k_trees=int(det.get("k_trees", 5)), p=float(det.get("p", 2.0)),
            alpha=float(det.get("alpha", 0.05)), shuffles=int(det.get("shuffles", 1000)),
            min_segment=int(det.get("min_segment", 10)),
        )
        report = run_segmentation_experiment(
            _data_config(desc.get("data", {})), reps, cfg, seed,
            tolerance=int(desc.get("tolerance", 10)), scenario=name, workers=workers)
    else:
        report = run_experiment(points(desc), _detectors(det), reps, seed, name, kind,
                                bool(desc.get("size_adjusted", False)), workers)
    report.metadata["descriptor"] = desc
    return report
