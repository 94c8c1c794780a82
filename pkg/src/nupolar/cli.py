"""Command-line driver for reproducible experiments.

Subcommands: generate, extract, cv, sweep, tree-sweep, noise-sweep,
energy-eval.  Parameters resolve as CLI flag > JSON config file (--config)
> quick-mode default (--quick) > built-in default, and every run writes
the fully resolved parameters to resolved_config.json next to its outputs.
Exit codes: 0 success, 1 internal error, 2 usage/config error.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import fields as dataclass_fields
from dataclasses import replace as dc_replace
from pathlib import Path

import numpy as np

from . import __version__, svgplot
from .descriptor import (
    DescriptorConfig,
    PAPER_BINS_GRID,
    PAPER_RADIUS_GRID,
    extract_table,
    write_features_csv,
)
from .evaluation import (
    DEFAULT_ENERGY_EDGES,
    CvReport,
    cross_validate,
    noise_sweep,
    report_to_json,
)
from .events import DatasetError, load_dataset, save_dataset
from .forest import ForestConfig
from .synthgen import GenParams, generate_dataset

# --quick scales experiments down roughly 10x for CI-sized runs
QUICK_DEFAULTS = {"n_events": 700, "trees": 200, "repeats": 3}
DEFAULT_TREE_COUNTS = (10, 50, 100, 500, 1000, 2000)
DEFAULT_NOISE_LEVELS = (0, 1, 2, 3, 4, 5)


class UsageError(Exception):
    """Bad flags/config; maps to exit code 2."""


def _load_config_file(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as err:
        raise UsageError(f"cannot read config file {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise UsageError(f"config file {path}: invalid JSON ({err})") from err
    if not isinstance(obj, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    return obj


class Resolver:
    """Layered parameter lookup recording everything it resolved."""

    def __init__(self, args, quick_keys=()):
        self.args = args
        self.cfg = _load_config_file(getattr(args, "config", None))
        self.quick = bool(getattr(args, "quick", False))
        self.quick_keys = set(quick_keys)
        self.resolved = {}

    def get(self, name, default, quick_key=None):
        flag_val = getattr(self.args, name.replace("-", "_"), None)
        if flag_val is not None:
            value = flag_val
        elif name in self.cfg:
            value = self.cfg[name]
        elif self.quick and quick_key in QUICK_DEFAULTS:
            value = QUICK_DEFAULTS[quick_key]
        else:
            value = default
        self.resolved[name] = value
        return value


def _prepare_out(resolver) -> Path:
    out = getattr(resolver.args, "out", None)
    if out is None:
        raise UsageError("--out is required")
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as err:
        raise UsageError(f"output path {out} is not writable: {err}") from err
    return out


def _write_resolved(out: Path, resolver, command: str) -> None:
    obj = {"command": command, "version": __version__, **resolver.resolved}
    (out / "resolved_config.json").write_text(
        json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _descriptor_from(resolver) -> DescriptorConfig:
    n_bins = int(resolver.get("bins", 36))
    radius = float(resolver.get("radius", 10.0))
    stats = resolver.get("stats", True)
    try:
        return DescriptorConfig(n_bins=n_bins, radius=radius, include_stats=bool(stats))
    except ValueError as err:
        raise UsageError(str(err)) from err


def _forest_from(resolver, seed: int) -> ForestConfig:
    try:
        return ForestConfig(
            n_trees=int(resolver.get("trees", 1000, quick_key="trees")),
            max_features=resolver.get("max-features", None),
            min_samples_split=int(resolver.get("min-samples-split", 2)),
            max_depth=resolver.get("max-depth", None),
            seed=seed,
        )
    except ValueError as err:
        raise UsageError(str(err)) from err


def _load_events(resolver):
    path = getattr(resolver.args, "dataset", None)
    if path is None:
        raise UsageError("--dataset is required")
    resolver.resolved["dataset"] = str(path)
    try:
        return load_dataset(path).events
    except (DatasetError, OSError) as err:
        raise UsageError(f"cannot load dataset {path}: {err}") from err


def _write_report(out: Path, report: CvReport, stem: str = "report") -> None:
    (out / f"{stem}.json").write_text(report_to_json(report) + "\n", encoding="utf-8")
    with open(out / f"{stem.replace('report', 'roc') if stem != 'report' else 'roc'}.csv",
              "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["fpr", "tpr", "threshold"])
        for f, t, thr in zip(report.roc.fpr, report.roc.tpr, report.roc.thresholds):
            w.writerow([repr(float(f)), repr(float(t)),
                        "inf" if np.isinf(thr) else repr(float(thr))])


def _parse_grid(text, cast, what):
    try:
        vals = [cast(tok) for tok in str(text).split(",") if tok.strip()]
    except ValueError as err:
        raise UsageError(f"bad {what} list {text!r}: {err}") from err
    if not vals:
        raise UsageError(f"{what} list is empty")
    return vals


# ---------------------------------------------------------------- generate

def cmd_generate(args) -> int:
    rv = Resolver(args, quick_keys={"n_events"})
    out = _prepare_out(rv)
    seed = int(rv.get("seed", 0))
    kwargs = {}
    gen_field_names = {f.name for f in dataclass_fields(GenParams)}
    for key, val in rv.cfg.items():
        if key in gen_field_names:
            kwargs[key] = val
    kwargs["n_events"] = int(rv.get("n-events", kwargs.get("n_events", 7090),
                                    quick_key="n_events"))
    pf = rv.get("positive-fraction", kwargs.get("positive_fraction"))
    if pf is not None:
        kwargs["positive_fraction"] = float(pf)
    kwargs["seed"] = seed
    try:
        params = GenParams(**kwargs)
    except (TypeError, ValueError) as err:
        raise UsageError(f"bad generator parameters: {err}") from err
    rv.resolved["gen_params"] = params.as_dict()
    _write_resolved(out, rv, "generate")
    ds = generate_dataset(params)
    save_dataset(ds, out)
    print(
        f"generated {ds.manifest['n_events']} events "
        f"({ds.manifest['n_positive']} sig / {ds.manifest['n_negative']} bkg), "
        f"seed {seed} -> {out}"
    )
    return 0


# ----------------------------------------------------------------- extract

def cmd_extract(args) -> int:
    rv = Resolver(args)
    out = _prepare_out(rv)
    events = _load_events(rv)
    cfg = _descriptor_from(rv)
    _write_resolved(out, rv, "extract")
    table = extract_table(events, cfg)
    dest = out / "features.csv"
    write_features_csv(table, dest)
    print(
        f"wrote {len(table.ids)} rows x {3 + table.X.shape[1]} columns -> {dest}"
    )
    return 0


# ---------------------------------------------------------------------- cv

def _run_cv(rv, events, descriptor_cfg, forest_cfg, energy_bins=None):
    folds = int(rv.get("folds", 5))
    repeats = int(rv.get("repeats", 10, quick_key="repeats"))
    seed = int(rv.get("seed", 0))
    threads = int(rv.get("threads", os.cpu_count() or 1))
    return cross_validate(
        events, descriptor_cfg, forest_cfg,
        folds=folds, repeats=repeats, seed=seed, threads=threads,
        energy_bins=energy_bins,
    )


def cmd_cv(args) -> int:
    rv = Resolver(args, quick_keys={"trees", "repeats"})
    out = _prepare_out(rv)
    events = _load_events(rv)
    dcfg = _descriptor_from(rv)
    fcfg = _forest_from(rv, int(rv.get("seed", 0)))
    _write_resolved(out, rv, "cv")
    report = _run_cv(rv, events, dcfg, fcfg)
    _write_report(out, report)
    print(report.summary_line())
    if report.repeats < 2:
        print("note: std undefined for a single repetition")
    return 0


# ------------------------------------------------------------------- sweep

def _read_existing_keys(path: Path, n_key_cols: int):
    if not path.exists():
        return set(), []
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return set(), []
    return {tuple(r[:n_key_cols]) for r in rows[1:]}, rows[1:]


def cmd_sweep(args) -> int:
    rv = Resolver(args, quick_keys={"trees", "repeats"})
    out = _prepare_out(rv)
    events = _load_events(rv)
    bins_grid = _parse_grid(rv.get("bins-grid", ",".join(map(str, PAPER_BINS_GRID))),
                            int, "bins")
    radius_grid = _parse_grid(
        rv.get("radius-grid", ",".join(repr(r) for r in PAPER_RADIUS_GRID)),
        float, "radius")
    stats_text = rv.get("stats-grid", "on,off")
    stats_grid = []
    for tok in str(stats_text).split(","):
        tok = tok.strip().lower()
        if tok in ("on", "true", "1"):
            stats_grid.append(True)
        elif tok in ("off", "false", "0"):
            stats_grid.append(False)
        elif tok:
            raise UsageError(f"bad stats grid token {tok!r} (use on/off)")
    if not stats_grid:
        raise UsageError("stats grid is empty")
    fcfg = _forest_from(rv, int(rv.get("seed", 0)))
    skip_existing = bool(getattr(args, "skip_existing", False))
    _write_resolved(out, rv, "sweep")

    dest = out / "sweep.csv"
    header = ["bins", "radius", "stats", "auc_mean", "auc_std", "acc_mean", "acc_std"]
    done, old_rows = _read_existing_keys(dest, 3) if skip_existing else (set(), [])
    mode = "a" if (skip_existing and dest.exists() and old_rows is not None and dest.stat().st_size) else "w"
    rows = list(old_rows)
    with open(dest, mode, newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if mode == "w":
            w.writerow(header)
        for n_bins in bins_grid:
            for radius in radius_grid:
                for stats in stats_grid:
                    key = (str(n_bins), _fmt(float(radius)), "on" if stats else "off")
                    if key in done:
                        continue
                    dcfg = DescriptorConfig(n_bins=n_bins, radius=radius,
                                            include_stats=stats)
                    report = _run_cv(rv, events, dcfg, fcfg)
                    row = list(key) + [
                        _fmt(report.auc_mean), _fmt(report.auc_std),
                        _fmt(report.acc_mean), _fmt(report.acc_std),
                    ]
                    w.writerow(row)
                    fh.flush()
                    rows.append(row)
                    print(
                        f"bins={n_bins} radius={radius:g} stats={key[2]}: "
                        + report.summary_line()
                    )
    series = {}
    for r in rows:
        label = f"B={r[0]} stats {r[2]}"
        series.setdefault(label, {"label": label, "x": [], "y": []})
        series[label]["x"].append(float(r[1]))
        series[label]["y"].append(float(r[3]))
    for s in series.values():
        order = np.argsort(s["x"])
        s["x"] = [s["x"][i] for i in order]
        s["y"] = [s["y"][i] for i in order]
    (out / "sweep.svg").write_text(
        svgplot.line_chart(list(series.values()), title="Descriptor sweep",
                           xlabel="radius [px]", ylabel="AUC (mean over repeats)"),
        encoding="utf-8",
    )
    if rows:
        best = max(rows, key=lambda r: float(r[3]))
        print(f"best: bins={best[0]} radius={best[1]} stats={best[2]} auc={best[3]}")
    return 0


# -------------------------------------------------------------- tree-sweep

def cmd_tree_sweep(args) -> int:
    rv = Resolver(args, quick_keys={"repeats"})
    out = _prepare_out(rv)
    events = _load_events(rv)
    counts = _parse_grid(
        rv.get("tree-counts", ",".join(map(str, DEFAULT_TREE_COUNTS))), int, "tree count")
    deduped = list(dict.fromkeys(counts))
    if len(deduped) != len(counts):
        print("warning: duplicate tree counts removed", file=sys.stderr)
    dcfg = _descriptor_from(rv)
    seed = int(rv.get("seed", 0))
    base_cfg = _forest_from(rv, seed)
    _write_resolved(out, rv, "tree-sweep")
    table = extract_table(events, dcfg)   # descriptor fixed across the sweep
    dest = out / "tree_sweep.csv"
    rows = []
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["trees", "auc_mean", "auc_std", "acc_mean", "acc_std"])
        for n_trees in deduped:
            fcfg = dc_replace(base_cfg, n_trees=n_trees)
            report = cross_validate(
                features=table, forest_cfg=fcfg,
                folds=int(rv.get("folds", 5)),
                repeats=int(rv.get("repeats", 10, quick_key="repeats")),
                seed=seed, threads=int(rv.get("threads", os.cpu_count() or 1)),
            )
            row = [str(n_trees), _fmt(report.auc_mean), _fmt(report.auc_std),
                   _fmt(report.acc_mean), _fmt(report.acc_std)]
            w.writerow(row)
            fh.flush()
            rows.append(row)
            print(f"trees={n_trees}: " + report.summary_line())
    series = [{
        "label": "AUC",
        "x": [float(r[0]) for r in rows],
        "y": [float(r[1]) for r in rows],
    }]
    (out / "tree_sweep.svg").write_text(
        svgplot.line_chart(series, title="Forest size sweep", xlabel="trees",
                           ylabel="AUC (mean over repeats)"),
        encoding="utf-8",
    )
    return 0


# ------------------------------------------------------------- noise-sweep

def cmd_noise_sweep(args) -> int:
    rv = Resolver(args, quick_keys={"trees", "repeats"})
    out = _prepare_out(rv)
    events = _load_events(rv)
    levels = _parse_grid(
        rv.get("levels", ",".join(map(str, DEFAULT_NOISE_LEVELS))), int, "noise level")
    if any(k < 0 for k in levels):
        raise UsageError("noise levels must be non-negative integers")
    dcfg = _descriptor_from(rv)
    seed = int(rv.get("seed", 0))
    fcfg = _forest_from(rv, seed)
    _write_resolved(out, rv, "noise-sweep")
    results = noise_sweep(
        events, levels, dcfg, fcfg,
        folds=int(rv.get("folds", 5)),
        repeats=int(rv.get("repeats", 10, quick_key="repeats")),
        seed=seed, threads=int(rv.get("threads", os.cpu_count() or 1)),
        shared_offset=bool(rv.get("shared-offset", False)),
    )
    dest = out / "noise_sweep.csv"
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["slice", "auc_mean", "auc_std", "acc_mean", "acc_std"])
        for k, report in results:
            w.writerow([str(k), _fmt(report.auc_mean), _fmt(report.auc_std),
                        _fmt(report.acc_mean), _fmt(report.acc_std)])
            fh.flush()
            print(f"noise level {k}: " + report.summary_line())
    series = [
        {"label": f"k={k}", "x": report.roc.fpr.tolist(), "y": report.roc.tpr.tolist()}
        for k, report in results
    ]
    (out / "noise_roc.svg").write_text(
        svgplot.line_chart(series, title="ROC vs PIV noise level",
                           xlabel="false positive rate",
                           ylabel="true positive rate", markers=False),
        encoding="utf-8",
    )
    return 0


# ------------------------------------------------------------- energy-eval

def cmd_energy_eval(args) -> int:
    rv = Resolver(args, quick_keys={"trees", "repeats"})
    out = _prepare_out(rv)
    events = _load_events(rv)
    edges = _parse_grid(
        rv.get("edges", ",".join(repr(e) for e in DEFAULT_ENERGY_EDGES)),
        float, "energy edge")
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise UsageError(f"energy edges must be strictly increasing, got {edges}")
    dcfg = _descriptor_from(rv)
    seed = int(rv.get("seed", 0))
    fcfg = _forest_from(rv, seed)
    _write_resolved(out, rv, "energy-eval")
    report = _run_cv(rv, events, dcfg, fcfg, energy_bins=edges)
    _write_report(out, report)
    dest = out / "energy_eval.csv"
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["slice", "auc_mean", "auc_std", "acc_mean", "acc_std"])
        for s in report.energy_slices:
            if s.auc_mean is None:
                print(f"bin {s.lo:g}-{s.hi:g}: absent ({s.note})")
                continue
            w.writerow([f"{s.lo:g}-{s.hi:g}", _fmt(s.auc_mean), _fmt(s.auc_std),
                        _fmt(s.acc_mean), _fmt(s.acc_std)])
            fh.flush()
            print(f"bin {s.lo:g}-{s.hi:g}: AUC {s.auc_mean:.4f}")
    _energy_roc_overlay(out, report, edges)
    print(report.summary_line())
    return 0


def _energy_roc_overlay(out: Path, report: CvReport, edges) -> None:
    """Per-bin ROC curves over the pooled out-of-fold scores."""
    from .evaluation import roc_curve

    series = []
    for s in report.energy_slices:
        if s.auc_mean is None:
            continue
        if s.hi >= edges[-1]:
            mask = (report.energies_used >= s.lo) & (report.energies_used <= s.hi)
        else:
            mask = (report.energies_used >= s.lo) & (report.energies_used < s.hi)
        pooled = report.oof[:, mask].ravel()
        labels = np.tile(report.labels_used[mask], report.repeats)
        curve = roc_curve(pooled, labels)
        series.append({
            "label": f"{s.lo:g}-{s.hi:g} GeV (AUC {s.auc_mean:.3f})",
            "x": curve.fpr.tolist(),
            "y": curve.tpr.tolist(),
        })
    (out / "energy_roc.svg").write_text(
        svgplot.line_chart(series, title="Energy-range evaluation",
                           xlabel="false positive rate",
                           ylabel="true positive rate", markers=False),
        encoding="utf-8",
    )


# -------------------------------------------------------------------- main

def _add_common(p: argparse.ArgumentParser, with_dataset: bool = True) -> None:
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threads", type=int, help="worker thread cap (results unaffected)")
    p.add_argument("--quick", action="store_true",
                   help="CI-sized run: 700 events / 200 trees / 3 repeats defaults")
    if with_dataset:
        p.add_argument("--dataset", help="dataset directory (manifest.json + events.jsonl)")


def _add_descriptor_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bins", type=int, help="angular bins (default 36)")
    p.add_argument("--radius", type=float, help="disc radius in pixels (default 10)")
    p.add_argument("--stats", action=argparse.BooleanOptionalAction, default=None,
                   help="include the 5 per-view histogram statistics (default on)")


def _add_forest_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--trees", type=int, help="forest size (default 1000)")
    p.add_argument("--max-features", type=int,
                   help="features per split (default floor(sqrt(d)))")
    p.add_argument("--min-samples-split", type=int)
    p.add_argument("--max-depth", type=int)


def _add_cv_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--folds", type=int, help="CV folds (default 5)")
    p.add_argument("--repeats", type=int, help="CV repetitions (default 10)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nupolar",
        description="Polar charge-descriptor classification experiments "
                    "on synthetic two-view detector events.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic dataset directory")
    _add_common(p, with_dataset=False)
    p.add_argument("--n-events", type=int, help="number of events (default 7090)")
    p.add_argument("--positive-fraction", type=float,
                   help="signal fraction (default 3283/7090)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("extract", help="write the feature matrix CSV")
    _add_common(p)
    _add_descriptor_flags(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("cv", help="repeated stratified cross-validation")
    _add_common(p)
    _add_descriptor_flags(p)
    _add_forest_flags(p)
    _add_cv_flags(p)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("sweep", help="descriptor parameter sweep (bins x radius x stats)")
    _add_common(p)
    _add_forest_flags(p)
    _add_cv_flags(p)
    p.add_argument("--bins-grid", help="comma list (default 18,36,72,180)")
    p.add_argument("--radius-grid", help="comma list (default 2,5,10,20,50)")
    p.add_argument("--stats-grid", help="comma list of on/off (default on,off)")
    p.add_argument("--skip-existing", action="store_true",
                   help="skip combinations already present in sweep.csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("tree-sweep", help="AUC vs forest size")
    _add_common(p)
    _add_descriptor_flags(p)
    _add_forest_flags(p)
    _add_cv_flags(p)
    p.add_argument("--tree-counts", help="comma list (default 10,50,100,500,1000,2000)")
    p.set_defaults(func=cmd_tree_sweep)

    p = sub.add_parser("noise-sweep", help="full CV per PIV noise level")
    _add_common(p)
    _add_descriptor_flags(p)
    _add_forest_flags(p)
    _add_cv_flags(p)
    p.add_argument("--levels", help="comma list of pixel levels (default 0..5)")
    p.add_argument("--shared-offset", action="store_true",
                   help="apply one PIV offset to both views instead of "
                        "independent per-view offsets")
    p.set_defaults(func=cmd_noise_sweep)

    p = sub.add_parser("energy-eval", help="per-energy-bin AUC from one global CV")
    _add_common(p)
    _add_descriptor_flags(p)
    _add_forest_flags(p)
    _add_cv_flags(p)
    p.add_argument("--edges", help="comma list of bin edges (default 0.2,0.4,0.6,0.8,1.0)")
    p.set_defaults(func=cmd_energy_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 1
    except Exception as err:   # noqa: BLE001 - CLI boundary
        print(f"internal error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
