"""Command-line pipeline.

Subcommands:
  synth      generate a synthetic grid from a SynthSpec JSON
  calibrate  build and save an MI recalibration curve
  analyze    full run: load, preprocess, calibrate, pair matrices,
             surrogate ensemble, significance, node fields
  extract    pair dossiers from a finished run directory
  fields     recompute node fields from a finished run's matrices

Runs are config-driven (single JSON document, flags override fields) and
deterministic: input bytes plus config determine output bytes, the worker
count and output directory excluded from the config hash. Partial outputs
go to a temp area next to the target directory and are promoted only when
the run finishes.

Exit codes: 0 success, 2 config error, 3 data/format error, 4 numerical.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import shutil
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels, preprocess
from .analysis import (PairMatrix, extra_normal_fields, extract_pair,
                       node_average, pairwise_correlation, pairwise_mi,
                       sample_pairs, significance, significance_threshold,
                       surrogate_mi_stats)
from .errors import (ConfigError, ConsistencyError, DataError, FormatError,
                     GridmiError, NumericalError)
from .estimators import CalibrationCurve, build_calibration
from .grid_io import GRID_FORMATS, drop_poles, load_grid, save_field, save_grid
from .surrogates import SurrogateSpec
from .synth import SynthSpec, make_grid_from_spec

MATRIX_FILES = {
    "correlation": "correlation.pmat",
    "mi_calibrated": "mi_calibrated.pmat",
    "mi_surr_mean": "mi_surr_mean.pmat",
    "exceed_count": "exceed_count.pmat",
    "significant": "significant.pmat",
}
FIELD_FILES = {
    "mi_mean": "mi_mean.csv",
    "mi_surr_mean": "mi_surr_mean.csv",
    "extra_normal": "extra_normal.csv",
    "extra_normal_relative": "extra_normal_relative.csv",
}


def _note(msg: str) -> None:
    print(f"gridmi: {msg}", file=sys.stderr)


@dataclass
class RunConfig:
    """Resolved analyze configuration. See default_config() for the JSON shape."""

    input_path: str
    input_format: str = "flatbin"
    drop_poles: bool = False
    stages: list = field(default_factory=lambda: ["anomaly"])
    bins: int = 8
    calibration: dict = field(default_factory=dict)
    master_seed: int = 0
    n_surr: int = 99
    alpha: float = 0.05
    threads: int = 1
    out_dir: str = "gridmi-out"
    matrices: bool = True
    fields: bool = True
    summary: bool = True
    scatter_sample: int = 0
    pairs: list = field(default_factory=list)

    def validate(self) -> None:
        if self.input_format not in GRID_FORMATS:
            raise ConfigError(f"unknown input format '{self.input_format}'")
        if not os.path.exists(self.input_path):
            raise ConfigError(f"input path does not exist: {self.input_path}")
        for name in self.stages:
            if name not in preprocess.STAGES:
                raise ConfigError(f"unknown preprocessing stage '{name}'")
        if len(set(self.stages)) != len(self.stages):
            raise ConfigError("duplicate preprocessing stage")
        if self.bins < 2:
            raise ConfigError(f"bins must be >= 2, got {self.bins}")
        if not (0.0 < self.alpha <= 0.5):
            raise ConfigError(f"alpha must lie in (0, 0.5], got {self.alpha}")
        if self.n_surr < 1:
            raise ConfigError(f"surrogate count must be >= 1, got {self.n_surr}")
        significance_threshold(self.alpha, self.n_surr)
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if self.scatter_sample < 0:
            raise ConfigError("scatter_sample must be >= 0")
        if not (0 <= self.master_seed < 2 ** 64):
            raise ConfigError("seed must fit in 64 bits")
        cal = self.calibration
        if "path" in cal:
            if not os.path.exists(cal["path"]):
                raise ConfigError(f"calibration path does not exist: {cal['path']}")
        else:
            if cal.get("replicates", 1000) < 100:
                raise ConfigError("calibration needs at least 100 replicates")
            if not (0.0 < cal.get("rho_max", 0.95) < 1.0):
                raise ConfigError("calibration rho_max must lie in (0, 1)")
            if not (0.0 < cal.get("rho_step", 0.05) <= cal.get("rho_max", 0.95)):
                raise ConfigError("calibration rho_step out of range")
        for pair in self.pairs:
            if len(pair) != 2 or pair[0] == pair[1] or min(pair) < 0:
                raise ConfigError(f"bad dossier pair {pair}")

    def hashable(self) -> dict:
        """Config dict that determines output bytes: everything except the
        output directory and the worker count."""
        doc = {
            "input": {"path": self.input_path, "format": self.input_format,
                      "drop_poles": self.drop_poles},
            "stages": list(self.stages),
            "bins": self.bins,
            "calibration": dict(self.calibration),
            "surrogate": {"master_seed": self.master_seed, "n_surr": self.n_surr},
            "alpha": self.alpha,
            "outputs": {"matrices": self.matrices, "fields": self.fields,
                        "summary": self.summary,
                        "scatter_sample": self.scatter_sample,
                        "pairs": [list(p) for p in self.pairs]},
        }
        return doc

    def config_hash(self) -> str:
        canon = json.dumps(self.hashable(), sort_keys=True)
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


_CONFIG_KEYS = {
    "": {"input", "stages", "bins", "calibration", "surrogate", "alpha",
         "threads", "outputs"},
    "input": {"path", "format", "drop_poles"},
    "surrogate": {"master_seed", "n_surr"},
    "calibration": {"path", "rho_max", "rho_step", "replicates", "seed"},
    "outputs": {"directory", "matrices", "fields", "summary",
                "scatter_sample", "pairs"},
}


def _reject_unknown_keys(section: str, block: dict) -> None:
    # a typo'd key silently falling back to its default is worse than an error
    extra = sorted(set(block) - _CONFIG_KEYS[section])
    if extra:
        where = f"config.{section}" if section else "config"
        raise ConfigError(f"unknown {where} key(s): {', '.join(extra)}")


def _config_from_doc(doc: dict) -> RunConfig:
    """Build a RunConfig from the nested JSON document shape."""
    inp = doc.get("input", {})
    out = doc.get("outputs", {})
    surr = doc.get("surrogate", {})
    for section, block in (("", doc), ("input", inp), ("outputs", out),
                           ("surrogate", surr),
                           ("calibration", doc.get("calibration", {}))):
        _reject_unknown_keys(section, block)
    if "path" not in inp:
        raise ConfigError("config lacks input.path")
    return RunConfig(
        input_path=inp["path"],
        input_format=inp.get("format", "flatbin"),
        drop_poles=bool(inp.get("drop_poles", False)),
        stages=list(doc.get("stages", ["anomaly"])),
        bins=int(doc.get("bins", 8)),
        calibration=dict(doc.get("calibration", {})),
        master_seed=int(surr.get("master_seed", 0)),
        n_surr=int(surr.get("n_surr", 99)),
        alpha=float(doc.get("alpha", 0.05)),
        threads=int(doc.get("threads", 1)),
        out_dir=out.get("directory", "gridmi-out"),
        matrices=bool(out.get("matrices", True)),
        fields=bool(out.get("fields", True)),
        summary=bool(out.get("summary", True)),
        scatter_sample=int(out.get("scatter_sample", 0)),
        pairs=[tuple(int(v) for v in p) for p in out.get("pairs", [])],
    )


def _load_config_file(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if args.input is not None:
        cfg.input_path = args.input
    if args.format is not None:
        cfg.input_format = args.format
    if args.stages is not None:
        cfg.stages = [s for s in args.stages.split(",") if s]
    if args.bins is not None:
        cfg.bins = args.bins
    if args.surrogates is not None:
        cfg.n_surr = args.surrogates
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.alpha is not None:
        cfg.alpha = args.alpha
    if args.out is not None:
        cfg.out_dir = args.out
    if args.threads is not None:
        cfg.threads = args.threads
    if args.scatter_sample is not None:
        cfg.scatter_sample = args.scatter_sample
    if args.pair:
        cfg.pairs = list(cfg.pairs) + [_parse_pair(p) for p in args.pair]
    return cfg


def _parse_pair(text: str):
    try:
        i, j = (int(v) for v in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"--pair wants 'i,j', got '{text}'") from exc
    return (i, j)


def _resolve_curve(cfg: RunConfig, n_times: int) -> CalibrationCurve:
    cal = cfg.calibration
    if "path" in cal:
        curve = CalibrationCurve.load(cal["path"])
        if curve.n_samples != n_times or curve.n_bins != cfg.bins:
            raise ConsistencyError(
                f"calibration file built for (T={curve.n_samples}, Q={curve.n_bins}), "
                f"run has (T={n_times}, Q={cfg.bins})"
            )
        return curve
    rho_max = float(cal.get("rho_max", 0.95))
    rho_step = float(cal.get("rho_step", 0.05))
    knots = int(round(rho_max / rho_step)) + 1
    rho_grid = np.linspace(0.0, rho_max, knots)
    return build_calibration(
        n_times, cfg.bins, rho_grid=rho_grid,
        replicates=int(cal.get("replicates", 1000)),
        seed=int(cal.get("seed", 0)),
    )


def _write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _promote(tmp_dir: str, out_dir: str) -> None:
    """Move finished artifacts into place, file by file."""
    for root, _, files in os.walk(tmp_dir):
        rel = os.path.relpath(root, tmp_dir)
        dest_root = out_dir if rel == "." else os.path.join(out_dir, rel)
        os.makedirs(dest_root, exist_ok=True)
        for name in files:
            os.replace(os.path.join(root, name), os.path.join(dest_root, name))
    shutil.rmtree(tmp_dir)


def run_analysis(cfg: RunConfig, summary_stdout: bool = False) -> dict:
    """Execute the full pipeline for a validated config; returns the summary."""
    cfg.validate()
    threads = _kernels.set_threads(cfg.threads)
    chash = cfg.config_hash()
    _note(f"config {chash[:12]} with {threads} worker(s)")

    grid = load_grid(cfg.input_path, format=cfg.input_format)
    if cfg.drop_poles:
        grid = drop_poles(grid)
        grid.validate()
    _note(f"loaded grid T={grid.n_times} N={grid.n_nodes} label='{grid.label}'")
    grid = preprocess.apply_stages(grid, cfg.stages)
    if cfg.stages:
        _note("stages applied: " + ",".join(cfg.stages))

    curve = _resolve_curve(cfg, grid.n_times)
    _note(f"calibration ready ({curve.knots.shape[0]} knots, seed {curve.seed})")

    corr = pairwise_correlation(grid)
    data_mi = pairwise_mi(grid, cfg.bins, curve)
    _note(f"data matrices done ({corr.stat.shape[0]} pairs)")

    spec = SurrogateSpec(master_seed=cfg.master_seed, n_surr=cfg.n_surr)

    def progress(k, total):
        if k % 20 == 0 or k == total:
            _note(f"surrogate {k}/{total}")

    surr_mean, exceed = surrogate_mi_stats(grid, spec, cfg.bins, curve, data_mi,
                                           progress=progress)
    sig, summ = significance(exceed, cfg.alpha, cfg.n_surr)
    _note(f"significant pairs: {summ.significant_pairs}/{summ.total_pairs}")

    mi_field = node_average(data_mi, grid.nodes)
    surr_field = node_average(surr_mean, grid.nodes)
    extra, relative = extra_normal_fields(mi_field, surr_field)

    provenance = {
        "config_hash": chash,
        "stages": list(cfg.stages),
        "bins": cfg.bins,
        "alpha": cfg.alpha,
        "input_label": grid.label,
        "surrogate": {"master_seed": spec.master_seed, "n_surr": spec.n_surr,
                      "derivation": spec.derivation},
        "calibration": {"T": curve.n_samples, "Q": curve.n_bins,
                        "seed": curve.seed, "replicates": curve.replicates},
    }
    summary_doc = {
        "config": cfg.hashable(),
        "config_hash": chash,
        "n_nodes": grid.n_nodes,
        "n_times": grid.n_times,
        "input_label": grid.label,
        "significance": {
            "alpha": summ.alpha,
            "n_surr": summ.n_surr,
            "threshold": significance_threshold(summ.alpha, summ.n_surr),
            "significant_pairs": summ.significant_pairs,
            "total_pairs": summ.total_pairs,
            "fraction": summ.fraction,
        },
        "fields": {
            "mi_mean": float(mi_field.values.mean()),
            "mi_surr_mean": float(surr_field.values.mean()),
            "extra_normal_mean": float(extra.values[extra.defined].mean()),
        },
        "derivation": spec.derivation,
    }

    out_dir = cfg.out_dir
    tmp_dir = out_dir.rstrip("/\\") + ".partial"
    if os.path.exists(tmp_dir):
        shutil.rmtree(tmp_dir)
    os.makedirs(tmp_dir)

    def sidecar(name, kind):
        _write_json(os.path.join(tmp_dir, name + ".json"),
                    {"artifact": name, "kind": kind, **provenance})

    curve.save(os.path.join(tmp_dir, "calibration.json"))
    if cfg.matrices:
        for mat in (corr, data_mi, surr_mean, exceed, sig):
            name = MATRIX_FILES[mat.kind]
            mat.save(os.path.join(tmp_dir, name))
            sidecar(name, mat.kind)
    if cfg.fields:
        for fld in (mi_field, surr_field, extra, relative):
            name = FIELD_FILES[fld.kind]
            save_field(fld, os.path.join(tmp_dir, name))
            sidecar(name, fld.kind)
    if cfg.scatter_sample > 0:
        rows = ["i,j,r,mi_data,mi_surr_mean,exceed_count"]
        for i, j in sample_pairs(grid.n_nodes, cfg.scatter_sample, cfg.master_seed):
            rows.append(
                f"{i},{j},{float(corr.get(i, j))!r},{float(data_mi.get(i, j))!r},"
                f"{float(surr_mean.get(i, j))!r},{int(exceed.get(i, j))}"
            )
        with open(os.path.join(tmp_dir, "scatter.csv"), "w", encoding="utf-8") as fh:
            fh.write("\n".join(rows) + "\n")
        sidecar("scatter.csv", "pair_sample")
    if cfg.pairs:
        os.makedirs(os.path.join(tmp_dir, "pairs"), exist_ok=True)
        for i, j in cfg.pairs:
            dossier = extract_pair(grid, i, j, q=cfg.bins, curve=curve)
            dossier["provenance"] = provenance
            _write_json(os.path.join(tmp_dir, "pairs", f"pair_{i}_{j}.json"), dossier)
    if cfg.summary:
        _write_json(os.path.join(tmp_dir, "summary.json"), summary_doc)

    os.makedirs(out_dir, exist_ok=True)
    _promote(tmp_dir, out_dir)
    _note(f"outputs promoted to {out_dir}")
    if summary_stdout:
        print(json.dumps(summary_doc, sort_keys=True, indent=1))
    return summary_doc


def _cmd_analyze(args) -> int:
    doc = _load_config_file(args.config) if args.config else {}
    if not doc and args.input is None:
        raise ConfigError("analyze needs --config or --input")
    if doc:
        cfg = _config_from_doc(doc)
    else:
        cfg = RunConfig(input_path=args.input)
    cfg = _apply_overrides(cfg, args)
    run_analysis(cfg, summary_stdout=args.summary_stdout)
    return 0


def _cmd_synth(args) -> int:
    doc = _load_config_file(args.spec)
    try:
        spec = SynthSpec(
            kind=doc["kind"],
            n_times=int(doc["T"]),
            n_nodes=int(doc["N"]),
            seed=int(doc.get("seed", 0)) if args.seed is None else args.seed,
            period=int(doc.get("period", 12)),
            params=dict(doc.get("params", {})),
        )
    except KeyError as exc:
        raise ConfigError(f"synth spec lacks field {exc}") from exc
    grid = make_grid_from_spec(spec)
    save_grid(grid, args.out, format=args.format,
              extra_meta={"synth": {"kind": spec.kind, "seed": spec.seed,
                                    "params": spec.params}})
    _note(f"wrote {spec.kind} grid T={grid.n_times} N={grid.n_nodes} to {args.out}")
    return 0


def _cmd_calibrate(args) -> int:
    knots = int(round(args.rho_max / args.rho_step)) + 1
    rho_grid = np.linspace(0.0, args.rho_max, knots)
    curve = build_calibration(args.samples, args.bins, rho_grid=rho_grid,
                              replicates=args.replicates, seed=args.seed)
    curve.save(args.out)
    _note(f"wrote calibration (T={args.samples}, Q={args.bins}, "
          f"{curve.knots.shape[0]} knots) to {args.out}")
    return 0


def _load_run(run_dir: str):
    summary_path = os.path.join(run_dir, "summary.json")
    if not os.path.exists(summary_path):
        raise ConfigError(f"no summary.json under {run_dir}; not a finished run?")
    with open(summary_path, "r", encoding="utf-8") as fh:
        summary = json.load(fh)
    cfg = _config_from_doc(summary["config"])
    cfg.out_dir = run_dir
    return cfg, summary


def _cmd_extract(args) -> int:
    cfg, _ = _load_run(args.run)
    pairs = [_parse_pair(p) for p in args.pair]
    if not pairs:
        raise ConfigError("extract needs at least one --pair i,j")
    grid = load_grid(cfg.input_path, format=cfg.input_format)
    if cfg.drop_poles:
        grid = drop_poles(grid)
    grid = preprocess.apply_stages(grid, cfg.stages)
    curve = CalibrationCurve.load(os.path.join(args.run, "calibration.json"))
    os.makedirs(os.path.join(args.run, "pairs"), exist_ok=True)
    for i, j in pairs:
        dossier = extract_pair(grid, i, j, q=cfg.bins, curve=curve)
        dossier["provenance"] = {"config_hash": cfg.config_hash(),
                                 "stages": list(cfg.stages)}
        path = os.path.join(args.run, "pairs", f"pair_{i}_{j}.json")
        _write_json(path, dossier)
        _note(f"wrote {path}")
    return 0


def _cmd_fields(args) -> int:
    cfg, _ = _load_run(args.run)
    mi = PairMatrix.load(os.path.join(args.run, MATRIX_FILES["mi_calibrated"]))
    surr = PairMatrix.load(os.path.join(args.run, MATRIX_FILES["mi_surr_mean"]))
    grid = load_grid(cfg.input_path, format=cfg.input_format)
    if cfg.drop_poles:
        grid = drop_poles(grid)
    if mi.n != grid.n_nodes:
        raise ConsistencyError(
            f"matrices built for n={mi.n}, input grid has {grid.n_nodes} nodes"
        )
    mi_field = node_average(mi, grid.nodes)
    surr_field = node_average(surr, grid.nodes)
    extra, relative = extra_normal_fields(mi_field, surr_field)
    for fld in (mi_field, surr_field, extra, relative):
        path = os.path.join(args.run, FIELD_FILES[fld.kind])
        save_field(fld, path)
        _note(f"wrote {path}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="gridmi",
        description="Nonlinear dependence screening for gridded time series",
    )
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic grid")
    p.add_argument("--spec", required=True, help="SynthSpec JSON path")
    p.add_argument("--out", required=True, help="output grid path")
    p.add_argument("--format", default="flatbin", choices=GRID_FORMATS)
    p.add_argument("--seed", type=int, default=None, help="override spec seed")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("calibrate", help="build an MI recalibration curve")
    p.add_argument("--samples", type=int, required=True, help="series length T")
    p.add_argument("--bins", type=int, default=8)
    p.add_argument("--replicates", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rho-max", type=float, default=0.95, dest="rho_max")
    p.add_argument("--rho-step", type=float, default=0.05, dest="rho_step")
    p.add_argument("--out", required=True, help="output curve JSON path")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("analyze", help="run the full pipeline")
    p.add_argument("--config", help="run config JSON")
    p.add_argument("--input", help="input grid path (overrides config)")
    p.add_argument("--format", choices=GRID_FORMATS)
    p.add_argument("--stages", help="comma list: anomaly,gaussianize,varnorm,detrend")
    p.add_argument("--bins", type=int)
    p.add_argument("--surrogates", type=int, help="ensemble size")
    p.add_argument("--seed", type=int, help="surrogate master seed")
    p.add_argument("--alpha", type=float)
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int)
    p.add_argument("--scatter-sample", type=int, dest="scatter_sample")
    p.add_argument("--pair", action="append", default=[],
                   help="dossier pair 'i,j' (repeatable)")
    p.add_argument("--summary-stdout", action="store_true",
                   help="print the summary JSON to stdout")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("extract", help="pair dossiers from a finished run")
    p.add_argument("--run", required=True, help="run output directory")
    p.add_argument("--pair", action="append", default=[], help="'i,j' (repeatable)")
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("fields", help="recompute node fields from a run's matrices")
    p.add_argument("--run", required=True, help="run output directory")
    p.set_defaults(func=_cmd_fields)
    return top


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _note(f"config error: {exc}")
        return 2
    except (DataError, FormatError, ConsistencyError, OSError) as exc:
        _note(f"data error: {exc}")
        return 3
    except NumericalError as exc:
        _note(f"numerical error: {exc}")
        return 4
    except GridmiError as exc:
        _note(f"error: {exc}")
        return 3


if __name__ == "__main__":
    sys.exit(main())
