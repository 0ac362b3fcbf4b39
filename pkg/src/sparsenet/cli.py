"""Config-driven experiment runner.

Subcommands:

  run <config.ini>       train baselines / fixed-lambda models or run the
                         selection algorithms; writes report.json, report.csv,
                         per-row checkpoints and PNG figures into the output
                         directory (exit 0 on success / tolerance met,
                         3 when a selection ends without meeting tolerance)
  compare <reports...>   align rows of several report.json files side by side
  inspect <checkpoint>   print architecture, per-layer levels and ratio

Configs are INI files with [experiment], [data], [network], [train] and
[mode] sections; every key has a documented default and unknown keys are
hard errors (a typo in a lambda key must not silently change a run).  The
SPARSENET_OUTDIR environment variable relocates run outputs.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
import time
import warnings
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, losses
from .data import (Dataset, SurrogateProblem, load_mnist, make_cluster_classification,
                   make_mackey_glass, make_surrogate, parse_libsvm, split)
from .losses import ProbabilityFloorWarning
from .nn import NetworkArchitecture, Parameters, init_parameters, load_checkpoint, save_checkpoint
from .numerics import SeededRng
from .optim import (DivergenceError, NetworkProblem, TrainConfig, l2_descent,
                    proximal_descent)
from .reporting import (REPORT_SCHEMA, IncompatibleTasksError, SchemaMismatchError,
                        load_report, merge_reports, merged_to_csv, merged_to_markdown,
                        write_report)
from .select import SelectionConfig, Termination, select_multi, select_single, selection_report
from .sparsity import sparsity_profile

TASKS = ("regression", "classification", "surrogate")
MODES = ("l2_baseline", "l1_fixed", "select_single", "select_multi")

# Benchmark budgets the desk-scale defaults shrink from; runs below these
# get flagged in the report's deviations list.
REFERENCE_EPOCHS = {"regression": 50000, "classification": 200}

OUTDIR_ENV = "SPARSENET_OUTDIR"


class ConfigError(ValueError):
    """All configuration problems, reported together."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))


class _SectionReader:
    """Typed access to one INI section with unknown-key detection."""

    def __init__(self, parser, name, problems):
        self.name = name
        self.problems = problems
        self.raw = dict(parser[name]) if parser.has_section(name) else {}
        self.seen = set()

    def _take(self, key):
        self.seen.add(key)
        value = self.raw.get(key)
        return value.strip() if isinstance(value, str) else value

    def _fail(self, key, message):
        self.problems.append(f"[{self.name}] {key}: {message}")

    def string(self, key, default=None, choices=None, required=False):
        value = self._take(key)
        if value is None:
            if required:
                self._fail(key, "required")
            return default
        if choices and value not in choices:
            self._fail(key, f"must be one of {', '.join(choices)} (got {value!r})")
            return default
        return value

    def integer(self, key, default=None, required=False):
        value = self._take(key)
        if value is None:
            if required:
                self._fail(key, "required")
            return default
        try:
            return int(value)
        except ValueError:
            self._fail(key, f"not an integer: {value!r}")
            return default

    def real(self, key, default=None, required=False):
        value = self._take(key)
        if value is None:
            if required:
                self._fail(key, "required")
            return default
        try:
            return float(value)
        except ValueError:
            self._fail(key, f"not a number: {value!r}")
            return default

    def boolean(self, key, default=False):
        value = self._take(key)
        if value is None:
            return default
        if value.lower() in ("true", "yes", "1", "on"):
            return True
        if value.lower() in ("false", "no", "0", "off"):
            return False
        self._fail(key, f"not a boolean: {value!r}")
        return default

    def real_list(self, key, default=None, required=False):
        value = self._take(key)
        if value is None:
            if required:
                self._fail(key, "required")
            return default
        try:
            return [float(tok) for tok in value.replace(",", " ").split()]
        except ValueError:
            self._fail(key, f"not a list of numbers: {value!r}")
            return default

    def int_list(self, key, default=None, required=False):
        values = self.real_list(key, None, required)
        if values is None:
            return default
        out = []
        for v in values:
            if v != int(v):
                self._fail(key, f"expected integers, got {v}")
                return default
            out.append(int(v))
        return out

    def batch_size(self, key, default=None):
        value = self._take(key)
        if value is None or value.lower() == "full":
            return default
        try:
            return int(value)
        except ValueError:
            self._fail(key, f"expected an integer or 'full': {value!r}")
            return default

    def check_unknown(self):
        for key in self.raw:
            if key not in self.seen:
                self._fail(key, "unknown key")


def parse_experiment_config(path) -> dict:
    """Parse and validate an INI experiment config; raises ConfigError with
    every problem found."""
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as err:
        raise ConfigError([f"cannot read config {path}: {err}"])
    except configparser.Error as err:
        raise ConfigError([f"cannot parse config {path}: {err}"])

    problems: list[str] = []
    known_sections = {"experiment", "data", "network", "train", "mode"}
    for section in parser.sections():
        if section not in known_sections:
            problems.append(f"unknown section [{section}]")

    experiment = _SectionReader(parser, "experiment", problems)
    task = experiment.string("task", required=True, choices=TASKS)
    mode = experiment.string("mode", required=True, choices=MODES)
    seed = experiment.integer("seed", 0)
    name = experiment.string("name", path.stem)
    output = experiment.string("output", f"runs/{path.stem}")
    experiment.check_unknown()

    data = _SectionReader(parser, "data", problems)
    data_cfg: dict = {"data_seed": data.integer("data_seed")}
    if task == "regression":
        data_cfg["source"] = data.string("source", "mackey_glass")
        data_cfg["samples"] = data.integer("samples", 1385)
        data_cfg["train_count"] = data.integer("train_count", 1000)
        data_cfg["split_seed"] = data.integer("split_seed")
    elif task == "classification":
        data_cfg["source"] = data.string("source", "clusters", choices=("clusters", "idx"))
        if data_cfg["source"] == "idx":
            data_cfg["directory"] = data.string("directory", required=True)
        else:
            data_cfg["samples"] = data.integer("samples", 2000)
            data_cfg["features"] = data.integer("features", 16)
            data_cfg["classes"] = data.integer("classes", 4)
            data_cfg["train_count"] = data.integer("train_count", 1500)
        data_cfg["train_subset"] = data.integer("train_subset")
    else:
        data_cfg["dimension"] = data.integer("dimension", required=True)
        data_cfg["lower"] = data.real("lower", -2.0)
        data_cfg["upper"] = data.real("upper", 2.0)
        data_cfg["blocks"] = data.int_list("blocks")
    data.check_unknown()

    network_cfg = None
    if task == "surrogate":
        if parser.has_section("network"):
            problems.append("[network] does not apply to the surrogate task")
    else:
        network = _SectionReader(parser, "network", problems)
        network_cfg = {"widths": network.int_list("widths", required=True)}
        network.check_unknown()

    train = _SectionReader(parser, "train", problems)
    train_cfg = {
        "epochs": train.integer("epochs", required=True),
        "learning_rate": train.real("learning_rate", required=True),
        "batch_size": train.batch_size("batch_size"),
        "log_every": train.integer("log_every", 0),
        "max_grad_norm": train.real("max_grad_norm"),
    }
    train.check_unknown()

    mode_section = _SectionReader(parser, "mode", problems)
    mode_cfg: dict = {}
    if mode in ("l2_baseline", "l1_fixed"):
        mode_cfg["lambdas"] = mode_section.real_list("lambdas", required=True)
    else:
        if mode == "select_single":
            mode_cfg["targets"] = mode_section.integer("targets", required=True)
            mode_cfg["tolerance"] = mode_section.real("tolerance", 0.001)
        else:
            mode_cfg["targets"] = mode_section.int_list("targets", required=True)
            mode_cfg["tolerance"] = mode_section.real("tolerance", 0.05)
            mode_cfg["quorum"] = mode_section.integer("quorum")
        mode_cfg["lambda_high"] = mode_section.real_list("lambda_high", [1e-3])
        mode_cfg["lambda_low"] = mode_section.real_list("lambda_low", [1e-7])
        mode_cfg["max_iterations"] = mode_section.integer("max_iterations", 50)
        mode_cfg["warm_start"] = mode_section.boolean("warm_start", False)
    mode_section.check_unknown()

    if problems:
        raise ConfigError(problems)
    return {
        "task": task, "mode": mode, "seed": seed, "name": name, "output": output,
        "data": data_cfg, "network": network_cfg, "train": train_cfg, "mode_cfg": mode_cfg,
        "config_path": str(path),
    }


def _build_datasets(config) -> tuple:
    """Returns (train dataset, test dataset or None, deviations)."""
    task = config["task"]
    data_cfg = config["data"]
    deviations = []
    data_seed = data_cfg.get("data_seed")
    if task == "regression":
        source = data_cfg["source"]
        if source == "mackey_glass":
            kwargs = {"n_samples": data_cfg["samples"]}
            if data_seed is not None:
                kwargs["seed"] = data_seed
            full = make_mackey_glass(**kwargs)
            deviations.append("dataset generated in-repo (mackey_glass), not a retrieved benchmark file")
        else:
            try:
                full = parse_libsvm(source)
            except OSError as err:
                raise ConfigError([f"[data] source: cannot read {source}: {err}"])
        train, test = split(full, data_cfg["train_count"], data_cfg["split_seed"])
        return train, test, deviations
    if task == "classification":
        deviations.append("classification uses a fully connected network (no convolutional layers)")
        if data_cfg["source"] == "idx":
            directory = data_cfg["directory"]
            try:
                train, test = load_mnist(directory)
            except (OSError, FileNotFoundError) as err:
                raise ConfigError([f"[data] directory: {err}"])
        else:
            seed = data_seed if data_seed is not None else config["seed"]
            full = make_cluster_classification(data_cfg["samples"], data_cfg["features"],
                                               data_cfg["classes"], seed=seed)
            train, test = split(full, data_cfg["train_count"])
            deviations.append("dataset generated in-repo (clusters), not a retrieved benchmark file")
        subset = data_cfg.get("train_subset")
        if subset is not None:
            if not 0 < subset <= train.n_samples:
                raise ConfigError([f"[data] train_subset: must be in 1..{train.n_samples}"])
            train = train.subset(np.arange(subset))
            deviations.append(f"training restricted to the first {subset} samples")
        return train, test, deviations
    return None, None, deviations


def _build_problem(config, train_ds):
    task = config["task"]
    if task == "surrogate":
        data_cfg = config["data"]
        seed = data_cfg.get("data_seed")
        rng = SeededRng(seed if seed is not None else config["seed"])
        problem = make_surrogate(data_cfg["dimension"], rng, data_cfg["lower"],
                                 data_cfg["upper"], data_cfg["blocks"])
        return problem, None, None
    widths = config["network"]["widths"]
    problems = []
    if widths[0] != train_ds.n_features:
        problems.append(f"[network] widths: first width {widths[0]} != feature count {train_ds.n_features}")
    if train_ds.is_classification:
        loss = losses.cross_entropy_loss(train_ds.classes)
        if widths[-1] != train_ds.classes:
            problems.append(f"[network] widths: last width {widths[-1]} != class count {train_ds.classes}")
    else:
        loss = losses.squared_sum_loss()
        if widths[-1] != train_ds.targets.shape[1]:
            problems.append(f"[network] widths: last width {widths[-1]} != target width {train_ds.targets.shape[1]}")
    if problems:
        raise ConfigError(problems)
    arch = NetworkArchitecture(tuple(widths))
    return NetworkProblem(arch, train_ds, loss), arch, loss


def _validate_targets(mode, mode_cfg, problem) -> None:
    """Target checks run before any output exists (select_* recheck them)."""
    counts = problem.weight_counts
    if mode == "select_single":
        target = mode_cfg["targets"]
        if not 0 < target <= sum(counts):
            raise ValueError(f"targets: must be in 1..{sum(counts)}, got {target}")
    else:
        targets = mode_cfg["targets"]
        if len(targets) != len(counts):
            raise ValueError(f"targets: {len(targets)} values for {len(counts)} layers")
        for k, (t, dk) in enumerate(zip(targets, counts)):
            if not 0 < t <= dk:
                raise ValueError(f"targets: layer {k + 1} must be in 1..{dk}, got {t}")
        quorum = mode_cfg.get("quorum")
        if quorum is not None and not 0 <= quorum <= len(counts):
            raise ValueError(f"quorum: must be in 0..{len(counts)}, got {quorum}")


def _train_config(config, seed) -> TrainConfig:
    t = config["train"]
    return TrainConfig(epochs=t["epochs"], learning_rate=t["learning_rate"],
                       batch_size=t["batch_size"], seed=seed,
                       max_grad_norm=t["max_grad_norm"], log_every=t["log_every"])


def _metric_fields(loss, arch, params, train_ds, test_ds) -> dict:
    if arch is None or loss is None:
        return {}
    fields = {}
    train_m = losses.metrics(loss, arch, params, train_ds)
    test_m = losses.metrics(loss, arch, params, test_ds) if test_ds is not None else None
    if loss.is_classification:
        fields["tra"] = train_m.accuracy
        if test_m:
            fields["tea"] = test_m.accuracy
    else:
        fields["trmse"] = train_m.mse
        if test_m:
            fields["temse"] = test_m.mse
    return fields


def _save_params(params: Parameters, arch, path: Path) -> None:
    if arch is not None:
        save_checkpoint(arch, params, path)
    else:
        doc = {"schema": REPORT_SCHEMA, "kind": "surrogate",
               "blocks": [w.ravel().tolist() for w in params.weights]}
        with open(path, "w") as fh:
            json.dump(doc, fh)


def load_any_checkpoint(path) -> tuple[Optional[NetworkArchitecture], Parameters]:
    """Load a network checkpoint or a surrogate weight file."""
    with open(path) as fh:
        doc = json.load(fh)
    if "widths" in doc:
        return load_checkpoint(path)
    if doc.get("kind") == "surrogate":
        weights = [np.asarray(b, dtype=np.float64) for b in doc["blocks"]]
        return None, Parameters(weights, [np.zeros(0) for _ in weights])
    raise ValueError(f"{path}: not a recognized checkpoint")


def _recomputed_profile(path):
    _, params = load_any_checkpoint(path)
    return sparsity_profile(params)


def run_experiment(config, output_override=None) -> tuple[dict, int]:
    """Execute a parsed config; returns (report, exit_code).

    Everything that can be validated is validated before any output is
    created, so a failing config leaves no partial artifacts behind.
    """
    started = time.perf_counter()
    train_ds, test_ds, deviations = _build_datasets(config)
    problem, arch, loss = _build_problem(config, train_ds)
    task, mode, seed = config["task"], config["mode"], config["seed"]
    try:
        _train_config(config, seed)
    except ValueError as err:
        raise ConfigError([f"[train] {err}"])

    reference = REFERENCE_EPOCHS.get(task)
    if reference and config["train"]["epochs"] < reference:
        deviations.append(f"epochs={config['train']['epochs']} below the reference "
                          f"benchmark budget of {reference}")

    mode_cfg = config["mode_cfg"]
    selection_cfg = None
    if mode in ("select_single", "select_multi"):
        lam_high = mode_cfg["lambda_high"]
        lam_low = mode_cfg["lambda_low"]
        try:
            selection_cfg = SelectionConfig(
                targets=mode_cfg["targets"] if mode == "select_single" else tuple(mode_cfg["targets"]),
                tolerance=mode_cfg["tolerance"],
                train=_train_config(config, seed),
                lambda_high=lam_high[0] if len(lam_high) == 1 else tuple(lam_high),
                lambda_low=lam_low[0] if len(lam_low) == 1 else tuple(lam_low),
                quorum=mode_cfg.get("quorum"),
                max_iterations=mode_cfg["max_iterations"],
                warm_start=mode_cfg["warm_start"],
            )
            _validate_targets(mode, mode_cfg, problem)
        except ValueError as err:
            raise ConfigError([f"[mode] {err}"])
        if mode_cfg["warm_start"]:
            deviations.append("warm-started inner runs (the parameter path depends on history)")

    out_dir = Path(output_override or os.environ.get(OUTDIR_ENV, "")) / config["name"] \
        if (output_override or os.environ.get(OUTDIR_ENV)) else Path(config["output"])
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    saved = []
    traces = []
    selection_doc = None
    exit_code = 0
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ProbabilityFloorWarning)
        if mode == "l2_baseline":
            for i, lam in enumerate(mode_cfg["lambdas"]):
                params0 = problem.init_params(SeededRng(seed + i))
                result = l2_descent(problem, params0, lam, _train_config(config, seed + i))
                rows.append({"row": f"l2 lambda={lam:g}", "lambda": lam,
                             "loss": result.final_loss, "seconds": result.seconds,
                             **_metric_fields(loss, arch, result.params, train_ds, test_ds)})
                saved.append(result.params)
                traces.append((f"lambda={lam:g}", result.loss_trace))
        elif mode == "l1_fixed":
            lams = mode_cfg["lambdas"]
            lam_vec = lams[0] if len(lams) == 1 else lams
            params0 = problem.init_params(SeededRng(seed))
            result = proximal_descent(problem, params0, lam_vec, _train_config(config, seed))
            label = f"l1 lambda={lams[0]:g}" if len(lams) == 1 else "l1 per-layer"
            rows.append({"row": label,
                         "lambda": lam_vec if np.isscalar(lam_vec) else list(lam_vec),
                         "loss": result.final_loss, "seconds": result.seconds,
                         **_metric_fields(loss, arch, result.params, train_ds, test_ds)})
            saved.append(result.params)
            traces.append(("objective", result.loss_trace))
        else:
            selector = select_single if mode == "select_single" else select_multi
            result = selector(problem, selection_cfg)
            selection_doc = selection_report(result, selection_cfg)
            lam_star = result.lambda_star
            rows.append({"row": f"selected ({result.termination.value})",
                         "lambda": lam_star.tolist() if isinstance(lam_star, np.ndarray) else lam_star,
                         "num": result.num,
                         "loss": result.history[result.num - 1].loss,
                         "seconds": sum(rec.seconds for rec in result.history),
                         **_metric_fields(loss, arch, result.params, train_ds, test_ds)})
            saved.append(result.params)
            if result.termination is not Termination.TOLERANCE_MET:
                exit_code = 3
        floor_hits = sum(1 for w in caught if issubclass(w.category, ProbabilityFloorWarning))
        if floor_hits:
            deviations.append(f"cross-entropy probability floor hit {floor_hits} time(s)")

    # checkpoints, and the spec'd invariant: every reported ratio comes from
    # re-reading the saved parameters, never from loop bookkeeping
    checkpoint_paths = []
    for i, (params, row) in enumerate(zip(saved, rows)):
        path = out_dir / ("checkpoint.json" if len(saved) == 1 else f"checkpoint_row{i + 1}.json")
        _save_params(params, arch, path)
        checkpoint_paths.append(str(path))
        profile = _recomputed_profile(path)
        row["sl"] = profile.total
        row["sls"] = list(profile.per_layer)
        row["ratio"] = profile.ratio

    figure_paths = []
    from . import figures
    if selection_doc is not None:
        figure_paths = [str(p) for p in figures.render_selection_figures(selection_doc, out_dir)]
    elif traces:
        figure_paths = [str(p) for p in figures.render_loss_traces(traces, out_dir)]

    report = {
        "schema": REPORT_SCHEMA,
        "library_version": __version__,
        "task": task,
        "mode": mode,
        "seed": seed,
        "name": config["name"],
        "config": {k: v for k, v in config.items() if k not in ("name",)},
        "deviations": deviations,
        "rows": rows,
        "selection": selection_doc,
        "wall_seconds": time.perf_counter() - started,
        "artifacts": {"checkpoints": checkpoint_paths, "figures": figure_paths},
    }
    write_report(report, out_dir)
    return report, exit_code


def cmd_run(args) -> int:
    try:
        config = parse_experiment_config(args.config)
    except ConfigError as err:
        print(err, file=sys.stderr)
        return 1
    try:
        report, code = run_experiment(config, args.output)
    except ConfigError as err:
        print(err, file=sys.stderr)
        return 1
    except DivergenceError as err:
        print(f"run failed: {err}", file=sys.stderr)
        return 2
    out_dir = Path(report["artifacts"]["checkpoints"][0]).parent if report["artifacts"]["checkpoints"] else None
    for row in report["rows"]:
        bits = [row["row"], f"sl={row.get('sl')}", f"ratio={row.get('ratio'):.4%}"]
        for key in ("trmse", "temse", "tra", "tea"):
            if row.get(key) is not None:
                bits.append(f"{key}={row[key]:.4g}")
        print("  ".join(bits))
    if out_dir:
        print(f"report written to {out_dir}")
    return code


def cmd_compare(args) -> int:
    try:
        rows = merge_reports(args.reports)
    except (IncompatibleTasksError, SchemaMismatchError, OSError, ValueError) as err:
        print(f"compare failed: {err}", file=sys.stderr)
        return 1
    text = merged_to_markdown(rows) if args.format == "markdown" else merged_to_csv(rows)
    if args.output:
        Path(args.output).write_text(text)
        print(f"wrote {args.output}")
    else:
        print(text, end="")
    return 0


def cmd_inspect(args) -> int:
    try:
        arch, params = load_any_checkpoint(args.checkpoint)
    except (OSError, ValueError) as err:
        print(f"inspect failed: {err}", file=sys.stderr)
        return 1
    profile = sparsity_profile(params)
    if arch is not None:
        print(f"architecture: widths={list(arch.widths)} activation={arch.activation}")
    else:
        print(f"surrogate weights: {len(params.weights)} block(s)")
    print(f"total weights: {profile.total_weights}")
    print(f"nonzero (sl): {profile.total}")
    print(f"ratio: {profile.ratio:.4%}")
    for k, (level, size) in enumerate(zip(profile.per_layer, profile.layer_sizes), start=1):
        print(f"  layer {k}: {level}/{size} nonzero")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparsenet",
                                     description="sparse network training and "
                                                 "regularization-parameter selection")
    parser.add_argument("--version", action="version", version=f"sparsenet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment config")
    run_p.add_argument("config", help="INI config file")
    run_p.add_argument("--output", help="output directory override (also: $SPARSENET_OUTDIR)")
    run_p.set_defaults(func=cmd_run)

    cmp_p = sub.add_parser("compare", help="merge report.json files into one table")
    cmp_p.add_argument("reports", nargs="+", help="report.json paths")
    cmp_p.add_argument("--format", choices=("csv", "markdown"), default="csv")
    cmp_p.add_argument("--output", help="write the table here instead of stdout")
    cmp_p.set_defaults(func=cmd_compare)

    ins_p = sub.add_parser("inspect", help="summarize a checkpoint")
    ins_p.add_argument("checkpoint")
    ins_p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
