"""``kdlab`` command line: one JSON config per run, CSV/SVG/checkpoint outputs.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import data, diagnostics, distill, network, plotting
from .config import ConfigError, apply_seed_override, parse_tau, stage_specs, train_config, validate
from .numerics import derive_seed

COMMANDS = ["gen-data", "train", "distill", "sequential", "sweep", "noisy", "bundles", "diagnose", "plot"]


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="kdlab", description="Knowledge-distillation experiments on synthetic data.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="JSON config document")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--seed", type=int, default=None, help="override every seed in the config")
        if name in ("sweep", "noisy"):
            s.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    return p


# -- helpers ---------------------------------------------------------------------

def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


def _write(path, payload):
    mode = "wb" if isinstance(payload, bytes) else "w"
    with open(path, mode, newline="" if mode == "w" else None) as fh:
        fh.write(payload)


def _load_model(path):
    try:
        return network.load_checkpoint(_read(path))
    except network.CheckpointFormatError as exc:
        raise DataError(f"{path}: {exc}") from None


def load_data(spec, seed):
    if "synthetic" in spec:
        syn = spec["synthetic"]
        ds = data.gen_gaussian_mixture(syn["num_classes"], syn["dim"], syn["n_per_class"],
                                       syn.get("spread", 0.5), syn.get("seed", seed))
        return data.split(ds, spec.get("test_fraction", 0.2), syn.get("seed", seed))
    try:
        k = spec.get("num_classes")
        train = data.load_csv(spec["train"], k)
        test = data.load_csv(spec["test"], k)
    except data.DatasetFormatError as exc:
        raise DataError(str(exc)) from None
    if k is None and train.num_classes != test.num_classes:
        k = max(train.num_classes, test.num_classes)
        train = data.Dataset(train.x, train.labels, k, train.clean_labels)
        test = data.Dataset(test.x, test.labels, k, test.clean_labels)
    if train.dim != test.dim:
        raise DataError("train and test feature counts differ")
    return train, test


def resolve_teacher(spec, train, test, seed, out):
    """Checkpoint path, list of paths (ensemble), or ``{"train": cfg}`` for a fresh CE teacher."""
    if isinstance(spec, str):
        return _load_model(spec)
    if isinstance(spec, list):
        return [_load_model(p) for p in spec]
    cfg = train_config(spec["train"], derive_seed(seed, "teacher"))
    if cfg.objective.uses_teacher:
        raise ConfigError("teacher/train: a fresh teacher is trained with CE only")
    res = distill.train(train, test, None, cfg)
    _write(os.path.join(out, "teacher.json"), res.checkpoint)
    return res.net


def _write_losses(path, res):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss"])
        for i, v in enumerate(res.losses):
            w.writerow([i, repr(v)])


# -- commands -----------------------------------------------------------------------

def cmd_gen_data(doc, out, seed, jobs):
    syn = doc["synthetic"]
    s = syn.get("seed", seed)
    ds = data.gen_gaussian_mixture(syn["num_classes"], syn["dim"], syn["n_per_class"], syn.get("spread", 0.5), s)
    train, test = data.split(ds, doc.get("test_fraction", 0.2), s)
    if doc.get("noise_fraction"):
        train = data.inject_symmetric_noise(train, doc["noise_fraction"], s)
    data.save_csv(train, os.path.join(out, "train.csv"))
    data.save_csv(test, os.path.join(out, "test.csv"))


def _single_run(doc, out, seed, teacher):
    train, test = load_data(doc["data"], seed)
    cfg = train_config(doc["train"], seed)
    if teacher is not None:
        teacher = resolve_teacher(teacher, train, test, seed, out)
    res = distill.train(train, test, teacher, cfg)
    _write(os.path.join(out, "model.json"), res.checkpoint)
    _write_losses(os.path.join(out, "losses.csv"), res)
    distill.write_results_csv(os.path.join(out, "results.csv"), [distill.result_row(cfg, res)])


def cmd_train(doc, out, seed, jobs):
    if train_config(doc["train"], seed).objective.uses_teacher:
        raise ConfigError("train: objective needs a teacher; use the 'distill' command")
    _single_run(doc, out, seed, None)


def cmd_distill(doc, out, seed, jobs):
    _single_run(doc, out, seed, doc["teacher"])


def cmd_sequential(doc, out, seed, jobs):
    train, test = load_data(doc["data"], seed)
    stages = stage_specs(doc, seed)
    results = distill.sequential(train, test, stages, out_dir=out)
    rows = [distill.result_row(r.config, r, stage=i) for i, r in enumerate(results)]
    distill.write_results_csv(os.path.join(out, "results.csv"), rows)


def cmd_sweep(doc, out, seed, jobs):
    train, test = load_data(doc["data"], seed)
    teacher = resolve_teacher(doc["teacher"], train, test, seed, out)
    base = train_config(doc["train"], seed)
    taus = [parse_tau(t) for t in doc["taus"]]
    grid = distill.sweep_grid(train, test, teacher, doc["alphas"], taus, base, jobs=jobs)
    distill.write_results_csv(os.path.join(out, "results.csv"), distill.sweep_rows(grid))


def cmd_noisy(doc, out, seed, jobs):
    train, test = load_data(doc["data"], seed)
    base = train_config(doc["train"], seed)
    teacher_cfg = train_config(doc["teacher_train"], derive_seed(seed, "teacher"))
    taus = [parse_tau(t) for t in doc["taus"]]
    rows = distill.noisy_experiment(train, test, doc["fractions"], taus, base, teacher_cfg, jobs=jobs)
    distill.write_results_csv(os.path.join(out, "results.csv"), rows)


def cmd_bundles(doc, out, seed, jobs):
    train, test = load_data(doc["data"], seed)
    teacher = resolve_teacher(doc["teacher"], train, test, seed, out)
    if not isinstance(teacher, network.Mlp):
        raise ConfigError("teacher: bundles need a single teacher model")
    cfg_ce = train_config(doc["train_ce"], seed)
    cfg_kd = train_config(doc["train_kd"], seed)
    rows = []
    for lo, hi in doc["quantiles"]:
        report = distill.tld_quantile_bundle(train, test, teacher, lo, hi, cfg_ce, cfg_kd)
        rows += distill.bundle_rows(report)
    distill.write_results_csv(os.path.join(out, "results.csv"), rows)


def cmd_diagnose(doc, out, seed, jobs):
    train, test = load_data(doc["data"], seed)
    ds = train if doc.get("split", "train") == "train" else test
    model = _load_model(doc["model"])
    if model.widths[0] != ds.dim:
        raise DataError("model input width does not match the data")
    bins = doc.get("bins", 50)
    which = doc.get("which", ["tld", "entropy", "pcc", "logit_sum", "prelogit_norm", "calibration"])

    def emit(name, values):
        diagnostics.write_values_csv(os.path.join(out, f"{name}.csv"), values)
        diagnostics.write_histogram_csv(os.path.join(out, f"{name}_hist.csv"), diagnostics.histogram(values, bins))

    summary = {}
    if "tld" in which or "pcc" in which:
        t = diagnostics.tld(model(ds.x), ds.labels)
        if "tld" in which:
            emit("tld", t)
    if "entropy" in which or "pcc" in which:
        h = diagnostics.entropy_values(model, ds.x)
        if "entropy" in which:
            emit("entropy", h)
    if "pcc" in which:
        summary["pcc_entropy_tld"] = diagnostics.pcc(h, t)
    if "logit_sum" in which:
        v, _ = diagnostics.logit_sum_stats(model, ds.x)
        emit("logit_sum", v)
        summary["mean_abs_logit_sum"] = float(np.mean(v))
    if "logit_distance" in which:
        if "teacher" not in doc:
            raise ConfigError("logit_distance needs a 'teacher' checkpoint")
        v, _ = diagnostics.logit_distance_stats(model, _load_model(doc["teacher"]), ds.x)
        emit("logit_distance", v)
        summary["median_logit_distance"] = float(np.median(v))
    if "prelogit_norm" in which:
        v, _ = diagnostics.prelogit_norm_stats(model, ds.x)
        emit("prelogit_norm", v)
    if "calibration" in which:
        e, rb = diagnostics.model_calibration(model, ds.x, ds.true_labels, doc.get("ece_bins", 10))
        summary["ece"] = e
        with open(os.path.join(out, "reliability.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_left", "bin_right", "count", "mean_confidence", "accuracy"])
            for i in range(rb.n_bins):
                w.writerow([repr(float(rb.edges[i])), repr(float(rb.edges[i + 1])), int(rb.counts[i]),
                            repr(float(rb.mean_confidence[i])), repr(float(rb.accuracy[i]))])
    if "projection" in which:
        classes = doc.get("classes", [0, 1, 2])
        tmpl = diagnostics.class_templates(model, ds.x, ds.labels, classes)
        basis = diagnostics.projection_basis(tmpl)
        mask = np.isin(ds.labels, classes)
        pts = diagnostics.project(basis, diagnostics.prelogits(model, ds.x[mask]))
        with open(os.path.join(out, "projection.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y", "label"])
            for (px, py), lab in zip(pts, ds.labels[mask]):
                w.writerow([repr(float(px)), repr(float(py)), int(lab)])
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _read_table(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty CSV")
    return rows[0], rows[1:]


def _column(header, rows, name, path, cast=float):
    if name not in header:
        raise DataError(f"{path}: missing column '{name}'")
    i = header.index(name)
    try:
        return [cast(r[i]) for r in rows]
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: bad value in column '{name}': {exc}") from None


def cmd_plot(doc, out, seed, jobs):
    path, kind = doc["input"], doc["kind"]
    header, rows = _read_table(path)
    title = doc.get("title", os.path.basename(path))
    if kind == "histogram":
        svg = plotting.histogram_svg(_column(header, rows, "bin_left", path), _column(header, rows, "bin_right", path),
                                     _column(header, rows, "count", path, int), title)
    elif kind == "line":
        if len(header) < 2:
            raise DataError(f"{path}: line plot needs an x column and at least one series")
        x = _column(header, rows, header[0], path)
        series = [(h, _column(header, rows, h, path)) for h in header[1:]]
        svg = plotting.line_svg(x, series, title, header[0], "value")
    elif kind == "scatter":
        x = _column(header, rows, "x", path)
        y = _column(header, rows, "y", path)
        labels = _column(header, rows, "label", path, str) if "label" in header else None
        svg = plotting.scatter_svg(x, y, labels, title)
    else:
        value = doc.get("value", "test_acc")
        alphas = _column(header, rows, "alpha", path)
        taus = _column(header, rows, "tau", path, parse_tau)
        vals = _column(header, rows, value, path)
        a_axis, t_axis = sorted(set(alphas)), sorted(set(taus))
        grid = [[None] * len(t_axis) for _ in a_axis]
        for a, t, v in zip(alphas, taus, vals):
            grid[a_axis.index(a)][t_axis.index(t)] = v
        svg = plotting.grid_heat_svg([f"{a:g}" for a in a_axis],
                                     ["inf" if math.isinf(t) else f"{t:g}" for t in t_axis],
                                     grid, title, "tau", "alpha")
    stem = os.path.splitext(os.path.basename(path))[0]
    _write(os.path.join(out, f"{stem}_{kind}.svg"), svg)


HANDLERS = {
    "gen-data": cmd_gen_data, "train": cmd_train, "distill": cmd_distill, "sequential": cmd_sequential,
    "sweep": cmd_sweep, "noisy": cmd_noisy, "bundles": cmd_bundles, "diagnose": cmd_diagnose, "plot": cmd_plot,
}


def run(argv=None):
    """Execute the CLI; returns the exit code instead of exiting."""
    try:
        args = build_parser().parse_args(argv)
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config is not valid JSON: {exc}") from None
        if args.seed is not None:
            doc = apply_seed_override(doc, args.seed)
        validate(args.command, doc)
        jobs = getattr(args, "jobs", 1)
        if jobs < 1:
            raise UsageError("--jobs must be >= 1")
        os.makedirs(args.out, exist_ok=True)
        HANDLERS[args.command](doc, args.out, doc.get("seed", 0), jobs)
    except (UsageError, ConfigError) as exc:
        print(f"kdlab: error: {exc}", file=sys.stderr)
        return 1
    except (DataError, data.DatasetFormatError, network.CheckpointFormatError) as exc:
        print(f"kdlab: data error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - surfaced as exit code 3
        print(f"kdlab: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
