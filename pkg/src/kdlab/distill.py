"""Training loops and the distillation experiments built on them.

A run is fully determined by its :class:`TrainConfig` (including the seed) and
its inputs; teachers are only ever read.
"""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import network
from .data import inject_symmetric_noise
from .diagnostics import tld
from .losses import DistillObjective, LossKind, combined_grad, combined_loss
from .numerics import derive_seed, make_rng

RESULT_COLUMNS = [
    "alpha", "tau", "loss_kind", "noise_fraction", "q_lo", "q_hi",
    "seed", "train_acc", "test_acc", "extra_json",
]


@dataclass(frozen=True)
class TrainConfig:
    student_widths: tuple
    objective: DistillObjective = DistillObjective()
    epochs: int = 30
    batch_size: int = 64
    lr: float = 0.01
    lr_schedule: tuple | None = None  # ((epoch, factor), ...); None -> x0.1 at 50% and 75%
    momentum: float = 0.9
    weight_decay: float = 5e-4
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "student_widths", tuple(int(w) for w in self.student_widths))
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.lr_schedule is not None:
            sched = tuple((int(e), float(f)) for e, f in self.lr_schedule)
            epochs = [e for e, _ in sched]
            if any(b <= a for a, b in zip(epochs, epochs[1:])):
                raise ValueError("lr schedule epochs must be strictly increasing")
            object.__setattr__(self, "lr_schedule", sched)

    def milestones(self):
        if self.lr_schedule is not None:
            return self.lr_schedule
        return ((self.epochs // 2, 0.1), ((3 * self.epochs) // 4, 0.1))

    def lr_at(self, epoch):
        lr = self.lr
        for e, factor in self.milestones():
            if epoch >= e:
                lr *= factor
        return lr


@dataclass
class RunResult:
    net: network.Mlp
    config: TrainConfig
    train_acc: float
    test_acc: float
    losses: list = field(default_factory=list)

    @property
    def checkpoint(self):
        return network.save_checkpoint(self.net)


def teacher_logits(teacher, x):
    """Frozen teacher logits; an ensemble contributes the mean of its members' logits."""
    if isinstance(teacher, network.Mlp):
        return teacher(x)
    members = list(teacher)
    if not members:
        raise ValueError("empty teacher ensemble")
    out = members[0](x)
    for m in members[1:]:
        out = out + m(x)
    return out / len(members)


def train(ds_train, ds_test, teacher, cfg, on_epoch=None):
    """Mini-batch SGD on the combined objective of ``cfg.objective``.

    ``teacher`` may be ``None``, an :class:`~kdlab.network.Mlp` or a sequence
    of them (ensemble). It is ignored when the objective does not use it.
    ``on_epoch(epoch, net)`` is called after every epoch.
    """
    obj = cfg.objective
    widths = cfg.student_widths
    if widths[0] != ds_train.dim or widths[-1] != ds_train.num_classes:
        raise ValueError(f"student widths {widths} do not fit data (d={ds_train.dim}, K={ds_train.num_classes})")
    zt_all = None
    if obj.uses_teacher:
        if teacher is None:
            raise ValueError(f"objective {obj.label()} needs a teacher")
        zt_all = teacher_logits(teacher, ds_train.x)
        if zt_all.shape[1] != ds_train.num_classes:
            raise ValueError("teacher output dimension does not match the class count")

    net = network.init(widths, cfg.seed)
    rng = make_rng(cfg.seed, "shuffle")
    n = len(ds_train)
    losses = []
    state = None
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        if state is None:
            state = network.SgdState(lr, cfg.momentum, cfg.weight_decay)
        state.lr = lr
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            z, cache = network.forward(net, ds_train.x[idx])
            zt = None if zt_all is None else zt_all[idx]
            y = ds_train.labels[idx]
            total += float(np.sum(combined_loss(z, zt, y, obj)))
            grads = network.backward(net, cache, combined_grad(z, zt, y, obj))
            network.sgd_step(net, grads, state)
        losses.append(total / n)
        if on_epoch is not None:
            on_epoch(epoch, net)

    return RunResult(
        net=net,
        config=cfg,
        train_acc=network.accuracy(net, ds_train.x, ds_train.labels),
        test_acc=network.accuracy(net, ds_test.x, ds_test.true_labels),
        losses=losses,
    )


def objective_for_tau(alpha, tau, rescaled=False):
    """KL objective at ``tau``; ``tau = inf`` selects the limit gradient."""
    if math.isinf(tau):
        return DistillObjective(alpha, LossKind.KL_INF)
    kind = LossKind.RESCALED_KL if rescaled else LossKind.KL
    return DistillObjective(alpha, kind, float(tau))


# -- result rows ---------------------------------------------------------------

def format_tau(tau):
    if tau is None:
        return ""
    return "inf" if math.isinf(tau) else repr(float(tau))


def result_row(cfg, res, noise_fraction=None, q_lo=None, q_hi=None, **extra):
    obj = cfg.objective
    tau = obj.tau if obj.kind is not LossKind.KL_INF else math.inf
    opt = lambda v: "" if v is None else repr(float(v))
    return {
        "alpha": repr(float(obj.alpha)),
        "tau": format_tau(tau),
        "loss_kind": obj.kind.value,
        "noise_fraction": opt(noise_fraction),
        "q_lo": opt(q_lo),
        "q_hi": opt(q_hi),
        "seed": str(cfg.seed),
        "train_acc": repr(res.train_acc),
        "test_acc": repr(res.test_acc),
        "extra_json": json.dumps(extra, sort_keys=True, separators=(",", ":")),
    }


def write_results_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


# -- sequential distillation ------------------------------------------------------

@dataclass(frozen=True)
class StageSpec:
    """One link of a chain. ``teacher`` is ``"none"`` (plain CE training),
    ``"previous"``, a checkpoint path, or a list of checkpoint paths (ensemble)."""

    config: TrainConfig
    teacher: str | tuple = "none"


def _load_ckpt(path):
    with open(path, "rb") as fh:
        return network.load_checkpoint(fh.read())


def sequential(ds_train, ds_test, stages, out_dir=None):
    if not stages:
        raise ValueError("empty stage list")
    if stages[0].teacher == "previous":
        raise ValueError("the first stage has no previous stage to learn from")
    results = []
    for i, stage in enumerate(stages):
        src = stage.teacher
        if src == "none":
            teacher = None
        elif src == "previous":
            teacher = results[-1].net
        elif isinstance(src, str):
            teacher = _load_ckpt(src)
        else:
            teacher = [_load_ckpt(p) for p in src]
        if teacher is None and stage.config.objective.uses_teacher:
            raise ValueError(f"stage {i} distils but names no teacher")
        res = train(ds_train, ds_test, teacher, stage.config)
        results.append(res)
        if out_dir is not None:
            with open(os.path.join(out_dir, f"stage_{i}.json"), "wb") as fh:
                fh.write(res.checkpoint)
    return results


# -- alpha/tau grid -------------------------------------------------------------

def _run_cell(args):
    ds_train, ds_test, teacher, cfg = args
    return train(ds_train, ds_test, teacher, cfg)


def _map(fn, jobs_args, jobs):
    if jobs <= 1 or len(jobs_args) <= 1:
        return [fn(a) for a in jobs_args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, jobs_args))


def sweep_grid(ds_train, ds_test, teacher, alphas, taus, base_cfg, jobs=1):
    """One run per ``(alpha, tau)``; returns ``{(i, j): RunResult}``.

    Each cell gets its own seed derived from the base seed and its indices.
    """
    if not alphas or not taus:
        raise ValueError("sweep axes must be non-empty")
    cells, args = [], []
    for i, a in enumerate(alphas):
        for j, t in enumerate(taus):
            cfg = replace(
                base_cfg,
                objective=objective_for_tau(float(a), float(t)),
                seed=derive_seed(base_cfg.seed, "cell", i, j),
            )
            cells.append((i, j))
            args.append((ds_train, ds_test, teacher, cfg))
    return dict(zip(cells, _map(_run_cell, args, jobs)))


def sweep_rows(grid):
    return [result_row(res.config, res, cell=list(key)) for key, res in sorted(grid.items())]


# -- label noise ----------------------------------------------------------------

def _noisy_fraction(args):
    ds_train, ds_test, fraction, taus, base_cfg, teacher_cfg = args
    seed = derive_seed(base_cfg.seed, "noise", repr(float(fraction)))
    noisy = inject_symmetric_noise(ds_train, fraction, seed)
    teacher_res = train(noisy, ds_test, None, replace(teacher_cfg, objective=DistillObjective()))
    ce_res = train(noisy, ds_test, None, replace(base_cfg, objective=DistillObjective()))
    extra = {
        "teacher_test_acc": teacher_res.test_acc,
        "ce_student_test_acc": ce_res.test_acc,
        "flipped": int(np.sum(noisy.labels != noisy.clean_labels)),
    }
    alpha = base_cfg.objective.alpha if base_cfg.objective.uses_teacher else 1.0
    objectives = [objective_for_tau(alpha, float(t), rescaled=True) for t in taus]
    objectives.append(DistillObjective(alpha, LossKind.MSE))
    rows = []
    for obj in objectives:
        cfg = replace(base_cfg, objective=obj)
        res = train(noisy, ds_test, teacher_res.net, cfg)
        rows.append(result_row(cfg, res, noise_fraction=fraction, **extra))
    return rows


def noisy_experiment(ds_train, ds_test, fractions, taus, base_cfg, teacher_cfg, jobs=1):
    """Per noise fraction: train a CE teacher on the noisy labels, then distil one
    student per temperature (rescaled KL, limit gradient for ``inf``) plus an MSE
    student. Test accuracy is always measured on clean labels.

    Returns ``|fractions| * (|taus| + 1)`` result rows. The student objectives use
    ``base_cfg.objective.alpha`` when it distils, otherwise ``alpha = 1``.
    """
    for f in fractions:
        if not 0.0 <= f <= 1.0:
            raise ValueError(f"noise fraction {f} outside [0, 1]")
    args = [(ds_train, ds_test, f, list(taus), base_cfg, teacher_cfg) for f in fractions]
    return [row for rows in _map(_noisy_fraction, args, jobs) for row in rows]


# -- TLD quantile bundles -----------------------------------------------------------

def quantile_selection(values, q_lo, q_hi):
    """Indices whose rank (stable by value, then index) falls in ``[q_lo, q_hi)``.

    Ranks ``floor(q_lo N) .. floor(q_hi N) - 1`` are kept, so ``q_hi = 1`` keeps the top.
    """
    if not 0.0 <= q_lo < q_hi <= 1.0:
        raise ValueError("need 0 <= q_lo < q_hi <= 1")
    values = np.asarray(values)
    n = values.size
    order = np.lexsort((np.arange(n), values))
    lo, hi = int(math.floor(q_lo * n)), int(math.floor(q_hi * n))
    return np.sort(order[lo:hi])


@dataclass
class BundleReport:
    q_lo: float
    q_hi: float
    n_distilled: int
    n_undistilled: int
    ce: dict      # {"distilled", "undistilled", "test"} -> accuracy (nan if empty)
    kd: dict
    runs: dict = field(default_factory=dict)


def tld_quantile_bundle(ds_train, ds_test, teacher, q_lo, q_hi, cfg_ce, cfg_kd):
    """Train CE and distilled students on the teacher-TLD quantile slice ``[q_lo, q_hi)``."""
    keep = quantile_selection(tld(teacher(ds_train.x), ds_train.labels), q_lo, q_hi)
    if keep.size == 0:
        raise ValueError("quantile range selects no samples")
    rest = np.setdiff1d(np.arange(len(ds_train)), keep)
    distilled = ds_train.subset(keep)
    undistilled = ds_train.subset(rest) if rest.size else None

    def score(res):
        net = res.net
        return {
            "distilled": network.accuracy(net, distilled.x, distilled.labels),
            "undistilled": (network.accuracy(net, undistilled.x, undistilled.labels)
                            if undistilled is not None else float("nan")),
            "test": network.accuracy(net, ds_test.x, ds_test.true_labels),
        }

    ce_res = train(distilled, ds_test, None, replace(cfg_ce, objective=DistillObjective()))
    kd_res = train(distilled, ds_test, teacher, cfg_kd)
    return BundleReport(q_lo, q_hi, int(keep.size), int(rest.size), score(ce_res), score(kd_res),
                        {"ce": ce_res, "kd": kd_res})


def bundle_rows(report):
    rows = []
    for name, acc in (("ce", report.ce), ("kd", report.kd)):
        res = report.runs[name]
        row = result_row(res.config, res, q_lo=report.q_lo, q_hi=report.q_hi,
                         student=name, distilled_acc=acc["distilled"],
                         undistilled_acc=None if math.isnan(acc["undistilled"]) else acc["undistilled"],
                         n_distilled=report.n_distilled, n_undistilled=report.n_undistilled)
        row["train_acc"] = repr(acc["distilled"])
        rows.append(row)
    return rows
