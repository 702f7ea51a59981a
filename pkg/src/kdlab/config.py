"""JSON experiment configs: schemas and conversion into library objects.

Every config is validated in full (unknown keys rejected, referenced input
files checked) before a command writes anything.

For ``sweep`` and ``noisy`` the ``train`` block is a base schedule: the grid
axes supply the objective, so ``loss`` and ``tau`` there are replaced.
"""
from __future__ import annotations

import copy
import math
import os

import jsonschema

from .distill import StageSpec, TrainConfig, objective_for_tau
from .losses import DistillObjective, LossKind

_num = {"type": "number"}
_pos_int = {"type": "integer", "minimum": 1}
_seed = {"type": "integer", "minimum": 0, "maximum": 2**64 - 1}
_tau = {"oneOf": [{"type": "number", "exclusiveMinimum": 0}, {"const": "inf"}]}
_path = {"type": "string", "minLength": 1}

TRAIN = {
    "type": "object",
    "additionalProperties": False,
    "required": ["widths"],
    "properties": {
        "widths": {"type": "array", "items": _pos_int, "minItems": 3},
        "alpha": {"type": "number", "minimum": 0, "maximum": 1},
        "loss": {"enum": [k.value for k in LossKind]},
        "tau": _tau,
        "epochs": _pos_int,
        "batch_size": _pos_int,
        "lr": {"type": "number", "exclusiveMinimum": 0},
        "lr_schedule": {
            "type": "array",
            "items": {"type": "array", "prefixItems": [{"type": "integer", "minimum": 0}, _num],
                      "minItems": 2, "maxItems": 2},
        },
        "momentum": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "weight_decay": {"type": "number", "minimum": 0},
        "seed": _seed,
    },
}

SYNTHETIC = {
    "type": "object",
    "additionalProperties": False,
    "required": ["num_classes", "dim", "n_per_class"],
    "properties": {
        "num_classes": {"type": "integer", "minimum": 2},
        "dim": {"type": "integer", "minimum": 2},
        "n_per_class": _pos_int,
        "spread": {"type": "number", "minimum": 0},
        "seed": _seed,
    },
}

DATA = {
    "oneOf": [
        {
            "type": "object", "additionalProperties": False, "required": ["train", "test"],
            "properties": {"train": _path, "test": _path, "num_classes": {"type": "integer", "minimum": 2}},
        },
        {
            "type": "object", "additionalProperties": False, "required": ["synthetic"],
            "properties": {
                "synthetic": SYNTHETIC,
                "test_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            },
        },
    ]
}

TEACHER = {
    "oneOf": [
        _path,
        {"type": "array", "items": _path, "minItems": 1},
        {"type": "object", "additionalProperties": False, "required": ["train"], "properties": {"train": TRAIN}},
    ]
}


def _cmd(required, props):
    return {
        "type": "object",
        "additionalProperties": False,
        "required": required,
        "properties": {"seed": _seed, **props},
    }


SCHEMAS = {
    "gen-data": _cmd(["synthetic"], {
        "synthetic": SYNTHETIC,
        "test_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "noise_fraction": {"type": "number", "minimum": 0, "maximum": 1},
    }),
    "train": _cmd(["data", "train"], {"data": DATA, "train": TRAIN}),
    "distill": _cmd(["data", "teacher", "train"], {"data": DATA, "teacher": TEACHER, "train": TRAIN}),
    "sequential": _cmd(["data", "stages"], {
        "data": DATA,
        "stages": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object", "additionalProperties": False, "required": ["train"],
                "properties": {
                    "teacher": {"anyOf": [{"enum": ["none", "previous"]}, _path,
                                          {"type": "array", "items": _path, "minItems": 1}]},
                    "train": TRAIN,
                },
            },
        },
    }),
    "sweep": _cmd(["data", "teacher", "alphas", "taus", "train"], {
        "data": DATA, "teacher": TEACHER, "train": TRAIN,
        "alphas": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0, "maximum": 1}},
        "taus": {"type": "array", "minItems": 1, "items": _tau},
    }),
    "noisy": _cmd(["data", "fractions", "taus", "teacher_train", "train"], {
        "data": DATA, "teacher_train": TRAIN, "train": TRAIN,
        "fractions": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0, "maximum": 1}},
        "taus": {"type": "array", "minItems": 1, "items": _tau},
    }),
    "bundles": _cmd(["data", "teacher", "quantiles", "train_ce", "train_kd"], {
        "data": DATA, "teacher": TEACHER, "train_ce": TRAIN, "train_kd": TRAIN,
        "quantiles": {
            "type": "array", "minItems": 1,
            "items": {"type": "array", "prefixItems": [_num, _num], "minItems": 2, "maxItems": 2},
        },
    }),
    "diagnose": _cmd(["data", "model"], {
        "data": DATA,
        "model": _path,
        "teacher": _path,
        "split": {"enum": ["train", "test"]},
        "which": {
            "type": "array", "minItems": 1, "uniqueItems": True,
            "items": {"enum": ["tld", "entropy", "pcc", "logit_sum", "logit_distance",
                               "prelogit_norm", "calibration", "projection"]},
        },
        "bins": _pos_int,
        "ece_bins": _pos_int,
        "classes": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 3, "maxItems": 3},
    }),
    "plot": _cmd(["input", "kind"], {
        "input": _path,
        "kind": {"enum": ["histogram", "line", "grid-heat", "scatter"]},
        "title": {"type": "string"},
        "value": {"type": "string"},
    }),
}


class ConfigError(ValueError):
    pass


def parse_tau(v):
    return math.inf if v == "inf" else float(v)


def validate(command, doc):
    try:
        jsonschema.validate(doc, SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None
    for path in input_paths(command, doc):
        if not os.path.exists(path):
            raise ConfigError(f"input file not found: {path}")
    for key in ("train", "teacher_train", "train_ce", "train_kd"):
        if key in doc:
            train_config(doc[key], 0)
    if "teacher" in doc and isinstance(doc["teacher"], dict):
        if train_config(doc["teacher"]["train"], 0).objective.uses_teacher:
            raise ConfigError("teacher/train: a fresh teacher is trained with CE only")
    if command == "train" and train_config(doc["train"], 0).objective.uses_teacher:
        raise ConfigError("train: objective needs a teacher; use the 'distill' command")
    for stage in doc.get("stages", []):
        train_config(stage["train"], 0)
    for q in doc.get("quantiles", []):
        if not 0.0 <= q[0] < q[1] <= 1.0:
            raise ConfigError(f"quantile range {q} must satisfy 0 <= lo < hi <= 1")


def input_paths(command, doc):
    out = []
    data = doc.get("data", {})
    out += [data[k] for k in ("train", "test") if k in data]
    teacher = doc.get("teacher")
    if isinstance(teacher, str) and command != "sequential":
        out.append(teacher)
    elif isinstance(teacher, list):
        out += teacher
    for stage in doc.get("stages", []):
        t = stage.get("teacher", "none")
        if isinstance(t, list):
            out += t
        elif t not in ("none", "previous"):
            out.append(t)
    out += [doc[k] for k in ("model", "input") if k in doc]
    return out


def apply_seed_override(doc, seed):
    """Set the top-level seed and drop nested ones so every run derives from it."""
    doc = copy.deepcopy(doc)
    doc["seed"] = seed

    def strip(node):
        if isinstance(node, dict):
            node.pop("seed", None)
            for v in node.values():
                strip(v)
        elif isinstance(node, list):
            for v in node:
                strip(v)

    for key, value in list(doc.items()):
        if key != "seed":
            strip(value)
    return doc


def train_config(spec, default_seed):
    kind = LossKind(spec.get("loss", "ce"))
    alpha = float(spec.get("alpha", 0.0 if kind is LossKind.CE else 1.0))
    tau = spec.get("tau")
    try:
        if kind in (LossKind.KL, LossKind.RESCALED_KL) and tau is not None and parse_tau(tau) == math.inf:
            obj = objective_for_tau(alpha, math.inf)
        else:
            obj = DistillObjective(alpha, kind, None if tau is None else parse_tau(tau))
        return TrainConfig(
            student_widths=tuple(spec["widths"]),
            objective=obj,
            epochs=spec.get("epochs", 30),
            batch_size=spec.get("batch_size", 64),
            lr=spec.get("lr", 0.01),
            lr_schedule=None if "lr_schedule" not in spec else tuple(map(tuple, spec["lr_schedule"])),
            momentum=spec.get("momentum", 0.9),
            weight_decay=spec.get("weight_decay", 5e-4),
            seed=spec.get("seed", default_seed),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def stage_specs(doc, default_seed):
    out = []
    for stage in doc["stages"]:
        t = stage.get("teacher", "none")
        out.append(StageSpec(train_config(stage["train"], default_seed), tuple(t) if isinstance(t, list) else t))
    if out[0].teacher == "previous":
        raise ConfigError("stages/0/teacher: first stage cannot use 'previous'")
    return out
