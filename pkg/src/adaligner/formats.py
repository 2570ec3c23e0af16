"""On-disk formats for run outputs.

Floats are written with ``repr`` so that two runs with the same seed produce
byte-identical files.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .encoders import ModelParams
from .errors import ParseError

TELEMETRY_COLUMNS = (
    "step", "epoch", "M_B", "M0", "sigma0_sq", "theta", "beta", "gamma", "mu", "rho", "n_keep",
    "loss_total", "loss_clip", "loss_soft", "loss_sub", "grad_norm", "n_dropped", "n_dropped_noisy",
)
_INT_COLUMNS = {"step", "epoch", "n_keep", "n_dropped", "n_dropped_noisy"}

CHECKPOINT_MAGIC = "#ADALIGNER-CKPT 1"


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(int(v)) if isinstance(v, (np.integer, bool)) else str(v)


def telemetry_row(rec) -> dict:
    return {
        "step": rec.step, "epoch": rec.epoch, "M_B": rec.M_B, "M0": rec.M0, "sigma0_sq": rec.sigma0_sq,
        "theta": rec.theta, "beta": rec.beta, "gamma": rec.gamma, "mu": rec.mu, "rho": rec.rho,
        "n_keep": rec.n_keep, "loss_total": rec.loss.total, "loss_clip": rec.loss.clip,
        "loss_soft": rec.loss.soft, "loss_sub": rec.loss.sub, "grad_norm": rec.grad_norm,
        "n_dropped": rec.n_dropped, "n_dropped_noisy": rec.n_dropped_noisy,
    }


def write_rows(path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def write_telemetry(records, path) -> None:
    write_rows(path, TELEMETRY_COLUMNS, (telemetry_row(r) for r in records))


def read_telemetry(path) -> list[dict]:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty telemetry file", 1, str(path)) from None
        missing = [c for c in TELEMETRY_COLUMNS if c not in header]
        if missing:
            raise ParseError(f"missing columns {missing}", 1, str(path))
        rows = []
        for lineno, raw in enumerate(reader, 2):
            if len(raw) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(raw)}", lineno, str(path))
            row = {}
            for key, val in zip(header, raw):
                try:
                    row[key] = int(val) if key in _INT_COLUMNS else float(val)
                except ValueError:
                    raise ParseError(f"bad value {val!r} for {key}", lineno, str(path)) from None
            rows.append(row)
    return rows


def write_drops(records, path) -> None:
    """One line per step: step, epoch, then the dropped node ids separated by spaces."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,epoch,dropped\n")
        for r in records:
            fh.write(f"{r.step},{r.epoch},{' '.join(str(int(i)) for i in r.dropped_nodes)}\n")


def read_drops(path) -> list[tuple[int, int, np.ndarray]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        next(fh, None)
        for lineno, line in enumerate(fh, 2):
            parts = line.rstrip("\n").split(",")
            if len(parts) != 3:
                raise ParseError("expected step,epoch,dropped", lineno, str(path))
            try:
                ids = np.array([int(x) for x in parts[2].split()], dtype=np.int64)
                out.append((int(parts[0]), int(parts[1]), ids))
            except ValueError:
                raise ParseError(f"bad drops line {line.strip()!r}", lineno, str(path)) from None
    return out


def write_epochs(epoch_evals, path) -> None:
    cols = ("epoch", "val_accuracy", "mean_loss", "mean_theta", "n_dropped", "n_dropped_noisy")
    write_rows(path, cols, epoch_evals)


# -- checkpoints -------------------------------------------------------------


def dumps_checkpoint(params: ModelParams) -> str:
    lines = [CHECKPOINT_MAGIC]
    for name, arr in params.named_arrays():
        shape = " ".join(str(s) for s in arr.shape)
        lines.append(f"{name} {arr.ndim} {shape}")
        lines.append(" ".join(repr(float(x)) for x in arr.ravel()))
    return "\n".join(lines) + "\n"


def loads_checkpoint(text: str, path: str = "<checkpoint>") -> ModelParams:
    lines = text.splitlines()
    if not lines or lines[0].strip() != CHECKPOINT_MAGIC:
        raise ParseError(f"expected header {CHECKPOINT_MAGIC!r}", 1, path)
    arrays = {}
    i = 1
    while i < len(lines):
        head = lines[i].split()
        if not head:
            i += 1
            continue
        try:
            name, ndim = head[0], int(head[1])
            shape = tuple(int(s) for s in head[2:2 + ndim])
            if len(shape) != ndim:
                raise ValueError
        except (IndexError, ValueError):
            raise ParseError(f"bad array header {lines[i]!r}", i + 1, path) from None
        if i + 1 >= len(lines):
            raise ParseError(f"missing values for {name}", i + 1, path)
        try:
            vals = np.array([float(x) for x in lines[i + 1].split()], dtype=np.float64)
        except ValueError:
            raise ParseError(f"non-numeric value in {name}", i + 2, path) from None
        if vals.size != math.prod(shape):
            raise ParseError(f"{name}: expected {math.prod(shape)} values, got {vals.size}", i + 2, path)
        arrays[name] = vals.reshape(shape)
        i += 2
    try:
        return ModelParams.from_named(arrays)
    except (KeyError, ValueError) as exc:
        raise ParseError(f"incomplete checkpoint: {exc}", len(lines), path) from None


def write_checkpoint(params: ModelParams, path) -> None:
    Path(path).write_text(dumps_checkpoint(params), encoding="utf-8")


def read_checkpoint(path) -> ModelParams:
    return loads_checkpoint(Path(path).read_text(encoding="utf-8"), str(path))


# -- evaluation json ---------------------------------------------------------


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_eval(metrics: dict, path, config_hash: str, seed: int, **extra) -> None:
    write_json({"metrics": metrics, "config_hash": config_hash, "seed": seed, **extra}, path)
