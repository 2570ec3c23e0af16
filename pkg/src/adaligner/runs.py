"""Execute configured runs and sweeps, writing their artifacts to disk."""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import formats
from .config import RunConfig, coerce
from .data import SyntheticTag, generate_tag, inject_noise, load_tag
from .errors import ConfigError
from .theory import validation_report
from .trainer import RunArtifacts, TrainingData, batches_per_epoch, run_training

log = logging.getLogger(__name__)

SWEEP_METRICS = ("accuracy", "macro_f1", "link_auc", "n2t_mrr", "t2n_mrr", "mean_theta", "final_theta",
                 "best_epoch", "steps")
# "fixed_theta" is not a config key: it switches the mode and sets the pinned value
AXIS_ALIASES = ("fixed_theta",)


def build_dataset(rc: RunConfig) -> SyntheticTag:
    if rc.dataset:
        path = Path(rc.dataset)
        if not path.is_file():
            raise ConfigError(f"dataset file not found: {path}")
        return load_tag(path)
    seed = rc.effective_data_seed
    return inject_noise(generate_tag(rc.generator(), seed), rc.noise_rate, seed)


@dataclass
class RunResult:
    config: RunConfig
    artifacts: RunArtifacts
    validation: dict

    @property
    def passed(self) -> bool:
        return bool(self.validation["passed"])

    def summary(self) -> dict:
        fe = self.artifacts.final_eval
        recs = self.artifacts.records
        return {
            "accuracy": fe["accuracy"], "macro_f1": fe["macro_f1"], "link_auc": fe["link_auc"],
            "n2t_mrr": fe["n2t_mrr"], "t2n_mrr": fe["t2n_mrr"],
            "mean_theta": self.artifacts.mean_theta(),
            "final_theta": recs[-1].theta if recs else float("nan"),
            "best_epoch": self.artifacts.best_epoch, "steps": len(recs),
        }


def execute(rc: RunConfig, out_dir=None, tag: SyntheticTag | None = None) -> RunResult:
    """Train one run; with ``out_dir`` set, write every artifact there."""
    rc.validate()
    tag = tag if tag is not None else build_dataset(rc)
    data = TrainingData(tag)
    cfgs = rc.configs()
    art = run_training(data, cfgs, rc.seed)
    rows = [formats.telemetry_row(r) for r in art.records]
    window = batches_per_epoch(tag.train.size, rc.batch_size)
    report = validation_report(rows, cfgs.controller, rc.mode, window=window)
    result = RunResult(rc, art, report)
    if out_dir is not None:
        write_run(result, Path(out_dir))
    return result


def write_run(result: RunResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    rc, art = result.config, result.artifacts
    (out / "config.cfg").write_text(rc.dumps(), encoding="utf-8")
    formats.write_telemetry(art.records, out / "telemetry.csv")
    formats.write_epochs(art.epoch_evals, out / "epochs.csv")
    formats.write_drops(art.records, out / "drops.csv")
    for name, params in art.checkpoints.items():
        formats.write_checkpoint(params, out / f"checkpoint_{name}.txt")
    h = rc.config_hash()
    formats.write_eval(art.final_eval, out / "eval.json", h, rc.seed, best_epoch=art.best_epoch,
                       checkpoint="best")
    formats.write_eval(art.init_eval, out / "eval_init.json", h, rc.seed, checkpoint="init")
    formats.write_json(result.validation, out / "validation.json")


# -- sweeps ------------------------------------------------------------------


def axis_updates(axis: str, value: str) -> dict:
    if axis == "fixed_theta":
        return {"mode": "fixed_theta", "fixed_theta_value": coerce("fixed_theta_value", value)}
    if axis not in RunConfig.keys():
        valid = ", ".join(list(AXIS_ALIASES) + RunConfig.keys())
        raise ConfigError(f"unknown sweep axis {axis!r}; valid keys: {valid}")
    return {axis: coerce(axis, value)}


def _sweep_job(args):
    rc, out_dir = args
    res = execute(rc, out_dir)
    return res.summary(), res.passed


def sweep(base: RunConfig, axis: str, values, seeds, out_dir, jobs: int = 1) -> list[dict]:
    """Run ``values x seeds`` and write ``sweep.csv``; rows come back in grid order."""
    out_dir = Path(out_dir)
    grid = []
    for value in values:
        updates = axis_updates(axis, str(value))
        for s in seeds:
            rc = base.with_updates(**updates, seed=int(s))
            rc.validate()
            grid.append((str(value), int(s), rc, out_dir / f"{axis}={value}" / f"seed={s}"))
    jobs_in = [(rc, d) for _, _, rc, d in grid]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_sweep_job, jobs_in))
    else:
        outcomes = [_sweep_job(j) for j in jobs_in]
    rows = []
    for (value, s, _, _), (summary, passed) in zip(grid, outcomes):
        rows.append({"axis": axis, "value": value, "seed": s, **summary, "validation_passed": int(passed)})
    out_dir.mkdir(parents=True, exist_ok=True)
    cols = ("axis", "value", "seed", *SWEEP_METRICS, "validation_passed")
    formats.write_rows(out_dir / "sweep.csv", cols, rows)
    return rows


def read_sweep(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def theta_series(result: RunResult) -> np.ndarray:
    return np.array([r.theta for r in result.artifacts.records])
