"""
Top-K beam prediction metrics and the multi-arm experiment runner.

Any object with a ``logits(x) -> ndarray[B, V+1, M]`` method can be
evaluated; :class:`~dfkd_beam.models.SeqModel` is the usual one.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Protocol

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .errors import ConfigMismatchError, ContractError, DfkdError, ManifestError, ParameterError
from .losses import DEFAULT_GAMMA, DEFAULT_TEMPERATURE, GENERATOR_LOSS_KINDS, GeneratorLossWeights, KDConfig
from .models import GeneratorConfig, student_config, teacher_config
from .pipelines import (TrainConfig, train_generator, train_student_df, train_student_kd,
                        train_student_scratch, train_teacher)
from .scenario import Dataset, ScenarioConfig, load_dataset, make_dataset, save_dataset

logger = logging.getLogger(__name__)

REPORT_KS = (1, 5)


class LogitModel(Protocol):
    def logits(self, x: np.ndarray) -> np.ndarray: ...


def rank_beams(logits: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest logits along the last axis, descending, ties to the smaller index."""
    m = logits.shape[-1]
    if not 1 <= k <= m:
        raise ParameterError(f"K must lie in [1, {m}], got {k}")
    # stable sort of the negated logits keeps equal values in index order
    return np.argsort(-logits, axis=-1, kind="stable")[..., :k]


def predict_beams(model: LogitModel, x: np.ndarray, k: int) -> np.ndarray:
    """Ranked top-``k`` beams per horizon offset, shape B×(V+1)×k."""
    return rank_beams(model.logits(np.asarray(x)), k)


def topk_hits(logits: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    return (rank_beams(logits, k) == labels[..., None]).any(axis=-1)


def topk_accuracy(model: LogitModel, dataset: Dataset, split: str, k: int) -> np.ndarray:
    x, y = dataset.split(split)
    if len(x) == 0:
        raise ContractError(f"split {split!r} is empty")
    return topk_hits(model.logits(x), y, k).mean(axis=0)


@dataclass
class EvalReport:
    model: str
    split: str
    config_hash: str
    top1: list[float]
    top5: list[float]
    confusion: list[list[dict]] = field(default_factory=list)
    num_samples: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def rows(self, arm: str | None = None) -> list[dict]:
        """One row per (offset, K)."""
        out = []
        for k, accs in ((1, self.top1), (5, self.top5)):
            for v, a in enumerate(accs):
                out.append({"arm": arm or self.model, "offset": v, "k": k, "accuracy": a,
                            "split": self.split, "config_hash": self.config_hash})
        return sorted(out, key=lambda r: (r["offset"], r["k"]))


def confusion_summary(pred: np.ndarray, labels: np.ndarray, top: int = 3) -> list[dict]:
    wrong = pred != labels
    if not wrong.any():
        return []
    pairs, counts = np.unique(np.stack([labels[wrong], pred[wrong]], axis=1), axis=0, return_counts=True)
    order = np.lexsort((pairs[:, 1], pairs[:, 0], -counts))[:top]
    return [{"true": int(pairs[i, 0]), "pred": int(pairs[i, 1]), "count": int(counts[i])} for i in order]


def evaluate(model: LogitModel, dataset: Dataset, split: str = "test", name: str = "model") -> EvalReport:
    x, y = dataset.split(split)
    if len(x) == 0:
        raise ContractError(f"split {split!r} is empty")
    logits = model.logits(x)
    if logits.shape != y.shape + (dataset.config.num_beams,):
        raise ConfigMismatchError(f"model produces logits {logits.shape[1:]}, dataset expects "
                                  f"{y.shape[1:] + (dataset.config.num_beams,)}")
    top1 = topk_hits(logits, y, 1).mean(axis=0)
    top5 = topk_hits(logits, y, min(5, logits.shape[-1])).mean(axis=0)
    pred = logits.argmax(axis=-1)
    return EvalReport(model=name, split=split, config_hash=dataset.config_hash,
                      top1=[float(a) for a in top1], top5=[float(a) for a in top5],
                      confusion=[confusion_summary(pred[:, v], y[:, v]) for v in range(y.shape[1])],
                      num_samples=int(len(x)))


def check_compatible(ckpt: Checkpoint, dataset: Dataset) -> None:
    c, d = ckpt.config, dataset.config
    if ckpt.kind == "generator":
        raise ConfigMismatchError("generator checkpoints cannot be evaluated for beam prediction")
    mismatches = [(a, getattr(c, a), getattr(d, b)) for a, b in
                  (("num_beams", "num_beams"), ("input_dim", "feature_dim"),
                   ("obs_len", "obs_len"), ("horizon", "horizon"))
                  if getattr(c, a) != getattr(d, b)]
    if mismatches:
        desc = ", ".join(f"{a}: checkpoint {x} vs dataset {y}" for a, x, y in mismatches)
        raise ConfigMismatchError(desc)


def evaluate_checkpoint(ckpt: Checkpoint, dataset: Dataset, split: str = "test", name: str | None = None) -> EvalReport:
    check_compatible(ckpt, dataset)
    return evaluate(ckpt.model(), dataset, split, name or ckpt.kind)


# ---------------------------------------------------------------------------
# experiment manifests
# ---------------------------------------------------------------------------

PIPELINES = ("teacher", "df", "kd", "kd_mse", "scratch")
_ARM_KEYS = {"name", "pipeline", "generator_loss", "student_loss", "temperature", "gamma", "alpha", "beta",
             "epochs", "generator_epochs", "student_epochs", "hidden_dim", "seed", "steps_per_epoch",
             "batch_size", "lr"}
_TOP_KEYS = {"name", "seed", "split", "dataset", "scenario", "teacher", "arms"}


@dataclass
class Arm:
    name: str
    pipeline: str
    options: dict


@dataclass
class Manifest:
    name: str
    seed: int
    split: str
    dataset: str | None
    scenario: dict
    teacher: dict
    arms: list[Arm]
    base_dir: str = "."


def _fail(field_path: str, msg: str):
    raise ManifestError(f"manifest field {field_path}: {msg}")


def parse_manifest(text: str, base_dir: str = ".") -> Manifest:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        _fail("<root>", "expected a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        _fail(sorted(unknown)[0], "unknown field")
    arms_raw = doc.get("arms")
    if not isinstance(arms_raw, list) or not arms_raw:
        _fail("arms", "must be a non-empty list")
    arms, seen = [], set()
    for i, a in enumerate(arms_raw):
        where = f"arms[{i}]"
        if not isinstance(a, dict):
            _fail(where, "expected an object")
        bad = set(a) - _ARM_KEYS
        if bad:
            _fail(f"{where}.{sorted(bad)[0]}", "unknown field")
        name = a.get("name")
        if not isinstance(name, str) or not name:
            _fail(f"{where}.name", "must be a non-empty string")
        if name in seen:
            _fail(f"{where}.name", f"duplicate arm name {name!r}")
        seen.add(name)
        pipe = a.get("pipeline")
        if pipe not in PIPELINES:
            _fail(f"{where}.pipeline", f"must be one of {PIPELINES}, got {pipe!r}")
        if "generator_loss" in a and a["generator_loss"] not in GENERATOR_LOSS_KINDS:
            _fail(f"{where}.generator_loss", f"must be one of {GENERATOR_LOSS_KINDS}")
        if "student_loss" in a and a["student_loss"] not in ("kl", "mse"):
            _fail(f"{where}.student_loss", "must be 'kl' or 'mse'")
        opts = {k: v for k, v in a.items() if k not in ("name", "pipeline")}
        arms.append(Arm(name, pipe, opts))
    teacher = doc.get("teacher", {})
    scenario = doc.get("scenario", {})
    if not isinstance(teacher, dict):
        _fail("teacher", "expected an object")
    if not isinstance(scenario, dict):
        _fail("scenario", "expected an object")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int):
        _fail("seed", "must be an integer")
    split = doc.get("split", "test")
    if split not in ("train", "val", "test"):
        _fail("split", "must be train, val or test")
    return Manifest(name=doc.get("name", "experiment"), seed=seed, split=split, dataset=doc.get("dataset"),
                    scenario=scenario, teacher=teacher, arms=arms, base_dir=base_dir)


def load_manifest(path) -> Manifest:
    with open(path) as fh:
        return parse_manifest(fh.read(), base_dir=os.path.dirname(os.path.abspath(path)))


def _resolve(base: str, p: str) -> str:
    return p if os.path.isabs(p) else os.path.join(base, p)


def _train_kwargs(opts: dict, seed: int, pipeline: str, epochs_key: str = "epochs") -> TrainConfig:
    kw = {"seed": opts.get("seed", seed)}
    for k in ("batch_size", "lr", "steps_per_epoch"):
        if k in opts:
            kw[k] = opts[k]
    if epochs_key in opts:
        kw["epochs"] = opts[epochs_key]
    return TrainConfig.for_pipeline(pipeline, **kw)


def run_arm(arm: Arm, teacher: Checkpoint, dataset: Dataset, seed: int, split: str,
            out_dir: str | None = None) -> EvalReport:
    o = arm.options
    tcfg = teacher.config
    sconf = student_config(input_dim=tcfg.input_dim, num_beams=tcfg.num_beams, obs_len=tcfg.obs_len,
                           horizon=tcfg.horizon, **({"hidden_dim": o["hidden_dim"]} if "hidden_dim" in o else {}))
    if arm.pipeline == "teacher":
        ckpt = teacher
    elif arm.pipeline == "df":
        student_loss = o.get("student_loss", "mse")
        temp = o.get("temperature", DEFAULT_TEMPERATURE if student_loss == "kl" else None)
        kd = KDConfig(temperature=temp, student_loss_kind=student_loss,
                      generator_loss_kind=o.get("generator_loss", "metadata_only"))
        weights = GeneratorLossWeights(alpha=o.get("alpha", 1e-4), beta=o.get("beta", 1e-2))
        gen, _ = train_generator(teacher, GeneratorConfig(obs_len=tcfg.obs_len, feature_dim=tcfg.input_dim,
                                                          horizon=tcfg.horizon),
                                 _train_kwargs(o, seed, "generator", "generator_epochs"), kd, weights)
        ckpt, _ = train_student_df(teacher, gen, sconf, _train_kwargs(o, seed, "student_df", "student_epochs"), kd)
        if out_dir:
            save_checkpoint(gen, os.path.join(out_dir, f"{arm.name}.generator.ckpt"))
    elif arm.pipeline in ("kd", "kd_mse"):
        kind = "kl" if arm.pipeline == "kd" else "mse"
        kd = KDConfig(temperature=o.get("temperature", DEFAULT_TEMPERATURE), gamma=o.get("gamma", DEFAULT_GAMMA),
                      student_loss_kind=kind)
        ckpt, _ = train_student_kd(teacher, dataset, sconf, _train_kwargs(o, seed, arm.pipeline), kd)
    else:
        ckpt, _ = train_student_scratch(dataset, _train_kwargs(o, seed, "scratch"), sconf)
    if out_dir and arm.pipeline != "teacher":
        save_checkpoint(ckpt, os.path.join(out_dir, f"{arm.name}.ckpt"))
    return evaluate_checkpoint(ckpt, dataset, split, name=arm.name)


@dataclass
class ExperimentResult:
    reports: list[EvalReport]
    failures: dict[str, str]

    @property
    def ok(self) -> bool:
        return not self.failures

    def table(self) -> list[dict]:
        return [row for r in self.reports for row in r.rows(r.model)]


def write_table(rows: list[dict], csv_path, json_path) -> None:
    cols = ["arm", "offset", "k", "accuracy", "split", "config_hash"]
    with open(csv_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        w.writerows(rows)
    with open(json_path, "w") as fh:
        json.dump(rows, fh, indent=1)


def run_experiment(manifest_path, out_dir=None, manifest: Manifest | None = None,
                   teacher: Checkpoint | None = None, dataset: Dataset | None = None) -> ExperimentResult:
    """Run every arm of a manifest against one shared dataset and teacher.

    Writes ``<arm>.json`` per arm plus ``comparison.csv`` / ``comparison.json``
    into ``out_dir``. A failing arm is recorded and the remaining arms still
    run.
    """
    m = manifest or load_manifest(manifest_path)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    if dataset is None:
        if m.dataset:
            dataset = load_dataset(_resolve(m.base_dir, m.dataset))
        else:
            sc = dict(m.scenario)
            sc.setdefault("seed", m.seed)
            dataset = make_dataset(ScenarioConfig.from_dict(sc))
            if out_dir:
                save_dataset(dataset, os.path.join(out_dir, "dataset.bin"))
    if teacher is None:
        t = m.teacher
        if "checkpoint" in t:
            teacher = load_checkpoint(_resolve(m.base_dir, t["checkpoint"]), require_metadata=True)
        else:
            mc = teacher_config(input_dim=dataset.config.feature_dim, num_beams=dataset.config.num_beams,
                                obs_len=dataset.config.obs_len, horizon=dataset.config.horizon,
                                **({"hidden_dim": t["hidden_dim"]} if "hidden_dim" in t else {}))
            teacher, _ = train_teacher(dataset, _train_kwargs(t, m.seed, "teacher"), mc)
            if out_dir:
                save_checkpoint(teacher, os.path.join(out_dir, "teacher.ckpt"))
    check_compatible(teacher, dataset)

    reports, failures = [], {}
    for arm in m.arms:
        logger.info("running arm %s (%s)", arm.name, arm.pipeline)
        try:
            rep = run_arm(arm, teacher, dataset, m.seed, m.split, out_dir)
        except DfkdError as exc:
            logger.error("arm %s failed: %s", arm.name, exc)
            failures[arm.name] = f"{type(exc).__name__}: {exc}"
            continue
        reports.append(rep)
        if out_dir:
            with open(os.path.join(out_dir, f"{arm.name}.json"), "w") as fh:
                json.dump(rep.to_dict(), fh, indent=1)
    result = ExperimentResult(reports, failures)
    if out_dir:
        write_table(result.table(), os.path.join(out_dir, "comparison.csv"),
                    os.path.join(out_dir, "comparison.json"))
    return result
