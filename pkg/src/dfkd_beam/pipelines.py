"""
Training procedures.

* :func:`train_teacher` and :func:`train_student_scratch` - supervised
  cross-entropy on the real train split (the teacher additionally records
  hidden-state statistics afterwards).
* :func:`train_generator` - knowledge inversion of a frozen teacher.
* :func:`train_student_df` - distillation on generated data only; the
  signature takes no dataset.
* :func:`train_student_kd` - standard KD / KD-MSE on real data.

For the data-free phases an epoch is a fixed number of optimizer steps
(``TrainConfig.steps_per_epoch``, 32 by default) since there is no dataset to
pass over.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .autodiff import Tensor
from .checkpoint import Checkpoint, require_teacher
from .errors import ContractError, ParameterError
from .losses import (GeneratorLossWeights, KDConfig, combine_generator_loss, cross_entropy_loss,
                     generator_loss_terms, kd_loss, kd_mse_loss, kl_loss, mse_logit_loss)
from .models import (Adam, Generator, GeneratorConfig, SeqModel, SeqModelConfig,
                     init_generator_params, init_seq_params, student_config, teacher_config)
from .scenario import Dataset

logger = logging.getLogger(__name__)

# reference sizes quoted for the original teacher / student; logged, never asserted
REFERENCE_PARAM_COUNTS = {"teacher": 96_640, "student": 25_408}

DEFAULT_EPOCHS = {"teacher": 100, "scratch": 100, "generator": 500, "student_df": 500,
                  "kd": 20, "kd_mse": 40}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    steps_per_epoch: int = 32

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.steps_per_epoch < 1:
            raise ParameterError("epochs, batch_size and steps_per_epoch must be positive")
        if not self.lr > 0:
            raise ParameterError(f"lr must be positive, got {self.lr}")

    @classmethod
    def for_pipeline(cls, pipeline: str, **kw) -> "TrainConfig":
        kw.setdefault("epochs", DEFAULT_EPOCHS[pipeline])
        return cls(**kw)


@dataclass
class RunLog:
    """Per-epoch records; ``wall_clock`` is excluded from equality so reruns compare equal."""

    pipeline: str
    seed: int
    config: dict
    records: list[dict] = field(default_factory=list)
    final: dict = field(default_factory=dict)
    wall_clock: list[float] = field(default_factory=list, compare=False)

    def log(self, epoch: int, elapsed: float, **values) -> None:
        if self.records and epoch <= self.records[-1]["epoch"]:
            raise ContractError("epoch indices must increase")
        self.records.append({"epoch": epoch, **{k: float(v) for k, v in values.items()}})
        self.wall_clock.append(elapsed)

    def series(self, key: str) -> np.ndarray:
        return np.array([r[key] for r in self.records])

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(json.dumps({"pipeline": self.pipeline, "seed": self.seed, "config": self.config}) + "\n")
            for rec, wc in zip(self.records, self.wall_clock):
                fh.write(json.dumps({**rec, "wall_clock": wc}) + "\n")
            fh.write(json.dumps({"final": self.final}) + "\n")


def _seeds(seed: int, n: int) -> list[int]:
    """Independent child seeds for init / shuffling / noise."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def params_checksum(params) -> str:
    h = hashlib.sha256()
    for k in sorted(params):
        v = params[k]
        h.update(k.encode())
        h.update(np.ascontiguousarray(v.data if isinstance(v, Tensor) else v, dtype=np.float64).tobytes())
    return h.hexdigest()


def top1(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-offset top-1 accuracy."""
    return (logits.argmax(axis=-1) == labels).mean(axis=0)


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield order[i:i + batch_size]


def feature_statistics(model: SeqModel, x: np.ndarray, batch_size: int = 512) -> tuple[np.ndarray, np.ndarray]:
    """Streaming (Chan et al. merge) mean and biased variance of the final hidden state."""
    n = 0
    mean = np.zeros(model.config.hidden_dim)
    m2 = np.zeros(model.config.hidden_dim)
    for i in range(0, len(x), batch_size):
        h = model.hidden(x[i:i + batch_size], batch_size=batch_size)
        nb = len(h)
        mb = h.mean(axis=0)
        m2b = ((h - mb) ** 2).sum(axis=0)
        delta = mb - mean
        tot = n + nb
        mean = mean + delta * nb / tot
        m2 = m2 + m2b + delta ** 2 * n * nb / tot
        n = tot
    return mean, m2 / n


# ---------------------------------------------------------------------------
# supervised
# ---------------------------------------------------------------------------

def _train_supervised(dataset: Dataset, mconfig: SeqModelConfig, tconfig: TrainConfig,
                      pipeline: str) -> tuple[SeqModel, RunLog]:
    x, y = dataset.split("train")
    if len(x) == 0:
        raise ContractError("the train split is empty")
    xv, yv = dataset.split("val")
    init_seed, shuffle_seed = _seeds(tconfig.seed, 2)
    model = SeqModel(mconfig, init_seq_params(mconfig, init_seed))
    opt = Adam(model.params, lr=tconfig.lr)
    rng = np.random.default_rng(shuffle_seed)
    log = RunLog(pipeline, tconfig.seed, {"model": mconfig.to_dict(), "train": asdict(tconfig)})
    logger.info("%s: %d parameters (reference %s)", pipeline, model.num_params,
                REFERENCE_PARAM_COUNTS.get("teacher" if pipeline == "teacher" else "student"))
    t0 = time.perf_counter()
    for epoch in range(1, tconfig.epochs + 1):
        total, count = 0.0, 0
        for idx in _batches(len(x), tconfig.batch_size, rng):
            opt.zero_grad()
            logits, _ = model(x[idx])
            loss = cross_entropy_loss(logits, y[idx])
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
            count += len(idx)
        rec = {"train_ce": total / count}
        if len(xv):
            rec["val_top1"] = float(top1(model.logits(xv), yv)[0])
        log.log(epoch, time.perf_counter() - t0, **rec)
        logger.debug("%s epoch %d %s", pipeline, epoch, rec)
    log.final = {"num_params": model.num_params}
    return model, log


def train_teacher(dataset: Dataset, tconfig: TrainConfig | None = None,
                  mconfig: SeqModelConfig | None = None) -> tuple[Checkpoint, RunLog]:
    """Cross-entropy pretraining, then one pass over the train split for hidden-state mean/variance."""
    tconfig = tconfig or TrainConfig.for_pipeline("teacher")
    mconfig = mconfig or teacher_config(**_shape_from(dataset))
    model, log = _train_supervised(dataset, mconfig, tconfig, "teacher")
    x, _ = dataset.split("train")
    mean, var = feature_statistics(model, x)
    ckpt = Checkpoint("teacher", mconfig, model.state_dict(), meta_mean=mean, meta_var=var,
                      provenance={"pipeline": "teacher", "seed": tconfig.seed, "epochs": tconfig.epochs,
                                  "dataset_hash": dataset.config_hash})
    return ckpt, log


def train_student_scratch(dataset: Dataset, tconfig: TrainConfig | None = None,
                          mconfig: SeqModelConfig | None = None) -> tuple[Checkpoint, RunLog]:
    tconfig = tconfig or TrainConfig.for_pipeline("scratch")
    mconfig = mconfig or student_config(**_shape_from(dataset))
    model, log = _train_supervised(dataset, mconfig, tconfig, "scratch")
    return Checkpoint("student", mconfig, model.state_dict(),
                      provenance={"pipeline": "scratch", "seed": tconfig.seed, "epochs": tconfig.epochs,
                                  "dataset_hash": dataset.config_hash}), log


def _shape_from(dataset: Dataset) -> dict:
    c = dataset.config
    return {"input_dim": c.feature_dim, "num_beams": c.num_beams, "obs_len": c.obs_len, "horizon": c.horizon}


# ---------------------------------------------------------------------------
# data-free
# ---------------------------------------------------------------------------

def train_generator(teacher: Checkpoint, gconfig: GeneratorConfig | None = None,
                    tconfig: TrainConfig | None = None, kd: KDConfig | None = None,
                    weights: GeneratorLossWeights | None = None) -> tuple[Checkpoint, RunLog]:
    """Invert the frozen teacher into a noise-to-sequence generator.

    All three loss terms are computed and logged every step; only the ones
    selected by ``kd.generator_loss_kind`` enter the backward pass.
    """
    require_teacher(teacher)
    tcfg = teacher.config
    gconfig = gconfig or GeneratorConfig(obs_len=tcfg.obs_len, feature_dim=tcfg.input_dim, horizon=tcfg.horizon)
    if (gconfig.obs_len, gconfig.feature_dim, gconfig.horizon) != (tcfg.obs_len, tcfg.input_dim, tcfg.horizon):
        raise ParameterError("generator output shape does not match the teacher input")
    tconfig = tconfig or TrainConfig.for_pipeline("generator")
    kd = kd or KDConfig()
    weights = weights or GeneratorLossWeights()

    init_seed, noise_seed = _seeds(tconfig.seed, 2)
    teacher_model = teacher.model(trainable=False)
    gen = Generator(gconfig, init_generator_params(gconfig, init_seed))
    opt = Adam(gen.params, lr=tconfig.lr)
    rng = np.random.default_rng(noise_seed)
    log = RunLog("generator", tconfig.seed,
                 {"generator": gconfig.to_dict(), "train": asdict(tconfig), "loss_kind": kd.generator_loss_kind,
                  "alpha": weights.alpha, "beta": weights.beta})
    t0 = time.perf_counter()
    for epoch in range(1, tconfig.epochs + 1):
        sums = {"loss": 0.0, "metadata": 0.0, "activation": 0.0, "entropy": 0.0}
        for _ in range(tconfig.steps_per_epoch):
            opt.zero_grad()
            noise = rng.standard_normal((tconfig.batch_size, gconfig.noise_dim))
            logits, feat = teacher_model(gen(noise))
            terms = generator_loss_terms(feat, logits, teacher.meta_mean, teacher.meta_var)
            loss = combine_generator_loss(kd.generator_loss_kind, weights, terms)
            loss.backward()
            opt.step()
            sums["loss"] += loss.item()
            for k, v in terms.items():
                sums[k] += v.item()
        log.log(epoch, time.perf_counter() - t0, **{k: v / tconfig.steps_per_epoch for k, v in sums.items()})
    ckpt = Checkpoint("generator", gconfig, gen.state_dict(),
                      provenance={"pipeline": "generator", "seed": tconfig.seed, "epochs": tconfig.epochs,
                                  "loss_kind": kd.generator_loss_kind, "alpha": weights.alpha,
                                  "beta": weights.beta, "teacher": params_checksum(teacher.params)})
    return ckpt, log


def train_student_df(teacher: Checkpoint, generator: Checkpoint, sconfig: SeqModelConfig | None = None,
                     tconfig: TrainConfig | None = None, kd: KDConfig | None = None) -> tuple[Checkpoint, RunLog]:
    """Distil the teacher into a student using generated sequences only."""
    kd = kd or KDConfig()
    tcfg = teacher.config
    sconfig = sconfig or student_config(input_dim=tcfg.input_dim, num_beams=tcfg.num_beams,
                                        obs_len=tcfg.obs_len, horizon=tcfg.horizon)
    if replace(sconfig, hidden_dim=tcfg.hidden_dim) != tcfg:
        raise ParameterError("student and teacher must agree on everything except hidden_dim")
    tconfig = tconfig or TrainConfig.for_pipeline("student_df")
    if kd.student_loss_kind == "mse" and kd.temperature is not None:
        logger.warning("temperature %.3g is ignored by the MSE student loss", kd.temperature)

    init_seed, noise_seed = _seeds(tconfig.seed, 2)
    teacher_model = teacher.model(trainable=False)
    gen = generator.generator(trainable=False)
    student = SeqModel(sconfig, init_seq_params(sconfig, init_seed))
    opt = Adam(student.params, lr=tconfig.lr)
    rng = np.random.default_rng(noise_seed)
    log = RunLog("student_df", tconfig.seed, {"student": sconfig.to_dict(), "train": asdict(tconfig),
                                               "loss_kind": kd.student_loss_kind, "temperature": kd.temperature})
    t0 = time.perf_counter()
    for epoch in range(1, tconfig.epochs + 1):
        total = 0.0
        for _ in range(tconfig.steps_per_epoch):
            opt.zero_grad()
            noise = rng.standard_normal((tconfig.batch_size, gen.config.noise_dim))
            xs = gen.sample(noise)
            zt = teacher_model.logits(xs)
            zs, _ = student(xs)
            if kd.student_loss_kind == "kl":
                loss = kl_loss(zt, zs, kd.temperature)
            else:
                loss = mse_logit_loss(zt, zs)
            loss.backward()
            opt.step()
            total += loss.item()
        log.log(epoch, time.perf_counter() - t0, loss=total / tconfig.steps_per_epoch)
    ckpt = Checkpoint("student", sconfig, student.state_dict(),
                      provenance={"pipeline": "student_df", "seed": tconfig.seed, "epochs": tconfig.epochs,
                                  "loss_kind": kd.student_loss_kind,
                                  "teacher": params_checksum(teacher.params),
                                  "generator": params_checksum(generator.params)})
    return ckpt, log


# ---------------------------------------------------------------------------
# standard KD baselines
# ---------------------------------------------------------------------------

def train_student_kd(teacher: Checkpoint, dataset: Dataset, sconfig: SeqModelConfig | None = None,
                     tconfig: TrainConfig | None = None, kd: KDConfig | None = None) -> tuple[Checkpoint, RunLog]:
    """KD on real data: KL kind uses gamma*KL + (1-gamma)*CE, MSE kind is KD-MSE."""
    kd = kd or KDConfig(temperature=5.0, student_loss_kind="kl")
    tcfg = teacher.config
    sconfig = sconfig or student_config(input_dim=tcfg.input_dim, num_beams=tcfg.num_beams,
                                        obs_len=tcfg.obs_len, horizon=tcfg.horizon)
    if replace(sconfig, hidden_dim=tcfg.hidden_dim) != tcfg:
        raise ParameterError("student and teacher must agree on everything except hidden_dim")
    pipeline = "kd" if kd.student_loss_kind == "kl" else "kd_mse"
    tconfig = tconfig or TrainConfig.for_pipeline(pipeline)
    x, y = dataset.split("train")
    if len(x) == 0:
        raise ContractError("the train split is empty")
    xv, yv = dataset.split("val")

    init_seed, shuffle_seed = _seeds(tconfig.seed, 2)
    teacher_model = teacher.model(trainable=False)
    student = SeqModel(sconfig, init_seq_params(sconfig, init_seed))
    opt = Adam(student.params, lr=tconfig.lr)
    rng = np.random.default_rng(shuffle_seed)
    log = RunLog(pipeline, tconfig.seed, {"student": sconfig.to_dict(), "train": asdict(tconfig),
                                           "gamma": kd.gamma, "temperature": kd.temperature})
    use_teacher = kd.gamma > 0
    t0 = time.perf_counter()
    for epoch in range(1, tconfig.epochs + 1):
        total, count = 0.0, 0
        for idx in _batches(len(x), tconfig.batch_size, rng):
            opt.zero_grad()
            zs, _ = student(x[idx])
            if not use_teacher:
                loss = cross_entropy_loss(zs, y[idx])
            else:
                zt = teacher_model.logits(x[idx])
                if kd.student_loss_kind == "kl":
                    loss = kd_loss(zt, zs, y[idx], kd.gamma, kd.temperature)
                else:
                    loss = kd_mse_loss(zt, zs, y[idx], kd.gamma)
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
            count += len(idx)
        rec = {"loss": total / count}
        if len(xv):
            rec["val_top1"] = float(top1(student.logits(xv), yv)[0])
        log.log(epoch, time.perf_counter() - t0, **rec)
    ckpt = Checkpoint("student", sconfig, student.state_dict(),
                      provenance={"pipeline": pipeline, "seed": tconfig.seed, "epochs": tconfig.epochs,
                                  "gamma": kd.gamma, "temperature": kd.temperature,
                                  "teacher": params_checksum(teacher.params),
                                  "dataset_hash": dataset.config_hash})
    return ckpt, log
