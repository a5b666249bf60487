"""
Generate data, train, distil and evaluate beam trackers from the shell.

Usage: ``dfkd-beam <subcommand> ...``.

Hyperparameters resolve as: command-line flag > ``--config`` JSON file >
built-in default. Contract violations exit with status 1 and print a single
line ``dfkd-error: <ErrorType>: <message>`` on stderr; usage errors exit 2.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields

from .checkpoint import checkpoint_header, load_checkpoint, save_checkpoint
from .errors import DfkdError, ParameterError
from .evaluation import check_compatible, evaluate_checkpoint, run_experiment
from .losses import DEFAULT_GAMMA, DEFAULT_TEMPERATURE, GeneratorLossWeights, KDConfig
from .models import GeneratorConfig, student_config, teacher_config
from .pipelines import (DEFAULT_EPOCHS, TrainConfig, train_generator, train_student_df, train_student_kd,
                        train_student_scratch, train_teacher)
from .scenario import ScenarioConfig, load_dataset, make_dataset, read_dataset_header, save_dataset

ERROR_PREFIX = "dfkd-error"


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParameterError(f"config file {path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ParameterError(f"config file {path}: expected a JSON object")
    return doc


def _resolve(args, defaults: dict) -> dict:
    """Merge defaults < config file < explicit flags for the keys in ``defaults``."""
    cfg = _load_config_file(args.config)
    unknown = set(cfg) - set(defaults)
    if unknown:
        raise ParameterError(f"config file has unknown keys {sorted(unknown)}")
    out = {**defaults, **cfg}
    for k in defaults:
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    if getattr(args, "seed", None) is not None and "seed" in out:
        out["seed"] = args.seed
    return out


def _require_out(args) -> str:
    if not args.out:
        raise ParameterError("--out is required for this command")
    return args.out


def _write_log(log, out: str) -> None:
    log.to_jsonl(out + ".log.jsonl")


def _train_config(p: dict, pipeline: str) -> TrainConfig:
    return TrainConfig(epochs=int(p["epochs"]), batch_size=int(p["batch_size"]), lr=float(p["lr"]),
                       seed=int(p["seed"]), steps_per_epoch=int(p["steps_per_epoch"]))


def _train_defaults(pipeline: str) -> dict:
    return {"epochs": DEFAULT_EPOCHS[pipeline], "batch_size": 32, "lr": 1e-3, "seed": 0, "steps_per_epoch": 32}


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    defaults = ScenarioConfig().to_dict()
    p = _resolve(args, defaults)
    config = ScenarioConfig.from_dict(p)
    ds = make_dataset(config)
    save_dataset(ds, _require_out(args))
    _say(args, f"wrote {len(ds)} windows {ds.counts()} to {args.out} (config {ds.config_hash})")
    return 0


def cmd_train_teacher(args, pipeline: str = "teacher") -> int:
    ds = load_dataset(args.data)
    hidden = 128 if pipeline == "teacher" else 32
    p = _resolve(args, {**_train_defaults(pipeline), "hidden_dim": hidden})
    c = ds.config
    shape = dict(input_dim=c.feature_dim, num_beams=c.num_beams, obs_len=c.obs_len, horizon=c.horizon,
                 hidden_dim=int(p["hidden_dim"]))
    if pipeline == "teacher":
        ckpt, log = train_teacher(ds, _train_config(p, pipeline), teacher_config(**shape))
    else:
        ckpt, log = train_student_scratch(ds, _train_config(p, pipeline), student_config(**shape))
    out = _require_out(args)
    save_checkpoint(ckpt, out)
    _write_log(log, out)
    _say(args, f"{pipeline}: final train CE {log.records[-1]['train_ce']:.4f}, wrote {out}")
    return 0


def cmd_train_scratch(args) -> int:
    return cmd_train_teacher(args, pipeline="scratch")


def cmd_train_generator(args) -> int:
    teacher = load_checkpoint(args.teacher, require_metadata=True)
    p = _resolve(args, {**_train_defaults("generator"), "noise_dim": 500, "gen_hidden_dim": 64,
                        "alpha": 1e-4, "beta": 1e-2, "loss_kind": "metadata_only"})
    tc = teacher.config
    gconfig = GeneratorConfig(noise_dim=int(p["noise_dim"]), hidden_dim=int(p["gen_hidden_dim"]),
                              obs_len=tc.obs_len, feature_dim=tc.input_dim, horizon=tc.horizon)
    kd = KDConfig(generator_loss_kind=p["loss_kind"])
    ckpt, log = train_generator(teacher, gconfig, _train_config(p, "generator"), kd,
                                GeneratorLossWeights(alpha=float(p["alpha"]), beta=float(p["beta"])))
    out = _require_out(args)
    save_checkpoint(ckpt, out)
    _write_log(log, out)
    _say(args, f"generator: metadata loss {log.records[0]['metadata']:.4g} -> {log.records[-1]['metadata']:.4g}, wrote {out}")
    return 0


def _student_config_for(teacher, hidden: int):
    tc = teacher.config
    return student_config(input_dim=tc.input_dim, num_beams=tc.num_beams, obs_len=tc.obs_len,
                          horizon=tc.horizon, hidden_dim=hidden)


def cmd_distill_df(args) -> int:
    teacher = load_checkpoint(args.teacher, require_metadata=True)
    generator = load_checkpoint(args.generator)
    p = _resolve(args, {**_train_defaults("student_df"), "hidden_dim": 32, "student_loss": "mse",
                        "temperature": None})
    kd = KDConfig(temperature=p["temperature"], student_loss_kind=p["student_loss"])
    ckpt, log = train_student_df(teacher, generator, _student_config_for(teacher, int(p["hidden_dim"])),
                                 _train_config(p, "student_df"), kd)
    out = _require_out(args)
    save_checkpoint(ckpt, out)
    _write_log(log, out)
    _say(args, f"distill-df: final loss {log.records[-1]['loss']:.4g}, wrote {out}")
    return 0


def cmd_distill_kd(args) -> int:
    teacher = load_checkpoint(args.teacher, require_metadata=True)
    ds = load_dataset(args.data)
    check_compatible(teacher, ds)
    kind = args.student_loss or _load_config_file(args.config).get("student_loss", "kl")
    pipeline = "kd" if kind == "kl" else "kd_mse"
    p = _resolve(args, {**_train_defaults(pipeline), "hidden_dim": 32, "student_loss": "kl",
                        "temperature": DEFAULT_TEMPERATURE, "gamma": DEFAULT_GAMMA})
    kd = KDConfig(temperature=float(p["temperature"]), gamma=float(p["gamma"]), student_loss_kind=p["student_loss"])
    ckpt, log = train_student_kd(teacher, ds, _student_config_for(teacher, int(p["hidden_dim"])),
                                 _train_config(p, pipeline), kd)
    out = _require_out(args)
    save_checkpoint(ckpt, out)
    _write_log(log, out)
    _say(args, f"distill-kd ({pipeline}): final loss {log.records[-1]['loss']:.4g}, wrote {out}")
    return 0


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.data)
    report = evaluate_checkpoint(ckpt, ds, args.split, name=os.path.basename(args.checkpoint))
    text = json.dumps(report.to_dict(), indent=1)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    if not args.quiet:
        print(text)
    return 0


def cmd_experiment(args) -> int:
    result = run_experiment(args.manifest, args.out)
    for rep in result.reports:
        _say(args, f"{rep.model}: top1 {['%.3f' % a for a in rep.top1]} top5 {['%.3f' % a for a in rep.top5]}")
    for name, err in result.failures.items():
        print(f"{ERROR_PREFIX}: arm {name} failed: {err}", file=sys.stderr)
    return 0 if result.ok else 1


def cmd_inspect(args) -> int:
    with open(args.path, "rb") as fh:
        magic = fh.read(8)
    if magic == b"DFKDDSET":
        header = read_dataset_header(args.path)
    else:
        header = checkpoint_header(args.path)
    print(json.dumps(header, indent=1, sort_keys=True))
    return 0


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", default=None, help="output file (or directory for experiment)")
    common.add_argument("--config", default=None, help="JSON file with hyperparameters")
    common.add_argument("--quiet", action="store_true")

    train = argparse.ArgumentParser(add_help=False)
    train.add_argument("--epochs", type=int)
    train.add_argument("--batch-size", dest="batch_size", type=int)
    train.add_argument("--lr", type=float)
    train.add_argument("--steps-per-epoch", dest="steps_per_epoch", type=int)

    parser = argparse.ArgumentParser(prog="dfkd-beam", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="generate a synthetic dataset file")
    for f in fields(ScenarioConfig):
        if f.name in ("seed", "split_fractions"):
            continue
        p.add_argument(_flag(f.name), dest=f.name, type=type(getattr(ScenarioConfig(), f.name)))
    p.set_defaults(func=cmd_gen_data)

    for name, fn, help_ in (("train-teacher", cmd_train_teacher, "pretrain the teacher"),
                            ("train-scratch", cmd_train_scratch, "train the student without KD")):
        p = sub.add_parser(name, parents=[common, train], help=help_)
        p.add_argument("--data", required=True)
        p.add_argument("--hidden-dim", dest="hidden_dim", type=int)
        p.set_defaults(func=fn)

    p = sub.add_parser("train-generator", parents=[common, train], help="invert the teacher into a generator")
    p.add_argument("--teacher", required=True)
    p.add_argument("--noise-dim", dest="noise_dim", type=int)
    p.add_argument("--gen-hidden-dim", dest="gen_hidden_dim", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--loss-kind", dest="loss_kind",
                   choices=["weighted", "metadata_only", "activation_only", "entropy_only"])
    p.set_defaults(func=cmd_train_generator)

    p = sub.add_parser("distill-df", parents=[common, train], help="data-free student distillation")
    p.add_argument("--teacher", required=True)
    p.add_argument("--generator", required=True)
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    p.add_argument("--student-loss", dest="student_loss", choices=["kl", "mse"])
    p.add_argument("--temperature", type=float)
    p.set_defaults(func=cmd_distill_df)

    p = sub.add_parser("distill-kd", parents=[common, train], help="standard KD / KD-MSE on real data")
    p.add_argument("--teacher", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    p.add_argument("--student-loss", dest="student_loss", choices=["kl", "mse"])
    p.add_argument("--temperature", type=float)
    p.add_argument("--gamma", type=float)
    p.set_defaults(func=cmd_distill_kd)

    p = sub.add_parser("eval", parents=[common], help="Top-1/Top-5 report for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", parents=[common], help="run a manifest of experiment arms")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("inspect", parents=[common], help="print a checkpoint or dataset header")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DfkdError, FileNotFoundError) as exc:
        msg = " ".join(str(exc).split())
        print(f"{ERROR_PREFIX}: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
