"""
Distillation with real data, for comparison.

Standard KD mixes a temperature-softened KL term with cross-entropy
(gamma=0.7, T=5); KD-MSE swaps the KL term for a logit MSE; the scratch
student gets cross-entropy only.

Usage: python 05_kd_baselines.py teacher.ckpt scenario.bin [epochs]
"""

import sys

from dfkd_beam.checkpoint import load_checkpoint
from dfkd_beam.evaluation import evaluate_checkpoint
from dfkd_beam.losses import KDConfig
from dfkd_beam.pipelines import TrainConfig, train_student_kd, train_student_scratch
from dfkd_beam.scenario import load_dataset

teacher = load_checkpoint(sys.argv[1], require_metadata=True)
ds = load_dataset(sys.argv[2])
epochs = int(sys.argv[3]) if len(sys.argv) > 3 else 20

runs = {
    "kd": train_student_kd(teacher, ds, tconfig=TrainConfig(epochs=epochs),
                           kd=KDConfig(temperature=5.0, student_loss_kind="kl"))[0],
    "kd-mse": train_student_kd(teacher, ds, tconfig=TrainConfig(epochs=epochs),
                               kd=KDConfig(student_loss_kind="mse"))[0],
    "scratch": train_student_scratch(ds, TrainConfig(epochs=epochs))[0],
}
print(f"{'model':8s} {'top-1 (v=0..3)':32s} top-5 (v=0..3)")
for name, ck in [("teacher", teacher), *runs.items()]:
    r = evaluate_checkpoint(ck, ds, "test", name)
    print(f"{name:8s} {str([round(a, 3) for a in r.top1]):32s} {[round(a, 3) for a in r.top5]}")
