"""
Data-free distillation.

Step 1 trains a small generator so that the frozen teacher's hidden-state
statistics on generated sequences match the stored ones. Step 2 trains the
32-unit student to reproduce the teacher's logits on generated sequences.
Neither step touches the dataset; it is loaded here only to score the
result at the end.

Usage: python 04_data_free_distillation.py teacher.ckpt scenario.bin [gen_epochs] [student_epochs]
"""

import sys

import numpy as np

from dfkd_beam.checkpoint import load_checkpoint, save_checkpoint
from dfkd_beam.evaluation import evaluate_checkpoint
from dfkd_beam.losses import KDConfig
from dfkd_beam.pipelines import TrainConfig, train_generator, train_student_df
from dfkd_beam.scenario import load_dataset

teacher = load_checkpoint(sys.argv[1], require_metadata=True)
gen_epochs = int(sys.argv[3]) if len(sys.argv) > 3 else 50
student_epochs = int(sys.argv[4]) if len(sys.argv) > 4 else 100

gen, glog = train_generator(teacher, tconfig=TrainConfig(epochs=gen_epochs),
                            kd=KDConfig(generator_loss_kind="metadata_only"))
m = glog.series("metadata")
print(f"generator: metadata loss {m[0]:.4g} -> {m[-1]:.4g} over {gen_epochs} epochs of 32 steps")
sample = gen.generator().sample(np.random.default_rng(0).standard_normal((2, 500)))
print("a generated window, first frame:", sample[0, 0, :6].round(2), "...")

student, slog = train_student_df(teacher, gen, tconfig=TrainConfig(epochs=student_epochs),
                                 kd=KDConfig(student_loss_kind="mse"))
print(f"student: logit MSE {slog.records[0]['loss']:.3f} -> {slog.records[-1]['loss']:.3f}")
save_checkpoint(gen, "generator.ckpt")
save_checkpoint(student, "student_df.ckpt")

ds = load_dataset(sys.argv[2])
for name, ck in (("teacher", teacher), ("df student", student)):
    r = evaluate_checkpoint(ck, ds, "test", name)
    print(f"{name:10s} top-1 {[round(a, 3) for a in r.top1]}  top-5 {[round(a, 3) for a in r.top5]}")
