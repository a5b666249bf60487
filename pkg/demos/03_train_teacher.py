"""
Pretraining the teacher.

A GRU with 128 hidden units reads the 11-step window and predicts the
current beam and the next three. After training, the mean and variance of
its final hidden state over the training windows are stored with the
weights; they are all the data-free stage will ever see of the real data.

Usage: python 03_train_teacher.py [dataset.bin] [epochs]
"""

import sys

from dfkd_beam.checkpoint import save_checkpoint
from dfkd_beam.evaluation import evaluate_checkpoint
from dfkd_beam.pipelines import TrainConfig, train_teacher
from dfkd_beam.scenario import ScenarioConfig, load_dataset, make_dataset

path = sys.argv[1] if len(sys.argv) > 1 else None
epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 20
ds = load_dataset(path) if path else make_dataset(ScenarioConfig())

teacher, log = train_teacher(ds, TrainConfig(epochs=epochs))
for rec in log.records[:: max(1, epochs // 5)]:
    print(f"epoch {rec['epoch']:3d}  train CE {rec['train_ce']:.3f}  val top-1 {rec['val_top1']:.3f}")

rep = evaluate_checkpoint(teacher, ds, "test", "teacher")
print("\ntest top-1 per offset:", [round(a, 3) for a in rep.top1])
print("test top-5 per offset:", [round(a, 3) for a in rep.top5])
print("stored hidden-state stats:", teacher.meta_mean.shape, teacher.meta_var.shape,
      f"mean var {teacher.meta_var.mean():.4f}")
save_checkpoint(teacher, "teacher.ckpt")
print("wrote teacher.ckpt")
