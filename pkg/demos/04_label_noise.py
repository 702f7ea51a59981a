"""Distillation from a teacher trained on noisy labels."""
import json
import math

from kdlab import data, distill
from kdlab.distill import TrainConfig

ds = data.gen_gaussian_mixture(10, 16, 200, spread=0.5, seed=2)
train, test = data.split(ds, 0.2, seed=2)

# Each fraction trains its own noisy teacher; students see the teacher, not the labels.
rows = distill.noisy_experiment(
    train, test, fractions=[0.4, 0.8], taus=[0.5, 1.0, 20.0, math.inf],
    base_cfg=TrainConfig((16, 16, 10), epochs=30, seed=2),
    teacher_cfg=TrainConfig((16, 32, 10), epochs=30, seed=3),
)
for r in rows:
    extra = json.loads(r["extra_json"])
    print(f"noise={r['noise_fraction']}  {r['loss_kind']:12s} tau={r['tau']:4s} test={float(r['test_acc']):.3f}  "
          f"(teacher {extra['teacher_test_acc']:.3f}, ce student {extra['ce_student_test_acc']:.3f})")
