"""Train a teacher, then distil it three ways and compare the students' logits."""
import numpy as np

from kdlab import data, diagnostics, distill
from kdlab.distill import TrainConfig
from kdlab.losses import DistillObjective, LossKind

ds = data.gen_gaussian_mixture(10, 16, 200, spread=0.5, seed=0)
train, test = data.split(ds, 0.2, seed=0)
print(f"{len(train)} train / {len(test)} test samples, {ds.num_classes} classes")

teacher = distill.train(train, test, None, TrainConfig((16, 32, 10), epochs=30, seed=0))
print(f"teacher  train={teacher.train_acc:.3f} test={teacher.test_acc:.3f}")

students = {
    "kl tau=1": DistillObjective(1.0, LossKind.KL, 1.0),
    "kl tau=inf": DistillObjective(1.0, LossKind.KL_INF),
    "mse": DistillObjective(1.0, LossKind.MSE),
}
for name, obj in students.items():
    res = distill.train(train, test, teacher.net, TrainConfig((16, 16, 10), obj, epochs=30, seed=100))
    sums, _ = diagnostics.logit_sum_stats(res.net, train.x)
    dist, _ = diagnostics.logit_distance_stats(res.net, teacher.net, train.x)
    print(f"{name:11s} test={res.test_acc:.3f}  mean|sum z|={np.mean(sums):6.3f}  "
          f"median|z_s-z_t|={np.median(dist):6.3f}")

# The hot-limit student is free to shift all its logits together, so its logit
# sums wander; MSE pins every logit and ends up closest to the teacher.
sums, _ = diagnostics.logit_sum_stats(teacher.net, train.x)
print(f"teacher mean|sum z|={np.mean(sums):.3f}")
