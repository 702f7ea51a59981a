"""A CE -> KL -> MSE chain, then distilling only part of the training set."""
import os
import sys

from kdlab import data, distill
from kdlab.distill import StageSpec, TrainConfig
from kdlab.losses import DistillObjective, LossKind

out = sys.argv[1] if len(sys.argv) > 1 else "demo_out"
os.makedirs(out, exist_ok=True)

ds = data.gen_gaussian_mixture(10, 16, 100, spread=0.5, seed=4)
train, test = data.split(ds, 0.2, seed=4)

stages = [
    StageSpec(TrainConfig((16, 32, 10), epochs=20, seed=4)),
    StageSpec(TrainConfig((16, 24, 10), DistillObjective(0.9, LossKind.KL, 4.0), epochs=20, seed=5), "previous"),
    StageSpec(TrainConfig((16, 16, 10), DistillObjective(1.0, LossKind.MSE), epochs=20, seed=6), "previous"),
]
for i, res in enumerate(distill.sequential(train, test, stages, out_dir=out)):
    print(f"stage {i} {res.config.objective.label():14s} test={res.test_acc:.3f}")

# Distil only the samples whose teacher TLD lies in the middle half; the rest use CE.
teacher = distill.train(train, test, None, stages[0].config).net
rep = distill.tld_quantile_bundle(train, test, teacher, 0.25, 0.75,
                                  TrainConfig((16, 16, 10), epochs=20, seed=7),
                                  TrainConfig((16, 16, 10), DistillObjective(1.0, LossKind.MSE), epochs=20, seed=7))
print(f"{rep.n_distilled} distilled, {rep.n_undistilled} not")
for part in ("distilled", "undistilled", "test"):
    print(f"  {part:11s} ce={rep.ce[part]:.3f} kd={rep.kd[part]:.3f}")
