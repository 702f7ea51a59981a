"""How the KL gradient behaves as the temperature moves to either extreme."""
import numpy as np

from kdlab import losses as L

np.set_printoptions(precision=5, suppress=True)
rng = np.random.default_rng(0)

z_s = rng.uniform(-5, 5, 6)  # student logits
z_t = rng.uniform(-5, 5, 6)  # teacher logits
print("student", z_s)
print("teacher", z_t)

# At moderate temperatures the gradient is tau * (p_s - p_t).
for tau in (0.5, 1.0, 4.0, 20.0):
    print(f"tau={tau:5}", L.kl_grad(z_s, z_t, tau))

# Very hot: the gradient becomes linear in the logit gap, with the mean removed.
print()
print("tau=1e5     ", L.kl_grad(z_s, z_t, 1e5))
print("limit       ", L.kl_grad_inf(z_s, z_t))
print("approx      ", L.kl_grad_large_tau_approx(z_s, z_t, 1e5))

# Very cold: divided by tau, it only says "move the argmax over".
print()
print("tau=1e-2/tau", L.kl_grad(z_s, z_t, 1e-2) / 1e-2)
print("label match ", L.label_match_grad(z_s, z_t))

# The hot limit is MSE/2K plus a term that rewards drifting logit sums.
k = z_s.size
lhs = L.mse_grad(z_s, z_t) / (2 * k) + L.delta_inf_grad(z_s, z_t)
print()
print("mse/2K + delta grad", lhs)
print("max abs difference ", np.max(np.abs(lhs - L.kl_grad_inf(z_s, z_t))))
print("delta_inf value    ", L.delta_inf(z_s, z_t))

# A cheap componentwise ceiling on the hot-limit gradient
print("bound ok:", bool(np.all(np.abs(L.kl_grad_inf(z_s, z_t)) <= L.inf_grad_bound(z_s, z_t) * (1 + 1e-13))))

# Below tau=1 the plain KL gradient fades away; the rescaled one keeps its size.
for tau in (0.1, 0.5, 1.0):
    print(f"tau={tau}: |kl|={np.abs(L.kl_grad(z_s, z_t, tau)).max():.4f}  "
          f"|rescaled|={np.abs(L.rescaled_kl_grad(z_s, z_t, tau)).max():.4f}")
