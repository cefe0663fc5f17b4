#!/usr/bin/env python3
"""Walk the attention gate end to end on a hand-made sequence.

A burst of large activations in the middle of an otherwise quiet sequence
should earn high energies, z-scores above threshold, gate values near one,
and a renormalized attention matrix that shifts mass onto the burst. Every
stage is printed so the numbers can be followed by eye.
"""

import numpy as np

from egalab import autodiff as ad
from egalab import gates
from egalab.autodiff import Tensor

np.set_printoptions(precision=3, suppress=True, linewidth=100)

B, T, D, H = 1, 12, 16, 2
rng = np.random.default_rng(0)

# quiet background, loud keys at positions 5..8
x = rng.normal(0.0, 0.1, size=(B, T, D))
x[:, 5:9, :] += rng.normal(0.0, 1.5, size=(B, 4, D))
print("input norms per position:")
print(np.linalg.norm(x[0], axis=-1))

params = gates.init_gate_params("ega1", D, H, np.random.default_rng(1),
                                tau_init=0.35, alpha_init=2.0, dtype=np.float64)

# stage 1: scalar energy per position (one learned projection per head)
e = gates.energy_linear(Tensor(x), params["w_proj"][:, 0], params["bias"][0])
print("\nraw energies e[b,t] (head 0 projection):")
print(e.data[0])

# stage 2: standardize over time so the threshold is in z-score units
e_norm = gates.z_normalize(e)
print("\nz-normalized energies (mean 0, std 1 over the sequence):")
print(e_norm.data[0])

# stage 3: smooth threshold, tau in z-units, alpha sets the sharpness
g = gates.gate_from_energy(e_norm, params["tau"].data[0, 0], params["alpha"].data[0, 0])
print(f"\ngate values sigmoid(alpha*(z - tau)), tau=0.35 alpha=2:")
print(g.data[0])

# stage 4: renormalize a causal attention matrix against the gate
scores = rng.normal(0.0, 1.0, size=(B, 1, T, T))
scores = np.where(np.tril(np.ones((T, T), dtype=bool)), scores, -np.inf)
attn = np.exp(scores - scores.max(axis=-1, keepdims=True))
attn /= attn.sum(axis=-1, keepdims=True)
ahat = ad.gate_renormalize(Tensor(attn), Tensor(g.data[:, None, :])).data

row = T - 1
print(f"\nlast attention row before gating (position {row} attends back):")
print(attn[0, 0, row])
print("after gating and renormalization (rows still sum to one):")
print(ahat[0, 0, row])
print(f"row sums: before {attn[0, 0, row].sum():.6f}, after {ahat[0, 0, row].sum():.6f}")
burst = ahat[0, 0, row, 5:9].sum() / attn[0, 0, row, 5:9].sum()
print(f"mass on the burst positions grew by x{burst:.2f}")

# the packaged one-call version used inside the model, here with 2 scales
full = gates.compute_gate("ega2", gates.init_gate_params(
    "ega2", D, H, np.random.default_rng(2), dtype=np.float64),
    Tensor(x), H)
print(f"\ncompute_gate('ega2', ...) -> gate tensor {full.data.shape} "
      f"in ({full.data.min():.3f}, {full.data.max():.3f})")
