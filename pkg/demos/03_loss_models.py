"""Compare the two random loss models: independent (uniform) drops and
the two-state bursty model, whose Bad state produces loss runs.

Both models are seeded and reproducible; the bursty model's long-run
drop rate has a closed form we check empirically.
"""

import numpy as np

from fecsim.experiments import loss_trace_lines
from fecsim.netem import GilbertElliottLoss, UniformLoss


def run_lengths(delivered: np.ndarray) -> list[int]:
    """Lengths of consecutive drop runs in a delivery sequence."""
    runs = []
    current = 0
    for ok in delivered:
        if ok:
            if current:
                runs.append(current)
            current = 0
        else:
            current += 1
    if current:
        runs.append(current)
    return runs


N = 200_000

# --- 1. Same average rate, different texture -------------------------------

uniform = UniformLoss(p=0.129, seed=5)
bursty = GilbertElliottLoss(p=0.01, r=0.08, k=0.98, h=0.0, seed=5)
print(f"analytic drop rates: uniform {uniform.stationary_loss_rate:.4f}, "
      f"bursty {bursty.stationary_loss_rate:.4f}")

seq_u = uniform.sequence(N)
seq_b = bursty.sequence(N)
print(f"empirical over {N} decisions: uniform {1 - seq_u.mean():.4f}, "
      f"bursty {1 - seq_b.mean():.4f}")

runs_u = run_lengths(seq_u)
runs_b = run_lengths(seq_b)
print(f"mean drop-run length: uniform {np.mean(runs_u):.2f} packets, "
      f"bursty {np.mean(runs_b):.2f} packets")
print(f"longest drop run:     uniform {max(runs_u)}, bursty {max(runs_b)}")

# --- 2. A readable trace excerpt -------------------------------------------

print()
print("first decisions of the bursty model (state + outcome):")
for line in loss_trace_lines(GilbertElliottLoss(0.2, 0.3, 0.95, 0.0, seed=1), 12):
    print(" ", line)

# --- 3. Reproducibility ------------------------------------------------------

again = GilbertElliottLoss(p=0.01, r=0.08, k=0.98, h=0.0, seed=5).sequence(N)
print()
print("same seed, same sequence:", bool(np.array_equal(seq_b, again)))
