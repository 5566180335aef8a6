# %% [markdown]
# Splitting ensemble uncertainty into epistemic and aleatoric parts, for
# regression (variances) and classification (entropies).

# %%
import numpy as np

from uqbench.aggregation import aggregate_classification, aggregate_regression
from uqbench.synth import gen_members

# five members that disagree with variance 1 and each report variance 0.5
members = gen_members(5000, T=5, v_e=1.0, v_a=0.5, seed=3)
agg = [aggregate_regression(m) for m in members]
print("mean epistemic variance:", round(np.mean([a.var_epistemic for a in agg]), 3), "(expect 0.8)")
print("mean aleatoric variance:", round(np.mean([a.var_aleatoric for a in agg]), 3), "(expect 0.5)")

# %%
for v_e in (0.0, 0.5, 2.0):
    ms = gen_members(500, T=5, v_e=v_e, v_a=0.2, kind="class", n_classes=3, seed=4)
    out = [aggregate_classification(m, k_samples=50, seed=0) for m in ms]
    print(f"v_e={v_e:<4} H_total={np.mean([a.h_total for a in out]):.3f}  "
          f"H_ale={np.mean([a.h_ale for a in out]):.3f}  H_epi={np.mean([a.h_epi for a in out]):.3f}")
