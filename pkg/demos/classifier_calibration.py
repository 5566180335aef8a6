# %% [markdown]
# Classifier calibration walkthrough: measure an overconfident classifier,
# then repair it with temperature scaling and read the reliability table.

# %%
import numpy as np

from uqbench.metrics_classification import ace, ece, nll, smece, uce, vce
from uqbench.recalibration import apply_temperature, fit_temperature, venn_abers_batch
from uqbench.synth import gen_classifier

# labels drawn at temperature 2, so the reported probabilities are too sharp
cal = gen_classifier(50_000, T_true=2.0, scale=4.0, seed=1)
test = gen_classifier(50_000, T_true=2.0, scale=4.0, seed=2)


def summary(batch):
    p, y = batch.probs, batch.labels
    return {"ece": ece(p, y)[0], "ace": ace(p, y), "smece": smece(p, y),
            "uce": uce(p, y)[0], "vce": vce(p, y)[0], "nll": nll(p, y)}


print("before:", {k: round(v, 4) for k, v in summary(test).items()})

# %%
model = fit_temperature(cal)
scaled = apply_temperature(model, test)
print(f"fitted T = {model.T:.3f}")
print("after: ", {k: round(v, 4) for k, v in summary(scaled).items()})
# UCE goes up: its reference (error = entropy / 2) is exact only near certainty,
# so even perfectly calibrated soft predictions score around 0.1 here

# %% [markdown]
# Reliability table: mean confidence against accuracy per confidence bin.

# %%
_, bins = ece(scaled.probs, scaled.labels, bins=10)
print(f"{'bin':>3} {'count':>6} {'conf':>6} {'acc':>6}")
for b in bins:
    if b.count:
        print(f"{b.index:>3} {b.count:>6} {b.conf:6.3f} {b.acc:6.3f}")

# %% [markdown]
# Venn-ABERS gives an interval [p0, p1] per test point; the width shrinks as
# the calibration set grows.

# %%
for n in (100, 1000, 10_000):
    out, res = venn_abers_batch(cal.subset(np.arange(n)), test.subset(np.arange(2000)))
    print(f"n_cal={n:>6}  mean width={np.mean(res.p1 - res.p0):.4f}  ece={ece(out.probs, out.labels)[0]:.4f}")
