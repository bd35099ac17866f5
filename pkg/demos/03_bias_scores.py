"""How much does erasure change each prediction?

Every score compares the standard and the debiased pass for one instance;
larger means "more worth debiasing".
"""

import numpy as np

from selective_debias import models
from selective_debias.data import SplitSpec, generate_synthetic, split, subsample_fraction
from selective_debias.erasure import fit_debiaser
from selective_debias.experiment import pipeline_outputs
from selective_debias.scoring import score_batch

train, val, test = split(generate_synthetic(10000, 42), SplitSpec())
head = models.train_head(train, (10, 2), models.TrainConfig(epochs=50, seed=1))
fit = subsample_fraction(train, 0.2, seed=1)
deb = fit_debiaser(head, fit.features, fit.protected, "leace_last")
out = pipeline_outputs(head, deb, test.features)

flips = np.argmax(out.base_probs, 1) != np.argmax(out.debiased_probs, 1)
print(f"erasure flips {flips.mean():.1%} of test predictions")

for kind in ("kl", "sr", "euclid", "cosine", "random:1"):
    s = score_batch(kind, out)
    top = s >= np.quantile(s, 0.9)
    print(f"{kind:>9}: median {np.median(s):.4f}, share of flips in the top 10%: {flips[top].sum() / flips.sum():.1%}")
