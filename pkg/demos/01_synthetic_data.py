"""The synthetic two-class task and its protected attribute.

Ten features: five informative, two redundant, three noise. The protected
group is the sign of the first informative feature, so the group is
entangled with the clusters that drive the label.
"""

import numpy as np

from selective_debias.data import SplitSpec, generate_synthetic, split

data = generate_synthetic(10000, seed=42)
train, val, test = split(data, SplitSpec())
print("rows per split:", len(train), len(val), len(test))

for g in (0, 1):
    mask = data.protected == g
    print(f"group {g}: {mask.mean():.1%} of rows, P(label=1) = {data.labels[mask].mean():.3f}")

# the redundant columns are exact combinations of the informative ones
coef, *_ = np.linalg.lstsq(data.features[:, :5], data.features[:, 5:7], rcond=None)
print("redundant-column residual:", np.abs(data.features[:, :5] @ coef - data.features[:, 5:7]).max())
