"""LEACE and INLP remove the protected group from a representation.

After LEACE the erased features have zero cross-covariance with the group,
so no linear probe beats the majority share. INLP gets there by repeatedly
training a probe and projecting out its direction.
"""

import numpy as np
from sklearn.linear_model import LogisticRegression

from selective_debias.data import generate_synthetic
from selective_debias.erasure import apply_inlp, erase, fit_inlp, fit_leace, one_hot
from selective_debias.tensor_core import cross_covariance

data = generate_synthetic(4000, seed=1)
x, z = data.features, data.protected
majority = np.bincount(z).max() / len(z)


def probe(features):
    return LogisticRegression(max_iter=2000).fit(features, z).score(features, z)


print(f"majority share {majority:.3f}, probe on raw features {probe(x):.3f}")

leace = fit_leace(x, z)
xl = erase(leace, x)
print(f"LEACE: probe {probe(xl):.3f}, |cov(x, z)| {np.linalg.norm(cross_covariance(xl, one_hot(z))):.1e}")
print(f"LEACE moved each row by {np.linalg.norm(xl - x, axis=1).mean():.3f} on average")

inlp = fit_inlp(x, z, max_iterations=10)
xi = apply_inlp(inlp, x)
print(f"INLP: {inlp.iterations} directions removed, probe accuracies {np.round(inlp.probe_accuracies, 3)}")
print(f"INLP: probe {probe(xi):.3f}")
