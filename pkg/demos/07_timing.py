"""Wall-clock cost of selective prediction versus the standard head.

Selective prediction runs the head twice (with and without erasure) and
scores every instance, so on a tiny head the relative overhead is large even
though the absolute time stays well under a millisecond.
"""

from selective_debias.cli import measure_overhead
from selective_debias.experiment import ExperimentConfig, load_splits, run_seed

cfg = ExperimentConfig(score_kinds=("kl",), percentages=())
splits = load_splits(cfg)
res = run_seed(cfg, 1, splits)
threshold = next(r["threshold"] for r in res.rows if r["score_kind"] == "kl")
t = measure_overhead(res.head, res.debiaser, splits[2].features, threshold, repeats=10)
print(
    f"logreg: standard {1e3 * t['standard_mean_s']:.3f}±{1e3 * t['standard_std_s']:.3f} ms, "
    f"selective {1e3 * t['selective_mean_s']:.3f}±{1e3 * t['selective_std_s']:.3f} ms, "
    f"overhead {t['overhead_percent']:.0f}%"
)
