"""The whole protocol over five seeds, as the command line runs it.

Equivalent to ``selective-debias run --config <file>`` with head = mlp.
"""

from selective_debias.experiment import ExperimentConfig, aggregate_seeds, load_splits, render_table, run_seed

cfg = ExperimentConfig(head="mlp")
splits = load_splits(cfg)
results = [run_seed(cfg, seed, splits) for seed in cfg.seeds]
print(f"config digest {cfg.digest()}")
print(render_table(aggregate_seeds(results)))
