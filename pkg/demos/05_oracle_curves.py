"""What if we knew which predictions were wrong?

Correcting errors in index order (accuracy oracle) and greedily for
fairness (fairness oracle) gives the same accuracy at every budget, but the
fairness oracle reaches a fairer model much sooner.
"""

from selective_debias import models
from selective_debias.data import SplitSpec, generate_synthetic, split
from selective_debias.experiment import oracle_summary

train, val, test = split(generate_synthetic(10000, 42), SplitSpec())
head = models.train_head(train, (10, 2), models.TrainConfig(epochs=50, seed=1))
summary = oracle_summary(head, test)

for oracle, res in summary.items():
    a = res["aucs"]
    fair = res["curves"]["fairness"].values
    print(f"{oracle:>8} oracle: FR-AUC {100 * a['fr_auc']:.1f}  Acc-AUC {100 * a['acc_auc']:.1f}  FF-AUC {100 * a['ff_auc']:.1f}")
    print("          fairness at 0/10/25/50%:", " ".join(f"{100 * fair[k]:.1f}" for k in (0, 10, 25, 50)))
