"""Selective inference-time debiasing with linear concept erasure.

Train a classifier head, fit a concept eraser (LEACE or INLP) for a protected
attribute, score every instance by how much erasure changes its output, and
swap in the debiased prediction only for the highest-scoring instances.
"""

from .data import LabeledEmbeddings, generate_synthetic, load_csv, save_csv, split
from .erasure import Debiaser, erase, fit_debiaser, fit_inlp, fit_leace
from .experiment import ExperimentConfig, run_seed
from .metrics import aggregate, equal_opportunity, evaluate, oracle_curves
from .models import ClassifierHead, TrainConfig, predict, predict_proba, train_head
from .scoring import ScoreKind, score_batch
from .selection import apply_selective, calibrate, threshold_for_percentage

__version__ = "0.1.0"
