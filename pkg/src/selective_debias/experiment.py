"""End-to-end protocol: train a head, fit erasers on a data fraction, calibrate, evaluate.

Per seed the head is trained on the train split, the erasers are fitted on
a seeded ``eraser_fraction`` subsample of train, thresholds are calibrated
on the first ``calibration_fraction`` of the validation split, and every
configuration is evaluated on test.
"""

import configparser
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import data as data_mod
from . import models
from .erasure import base_forward, debiased_forward, fit_debiaser, normalize_mode
from .metrics import curve_aucs, evaluate, oracle_curves
from .scoring import PipelineOutputs, ScoreKind
from .selection import DEFAULT_GRID, sweep_percentages

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExperimentConfig:
    source: str = "synthetic"
    n_total: int = 10000
    data_seed: int = 42
    split_seed: int = 0
    train_fraction: float = 0.6
    val_fraction: float = 0.2
    test_fraction: float = 0.2
    train_csv: str = ""
    val_csv: str = ""
    test_csv: str = ""
    head: str = "logreg"
    hidden: tuple = models.DEFAULT_MLP_HIDDEN
    learning_rate: float = 0.1
    epochs: int = 50
    batch_size: int = 64
    l2: float = 0.0
    mode: str = "leace_last"
    eraser_fraction: float = 0.2
    inlp_iterations: int = 10
    score_kinds: tuple = ("kl", "sr", "euclid", "cosine", "random")
    percentages: tuple = (5.0, 10.0, 15.0)
    grid: tuple = tuple(float(p) for p in DEFAULT_GRID)
    calibration_fraction: float = 0.15
    objective: str = "ff"
    seeds: tuple = (1, 2, 3, 4, 5)
    out_dir: str = "runs"

    def __post_init__(self):
        for name in ("eraser_fraction", "calibration_fraction"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        if self.head not in ("logreg", "mlp"):
            raise ValueError(f"head must be 'logreg' or 'mlp', got {self.head!r}")
        if self.source not in ("synthetic", "csv"):
            raise ValueError(f"source must be 'synthetic' or 'csv', got {self.source!r}")
        object.__setattr__(self, "mode", normalize_mode(self.mode))
        object.__setattr__(self, "objective", self.objective.lower())
        for name in ("hidden", "score_kinds", "percentages", "grid", "seeds"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def train_config(self, seed):
        return models.TrainConfig(self.learning_rate, self.epochs, self.batch_size, self.l2, seed)

    def to_dict(self):
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    def experiment_dict(self):
        """Everything that affects results; the output location does not."""
        d = self.to_dict()
        d.pop("out_dir")
        return d

    def digest(self):
        blob = json.dumps(self.experiment_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_ini(cls, path, **overrides):
        """Read an INI file; keys may sit in any section, values use Python-ish literals."""
        parser = configparser.ConfigParser()
        if not parser.read(path, encoding="utf-8"):
            raise FileNotFoundError(path)
        values = {}
        for section in parser.sections():
            values.update(parser[section])
        return cls.from_mapping(values, **overrides)

    @classmethod
    def from_mapping(cls, values, **overrides):
        types = {f.name: f.default for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            key = key.replace("-", "_")
            if key not in types:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(raw, types[key])
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kwargs)


def _coerce(raw, default):
    if not isinstance(raw, str):
        return raw
    if isinstance(default, tuple):
        items = [s.strip() for s in raw.split(",") if s.strip()]
        if default and isinstance(default[0], int):
            return tuple(int(s) for s in items)
        if default and isinstance(default[0], float):
            return tuple(float(s) for s in items)
        return tuple(items)
    if isinstance(default, bool):
        return raw.strip().lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw.strip()


def load_splits(cfg):
    if cfg.source == "csv":
        train = data_mod.load_csv(cfg.train_csv)
        c, g = train.class_count, train.group_count
        return (
            train,
            data_mod.load_csv(cfg.val_csv, c, g),
            data_mod.load_csv(cfg.test_csv, c, g),
        )
    full = data_mod.generate_synthetic(cfg.n_total, cfg.data_seed)
    spec = data_mod.SplitSpec(cfg.train_fraction, cfg.val_fraction, cfg.test_fraction, cfg.split_seed)
    return data_mod.split(full, spec)


def head_sizes(cfg, dim, class_count):
    if cfg.head == "logreg":
        return models.logreg_sizes(dim, class_count)
    return models.mlp_sizes(dim, class_count, cfg.hidden)


def pipeline_outputs(head, debiaser, x):
    base_p, base_r = base_forward(head, x)
    deb_p, deb_r = debiased_forward(head, debiaser, x)
    return PipelineOutputs(base_p, deb_p, base_r, deb_r)


@dataclass
class SeedResult:
    seed: int
    rows: list = field(default_factory=list)
    head: object = None
    debiaser: object = None

    def table(self):
        return {(r["score_kind"], r["percentage"]): r for r in self.rows}

    def to_dict(self):
        return {"seed": self.seed, "rows": self.rows}


def _row(kind, percentage, report, selected_fraction, threshold=None):
    return {
        "score_kind": kind,
        "percentage": percentage,
        "selected_fraction": selected_fraction,
        "threshold": threshold,
        **report.to_dict(),
    }


def run_seed(cfg, seed, splits=None):
    """All evaluation rows for one seed: standard, full debiasing, then the sweep."""
    train, val, test = splits if splits is not None else load_splits(cfg)
    c, g = train.class_count, train.group_count
    head = models.train_head(train, head_sizes(cfg, train.dim, c), cfg.train_config(seed))
    fit_set = data_mod.subsample_fraction(train, cfg.eraser_fraction, seed)
    debiaser = fit_debiaser(
        head, fit_set.features, fit_set.protected, cfg.mode, g, cfg.inlp_iterations
    )
    cal = data_mod.prefix(val, cfg.calibration_fraction)
    cal_out = pipeline_outputs(head, debiaser, cal.features)
    test_out = pipeline_outputs(head, debiaser, test.features)

    res = SeedResult(seed, head=head, debiaser=debiaser)
    base_pred = np.argmax(test_out.base_probs, axis=1)
    deb_pred = np.argmax(test_out.debiased_probs, axis=1)
    res.rows.append(_row("standard", "0", evaluate(base_pred, test.labels, test.protected, c, g), 0.0))
    res.rows.append(_row("full", "100", evaluate(deb_pred, test.labels, test.protected, c, g), 1.0))
    kinds = [ScoreKind.parse(k, default_seed=seed) for k in cfg.score_kinds]
    sweep = sweep_percentages(
        cal_out, cal.labels, cal.protected,
        test_out, test.labels, test.protected,
        kinds, tuple(cfg.percentages) + ("optimal",), cfg.grid, cfg.objective, c, g,
    )
    for r in sweep:
        kind = "random" if r.score_kind.startswith("random") else r.score_kind
        res.rows.append(_row(kind, r.percentage, r.report, r.selected_fraction, r.threshold))
    return res


def _row_key(row):
    pct = row["percentage"]
    return row["score_kind"], "optimal" if pct.startswith("optimal") else pct


def aggregate_seeds(results):
    """Mean and population std over seeds of every metric in every row."""
    cells = {}
    for res in results:
        for row in res.rows:
            cells.setdefault(_row_key(row), []).append(row)
    table = []
    for (kind, pct), rows in cells.items():
        entry = {"score_kind": kind, "percentage": pct, "seeds": len(rows)}
        for metric in ("accuracy", "fairness", "dto", "ff_score", "selected_fraction"):
            vals = np.array([r[metric] for r in rows], dtype=np.float64)
            entry[f"{metric}_mean"] = float(vals.mean())
            entry[f"{metric}_std"] = float(vals.std())
        table.append(entry)
    return table


def render_table(table):
    """Plain-text aggregate table on the x100 scale."""
    header = f"{'score':<10}{'percent':<10}{'fairness':>14}{'accuracy':>14}{'DTO':>14}{'FF-score':>14}"
    lines = [header, "-" * len(header)]
    for e in table:
        cells = "".join(
            f"{100 * e[m + '_mean']:>8.1f} ±{100 * e[m + '_std']:>4.1f}"
            for m in ("fairness", "accuracy", "dto", "ff_score")
        )
        lines.append(f"{e['score_kind']:<10}{e['percentage']:<10}{cells}")
    return "\n".join(lines) + "\n"


def oracle_summary(head, test):
    """Both oracle rejection curves on ``test`` for a trained head, plus their AUCs."""
    c, g = test.class_count, test.group_count
    preds = models.predict(head, test.features)
    out = {}
    for oracle in ("accuracy", "fairness"):
        curves = oracle_curves(preds, test.labels, test.protected, oracle, c, g)
        out[oracle] = {"curves": curves, "aucs": curve_aucs(curves["accuracy"], curves["fairness"])}
    return out
