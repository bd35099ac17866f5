"""Command-line entry point: ``selective-debias <subcommand> [options]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric error.
"""

import argparse
import csv
import io
import json
import logging
import os
import statistics
import sys
import tempfile
import time
from dataclasses import fields, replace

import numpy as np

from . import data as data_mod
from . import models
from .erasure import Debiaser, NumericError, apply_inlp, base_forward, debiased_forward, erase
from .experiment import (
    ExperimentConfig,
    aggregate_seeds,
    head_sizes,
    load_splits,
    oracle_summary,
    pipeline_outputs,
    render_table,
    run_seed,
)
from .scoring import PipelineOutputs, ScoreKind, score_batch
from .selection import apply_selective, calibrate

log = logging.getLogger("selective_debias")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path, doc):
    _atomic_write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    _atomic_write(path, buf.getvalue())


def _config(args, **overrides):
    over = dict(overrides)
    if getattr(args, "mode", None):
        over["mode"] = args.mode
    if getattr(args, "seed", None):
        over["seeds"] = tuple(int(s) for s in args.seed.split(","))
    if getattr(args, "score", None):
        over["score_kinds"] = tuple(args.score)
    if getattr(args, "percent", None):
        over["percentages"] = tuple(args.percent)
    if getattr(args, "out", None):
        over["out_dir"] = args.out
    try:
        if args.config:
            return ExperimentConfig.from_ini(args.config, **over)
        return ExperimentConfig(**over)
    except FileNotFoundError as err:
        raise UsageError(f"config file not found: {err}") from err
    except (TypeError, ValueError) as err:
        raise UsageError(f"bad configuration: {err}") from err


def cmd_gen_synth(args):
    cfg = _config(args)
    if args.n is not None:
        cfg = replace(cfg, n_total=args.n)
    if args.seed:
        cfg = replace(cfg, data_seed=int(args.seed.split(",")[0]))
    splits = load_splits(replace(cfg, source="synthetic"))
    for name, part in zip(("train", "val", "test"), splits):
        path = os.path.join(cfg.out_dir, f"{name}.csv")
        _atomic_write(path, _csv_text(part))
        print(f"{path}: {len(part)} rows")
    return EXIT_OK


def _csv_text(part):
    buf = io.StringIO()
    data_mod.write_csv(part, buf)
    return buf.getvalue()


def cmd_run(args):
    cfg = _config(args)
    out = cfg.out_dir
    splits = load_splits(cfg)
    results, entries = [], []
    for seed in cfg.seeds:
        try:
            res = run_seed(cfg, seed, splits)
        except (data_mod.DataError, ValueError, FloatingPointError) as err:
            log.error("seed %s aborted: %s", seed, err)
            entries.append({"seed": seed, "error": str(err)})
            continue
        report = f"seed_{seed}.json"
        _write_json(os.path.join(out, report), res.to_dict())
        res.head.save(os.path.join(out, f"head_seed_{seed}.json"))
        res.debiaser.save(os.path.join(out, f"debiaser_seed_{seed}.json"))
        entries.append({"seed": seed, "report": report})
        results.append(res)
    if not results:
        log.error("all seeds failed")
        return EXIT_DATA
    table = aggregate_seeds(results)
    text = render_table(table)
    _write_json(os.path.join(out, "aggregate.json"), table)
    _atomic_write(os.path.join(out, "aggregate.txt"), text)
    manifest = {
        "config": cfg.experiment_dict(),
        "config_digest": cfg.digest(),
        "seeds": entries,
        "aggregate": table,
    }
    _write_json(os.path.join(out, "manifest.json"), manifest)
    print(text, end="")
    return EXIT_OK


def _train_for(cfg, seed, splits):
    train = splits[0]
    sizes = head_sizes(cfg, train.dim, train.class_count)
    return models.train_head(train, sizes, cfg.train_config(seed))


def cmd_oracle_curves(args):
    cfg = _config(args)
    splits = load_splits(cfg)
    test = splits[2]
    summaries = {}
    seeds = cfg.seeds[:1] if args.head else cfg.seeds
    for seed in seeds:
        head = models.ClassifierHead.load(args.head) if args.head else _train_for(cfg, seed, splits)
        summary = oracle_summary(head, test)
        for oracle, res in summary.items():
            c = res["curves"]
            rows = [
                (f"{fr:.2f}", a, f, ff)
                for fr, a, f, ff in zip(
                    c["accuracy"].fractions, c["accuracy"].values,
                    c["fairness"].values, c["ff"].values,
                )
            ]
            path = os.path.join(cfg.out_dir, f"oracle_{oracle}_seed_{seed}.csv")
            _write_csv(path, ["fraction", "accuracy", "fairness", "ff_score"], rows)
        summaries[str(seed)] = {oracle: res["aucs"] for oracle, res in summary.items()}
    _write_json(os.path.join(cfg.out_dir, "oracle_summary.json"), summaries)
    for seed, s in summaries.items():
        for oracle, a in s.items():
            print(
                f"seed {seed} {oracle:>8} oracle: FR-AUC {100 * a['fr_auc']:.1f} "
                f"Acc-AUC {100 * a['acc_auc']:.1f} FF-AUC {100 * a['ff_auc']:.1f}"
            )
    return EXIT_OK


def measure_overhead(head, debiaser, x, threshold, score_kind="kl", repeats=10):
    """Wall time of standard vs selective prediction over ``x`` (seconds)."""

    def standard():
        return models.predict_proba(head, x)

    def selective():
        base_p, base_r = base_forward(head, x)
        deb_p, deb_r = debiased_forward(head, debiaser, x)
        scores = score_batch(score_kind, PipelineOutputs(base_p, deb_p, base_r, deb_r))
        return apply_selective(threshold, base_p, deb_p, scores).final_probs

    standard(), selective()  # warm-up
    times = {}
    for name, fn in (("standard", standard), ("selective", selective)):
        ts = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            fn()
            ts.append(time.perf_counter() - t0)
        times[name] = ts
    t_std = statistics.mean(times["standard"])
    t_sel = statistics.mean(times["selective"])
    return {
        "standard_mean_s": t_std,
        "standard_std_s": statistics.pstdev(times["standard"]),
        "selective_mean_s": t_sel,
        "selective_std_s": statistics.pstdev(times["selective"]),
        "ratio": t_sel / t_std,
        "overhead_percent": 100.0 * (t_sel / t_std - 1.0),
        "repeats": repeats,
        "instances": int(np.asarray(x).shape[0]),
    }


def cmd_timing(args):
    cfg = _config(args)
    seed = cfg.seeds[0]
    res = run_seed(replace(cfg, score_kinds=("kl",), percentages=()), seed)
    splits = load_splits(cfg)
    val = data_mod.prefix(splits[1], cfg.calibration_fraction)
    cal_out = pipeline_outputs(res.head, res.debiaser, val.features)
    policy = calibrate(cal_out, val.labels, val.protected, "kl", cfg.grid, cfg.objective)
    report = measure_overhead(res.head, res.debiaser, splits[2].features, policy.threshold, "kl", args.repeats)
    report["mode"] = cfg.mode
    _write_json(os.path.join(cfg.out_dir, "timing.json"), report)
    print(
        f"standard {report['standard_mean_s'] * 1e3:.3f}±{report['standard_std_s'] * 1e3:.3f} ms, "
        f"selective {report['selective_mean_s'] * 1e3:.3f}±{report['selective_std_s'] * 1e3:.3f} ms, "
        f"overhead {report['overhead_percent']:.1f}%"
    )
    return EXIT_OK


def cmd_erase(args):
    deb = Debiaser.load(args.eraser)
    if len(deb.erasers) != 1:
        raise UsageError("erase works on single-eraser bundles (leace_last / inlp)")
    e = deb.erasers[0]
    ds = data_mod.load_csv(args.input)
    if ds.dim != e.dim:
        raise UsageError(f"eraser dim {e.dim} does not match CSV feature dim {ds.dim}")
    x = erase(e, ds.features) if deb.mode == "leace_last" else apply_inlp(e, ds.features)
    out = data_mod.LabeledEmbeddings(x, ds.labels, ds.protected, ds.class_count, ds.group_count)
    _atomic_write(args.output, _csv_text(out))
    print(f"{args.output}: {len(out)} rows erased ({deb.mode})")
    return EXIT_OK


def cmd_score(args):
    cfg = _config(args)
    if args.head and args.eraser:
        head = models.ClassifierHead.load(args.head)
        deb = Debiaser.load(args.eraser)
    elif args.head or args.eraser:
        raise UsageError("--head and --eraser must be given together")
    else:
        res = run_seed(replace(cfg, score_kinds=(), percentages=()), cfg.seeds[0])
        head, deb = res.head, res.debiaser
    ds = data_mod.load_csv(args.input) if args.input else load_splits(cfg)[2]
    outputs = pipeline_outputs(head, deb, ds.features)
    kinds = [ScoreKind.parse(k, default_seed=cfg.seeds[0]) for k in (args.score or ["kl"])]
    cols = [score_batch(k, outputs) for k in kinds]
    rows = [[i] + [repr(float(c[i])) for c in cols] for i in range(len(ds))]
    path = args.output or os.path.join(cfg.out_dir, "scores.csv")
    _write_csv(path, ["index"] + [str(k) for k in kinds], rows)
    print(f"{path}: {len(ds)} scores")
    return EXIT_OK


def _config_help():
    lines = ["config keys (INI, any section) and defaults:"]
    for f in fields(ExperimentConfig):
        v = f.default
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        lines.append(f"  {f.name} = {v}")
    return "\n".join(lines)


def build_parser():
    p = argparse.ArgumentParser(
        prog="selective-debias",
        description="Selective inference-time debiasing with linear concept erasure.",
        epilog=_config_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default=None):
        sp.add_argument("--config", help="INI config file")
        sp.add_argument("--seed", help="seed or comma-separated seed list")
        sp.add_argument("--out", default=out_default, help="output directory")
        sp.add_argument("--mode", choices=["leace-last", "leace-cls", "inlp"])
        return sp

    g = common(sub.add_parser("gen-synth", help="write synthetic train/val/test CSVs"))
    g.add_argument("--n", type=int, help="total rows (default 10000)")
    g.set_defaults(func=cmd_gen_synth)

    r = common(sub.add_parser("run", help="full protocol over seeds"))
    r.add_argument("--score", action="append", help="score kind: kl, sr, euclid, cosine, random[:seed]")
    r.add_argument("--percent", action="append", type=float, help="fixed selection percentage")
    r.set_defaults(func=cmd_run)

    o = common(sub.add_parser("oracle-curves", help="accuracy and fairness oracle rejection curves"))
    o.add_argument("--head", help="saved head JSON (otherwise trained per seed)")
    o.set_defaults(func=cmd_oracle_curves)

    t = common(sub.add_parser("timing", help="standard vs selective prediction wall time"))
    t.add_argument("--repeats", type=int, default=10)
    t.set_defaults(func=cmd_timing)

    e = sub.add_parser("erase", help="apply a saved eraser to a CSV")
    e.add_argument("--eraser", required=True, help="debiaser JSON written by 'run'")
    e.add_argument("--input", required=True)
    e.add_argument("--output", required=True)
    e.set_defaults(func=cmd_erase, config=None)

    s = common(sub.add_parser("score", help="per-instance bias scores"))
    s.add_argument("--score", action="append", help="score kind (repeatable)")
    s.add_argument("--head", help="saved head JSON")
    s.add_argument("--eraser", help="saved debiaser JSON")
    s.add_argument("--input", help="CSV to score (default: test split)")
    s.add_argument("--output", help="output CSV path")
    s.set_defaults(func=cmd_score)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, models.DivergenceError, FloatingPointError, np.linalg.LinAlgError) as err:
        print(f"numeric error: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (data_mod.DataError, ValueError, OSError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
