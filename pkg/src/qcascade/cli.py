"""Command-line entry point: ``qcascade <command> [options]``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import cascade, featsel, noise, pipeline, sampling, svm
from .pipeline import ExperimentConfig, write_csv
from .sampling import CASCADE4, LabeledDataset

log = logging.getLogger("qcascade")


class UsageError(Exception):
    pass


def _config(args) -> ExperimentConfig:
    overrides = {k: getattr(args, k, None) for k in ("seed", "out", "threads", "train_noise", "train_noise_strength")}
    if getattr(args, "config", None):
        return ExperimentConfig.load(args.config, **overrides)
    return ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})


def _out_path(args, default: str) -> Path:
    out = getattr(args, "out", None)
    p = Path(out) if out else Path(default)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _need(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"input file not found: {p}")
    return p


def _load_models(args) -> dict:
    if args.bundle:
        b = pipeline.load_cascade(_need(args.bundle))
        return {"GHZ": b.m_ghz, "W": b.m_w, "B": b.m_b}
    if not (args.model_b and args.model_w and args.model_ghz):
        raise UsageError("give --bundle or all of --model-b, --model-w, --model-ghz")
    return {k: pipeline.load_model(_need(p)) for k, p in
            (("B", args.model_b), ("W", args.model_w), ("GHZ", args.model_ghz))}


def _cascade_from(args) -> cascade.CascadeModel:
    m = _load_models(args)
    return cascade.CascadeModel(m["GHZ"], m["W"], m["B"])


# --- commands ------------------------------------------------------------

def cmd_gen(args):
    cfg = _config(args)
    ds = sampling.build_dataset(args.kind, args.n, cfg.seed, beta=cfg.beta, n_jobs=cfg.threads)
    out = _out_path(args, f"dataset_{args.kind}.csv")
    ds.to_csv(out)
    print(f"wrote {len(ds)} rows to {out}")


def cmd_train(args):
    cfg = _config(args)
    ds = LabeledDataset.from_csv(_need(args.data), kind=args.kind)
    if ds.kind not in pipeline.MODEL_KINDS:
        raise ValueError(f"cannot train a binary model on a {ds.kind} dataset")
    tm = pipeline.train_tuned(ds, cfg, args.kind)
    out = _out_path(args, f"model_{args.kind}.json")
    pipeline.save_model(tm.model, out)
    metrics = out.with_name(out.stem + ".metrics.csv")
    write_csv(metrics, pipeline.METRICS_HEADER,
              pipeline.metrics_rows("val", tm.val_metrics) + pipeline.metrics_rows("test", tm.test_metrics), cfg)
    write_csv(out.with_name(out.stem + ".tuning.csv"), ["C", "gamma", "val_accuracy"], tm.tune_table, cfg)
    print(f"{args.kind}: val={tm.val_metrics.accuracy:.4f} test={tm.test_metrics.accuracy:.4f} "
          f"C={tm.model.C:g} gamma={tm.model.kernel.gamma:.4g}")


def cmd_eval(args):
    cfg = _config(args)
    model = pipeline.load_model(_need(args.model))
    ds = LabeledDataset.from_csv(_need(args.data))
    met = svm.evaluate(model, ds)
    write_csv(_out_path(args, "eval.csv"), pipeline.METRICS_HEADER, pipeline.metrics_rows("eval", met), cfg)
    print(f"accuracy={met.accuracy:.4f} auc={met.auc:.4f}")


def cmd_cascade_eval(args):
    cfg = _config(args)
    model = _cascade_from(args)
    ds = LabeledDataset.from_csv(_need(args.data), kind=CASCADE4)
    met = cascade.evaluate_cascade(model, ds)
    pipeline.write_cascade_metrics(_out_path(args, "cascade_confusion.csv"), met, cfg)
    if args.save_bundle:
        pipeline.save_cascade(model, args.save_bundle)
    print(f"cascade accuracy={met.accuracy:.4f}")


def cmd_ood(args):
    cfg = _config(args)
    models = _load_models(args)
    samples, summary = pipeline.ood_evaluate(models, args.n, cfg.seed)
    out = _out_path(args, "ood.csv")
    write_csv(out, pipeline.OOD_HEADER, samples, cfg)
    write_csv(out.with_name(out.stem + "_summary.csv"), ["family", "variant", "model", "accuracy", "n"],
              [[s["family"], s["variant"], s["model"], s["accuracy"], s["n"]] for s in summary], cfg)
    for s in summary:
        print(f"{s['family']:10s} {s['variant']:8s} M_{s['model']:4s} {100 * s['accuracy']:.1f}%")


def cmd_noise(args):
    cfg = _config(args)
    if not args.strengths:
        raise UsageError("--strengths must list at least one value")
    kinds = args.kinds or noise.CHANNELS
    model = _cascade_from(args)
    ds = LabeledDataset.from_csv(_need(args.data), kind=CASCADE4)
    rows = noise.noise_sweep(model, ds, kinds, args.strengths, cfg.seed)
    write_csv(_out_path(args, "noise.csv"), ["kind", "strength", "accuracy", "n_states", "seed"],
              [[r["kind"], r["strength"], r["accuracy"], r["n_states"], r["seed"]] for r in rows],
              cfg, note="depolarizing=pauli-mixing(p)")
    for r in rows:
        print(f"{r['kind']:18s} {r['strength']:.2f} {r['accuracy']:.4f}")


def cmd_rank(args):
    cfg = _config(args)
    model = pipeline.load_model(_need(args.model))
    ds = LabeledDataset.from_csv(_need(args.data), kind=args.kind)
    train, val, test = pipeline.split_dataset(ds, cfg)
    n = min(cfg.featsel_eval_rows, len(val))
    rank = featsel.importance_scores(
        model, val.features[:n], val.labels[:n], args.repeats or cfg.featsel_repeats,
        sampling.RngSeed.named(cfg.seed, f"featsel/repeat/{args.kind}"), cfg.featsel_mode)
    out = _out_path(args, f"ranking_{args.kind}.json")
    payload = rank.to_dict()
    if not args.no_curve:
        sub = train.subset(np.arange(min(cfg.featsel_train_rows, len(train))))
        curve = featsel.prefix_accuracy_curve(sub, test, rank.order, model.C, model.kernel,
                                              tol=cfg.tol, seed=cfg.seed)
        payload["curve"] = curve
        pipeline.write_prefix_curve(out.with_name(out.stem + ".prefix.csv"), curve, cfg)
    out.write_text(json.dumps(payload))
    print("top features:", " ".join(pipeline.name_of(f) for f in rank.order[:10]))


def cmd_consensus(args):
    cfg = _config(args)
    ranks, gains, curves = {}, {}, {}
    for kind, path in (("B", args.rank_b), ("W", args.rank_w), ("GHZ", args.rank_ghz)):
        d = json.loads(_need(path).read_text())
        if "curve" not in d:
            raise ValueError(f"{path}: ranking has no prefix curve (rerun rank without --no-curve)")
        ranks[kind] = tuple(d["order"])
        curves[kind] = [tuple(x) for x in d["curve"]]
        gains[kind] = featsel.gains_from_curve(curves[kind])
    cons = featsel.consensus_ranking(ranks, gains)
    out = _out_path(args, "consensus.json")
    out.write_text(json.dumps(cons.to_dict()))
    pipeline.write_gains(out.with_name(out.stem + ".gains.csv"), curves, ranks, cfg)
    print("consensus:", " ".join(pipeline.name_of(f) for f in cons.order[:10]), "...")


def cmd_ablation(args):
    cfg = _config(args)
    cons = json.loads(_need(args.consensus).read_text())["order"]
    models = _load_models(args)
    trains, tests = {}, {}
    for kind, path in (("B", args.data_b), ("W", args.data_w), ("GHZ", args.data_ghz)):
        ds = LabeledDataset.from_csv(_need(path), kind=kind)
        trains[kind], _, tests[kind] = pipeline.split_dataset(ds, cfg)
    test4 = LabeledDataset.from_csv(_need(args.data4), kind=CASCADE4)
    hyper = {k: (m.C, m.kernel) for k, m in models.items()}
    ks = args.k or list(range(1, 64))
    rows = featsel.consensus_ablation(cons, trains, tests, test4, hyper, ks, tol=cfg.tol, seed=cfg.seed)
    pipeline.write_ablation(_out_path(args, "ablation.csv"), rows, cfg)


def cmd_reproduce(args):
    cfg = _config(args)
    exp = pipeline.Experiment(cfg)
    out = exp.write_all(cfg.out, ablation_ks=args.k)
    print(f"artifacts in {out}")


# --- parser --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS so a flag given before the subcommand is not reset by the subparser
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="root seed")
    common.add_argument("--config", default=argparse.SUPPRESS, help="flat key = value config file")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output file or directory")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    def models_args(p):
        p.add_argument("--bundle", help="cascade bundle JSON")
        p.add_argument("--model-b")
        p.add_argument("--model-w")
        p.add_argument("--model-ghz")

    parser = argparse.ArgumentParser(prog="qcascade", parents=[common],
                                     description="Three-qubit entanglement classification with cascaded SVMs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a labelled dataset")
    p.add_argument("--kind", required=True, choices=[*pipeline.MODEL_KINDS, CASCADE4])
    p.add_argument("--n", type=int, required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", parents=[common], help="tune and train one witness model")
    p.add_argument("--kind", required=True, choices=pipeline.MODEL_KINDS)
    p.add_argument("--data", required=True)
    p.add_argument("--train-noise", choices=noise.CHANNELS, help="corrupt the training split with this channel")
    p.add_argument("--train-noise-strength", type=float, help="strength for --train-noise")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cascade-eval", parents=[common], help="4-class confusion of the cascade")
    models_args(p)
    p.add_argument("--data", required=True)
    p.add_argument("--save-bundle")
    p.set_defaults(func=cmd_cascade_eval)

    p = sub.add_parser("ood", parents=[common], help="out-of-distribution families")
    models_args(p)
    p.add_argument("--n", type=int, default=2000)
    p.set_defaults(func=cmd_ood)

    p = sub.add_parser("noise", parents=[common], help="noise-channel robustness sweep")
    models_args(p)
    p.add_argument("--data", required=True)
    p.add_argument("--strengths", type=float, nargs="*", default=list(noise.DEFAULT_STRENGTHS))
    p.add_argument("--kinds", nargs="*", choices=noise.CHANNELS)
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("rank", parents=[common], help="feature importance and prefix curve")
    p.add_argument("--kind", required=True, choices=pipeline.MODEL_KINDS)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--repeats", type=int)
    p.add_argument("--no-curve", action="store_true")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("consensus", parents=[common], help="merge three rankings")
    p.add_argument("--rank-b", required=True)
    p.add_argument("--rank-w", required=True)
    p.add_argument("--rank-ghz", required=True)
    p.set_defaults(func=cmd_consensus)

    p = sub.add_parser("ablation", parents=[common], help="accuracies along the consensus order")
    models_args(p)
    p.add_argument("--consensus", required=True)
    p.add_argument("--data-b", required=True)
    p.add_argument("--data-w", required=True)
    p.add_argument("--data-ghz", required=True)
    p.add_argument("--data4", required=True)
    p.add_argument("--k", type=int, nargs="*")
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("reproduce", parents=[common], help="run every stage into --out")
    p.add_argument("--k", type=int, nargs="*", help="ablation prefix sizes (default 1..63)")
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        args.func(args)
    except UsageError as e:
        print(f"qcascade {args.command}: error: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError, KeyError) as e:
        print(f"qcascade {args.command}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
