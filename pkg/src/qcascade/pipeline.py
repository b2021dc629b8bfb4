"""Experiment configuration, artifact files and end-to-end orchestration."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cascade, featsel, noise, oracles, sampling, svm
from .qcore import FEATURE_NAMES, features_of_many, name_of
from .sampling import CASCADE4, LabeledDataset, RngSeed

log = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
MODEL_KINDS = ("B", "W", "GHZ")


@dataclass
class ExperimentConfig:
    seed: int = 20240601
    n_B: int = 20000
    n_W: int = 20000
    n_GHZ: int = 20000
    n_cascade: int = 4000
    split_train: float = 0.70
    split_val: float = 0.15
    split_test: float = 0.15
    C_grid: tuple = svm.DEFAULT_C_GRID
    gamma_grid: tuple = svm.DEFAULT_GAMMA_GRID
    tol: float = svm.DEFAULT_TOL
    beta: float = 1.0
    # training rows per polynomial-vs-RBF comparison cell; 0 means the whole training split
    kernel_compare_rows: int = 0
    poly_gamma: float = 1 / 7
    poly_coef0: float = 1.0
    featsel_repeats: int = 50
    featsel_eval_rows: int = 1000
    featsel_train_rows: int = 5000
    featsel_mode: str = featsel.PERMUTE
    noise_strengths: tuple = noise.DEFAULT_STRENGTHS
    # optional noise-augmented training: corrupt the training split only
    train_noise: str = ""
    train_noise_strength: float = 0.0
    ood_samples: int = 2000
    out: str = "artifacts"
    threads: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        fr = (self.split_train, self.split_val, self.split_test)
        if abs(sum(fr) - 1) > 1e-9 or min(fr) <= 0:
            raise ValueError("split fractions must be positive and sum to 1")
        if min(self.n_B, self.n_W, self.n_GHZ, self.n_cascade) < 10:
            raise ValueError("dataset sizes must be at least 10")
        if not self.C_grid or not self.gamma_grid:
            raise ValueError("empty SVM grid")
        if self.train_noise not in ("", *noise.CHANNELS):
            raise ValueError(f"unknown train_noise channel {self.train_noise!r}")
        if not 0 <= self.train_noise_strength <= 1:
            raise ValueError("train_noise_strength must lie in [0, 1]")

    @property
    def splits(self) -> tuple[float, float, float]:
        return (self.split_train, self.split_val, self.split_test)

    def n_rows(self, kind: str) -> int:
        return {"B": self.n_B, "W": self.n_W, "GHZ": self.n_GHZ, CASCADE4: self.n_cascade}[kind]

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(self).items()}

    def hash(self) -> str:
        d = self.to_dict()
        d.pop("out")
        d.pop("threads")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    # flat "key = value" text, lists comma-separated
    def to_text(self) -> str:
        lines = []
        for k, v in self.to_dict().items():
            lines.append(f"{k} = {','.join(repr(x) for x in v) if isinstance(v, list) else v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, **overrides) -> "ExperimentConfig":
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        values = {}
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config line {n}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ValueError(f"config line {n}: unknown key {key!r}")
            values[key] = _parse_value(types[key], val)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @classmethod
    def load(cls, path, **overrides) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text(), **overrides)


def _parse_value(typ: str, val: str):
    if typ == "tuple":
        return tuple(float(eval_number(v)) for v in val.split(",") if v.strip())
    if typ == "int":
        return int(val)
    if typ == "float":
        return float(eval_number(val))
    return val


def eval_number(s: str) -> float:
    """Parse a float literal or a simple ratio such as ``1/63``."""
    s = s.strip()
    if "/" in s:
        a, b = s.split("/", 1)
        return float(a) / float(b)
    return float(s)


# --- files ---------------------------------------------------------------

def save_model(model: svm.SvmModel, path) -> None:
    d = model.to_dict()
    d["format_version"] = MODEL_FORMAT_VERSION
    Path(path).write_text(json.dumps(d))


def load_model(path) -> svm.SvmModel:
    d = json.loads(Path(path).read_text())
    if d.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"{path}: incompatible model file version {d.get('format_version')}")
    return svm.SvmModel.from_dict(d)


def save_cascade(model: cascade.CascadeModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict()))


def load_cascade(path) -> cascade.CascadeModel:
    return cascade.CascadeModel.from_dict(json.loads(Path(path).read_text()))


def write_csv(path, header, rows, config: ExperimentConfig | None = None, seed=None, note: str = "") -> None:
    """CSV artifact with a leading ``#`` comment line carrying config hash and seed."""
    buf = io.StringIO()
    h = config.hash() if config is not None else "none"
    s = seed if seed is not None else (config.seed if config is not None else "none")
    buf.write(f"# config_hash={h} seed={s}{' ' + note if note else ''}\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for r in rows:
        wr.writerow([_fmt(v) for v in r])
    Path(path).write_text(buf.getvalue())


def read_csv(path) -> list[dict]:
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if v is None:
        return ""
    return v


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# --- training protocol ---------------------------------------------------

@dataclass
class TrainedModel:
    model: svm.SvmModel
    train: LabeledDataset
    val: LabeledDataset
    test: LabeledDataset
    tune_table: list
    val_metrics: svm.Metrics
    test_metrics: svm.Metrics


def split_dataset(ds: LabeledDataset, cfg: ExperimentConfig):
    tr, va, te = sampling.split_indices(len(ds), cfg.splits, cfg.seed)
    for part in (tr, va, te):
        if len(np.unique(ds.labels[part])) < ds.n_classes:
            raise ValueError("a split is missing a class; increase the dataset size")
    return ds.subset(tr), ds.subset(va), ds.subset(te)


def train_tuned(ds: LabeledDataset, cfg: ExperimentConfig, kind_label: str | None = None) -> TrainedModel:
    """Grid-search RBF (C, gamma) on the validation split and keep the best model."""
    train, val, test = split_dataset(ds, cfg)
    if cfg.train_noise and cfg.train_noise_strength > 0:
        train = noise.corrupt_dataset(train, cfg.train_noise, cfg.train_noise_strength)
    best, table = None, []
    for C in cfg.C_grid:
        for g in cfg.gamma_grid:
            t0 = time.perf_counter()
            m = svm.train_dataset(train, C, svm.KernelSpec(svm.RBF, float(g)), tol=cfg.tol, seed=cfg.seed)
            acc = svm.accuracy(m, val.features, val.labels)
            table.append((float(C), float(g), acc))
            log.info("%s C=%g gamma=%.4g val=%.4f sv=%d (%.1fs)", ds.kind, C, g, acc,
                     len(m.signed_duals), time.perf_counter() - t0)
            if best is None or svm.select_best([best[0], table[-1]]) is table[-1]:
                best = (table[-1], m)
    model = best[1]
    model.kind = kind_label or ds.kind
    vm = svm.evaluate(model, val)
    tm = svm.evaluate(model, test)
    model.meta["val_accuracy"] = vm.accuracy
    return TrainedModel(model, train, val, test, table, vm, tm)


def kernel_comparison(tm: TrainedModel, cfg: ExperimentConfig) -> list[dict]:
    """Validation AUC of RBF and polynomial kernels of degree 2..9.

    Every kernel trains on the same leading ``kernel_compare_rows`` training
    rows (all of them when 0) with the RBF-tuned C. On the whole split the
    RBF row is the tuned model itself.
    """
    n = len(tm.train) if cfg.kernel_compare_rows <= 0 else min(cfg.kernel_compare_rows, len(tm.train))
    sub = tm.train.subset(np.arange(n))
    C = tm.model.C
    specs = [svm.KernelSpec(svm.RBF, tm.model.kernel.gamma)]
    specs += [svm.KernelSpec(svm.POLY, cfg.poly_gamma, d, cfg.poly_coef0) for d in range(2, 10)]
    rows = []
    for spec in specs:
        if spec.kind == svm.RBF and n == len(tm.train):
            m = tm.model
        else:
            m = svm.train_dataset(sub, C, spec, tol=cfg.tol, seed=cfg.seed)
        met = svm.evaluate(m, tm.val)
        label = "RBF" if spec.kind == svm.RBF else f"POLY{spec.degree}"
        rows.append({"kernel": label, "auc": met.auc, "accuracy": met.accuracy, "roc": met.roc})
        log.info("kernel %s auc=%.4f", label, met.auc)
    return rows


def metrics_rows(split: str, met: svm.Metrics) -> list[list]:
    rows = [[split, "accuracy", "", "", met.accuracy], [split, "auc", "", "", met.auc]]
    cm = met.confusion
    for a in range(cm.shape[0]):
        for b in range(cm.shape[1]):
            rows.append([split, "confusion", a, b, int(cm[a, b])])
    for fpr, tpr in met.roc:
        rows.append([split, "roc", "", fpr, tpr])
    return rows


METRICS_HEADER = ["split", "metric", "row", "x", "value"]


# --- OOD -----------------------------------------------------------------

def ood_evaluate(models: dict, n: int, seed: int, rotated_variants=(False, True)):
    """Per-sample OOD predictions and per-(family, variant, model) accuracy."""
    samples, summary = [], []
    for rotated in rotated_variants:
        for tag in oracles.FAMILIES:
            states, members = oracles.sample_family(tag, n, seed, rotated=rotated)
            X = features_of_many(states)
            variant = "rotated" if rotated else "plain"
            for mk in MODEL_KINDS:
                exp = np.array([m.expected[mk] if m.expected[mk] is not None else -1 for m in members])
                if (exp < 0).all():
                    continue
                pred = models[mk].predict(X)
                for mem, p, e in zip(members, pred, exp):
                    samples.append([tag, variant, " ".join(format(v, ".6g") for v in mem.params), mk, int(p), int(e)])
                summary.append({"family": tag, "variant": variant, "model": mk,
                                "accuracy": float(np.mean(pred == exp)), "n": n})
    return samples, summary


OOD_HEADER = ["family", "variant", "params", "model", "predicted", "expected"]


# --- full experiment -----------------------------------------------------

class Experiment:
    """Lazily computed, cached stages of the full reproduction.

    Each property builds its stage on first access from the config and seed
    only, so any stage can be rerun in isolation.
    """

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self._cache: dict = {}
        self.timings: dict[str, float] = {}

    def _stage(self, key, fn):
        if key not in self._cache:
            t0 = time.perf_counter()
            self._cache[key] = fn()
            self.timings[key] = time.perf_counter() - t0
            log.info("stage %s done in %.1fs", key, self.timings[key])
        return self._cache[key]

    def dataset(self, kind: str) -> LabeledDataset:
        return self._stage(("data", kind), lambda: sampling.build_dataset(
            kind, self.cfg.n_rows(kind), self.cfg.seed, beta=self.cfg.beta, n_jobs=self.cfg.threads))

    def trained(self, kind: str) -> TrainedModel:
        return self._stage(("trained", kind), lambda: train_tuned(self.dataset(kind), self.cfg))

    @property
    def cascade_test(self) -> LabeledDataset:
        return self.dataset(CASCADE4)

    @property
    def cascade_model(self) -> cascade.CascadeModel:
        return self._stage("cascade", lambda: cascade.CascadeModel(
            self.trained("GHZ").model, self.trained("W").model, self.trained("B").model))

    @property
    def models(self) -> dict:
        return {k: self.trained(k).model for k in MODEL_KINDS}

    def hyper(self) -> dict:
        return {k: (m.C, m.kernel) for k, m in self.models.items()}

    def kernel_comparison(self, kind: str) -> list[dict]:
        return self._stage(("kernels", kind), lambda: kernel_comparison(self.trained(kind), self.cfg))

    def ood(self):
        return self._stage("ood", lambda: ood_evaluate(self.models, self.cfg.ood_samples, self.cfg.seed))

    def noise(self):
        return self._stage("noise", lambda: noise.noise_sweep(
            self.cascade_model, self.cascade_test, noise.CHANNELS, self.cfg.noise_strengths, self.cfg.seed))

    def ranking(self, kind: str) -> featsel.ImportanceRanking:
        def run():
            tm = self.trained(kind)
            n = min(self.cfg.featsel_eval_rows, len(tm.val))
            return featsel.importance_scores(
                tm.model, tm.val.features[:n], tm.val.labels[:n], self.cfg.featsel_repeats,
                RngSeed.named(self.cfg.seed, f"featsel/repeat/{kind}"), self.cfg.featsel_mode)
        return self._stage(("ranking", kind), run)

    def featsel_train(self, kind: str) -> LabeledDataset:
        tm = self.trained(kind)
        return tm.train.subset(np.arange(min(self.cfg.featsel_train_rows, len(tm.train))))

    def prefix_curve(self, kind: str, ks=None) -> list[tuple[int, float]]:
        ks = tuple(range(1, 64)) if ks is None else tuple(ks)
        tm = self.trained(kind)
        return self._stage(("prefix", kind, ks), lambda: featsel.prefix_accuracy_curve(
            self.featsel_train(kind), tm.test, self.ranking(kind).order, tm.model.C, tm.model.kernel,
            ks, tol=self.cfg.tol, seed=self.cfg.seed))

    def consensus(self) -> featsel.ConsensusRanking:
        def run():
            ranks = {k: self.ranking(k).order for k in MODEL_KINDS}
            gains = {k: featsel.gains_from_curve(self.prefix_curve(k)) for k in MODEL_KINDS}
            return featsel.consensus_ranking(ranks, gains)
        return self._stage("consensus", run)

    def ablation(self, ks=None) -> list[dict]:
        ks = tuple(range(1, 64)) if ks is None else tuple(ks)
        return self._stage(("ablation", ks), lambda: featsel.consensus_ablation(
            self.consensus(), {k: self.trained(k).train for k in MODEL_KINDS},
            {k: self.trained(k).test for k in MODEL_KINDS}, self.cascade_test, self.hyper(), ks,
            tol=self.cfg.tol, seed=self.cfg.seed))

    # --- artifacts ---

    def write_all(self, out=None, ablation_ks=None) -> Path:
        """Run every stage and write one CSV/JSON per table or figure."""
        out = Path(out or self.cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        cfg = self.cfg
        (out / "config.txt").write_text(cfg.to_text())
        for kind in (*MODEL_KINDS, CASCADE4):
            self.dataset(kind).to_csv(out / f"dataset_{kind}.csv")
        for kind in MODEL_KINDS:
            tm = self.trained(kind)
            save_model(tm.model, out / f"model_{kind}.json")
            write_csv(out / f"metrics_{kind}.csv", METRICS_HEADER,
                      metrics_rows("val", tm.val_metrics) + metrics_rows("test", tm.test_metrics), cfg)
            write_csv(out / f"tuning_{kind}.csv", ["C", "gamma", "val_accuracy"], tm.tune_table, cfg)
            krows = []
            for r in self.kernel_comparison(kind):
                krows += [[r["kernel"], r["auc"], fpr, tpr] for fpr, tpr in r["roc"]]
            write_csv(out / f"kernels_{kind}.csv", ["kernel", "auc", "fpr", "tpr"], krows, cfg)
        save_cascade(self.cascade_model, out / "cascade.json")
        cm = cascade.evaluate_cascade(self.cascade_model, self.cascade_test)
        write_cascade_metrics(out / "cascade_confusion.csv", cm, cfg)
        samples, summary = self.ood()
        write_csv(out / "ood.csv", OOD_HEADER, samples, cfg)
        write_csv(out / "ood_summary.csv", ["family", "variant", "model", "accuracy", "n"],
                  [[s["family"], s["variant"], s["model"], s["accuracy"], s["n"]] for s in summary], cfg)
        write_csv(out / "noise.csv", ["kind", "strength", "accuracy", "n_states", "seed"],
                  [[r["kind"], r["strength"], r["accuracy"], r["n_states"], r["seed"]] for r in self.noise()],
                  cfg, note="depolarizing=pauli-mixing(p)")
        for kind in MODEL_KINDS:
            r = self.ranking(kind)
            Path(out / f"ranking_{kind}.json").write_text(json.dumps(r.to_dict()))
            write_prefix_curve(out / f"prefix_{kind}.csv", self.prefix_curve(kind), cfg)
        cons = self.consensus()
        Path(out / "consensus.json").write_text(json.dumps(cons.to_dict()))
        write_gains(out / "gains.csv", {k: self.prefix_curve(k) for k in MODEL_KINDS},
                    {k: self.ranking(k).order for k in MODEL_KINDS}, cfg)
        write_ablation(out / "ablation.csv", self.ablation(ablation_ks), cfg)
        return out


def write_cascade_metrics(path, met: svm.Metrics, cfg=None, seed=None):
    rows = [["accuracy", "", "", met.accuracy]]
    cm = met.confusion
    for a in range(4):
        for b in range(4):
            rows.append(["confusion", sampling.CLASS_NAMES[a], sampling.CLASS_NAMES[b], int(cm[a, b])])
    for name, rec in zip(sampling.CLASS_NAMES, cascade.per_class_recall(cm)):
        rows.append(["recall", name, "", float(rec)])
    write_csv(path, ["metric", "true", "predicted", "value"], rows, cfg, seed)


def write_prefix_curve(path, curve, cfg=None, seed=None):
    rows, prev = [], None
    for k, acc in curve:
        rows.append([k, acc, "" if prev is None else acc - prev])
        prev = acc
    write_csv(path, ["k", "accuracy", "gain"], rows, cfg, seed)


def write_gains(path, curves: dict, orders: dict, cfg=None, seed=None):
    rows = []
    gains = {k: featsel.gains_from_curve(c) for k, c in curves.items()}
    for i in range(1, 63):
        rows.append([i + 1] + [x for m in ("GHZ", "W", "B") for x in (name_of(orders[m][i]), gains[m][i])])
    header = ["rank", "feature_GHZ", "gain_GHZ", "feature_W", "gain_W", "feature_B", "gain_B"]
    write_csv(path, header, rows, cfg, seed)


def write_ablation(path, rows: list[dict], cfg=None, seed=None):
    out = [[name_of(r["feature"]), r["acc_B"], r["acc_W"], r["acc_GHZ"], r["acc_cascade"]] for r in rows]
    write_csv(path, ["feature_name", "acc_B", "acc_W", "acc_GHZ", "acc_cascade"], out, cfg, seed)
