"""Permutation feature importance, top-k retraining curves and the consensus merge."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import svm
from .cascade import CascadeModel, evaluate_cascade
from .sampling import RngSeed

log = logging.getLogger(__name__)

PERMUTE = "permute"
UNIFORM = "uniform"
MODEL_ORDER = ("GHZ", "W", "B")
ALL_FEATURES = tuple(range(1, 64))


@dataclass
class ImportanceRanking:
    scores: np.ndarray  # indexed by flat feature index - 1
    order: tuple[int, ...]
    n_repeats: int
    baseline: float
    seed: int | None = None

    def to_dict(self) -> dict:
        return {"scores": self.scores.tolist(), "order": list(self.order),
                "n_repeats": self.n_repeats, "baseline": self.baseline, "seed": self.seed}

    @classmethod
    def from_dict(cls, d) -> "ImportanceRanking":
        return cls(np.asarray(d["scores"], dtype=float), tuple(int(f) for f in d["order"]),
                   int(d["n_repeats"]), float(d.get("baseline", np.nan)), d.get("seed"))


def rank_order(scores) -> tuple[int, ...]:
    """Flat indices sorted by descending score; ties by ascending index."""
    scores = np.asarray(scores, dtype=float)
    return tuple(int(i) + 1 for i in np.lexsort((np.arange(len(scores)), -scores)))


class _RbfPermutationScorer:
    # Recomputes decision values after changing one column by correcting the
    # cached squared-distance matrix instead of rebuilding it.
    def __init__(self, model: svm.SvmModel, X):
        self.model = model
        self.X = model.project(X)
        self.sv = model.support_vectors
        K = svm.kernel_matrix(model.kernel, self.X, self.sv)
        self.K = K

    def decisions(self, col: int, new_values) -> np.ndarray:
        g = self.model.kernel.gamma
        s = self.sv[:, col][None, :]
        delta = (new_values[:, None] - s) ** 2 - (self.X[:, col][:, None] - s) ** 2
        K = self.K * np.exp(-g * delta)
        return K @ self.model.signed_duals + self.model.bias


def _accuracy_from(pred, labels) -> float:
    return float(np.mean(pred == labels))


def importance_scores(model, X, labels, n_repeats: int = 50, seed=0, mode: str = PERMUTE,
                      features=None) -> ImportanceRanking:
    """Mean accuracy drop when one feature column is randomised.

    ``X`` holds full 63-feature rows. Each column is shuffled within the
    evaluation set (``mode="permute"``) or replaced by uniform values on
    [-1, 1] (``mode="uniform"``). Scores are kept raw, so a feature can score
    below zero. ``model`` needs ``predict``; RBF :class:`~qcascade.svm.SvmModel`
    instances take a faster path.
    """
    if n_repeats < 1:
        raise ValueError("n_repeats must be at least 1")
    if mode not in (PERMUTE, UNIFORM):
        raise ValueError(f"unknown randomisation mode {mode!r}")
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    if not isinstance(seed, RngSeed):
        seed = RngSeed.named(int(seed), "featsel/repeat")
    features = ALL_FEATURES if features is None else tuple(features)
    active = tuple(getattr(model, "active_features", ALL_FEATURES))

    baseline = _accuracy_from(model.predict(X), labels)
    fast = isinstance(model, svm.SvmModel) and model.kernel.kind == svm.RBF and len(model.signed_duals)
    scorer = _RbfPermutationScorer(model, X) if fast else None

    scores = np.zeros(63)
    for f in features:
        if f not in active:
            continue  # the model never sees this column
        drops = np.empty(n_repeats)
        for j in range(n_repeats):
            rng = seed.generator(f, j)
            col = X[:, f - 1]
            new = rng.permutation(col) if mode == PERMUTE else rng.uniform(-1, 1, len(col))
            if scorer is not None:
                pred = (scorer.decisions(active.index(f), new) > 0).astype(np.int64)
            else:
                Xp = X.copy()
                Xp[:, f - 1] = new
                pred = model.predict(Xp)
            drops[j] = baseline - _accuracy_from(pred, labels)
        scores[f - 1] = drops.mean()
    return ImportanceRanking(scores, rank_order(scores), n_repeats, baseline, seed.seed)


def prefix_accuracy_curve(train_ds, test_ds, order, C: float, spec: svm.KernelSpec, ks=None,
                          **train_kw) -> list[tuple[int, float]]:
    """Test accuracy of models retrained on the top-k features of ``order``."""
    order = tuple(order)
    if sorted(order) != list(ALL_FEATURES):
        raise ValueError("ranking must contain each of the 63 features once")
    ks = range(1, 64) if ks is None else ks
    curve = []
    for k in ks:
        m = svm.train_dataset(train_ds, C, spec, order[:k], **train_kw)
        acc = svm.accuracy(m, test_ds.features, test_ds.labels)
        log.info("prefix %s k=%d acc=%.4f", train_ds.kind, k, acc)
        curve.append((int(k), acc))
    return curve


def gains_from_curve(curve) -> np.ndarray:
    """``gain[i] = acc(i+1) - acc(i)`` for ranks i = 1..62 (zero-based slot i).

    Slot 0 holds nan: the top feature has no predecessor.
    """
    acc = dict(curve)
    if sorted(acc) != list(ALL_FEATURES):
        raise ValueError("gains need a full 1..63 prefix curve")
    g = np.full(63, np.nan)
    for k in range(2, 64):
        g[k - 1] = acc[k] - acc[k - 1]
    return g


@dataclass
class ConsensusRanking:
    order: tuple[int, ...]
    provenance: tuple[str, ...]
    reserve_trace: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"order": list(self.order), "provenance": list(self.provenance),
                "reserve_trace": self.reserve_trace}


def consensus_ranking(rankings: dict, gains: dict) -> ConsensusRanking:
    """Merge the three per-model rankings into one ordering for the cascade.

    ``rankings[m]`` is a full 63-feature order for model ``m`` in
    ``("GHZ", "W", "B")``; ``gains[m][i]`` is the accuracy gain of adding the
    feature at zero-based rank ``i`` (``i >= 1``).
    """
    for m in MODEL_ORDER:
        if m not in rankings or m not in gains:
            raise ValueError(f"missing ranking for model {m}")
        if sorted(int(f) for f in rankings[m]) != list(ALL_FEATURES):
            raise ValueError(f"ranking for {m} is not a permutation of the 63 features")
        if len(gains[m]) != 63:
            raise ValueError(f"gains for {m} must have 63 entries")

    order: list[int] = []
    prov: list[str] = []
    seen: set[int] = set()
    reserve: list[tuple[int, str]] = []
    trace: list = []

    def take(f, tag):
        order.append(f)
        prov.append(tag)
        seen.add(f)

    for m in MODEL_ORDER:
        f = int(rankings[m][0])
        if f not in seen:
            take(f, f"top:{m}")

    for i in range(1, 63):
        if len(order) == 63:
            break
        cands = [(float(gains[m][i]), pos, m, int(rankings[m][i])) for pos, m in enumerate(MODEL_ORDER)]
        # highest gain first; equal gains keep GHZ, W, B order
        cands.sort(key=lambda c: (-c[0], c[1]))
        _, _, m_top, f_top = cands[0]
        pushed = [(f, m) for _, _, m, f in cands[1:]]
        reserve.extend(pushed)
        event = {"step": i + 1, "top": f_top, "pushed": [f for f, _ in pushed], "taken": None}
        if f_top not in seen:
            take(f_top, f"step:{m_top}")
            event["taken"] = f_top
        else:
            while reserve:
                f, m = reserve.pop(0)
                if f not in seen:
                    take(f, f"reserve:{m}")
                    event["taken"] = f
                    break
        trace.append(event)

    for f, m in reserve:
        if f not in seen:
            take(f, f"fill-reserve:{m}")
    for f in ALL_FEATURES:
        if f not in seen:
            take(f, "fill-index")
    return ConsensusRanking(tuple(order), tuple(prov), trace)


def retrain_cascade(train_sets: dict, hyper: dict, features, **train_kw) -> CascadeModel:
    """Three member models retrained on ``features``.

    ``train_sets`` and ``hyper`` are keyed by ``"B"``, ``"W"``, ``"GHZ"``;
    ``hyper[m]`` is a ``(C, KernelSpec)`` pair.
    """
    models = {}
    for m in MODEL_ORDER:
        C, spec = hyper[m]
        models[m] = svm.train_dataset(train_sets[m], C, spec, features, **train_kw)
    return CascadeModel(models["GHZ"], models["W"], models["B"])


def consensus_ablation(consensus, train_sets: dict, test_sets: dict, test4, hyper: dict, ks=None,
                       **train_kw) -> list[dict]:
    """Per-k accuracies of the three members and the cascade on consensus prefixes."""
    order = consensus.order if isinstance(consensus, ConsensusRanking) else tuple(consensus)
    ks = range(1, 64) if ks is None else ks
    rows = []
    for k in ks:
        feats = order[:k]
        cm = retrain_cascade(train_sets, hyper, feats, **train_kw)
        row = {"k": int(k), "feature": int(order[k - 1])}
        for m, model in zip(MODEL_ORDER, (cm.m_ghz, cm.m_w, cm.m_b)):
            row[f"acc_{m}"] = svm.accuracy(model, test_sets[m].features, test_sets[m].labels)
        row["acc_cascade"] = evaluate_cascade(cm, test4).accuracy if k >= 3 else None
        log.info("ablation k=%d %s", k, row)
        rows.append(row)
    return rows


def cascade_prefix_curve(consensus, train_sets: dict, test4, hyper: dict, ks=None,
                         **train_kw) -> list[tuple[int, float]]:
    """4-class accuracy of the cascade rebuilt on the top-k consensus features."""
    order = consensus.order if isinstance(consensus, ConsensusRanking) else tuple(consensus)
    ks = list(range(3, 64)) if ks is None else list(ks)
    if any(k < 3 for k in ks):
        raise ValueError("the cascade needs at least 3 features")
    out = []
    for k in ks:
        cm = retrain_cascade(train_sets, hyper, order[:k], **train_kw)
        out.append((int(k), evaluate_cascade(cm, test4).accuracy))
        log.info("cascade prefix k=%d acc=%.4f", k, out[-1][1])
    return out
