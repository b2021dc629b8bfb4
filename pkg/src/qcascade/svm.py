"""Soft-margin kernel SVM trained by sequential minimal optimisation.

The trainer solves the dual

    min_a  1/2 a^T Q a - e^T a,   0 <= a_i <= C,   y^T a = 0,
    Q_ij = y_i y_j K(x_i, x_j)

with two-variable updates. The first index of each pair is the maximal KKT
violator; the second is picked among violators by second-order gain. Kernel
rows are computed on demand and kept in a least-recently-used cache.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numba
import numpy as np

log = logging.getLogger(__name__)

RBF = "RBF"
POLY = "POLY"
_KIND_CODE = {RBF: 0, POLY: 1}

DEFAULT_C_GRID = (0.1, 1.0, 10.0, 100.0)
DEFAULT_GAMMA_GRID = (0.01, 1 / 63, 0.1, 1.0)
DEFAULT_TOL = 1e-3
DEFAULT_MAX_PASSES = 10_000
DEFAULT_CACHE_BYTES = 1 << 30


@dataclass(frozen=True)
class KernelSpec:
    kind: str = RBF
    gamma: float = 1.0
    degree: int = 3
    coef0: float = 1.0

    def __post_init__(self):
        if self.kind not in _KIND_CODE:
            raise ValueError(f"kernel kind must be RBF or POLY, got {self.kind!r}")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.kind == POLY and not 2 <= self.degree <= 9:
            raise ValueError("polynomial degree must be in 2..9")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "gamma": self.gamma, "degree": self.degree, "coef0": self.coef0}


def kernel_eval(spec: KernelSpec, x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if spec.kind == RBF:
        return math.exp(-spec.gamma * float(np.sum((x - y) ** 2)))
    return (spec.gamma * float(np.dot(x, y)) + spec.coef0) ** spec.degree


def kernel_matrix(spec: KernelSpec, A, B) -> np.ndarray:
    """Gram block ``K[a, b] = K(A[a], B[b])``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValueError("feature length mismatch")
    dot = A @ B.T
    if spec.kind == RBF:
        d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2 * dot
        np.maximum(d2, 0, out=d2)
        return np.exp(-spec.gamma * d2)
    return (spec.gamma * dot + spec.coef0) ** spec.degree


# --- SMO core ------------------------------------------------------------

@numba.njit(cache=True)
def _kernel_row(X, sqn, i, kind, gamma, degree, coef0, out):
    n, d = X.shape
    for t in range(n):
        s = 0.0
        for f in range(d):
            s += X[i, f] * X[t, f]
        if kind == 0:
            d2 = sqn[i] + sqn[t] - 2.0 * s
            if d2 < 0.0:
                d2 = 0.0
            out[t] = math.exp(-gamma * d2)
        else:
            out[t] = (gamma * s + coef0) ** degree


@numba.njit(cache=True)
def _smo(X, y, C, kind, gamma, degree, coef0, tol, max_iter, cache_rows):
    n = X.shape[0]
    sqn = np.empty(n)
    for t in range(n):
        sqn[t] = np.dot(X[t], X[t])
    kd = np.empty(n)
    for t in range(n):
        if kind == 0:
            kd[t] = 1.0
        else:
            kd[t] = (gamma * sqn[t] + coef0) ** degree

    alpha = np.zeros(n)
    G = -np.ones(n)

    cache = np.empty((cache_rows, n))
    slot_of = -np.ones(n, dtype=np.int64)
    owner = -np.ones(cache_rows, dtype=np.int64)
    stamp = np.zeros(cache_rows, dtype=np.int64)
    clock = 0
    n_used = 0

    it = 0
    converged = False
    while it < max_iter:
        # i: maximal violator in I_up
        gmax = -np.inf
        i = -1
        for t in range(n):
            if y[t] > 0:
                if alpha[t] < C:
                    v = -G[t]
                    if v >= gmax:
                        gmax = v
                        i = t
            else:
                if alpha[t] > 0:
                    v = G[t]
                    if v >= gmax:
                        gmax = v
                        i = t
        if i < 0:
            converged = True
            break

        # kernel row of i (cached)
        clock += 1
        si = slot_of[i]
        if si < 0:
            if n_used < cache_rows:
                si = n_used
                n_used += 1
            else:
                si = 0
                for s in range(1, cache_rows):
                    if stamp[s] < stamp[si]:
                        si = s
                slot_of[owner[si]] = -1
            _kernel_row(X, sqn, i, kind, gamma, degree, coef0, cache[si])
            owner[si] = i
            slot_of[i] = si
        stamp[si] = clock
        Ki = cache[si]

        # j: second-order choice among I_low violators
        gmax2 = -np.inf
        j = -1
        best = np.inf
        for t in range(n):
            if y[t] > 0:
                if alpha[t] > 0:
                    gd = gmax + G[t]
                    if G[t] >= gmax2:
                        gmax2 = G[t]
                    if gd > 0:
                        quad = kd[i] + kd[t] - 2.0 * Ki[t]
                        if quad <= 0:
                            quad = 1e-12
                        obj = -(gd * gd) / quad
                        if obj <= best:
                            best = obj
                            j = t
            else:
                if alpha[t] < C:
                    gd = gmax - G[t]
                    if -G[t] >= gmax2:
                        gmax2 = -G[t]
                    if gd > 0:
                        quad = kd[i] + kd[t] - 2.0 * Ki[t]
                        if quad <= 0:
                            quad = 1e-12
                        obj = -(gd * gd) / quad
                        if obj <= best:
                            best = obj
                            j = t
        if gmax + gmax2 < tol or j < 0:
            converged = True
            break

        clock += 1
        sj = slot_of[j]
        if sj < 0:
            if n_used < cache_rows:
                sj = n_used
                n_used += 1
            else:
                sj = -1
                for s in range(cache_rows):
                    if s != si and (sj < 0 or stamp[s] < stamp[sj]):
                        sj = s
                slot_of[owner[sj]] = -1
            _kernel_row(X, sqn, j, kind, gamma, degree, coef0, cache[sj])
            owner[sj] = j
            slot_of[j] = sj
        stamp[sj] = clock
        Kj = cache[sj]

        ai_old = alpha[i]
        aj_old = alpha[j]
        yi = y[i]
        yj = y[j]
        Qij = yi * yj * Ki[j]
        if yi != yj:
            quad = kd[i] + kd[j] + 2.0 * Qij
            if quad <= 0:
                quad = 1e-12
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            quad = kd[i] + kd[j] - 2.0 * Qij
            if quad <= 0:
                quad = 1e-12
            delta = (G[i] - G[j]) / quad
            s = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if s > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = s - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = s
            if s > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = s - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = s

        dai = alpha[i] - ai_old
        daj = alpha[j] - aj_old
        ci = yi * dai
        cj = yj * daj
        for t in range(n):
            G[t] += y[t] * (Ki[t] * ci + Kj[t] * cj)
        it += 1

    # bias from free vectors; midpoint of the feasible interval otherwise
    ub = np.inf
    lb = -np.inf
    acc = 0.0
    nfree = 0
    for t in range(n):
        yG = y[t] * G[t]
        if alpha[t] >= C:
            if y[t] < 0:
                ub = min(ub, yG)
            else:
                lb = max(lb, yG)
        elif alpha[t] <= 0:
            if y[t] > 0:
                ub = min(ub, yG)
            else:
                lb = max(lb, yG)
        else:
            nfree += 1
            acc += yG
    if nfree > 0:
        rho = acc / nfree
    else:
        rho = 0.5 * (ub + lb)
    return alpha, -rho, it, converged


# --- model ---------------------------------------------------------------

@dataclass
class SvmModel:
    """Trained kernel machine restricted to ``active_features``.

    ``active_features`` holds flat Pauli indices (1..63); inputs with all 63
    features are projected onto them by :meth:`project`.
    """

    kernel: KernelSpec
    support_vectors: np.ndarray
    signed_duals: np.ndarray
    bias: float
    C: float
    active_features: tuple[int, ...]
    meta: dict = field(default_factory=dict)
    kind: str = ""

    def project(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        # 63 columns always means full rows in flat-index order, even when the
        # model uses all 63 features in a different order
        if X.shape[1] == 63:
            return X[:, np.asarray(self.active_features) - 1]
        if X.shape[1] == len(self.active_features):
            return X
        raise ValueError(
            f"expected {len(self.active_features)} or 63 features, got {X.shape[1]}")

    def decision_function(self, X, block: int = 4096) -> np.ndarray:
        X = self.project(X)
        out = np.full(len(X), self.bias)
        if len(self.signed_duals) == 0:
            return out
        for a in range(0, len(X), block):
            K = kernel_matrix(self.kernel, X[a:a + block], self.support_vectors)
            out[a:a + block] += K @ self.signed_duals
        return out

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) > 0).astype(np.int64)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "kernel": self.kernel.to_dict(),
            "C": self.C,
            "bias": self.bias,
            "active_features": [int(f) for f in self.active_features],
            "support_vectors": self.support_vectors.tolist(),
            "signed_duals": self.signed_duals.tolist(),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SvmModel":
        k = d["kernel"]
        active = tuple(int(f) for f in d["active_features"])
        sv = np.asarray(d["support_vectors"], dtype=float).reshape(-1, len(active))
        return cls(
            KernelSpec(k["kind"], float(k["gamma"]), int(k.get("degree", 3)), float(k.get("coef0", 1.0))),
            sv, np.asarray(d["signed_duals"], dtype=float), float(d["bias"]), float(d["C"]),
            active, dict(d.get("meta", {})), d.get("kind", ""),
        )


def decision_value(model: SvmModel, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] not in (len(model.active_features), 63):
        raise ValueError("feature vector length does not match the model")
    return float(model.decision_function(x[None, :])[0])


def train(X, labels, C: float = 1.0, spec: KernelSpec = KernelSpec(), tol: float = DEFAULT_TOL,
          max_passes: int = DEFAULT_MAX_PASSES, seed: int = 0,
          active_features=None, cache_bytes: int = DEFAULT_CACHE_BYTES, kind: str = "") -> SvmModel:
    """Fit a binary kernel SVM on rows ``X`` with labels in {0, 1}.

    The solver itself is deterministic; ``seed`` is recorded in the model
    metadata so an artifact can be traced back to its run.
    """
    X = np.ascontiguousarray(X, dtype=float)
    labels = np.asarray(labels)
    if X.ndim != 2 or len(X) != len(labels):
        raise ValueError("X must be (n, d) with one label per row")
    if not C > 0:
        raise ValueError("C must be positive")
    classes = set(np.unique(labels).tolist())
    if not classes <= {0, 1}:
        raise ValueError(f"labels must be 0/1, got {sorted(classes)}")
    if len(classes) < 2:
        raise ValueError("training data contains a single class")
    if active_features is None:
        active_features = tuple(range(1, X.shape[1] + 1))
    y = np.where(labels == 1, 1.0, -1.0)
    n = len(X)
    cache_rows = int(max(2, min(n, cache_bytes // (8 * n))))
    max_iter = int(max_passes) * n

    alpha, bias, n_iter, converged = _smo(
        X, y, float(C), _KIND_CODE[spec.kind], float(spec.gamma), int(spec.degree),
        float(spec.coef0), float(tol), max_iter, cache_rows)
    if not converged:
        log.warning("SMO stopped at the iteration cap (%d) before meeting tol %g", n_iter, tol)
    sv = alpha > 0
    return SvmModel(
        spec, X[sv].copy(), (alpha[sv] * y[sv]), float(bias), float(C), tuple(active_features),
        {"seed": int(seed), "iterations": int(n_iter), "converged": bool(converged),
         "n_train": int(n), "tol": float(tol)},
        kind,
    )


def train_dataset(ds, C=1.0, spec=KernelSpec(), features=None, **kw) -> SvmModel:
    """Train on a :class:`~qcascade.sampling.LabeledDataset`, optionally on a feature subset."""
    features = tuple(range(1, 64)) if features is None else tuple(int(f) for f in features)
    X = ds.features[:, np.asarray(features) - 1]
    return train(X, ds.labels, C, spec, active_features=features, kind=ds.kind, **kw)


# --- metrics -------------------------------------------------------------

@dataclass
class Metrics:
    accuracy: float
    confusion: np.ndarray
    roc: np.ndarray | None = None
    auc: float | None = None

    def to_dict(self) -> dict:
        d = {"accuracy": self.accuracy, "confusion": self.confusion.tolist()}
        if self.roc is not None:
            d["roc"] = self.roc.tolist()
            d["auc"] = self.auc
        return d


def confusion_matrix(true, pred, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(true), np.asarray(pred)), 1)
    return cm


def roc_curve(labels, scores) -> np.ndarray:
    """ROC points (fpr, tpr), thresholds at midpoints of sorted unique scores.

    Ends at (0, 0) and (1, 1). A row is predicted positive when its score
    exceeds the threshold.
    """
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=float)
    P = int((labels == 1).sum())
    N = len(labels) - P
    u = np.unique(scores)
    thresholds = np.concatenate(([np.inf], (u[1:] + u[:-1])[::-1] / 2, [-np.inf]))
    order = np.argsort(scores)
    s_sorted = scores[order]
    pos_sorted = (labels[order] == 1).astype(np.int64)
    cum_pos = np.concatenate(([0], np.cumsum(pos_sorted)))
    # rows with score > thr are those after searchsorted(..., side='right')
    k = np.searchsorted(s_sorted, thresholds, side="right")
    tp = P - cum_pos[k]
    fp = (len(scores) - k) - tp
    tpr = tp / P if P else np.zeros(len(k))
    fpr = fp / N if N else np.zeros(len(k))
    return np.column_stack([fpr, tpr])


def auc_trapezoid(roc) -> float:
    roc = np.asarray(roc)
    return float(np.sum(np.diff(roc[:, 0]) * (roc[1:, 1] + roc[:-1, 1]) / 2))


def binary_metrics(labels, scores) -> Metrics:
    labels = np.asarray(labels)
    scores = np.asarray(scores)
    pred = (scores > 0).astype(np.int64)
    roc = roc_curve(labels, scores)
    return Metrics(float(np.mean(pred == labels)), confusion_matrix(labels, pred, 2), roc, auc_trapezoid(roc))


def evaluate(model: SvmModel, ds) -> Metrics:
    return binary_metrics(ds.labels, model.decision_function(ds.features))


def accuracy(model: SvmModel, X, labels) -> float:
    return float(np.mean(model.predict(X) == np.asarray(labels)))


def tune(train_ds, val_ds, C_grid=DEFAULT_C_GRID, gamma_grid=DEFAULT_GAMMA_GRID, kind: str = RBF,
         base: KernelSpec | None = None, features=None, **train_kw):
    """Grid search by validation accuracy.

    Returns ``(best_C, best_gamma, table)`` where ``table`` lists
    ``(C, gamma, val_accuracy)`` for every cell. Ties go to the smaller C,
    then the smaller gamma.
    """
    if not C_grid or not gamma_grid:
        raise ValueError("empty hyperparameter grid")
    base = base or KernelSpec(kind)
    table = []
    for C in C_grid:
        for g in gamma_grid:
            spec = replace(base, kind=kind, gamma=float(g))
            m = train_dataset(train_ds, C, spec, features, **train_kw)
            acc = accuracy(m, val_ds.features, val_ds.labels)
            log.info("tune %s C=%g gamma=%g val_acc=%.4f sv=%d", kind, C, g, acc, len(m.signed_duals))
            table.append((float(C), float(g), acc))
    best = select_best(table)
    return best[0], best[1], table


def select_best(table):
    """Highest accuracy; ties broken toward smaller C, then smaller gamma."""
    return min(table, key=lambda r: (-r[2], r[0], r[1]))
