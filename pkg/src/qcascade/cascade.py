"""Four-class classifier built by chaining the GHZ, W and B witness models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sampling
from .sampling import CASCADE4, CLASS_NAMES, LabeledDataset
from .svm import Metrics, SvmModel, confusion_matrix

S, B_NOT_S, W_NOT_B, GHZ_NOT_W = range(4)
BUNDLE_VERSION = 1


@dataclass
class CascadeModel:
    """``m_ghz`` is asked first, then ``m_w``, then ``m_b``; anything left is S.

    Members only need a ``predict(X)`` method taking full 63-feature rows, so
    stub predictors can stand in for trained models.
    """

    m_ghz: SvmModel
    m_w: SvmModel
    m_b: SvmModel
    class_names: tuple[str, ...] = CLASS_NAMES

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.full(len(X), S, dtype=np.int64)
        todo = np.arange(len(X))
        for model, cls in ((self.m_ghz, GHZ_NOT_W), (self.m_w, W_NOT_B), (self.m_b, B_NOT_S)):
            if len(todo) == 0:
                break
            hit = model.predict(X[todo]) == 1
            out[todo[hit]] = cls
            todo = todo[~hit]
        return out

    def to_dict(self) -> dict:
        return {
            "version": BUNDLE_VERSION,
            "class_order": list(self.class_names),
            "stage_order": ["GHZ", "W", "B"],
            "m_ghz": self.m_ghz.to_dict(),
            "m_w": self.m_w.to_dict(),
            "m_b": self.m_b.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CascadeModel":
        if d.get("version") != BUNDLE_VERSION:
            raise ValueError(f"unsupported cascade bundle version {d.get('version')}")
        return cls(SvmModel.from_dict(d["m_ghz"]), SvmModel.from_dict(d["m_w"]),
                   SvmModel.from_dict(d["m_b"]), tuple(d.get("class_order", CLASS_NAMES)))


def classify(model: CascadeModel, f) -> str:
    """Class name of a single 63-entry feature vector."""
    return model.class_names[int(model.predict(np.asarray(f, dtype=float)[None, :])[0])]


def evaluate_cascade(model: CascadeModel, ds: LabeledDataset) -> Metrics:
    pred = model.predict(ds.features)
    cm = confusion_matrix(ds.labels, pred, 4)
    return Metrics(float(np.trace(cm) / cm.sum()) if cm.sum() else 0.0, cm)


def per_class_recall(cm) -> np.ndarray:
    cm = np.asarray(cm, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.diag(cm) / cm.sum(1)


def build_cascade4_dataset(n: int, seed, beta: float = 1.0, n_jobs: int = 1) -> LabeledDataset:
    """Balanced S / B\\S / W\\B / GHZ\\W set from the binary datasets' generators."""
    return sampling.build_dataset(CASCADE4, n, seed, beta=beta, n_jobs=n_jobs)
