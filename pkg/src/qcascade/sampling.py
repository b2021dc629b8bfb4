"""Seeded random states and the three labelled binary datasets.

Every dataset row draws from its own generator derived from
``(seed, stream, row)``, so a row does not depend on how many rows precede it
and generation can be split across workers without changing the output.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import qcore
from .qcore import GHZ, W, MAXIMALLY_MIXED

log = logging.getLogger(__name__)

GENERATOR_VERSION = "1.0"

ALPHA_C = 3 / 7
EPSILON_C = 0.708

MAX_MA_COMPONENTS = 50
MAX_SEPARABLE_TERMS = 50
MAX_MIX_TERMS = 10
ENTANGLED_REJECTION = -1e-6
MAX_REJECTIONS = 10**6

KINDS = ("B", "W", "GHZ")
CASCADE4 = "CASCADE4"
CLASS_NAMES = ("S", "B\\S", "W\\B", "GHZ\\W")

BIPARTITIONS = ("A|BC", "B|AC", "C|AB")
# kron(rho_L, rho_MN) puts L first; these orders move it back into its slot
_BIPARTITION_ORDER = {"A|BC": (0, 1, 2), "B|AC": (1, 0, 2), "C|AB": (1, 2, 0)}


def stream_id(name: str) -> int:
    """Stable 64-bit id for a named random stream."""
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "little")


@dataclass(frozen=True)
class RngSeed:
    """Root seed plus stream id; ``generator(*keys)`` is a pure function of all three."""

    seed: int
    stream: int = 0

    def __post_init__(self):
        if not (0 <= self.seed < 2**64 and 0 <= self.stream < 2**64):
            raise ValueError("seed and stream must be unsigned 64-bit integers")

    @classmethod
    def named(cls, seed: int, name: str) -> "RngSeed":
        return cls(int(seed), stream_id(name))

    def generator(self, *keys: int) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream, *keys))
        return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngSeed):
        return rng.generator()
    return np.random.default_rng(rng)


# --- primitive random objects --------------------------------------------

def haar_unitary(d: int, rng) -> np.ndarray:
    """Haar-random ``d x d`` unitary via QR of a Ginibre matrix with phase fix."""
    if d < 1:
        raise ValueError("dimension must be positive")
    rng = as_generator(rng)
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def haar_kets(count: int, d: int, rng) -> np.ndarray:
    """``count`` Haar-random unit vectors in C^d, shape (count, d)."""
    v = rng.standard_normal((count, d)) + 1j * rng.standard_normal((count, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _grouped_dirichlet(sizes: np.ndarray, beta: float, rng) -> np.ndarray:
    # one symmetric Dirichlet draw per group, concatenated
    g = rng.gamma(beta, size=int(sizes.sum()))
    starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    totals = np.add.reduceat(g, starts)
    return g / np.repeat(totals, sizes)


def ma_mixed_state(d: int, n_components: int, beta: float, rng) -> np.ndarray:
    """Dirichlet-weighted mixture of ``n_components`` Haar pure states."""
    if not 1 <= n_components <= MAX_MA_COMPONENTS:
        raise ValueError(f"n_components must be in 1..{MAX_MA_COMPONENTS}")
    if beta <= 0:
        raise ValueError("beta must be positive")
    rng = as_generator(rng)
    kets = haar_kets(n_components, d, rng)
    w = rng.dirichlet(np.full(n_components, float(beta))) if n_components > 1 else np.ones(1)
    return np.einsum("a,ai,aj->ij", w, kets, kets.conj())


def ma_mixed_states(count: int, d: int, n_components: np.ndarray, beta: float, rng) -> np.ndarray:
    """Batch of MA states with per-state component counts, shape (count, d, d)."""
    n_components = np.asarray(n_components, dtype=np.int64)
    kets = haar_kets(int(n_components.sum()), d, rng)
    w = _grouped_dirichlet(n_components, beta, rng)
    outer = np.einsum("a,ai,aj->aij", w, kets, kets.conj())
    starts = np.concatenate(([0], np.cumsum(n_components)[:-1]))
    return np.add.reduceat(outer, starts, axis=0)


def single_qubit_states(count: int, rng, beta: float = 1.0, pure_fraction: float = 0.5) -> np.ndarray:
    """Single-qubit factors: Haar pure with probability ``pure_fraction``, else MA-mixed."""
    pure = rng.random(count) < pure_fraction
    n = np.where(pure, 1, rng.integers(1, MAX_MA_COMPONENTS + 1, size=count))
    return ma_mixed_states(count, 2, n, beta, rng)


def _kron3_batch(a, b, c) -> np.ndarray:
    out = np.einsum("nij,nkl,npq->nikpjlq", a, b, c)
    return out.reshape(len(a), 8, 8)


def _mix(weights, states) -> np.ndarray:
    rho = np.einsum("a,aij->ij", weights, states)
    return 0.5 * (rho + rho.conj().T)


# --- class generators ----------------------------------------------------

def separable_state(rng, n_terms: int | None = None, beta: float = 1.0,
                    pure_factors: bool = False) -> np.ndarray:
    """Convex mixture of ``n_terms`` (default uniform 1..50) product states."""
    rng = as_generator(rng)
    m = int(rng.integers(1, MAX_SEPARABLE_TERMS + 1)) if n_terms is None else int(n_terms)
    frac = 1.0 if pure_factors else 0.5
    f = single_qubit_states(3 * m, rng, beta, pure_fraction=frac)
    prods = _kron3_batch(f[0::3], f[1::3], f[2::3])
    w = rng.dirichlet(np.full(m, beta)) if m > 1 else np.ones(1)
    return _mix(w, prods)


def _two_qubit_candidate(rng, beta: float = 1.0) -> np.ndarray:
    n = int(rng.integers(1, MAX_MA_COMPONENTS + 1))
    return ma_mixed_state(4, n, beta, rng)


def is_npt(rho2, threshold: float = ENTANGLED_REJECTION) -> bool:
    return qcore.min_eigenvalue(qcore.partial_transpose(rho2, "B")) < threshold


def two_qubit_entangled(rng, beta: float = 1.0, max_rejections: int = MAX_REJECTIONS) -> np.ndarray:
    """First MA two-qubit state whose partial transpose is clearly negative."""
    rng = as_generator(rng)
    for _ in range(max_rejections + 1):
        rho = _two_qubit_candidate(rng, beta)
        if is_npt(rho):
            return rho
    raise RuntimeError(f"no NPT two-qubit state after {max_rejections} rejections")


def embed_bipartite(rho_single, rho_pair, partition: str) -> np.ndarray:
    """Place ``rho_single`` on the lone qubit of ``partition`` and ``rho_pair`` on the other two."""
    if partition not in _BIPARTITION_ORDER:
        raise ValueError(f"partition must be one of {BIPARTITIONS}")
    rho = np.kron(rho_single, rho_pair)
    return qcore.permute_qubits(rho, _BIPARTITION_ORDER[partition])


def biseparable_state(rng, n_terms: int | None = None, beta: float = 1.0) -> np.ndarray:
    """Mixture of 1..10 terms ``rho_L (x) rho_MN`` over random bipartitions."""
    rng = as_generator(rng)
    m = int(rng.integers(1, MAX_MIX_TERMS + 1)) if n_terms is None else int(n_terms)
    singles = single_qubit_states(m, rng, beta)
    terms = np.empty((m, 8, 8), dtype=complex)
    for t in range(m):
        part = BIPARTITIONS[int(rng.integers(3))]
        terms[t] = embed_bipartite(singles[t], two_qubit_entangled(rng, beta), part)
    w = rng.dirichlet(np.full(m, beta)) if m > 1 else np.ones(1)
    return _mix(w, terms)


def classB_state(rng, n_terms: int | None = None, beta: float = 1.0) -> np.ndarray:
    """Mixture of separable and biseparable draws, i.e. a point of the convex hull of B."""
    rng = as_generator(rng)
    m = int(rng.integers(1, MAX_MIX_TERMS + 1)) if n_terms is None else int(n_terms)
    terms = np.empty((m, 8, 8), dtype=complex)
    for t in range(m):
        terms[t] = separable_state(rng, beta=beta) if rng.random() < 0.5 else biseparable_state(rng, beta=beta)
    w = rng.dirichlet(np.full(m, beta)) if m > 1 else np.ones(1)
    return _mix(w, terms)


def random_local_unitaries(rng) -> list[np.ndarray]:
    return [haar_unitary(2, rng) for _ in range(3)]


def rotated_class_state(base, rng, unitaries=None) -> np.ndarray:
    """Conjugate ``base`` by a random (or given) product of single-qubit unitaries."""
    us = random_local_unitaries(as_generator(rng)) if unitaries is None else unitaries
    rho = qcore.local_conjugate(np.asarray(base, dtype=complex), us)
    return 0.5 * (rho + rho.conj().T)


def werner_w_state(alpha: float, rng=None) -> tuple[np.ndarray, int]:
    """``alpha |W><W| + (1 - alpha) I/8``; label 1 iff ``alpha > 3/7``."""
    if not 0 <= alpha <= 1:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    rho = alpha * W + (1 - alpha) * MAXIMALLY_MIXED
    if rng is not None:
        rho = rotated_class_state(rho, rng)
    return rho, int(alpha > ALPHA_C)


def ghz_w_mixture(epsilon: float, rng=None) -> tuple[np.ndarray, int]:
    """``(1 - eps)|GHZ><GHZ| + eps |W><W|``; label 1 (GHZ\\W) iff ``eps < 0.708``."""
    if not 0 <= epsilon <= 1:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    rho = (1 - epsilon) * GHZ + epsilon * W
    if rng is not None:
        rho = rotated_class_state(rho, rng)
    return rho, int(epsilon < EPSILON_C)


# --- dataset recipes -----------------------------------------------------
#
# A recipe draws one state for one side of a dataset and reports where it
# came from: (rho, source tag, scalar parameter or nan).

Draw = tuple[np.ndarray, str, float]


def _draw_separable(rng, beta) -> Draw:
    return separable_state(rng, beta=beta), "separable", np.nan


def _draw_biseparable(rng, beta) -> Draw:
    return biseparable_state(rng, beta=beta), "biseparable", np.nan


def _draw_w_side1(rng, beta) -> Draw:
    if rng.random() < 0.5:
        return rotated_class_state(W, rng), "w_pure", np.nan
    # uniform on (3/7, 1]
    alpha = 1.0 - rng.random() * (1.0 - ALPHA_C)
    rho, _ = werner_w_state(alpha, rng)
    return rho, "werner_w", alpha


def _draw_w_side0(rng, beta) -> Draw:
    if rng.random() < 0.7:
        return classB_state(rng, beta=beta), "classB", np.nan
    alpha = rng.random() * ALPHA_C
    rho, _ = werner_w_state(alpha, rng)
    return rho, "werner_w", alpha


def _draw_ghz_side1(rng, beta) -> Draw:
    if rng.random() < 0.5:
        return rotated_class_state(GHZ, rng), "ghz_pure", np.nan
    eps = rng.random() * EPSILON_C
    rho, _ = ghz_w_mixture(eps, rng)
    return rho, "ghz_w", eps


def _draw_ghz_side0(rng, beta) -> Draw:
    if rng.random() < 0.7:
        side = _draw_w_side1 if rng.random() < 0.5 else _draw_w_side0
        return side(rng, beta)
    eps = EPSILON_C + rng.random() * (1.0 - EPSILON_C)
    rho, _ = ghz_w_mixture(eps, rng)
    return rho, "ghz_w", eps


RECIPES: dict[str, tuple[Callable, ...]] = {
    "B": (_draw_separable, _draw_biseparable),
    "W": (_draw_w_side0, _draw_w_side1),
    "GHZ": (_draw_ghz_side0, _draw_ghz_side1),
    # four-class set: S, B\S, W\B, GHZ\W
    CASCADE4: (_draw_separable, _draw_biseparable, _draw_w_side1, _draw_ghz_side1),
}


@dataclass
class LabeledDataset:
    """Feature rows with integer labels plus provenance."""

    features: np.ndarray
    labels: np.ndarray
    kind: str
    meta: dict = field(default_factory=dict)
    sources: list[str] | None = None
    params: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or len(self.features) != len(self.labels):
            raise ValueError("features must be (n, d) with one label per row")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_classes(self) -> int:
        return 4 if self.kind == CASCADE4 else 2

    def counts(self) -> list[int]:
        return np.bincount(self.labels, minlength=self.n_classes).tolist()

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx)
        return LabeledDataset(
            self.features[idx], self.labels[idx], self.kind, dict(self.meta),
            None if self.sources is None else [self.sources[i] for i in idx],
            None if self.params is None else self.params[idx],
        )

    def states(self) -> np.ndarray:
        """Density matrices reconstructed from the feature rows (requires all 63)."""
        return np.stack([qcore.state_of_features(f) for f in self.features])

    # --- file boundary ---

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow([*qcore.FEATURE_NAMES, "label"])
            for row, lab in zip(self.features, self.labels):
                wr.writerow([format(v, ".17g") for v in row] + [int(lab)])
        sidecar = {
            "kind": self.kind,
            "seed": self.meta.get("seed"),
            "counts": self.counts(),
            "generator_version": self.meta.get("generator_version", GENERATOR_VERSION),
        }
        if self.sources is not None:
            sidecar["sources"] = self.sources
            sidecar["params"] = [None if np.isnan(p) else float(p) for p in self.params]
        meta_path(path).write_text(json.dumps(sidecar, indent=1))

    @classmethod
    def from_csv(cls, path, kind: str | None = None) -> "LabeledDataset":
        path = Path(path)
        with path.open(newline="") as fh:
            rd = csv.reader(fh)
            header = next(rd)
            if tuple(header[:-1]) != qcore.FEATURE_NAMES or header[-1] != "label":
                raise ValueError(f"{path}: unexpected dataset header")
            rows = list(rd)
        data = np.array([[float(v) for v in r[:-1]] for r in rows]) if rows else np.empty((0, 63))
        labels = np.array([int(r[-1]) for r in rows], dtype=np.int64)
        meta, sources, params = {}, None, None
        mp = meta_path(path)
        if mp.exists():
            side = json.loads(mp.read_text())
            meta = {k: side[k] for k in ("seed", "generator_version") if k in side}
            if kind is None:
                kind = side.get("kind")
            elif side.get("kind") not in (None, kind):
                raise ValueError(f"{path}: dataset kind {side.get('kind')} does not match {kind}")
            if "sources" in side:
                sources = side["sources"]
                params = np.array([np.nan if p is None else p for p in side["params"]])
        if kind is None:
            raise ValueError(f"{path}: dataset kind unknown (no sidecar and none given)")
        return cls(data, labels, kind, meta, sources, params)


def meta_path(csv_path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + ".meta.json")


def _balanced_labels(n_rows: int, n_classes: int) -> np.ndarray:
    return np.arange(n_rows) % n_classes


def generate_rows(kind: str, n_rows: int, seed: RngSeed, beta: float = 1.0,
                  start: int = 0, stop: int | None = None):
    """States, labels and provenance for rows ``start..stop`` of a dataset."""
    recipes = RECIPES[kind]
    labels = _balanced_labels(n_rows, len(recipes))
    stop = n_rows if stop is None else stop
    states = np.empty((stop - start, 8, 8), dtype=complex)
    sources, params = [], np.empty(stop - start)
    for r in range(start, stop):
        rng = seed.generator(r)
        rho, src, p = recipes[labels[r]](rng, beta)
        states[r - start] = rho
        sources.append(src)
        params[r - start] = p
    return states, labels[start:stop], sources, params


def build_dataset(kind: str, n_rows: int, seed, beta: float = 1.0, n_jobs: int = 1) -> LabeledDataset:
    """Balanced labelled dataset of ``kind`` in {B, W, GHZ, CASCADE4}.

    ``seed`` is an int root seed or an :class:`RngSeed`; row ``r`` uses
    ``seed.generator(r)`` on the stream named after the dataset kind.
    """
    if kind not in RECIPES:
        raise ValueError(f"unknown dataset kind {kind!r}; expected one of {tuple(RECIPES)}")
    min_rows = 4 if kind == CASCADE4 else 2
    if n_rows < min_rows:
        raise ValueError(f"need at least {min_rows} rows")
    if not isinstance(seed, RngSeed):
        seed = RngSeed.named(int(seed), f"dataset/{kind}")

    if n_jobs == 1:
        states, labels, sources, params = generate_rows(kind, n_rows, seed, beta)
    else:
        from joblib import Parallel, delayed

        bounds = np.linspace(0, n_rows, n_jobs * 4 + 1).astype(int)
        parts = Parallel(n_jobs=n_jobs)(
            delayed(generate_rows)(kind, n_rows, seed, beta, a, b)
            for a, b in zip(bounds[:-1], bounds[1:]) if b > a
        )
        states = np.concatenate([p[0] for p in parts])
        labels = np.concatenate([p[1] for p in parts])
        sources = [s for p in parts for s in p[2]]
        params = np.concatenate([p[3] for p in parts])

    ds = LabeledDataset(
        qcore.features_of_many(states), labels, kind,
        {"seed": seed.seed, "stream": seed.stream, "generator_version": GENERATOR_VERSION, "beta": beta},
        sources, params,
    )
    ds.meta["counts"] = ds.counts()
    return ds


def split_indices(n: int, fractions=(0.70, 0.15, 0.15), seed=0) -> tuple[np.ndarray, ...]:
    """Deterministic shuffled train/validation/test index split."""
    if abs(sum(fractions) - 1) > 1e-9:
        raise ValueError("split fractions must sum to 1")
    rng = RngSeed.named(int(seed), "split").generator(n)
    perm = rng.permutation(n)
    cuts = np.round(np.cumsum(fractions)[:-1] * n).astype(int)
    return tuple(np.sort(part) for part in np.split(perm, cuts))
