"""Single-qubit Kraus channels applied independently to each of three qubits.

Depolarizing uses the Pauli-mixing convention
``rho -> (1 - p) rho + p/3 (X rho X + Y rho Y + Z rho Z)``: identity at
``p = 0`` and fully mixing at ``p = 3/4``.
"""

from __future__ import annotations

import numpy as np

from . import qcore
from .qcore import I2, X, Y, Z

AMPLITUDE_DAMPING = "AMPLITUDE_DAMPING"
PHASE_DAMPING = "PHASE_DAMPING"
DEPOLARIZING = "DEPOLARIZING"
CHANNELS = (AMPLITUDE_DAMPING, PHASE_DAMPING, DEPOLARIZING)

DEFAULT_STRENGTHS = (0.01, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5)


def kraus_set(kind: str, strength: float) -> list[np.ndarray]:
    if not 0 <= strength <= 1:
        raise ValueError(f"noise strength must lie in [0, 1], got {strength}")
    g = float(strength)
    if kind == AMPLITUDE_DAMPING:
        return [np.array([[1, 0], [0, np.sqrt(1 - g)]], dtype=complex),
                np.array([[0, np.sqrt(g)], [0, 0]], dtype=complex)]
    if kind == PHASE_DAMPING:
        return [np.array([[1, 0], [0, np.sqrt(1 - g)]], dtype=complex),
                np.array([[0, 0], [0, np.sqrt(g)]], dtype=complex)]
    if kind == DEPOLARIZING:
        return [np.sqrt(1 - g) * I2, np.sqrt(g / 3) * X, np.sqrt(g / 3) * Y, np.sqrt(g / 3) * Z]
    raise ValueError(f"unknown channel {kind!r}")


def apply_single(rho, kraus) -> np.ndarray:
    return sum(k @ rho @ k.conj().T for k in kraus)


def apply_to_qubit(rhos, kraus, qubit: int) -> np.ndarray:
    """Apply a single-qubit channel to ``qubit`` of a stack of 3-qubit states."""
    rhos = np.asarray(rhos, dtype=complex)
    batch = rhos.reshape(-1, 2, 2, 2, 2, 2, 2)
    out = np.zeros_like(batch)
    idx = "abc"
    ket_in = "".join("K" if q == qubit else idx[q] for q in range(3))
    bra_in = "".join("L" if q == qubit else idx[q].upper() for q in range(3))
    ket_out = "".join("k" if q == qubit else idx[q] for q in range(3))
    bra_out = "".join("l" if q == qubit else idx[q].upper() for q in range(3))
    expr = f"kK,n{ket_in}{bra_in},lL->n{ket_out}{bra_out}"
    for k in kraus:
        out += np.einsum(expr, k, batch, k.conj())
    return out.reshape(rhos.shape)


def apply_all_qubits(rho, kraus) -> np.ndarray:
    """``sum (K_a (x) K_b (x) K_c) rho (...)^dagger`` over all Kraus triples.

    Accepts a single 8x8 state or a stack of shape (m, 8, 8). Since the
    product channel factorises, it is applied one qubit at a time.
    """
    out = np.asarray(rho, dtype=complex)
    for q in range(3):
        out = apply_to_qubit(out, kraus, q)
    return 0.5 * (out + np.swapaxes(out, -1, -2).conj())


def apply_all_qubits_full(rho, kraus) -> np.ndarray:
    """Reference form summing over explicit 8x8 Kraus products."""
    rho = np.asarray(rho, dtype=complex)
    out = np.zeros_like(rho)
    for a in kraus:
        for b in kraus:
            for c in kraus:
                k = qcore.kron_all(a, b, c)
                out += k @ rho @ k.conj().T
    return out


def noisy_features(ds, kind: str, strength: float) -> np.ndarray:
    """Feature rows of a dataset after every state passes through the channel."""
    states = ds.states()
    return qcore.features_of_many(apply_all_qubits(states, kraus_set(kind, strength)))


def corrupt_dataset(ds, kind: str, strength: float):
    """Copy of ``ds`` whose states passed through the channel; labels unchanged."""
    out = ds.subset(np.arange(len(ds)))
    if strength > 0:
        out.features = noisy_features(ds, kind, strength)
    out.meta["corruption"] = {"kind": kind, "strength": float(strength)}
    return out


def noise_sweep(cascade, test_ds, kinds=CHANNELS, strengths=DEFAULT_STRENGTHS, seed: int | None = None):
    """4-class accuracy of ``cascade`` on corrupted copies of ``test_ds``.

    Labels stay the clean labels. Rows are dicts with keys
    ``kind, strength, accuracy, n_states, seed``.
    """
    if not strengths:
        raise ValueError("empty noise-strength grid")
    states = test_ds.states()
    rows = []
    for kind in kinds:
        for s in strengths:
            if s == 0:
                feats = test_ds.features
            else:
                feats = qcore.features_of_many(apply_all_qubits(states, kraus_set(kind, s)))
            acc = float(np.mean(cascade.predict(feats) == test_ds.labels))
            rows.append({"kind": kind, "strength": float(s), "accuracy": acc,
                         "n_states": len(test_ds), "seed": seed})
    return rows
