"""Dense linear algebra for one to three qubits and the Pauli-basis feature map.

Qubit A is the leftmost tensor factor and the most significant bit of the
computational-basis index. Features are ordered by ``n = 16*i + 4*j + k``
for the Pauli string ``sigma_i (x) sigma_j (x) sigma_k`` with ``n`` in 1..63.
"""

from __future__ import annotations

import itertools

import numpy as np

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
PSD_TOL = -1e-9

PAULI_LETTERS = "IXYZ"

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (I2, X, Y, Z)

N_FEATURES = 63


class InvalidStateError(ValueError):
    """Raised when a matrix violates a density-matrix invariant."""


def tensor_product(a, b):
    """Kronecker product, left factor most significant."""
    return np.kron(np.asarray(a), np.asarray(b))


def kron_all(*mats):
    out = np.array([[1.0 + 0j]])
    for m in mats:
        out = np.kron(out, m)
    return out


# --- Pauli indexing ------------------------------------------------------

def flat_index(i: int, j: int, k: int) -> int:
    return 16 * i + 4 * j + k


def triple_of(n: int) -> tuple[int, int, int]:
    if not 1 <= n <= 63:
        raise ValueError(f"flat Pauli index must be in 1..63, got {n}")
    return n // 16, (n // 4) % 4, n % 4


def name_of(n: int) -> str:
    return "".join(PAULI_LETTERS[t] for t in triple_of(n))


def index_of(name: str) -> int:
    name = name.upper()
    if len(name) != 3 or any(c not in PAULI_LETTERS for c in name):
        raise ValueError(f"not a 3-qubit Pauli name: {name!r}")
    n = flat_index(*(PAULI_LETTERS.index(c) for c in name))
    if n == 0:
        raise ValueError("III is not a feature")
    return n


FEATURE_NAMES: tuple[str, ...] = tuple(name_of(n) for n in range(1, 64))


def _pauli_strings() -> np.ndarray:
    ops = np.empty((64, 8, 8), dtype=complex)
    for i, j, k in itertools.product(range(4), repeat=3):
        ops[flat_index(i, j, k)] = kron_all(PAULIS[i], PAULIS[j], PAULIS[k])
    return ops


PAULI_STRINGS = _pauli_strings()
PAULI_STRINGS.setflags(write=False)


# --- validation ----------------------------------------------------------

def is_hermitian(h, tol: float = HERMITIAN_TOL) -> bool:
    h = np.asarray(h)
    return h.ndim == 2 and h.shape[0] == h.shape[1] and np.abs(h - h.conj().T).max() <= tol


def min_eigenvalue(h, tol: float = 1e-10) -> float:
    """Smallest eigenvalue of a Hermitian matrix.

    Raises ``ValueError`` if ``h`` is not Hermitian to ``tol``.
    """
    h = np.asarray(h, dtype=complex)
    if not is_hermitian(h, tol):
        raise ValueError("matrix is not Hermitian")
    h = 0.5 * (h + h.conj().T)
    return float(np.linalg.eigvalsh(h)[0])


def check_state(rho, dim: int | None = None) -> np.ndarray:
    """Validate a density matrix and return it as a complex array."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] not in (2, 4, 8):
        raise InvalidStateError(f"expected a 2x2, 4x4 or 8x8 matrix, got shape {rho.shape}")
    if dim is not None and rho.shape[0] != dim:
        raise InvalidStateError(f"expected dimension {dim}, got {rho.shape[0]}")
    if not is_hermitian(rho):
        raise InvalidStateError("state is not Hermitian")
    tr = np.trace(rho)
    if abs(tr - 1) >= TRACE_TOL:
        raise InvalidStateError(f"trace {tr.real:.3g} is not 1")
    lam = min_eigenvalue(rho)
    if lam < PSD_TOL:
        raise InvalidStateError(f"minimum eigenvalue {lam:.3g} is negative")
    return rho


def is_valid_state(rho) -> bool:
    try:
        check_state(rho)
    except InvalidStateError:
        return False
    return True


def ket(bits: str) -> np.ndarray:
    """Computational basis ket from a bit string such as ``"010"``."""
    v = np.zeros(2 ** len(bits), dtype=complex)
    v[int(bits, 2)] = 1
    return v


def projector(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).ravel()
    return np.outer(psi, psi.conj())


GHZ_KET = (ket("000") + ket("111")) / np.sqrt(2)
W_KET = (ket("001") + ket("010") + ket("100")) / np.sqrt(3)
GHZ = projector(GHZ_KET)
W = projector(W_KET)
MAXIMALLY_MIXED = np.eye(8, dtype=complex) / 8


# --- feature map ---------------------------------------------------------

def features_of(rho) -> np.ndarray:
    """Pauli expectation values ``Tr(rho P_n)`` for n = 1..63."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (8, 8):
        raise ValueError(f"features are defined for 8x8 states, got shape {rho.shape}")
    t = np.einsum("nij,ji->n", PAULI_STRINGS[1:], rho)
    return np.ascontiguousarray(t.real)


def features_of_many(rhos) -> np.ndarray:
    """Vectorised :func:`features_of` over a stack of shape (m, 8, 8)."""
    rhos = np.asarray(rhos, dtype=complex)
    if rhos.ndim != 3 or rhos.shape[1:] != (8, 8):
        raise ValueError(f"expected shape (m, 8, 8), got {rhos.shape}")
    t = np.einsum("nij,bji->bn", PAULI_STRINGS[1:], rhos, optimize=True)
    return np.ascontiguousarray(t.real)


def state_of_features(f) -> np.ndarray:
    """Rebuild ``rho = (I + sum_n f_n P_n) / 8``. PSD is not checked."""
    f = np.asarray(f, dtype=float)
    if f.shape != (N_FEATURES,):
        raise ValueError(f"expected 63 features, got shape {f.shape}")
    coeffs = np.concatenate(([1.0], f))
    return np.einsum("n,nij->ij", coeffs, PAULI_STRINGS) / 8


# --- subsystem maps ------------------------------------------------------

_QUBIT = {"A": 0, "B": 1, "C": 2}


def partial_trace(rho, subsystem: str) -> np.ndarray:
    """Trace out one qubit (``"A"``, ``"B"`` or ``"C"``) of a 3-qubit state.

    The two remaining qubits keep their relative order.
    """
    if subsystem not in _QUBIT:
        raise ValueError(f"subsystem must be one of A, B, C; got {subsystem!r}")
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (8, 8):
        raise ValueError("partial_trace expects an 8x8 state")
    q = _QUBIT[subsystem]
    t = rho.reshape(2, 2, 2, 2, 2, 2)
    t = np.trace(t, axis1=q, axis2=q + 3)
    return t.reshape(4, 4)


def _transposed_qubit(partition: str, n_qubits: int) -> int:
    label = partition.strip().upper()
    if n_qubits == 3:
        valid = {"A|BC": 0, "B|AC": 1, "C|AB": 2, "A": 0, "B": 1, "C": 2}
    else:
        valid = {"A|B": 1, "A": 0, "B": 1}
    if label not in valid:
        raise ValueError(f"invalid partition {partition!r} for {n_qubits} qubits")
    return valid[label]


def partial_transpose(rho, partition: str) -> np.ndarray:
    """Transpose a single qubit of a 2- or 3-qubit operator.

    For 3 qubits ``partition`` is one of ``"A|BC"``, ``"B|AC"``, ``"C|AB"``
    (the lone qubit is transposed) or a bare qubit letter. For 2 qubits it is
    ``"A"``, ``"B"`` or ``"A|B"`` (transposes B).
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape not in ((4, 4), (8, 8)):
        raise ValueError("partial_transpose expects a 4x4 or 8x8 matrix")
    n = 2 if rho.shape[0] == 4 else 3
    q = _transposed_qubit(partition, n)
    t = rho.reshape((2,) * (2 * n))
    axes = list(range(2 * n))
    axes[q], axes[q + n] = axes[q + n], axes[q]
    return t.transpose(axes).reshape(rho.shape)


def permute_qubits(rho, order) -> np.ndarray:
    """Reorder tensor factors: output factor ``k`` is input factor ``order[k]``."""
    rho = np.asarray(rho, dtype=complex)
    n = int(round(np.log2(rho.shape[0])))
    order = list(order)
    if sorted(order) != list(range(n)):
        raise ValueError(f"{order} is not a permutation of {n} qubits")
    t = rho.reshape((2,) * (2 * n))
    t = t.transpose(order + [n + o for o in order])
    return t.reshape(rho.shape)


def purity(rho) -> float:
    rho = np.asarray(rho)
    return float(np.real(np.trace(rho @ rho)))


def local_conjugate(rho, unitaries) -> np.ndarray:
    """``(U1 (x) U2 (x) ...) rho (...)^dagger``."""
    u = kron_all(*unitaries)
    return u @ rho @ u.conj().T
