"""Analytic reference tools: PPT test, fidelity witnesses and out-of-distribution families."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import qcore
from .qcore import GHZ_KET, W_KET, PSD_TOL
from .sampling import RngSeed, as_generator, rotated_class_state

HORODECKI = "HORODECKI"
EDGE = "EDGE"
UPB = "UPB"
XSTATE = "XSTATE"
FAMILIES = (HORODECKI, EDGE, UPB, XSTATE)

MODELS = ("B", "W", "GHZ")
# expected (M_B, M_W, M_GHZ) outputs; None where a model is not evaluated
_BOUND_ENTANGLED_EXPECT = {"B": 1, "W": 0, "GHZ": 0}

GME_TOL = 1e-9


def ppt_check(rho, partition: str) -> tuple[bool, float]:
    lam = qcore.min_eigenvalue(qcore.partial_transpose(rho, partition))
    return lam >= PSD_TOL, lam


def ppt_all_cuts(rho) -> bool:
    return all(ppt_check(rho, p)[0] for p in ("A|BC", "B|AC", "C|AB"))


def witness_value(rho, which: str) -> float:
    """``Tr(W rho)`` for ``W_GHZ = 3/4 I - P_GHZ`` or ``W_W = 2/3 I - P_W``."""
    rho = np.asarray(rho, dtype=complex)
    if which == "GHZ":
        const, psi = 3 / 4, GHZ_KET
    elif which == "W":
        const, psi = 2 / 3, W_KET
    else:
        raise ValueError(f"witness must be GHZ or W, got {which!r}")
    fid = np.real(psi.conj() @ rho @ psi)
    return float(const * np.real(np.trace(rho)) - fid)


def horodecki_state(a: float) -> np.ndarray:
    """Horodecki 2x4 bound entangled state, PPT across A|BC."""
    if not 0 < a < 1:
        raise ValueError("a must lie in the open interval (0, 1)")
    m = np.zeros((8, 8))
    for k in (0, 1, 2, 3, 5, 6):
        m[k, k] = a
    for k in (0, 1, 2):
        m[k, k + 5] = m[k + 5, k] = a
    m[4, 4] = m[7, 7] = (1 + a) / 2
    m[4, 7] = m[7, 4] = np.sqrt(1 - a * a) / 2
    return m.astype(complex) / (7 * a + 1)


def edge_state(a: float, b: float, c: float) -> np.ndarray:
    if min(a, b, c) <= 0:
        raise ValueError("edge-state parameters must be positive")
    m = np.diag([1, a, b, c, 1 / c, 1 / b, 1 / a, 1]).astype(complex)
    m[0, 7] = m[7, 0] = 1
    n = 2 + a + 1 / a + b + 1 / b + c + 1 / c
    return m / n


_PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2)
_MINUS = np.array([1, -1], dtype=complex) / np.sqrt(2)
_ZERO = np.array([1, 0], dtype=complex)
_ONE = np.array([0, 1], dtype=complex)

UPB_KETS = tuple(
    np.kron(np.kron(p, q), r)
    for p, q, r in ((_ZERO, _ZERO, _ZERO), (_MINUS, _PLUS, _ONE), (_PLUS, _ONE, _MINUS), (_ONE, _MINUS, _PLUS))
)


def upb_state(rng=None) -> np.ndarray:
    """Normalised complement of the four UPB projectors, optionally locally rotated."""
    rho = np.eye(8, dtype=complex)
    for v in UPB_KETS:
        rho -= qcore.projector(v)
    rho /= 4
    if rng is not None:
        rho = rotated_class_state(rho, rng)
    return rho


def x_state_gme_concurrence(rho) -> float:
    """GME concurrence of a 3-qubit X-matrix.

    ``2 max(0, max_i |z_i| - sum_{j != i} sqrt(d_j d_{7-j}))`` with ``z_i`` the
    upper anti-diagonal entries and ``d`` the diagonal.
    """
    rho = np.asarray(rho)
    d = np.real(np.diag(rho))
    z = np.abs([rho[k, 7 - k] for k in range(4)])
    w = np.sqrt(np.clip(d[:4] * d[7:3:-1], 0, None))
    return float(2 * max(0.0, np.max(z - (w.sum() - w))))


def x_state(diag, anti) -> np.ndarray:
    """X-matrix with ``diag`` (8 reals) and upper anti-diagonal ``anti`` (4 complex)."""
    m = np.diag(np.asarray(diag, dtype=complex))
    for k in range(4):
        m[k, 7 - k] = anti[k]
        m[7 - k, k] = np.conj(anti[k])
    return m


def random_x_state(rng) -> tuple[np.ndarray, int]:
    """Random X-state and its GME label (1 iff the GME concurrence is positive)."""
    rng = as_generator(rng)
    d = rng.dirichlet(np.ones(8))
    bound = np.sqrt(d[:4] * d[7:3:-1])
    z = rng.random(4) * bound * np.exp(2j * np.pi * rng.random(4))
    rho = x_state(d, z)
    return rho, int(x_state_gme_concurrence(rho) > GME_TOL)


@dataclass(frozen=True)
class OodFamily:
    tag: str
    params: tuple[float, ...]
    expected: dict  # model kind -> expected binary output, or None if not evaluated


def expected_labels(tag: str, gme_label: int | None = None) -> dict:
    if tag == XSTATE:
        return {"B": None, "W": None, "GHZ": gme_label}
    if tag in (HORODECKI, EDGE, UPB):
        return dict(_BOUND_ENTANGLED_EXPECT)
    raise ValueError(f"unknown OOD family {tag!r}")


def sample_family(tag: str, n: int, seed, rotated: bool = False):
    """Draw ``n`` states of an OOD family.

    Returns ``(states, members)`` with ``members[i]`` an :class:`OodFamily`
    carrying the parameters and expected model outputs. Horodecki ``a`` is
    uniform on (0.05, 0.95); edge parameters are log-uniform on (0.1, 10).
    """
    if tag not in FAMILIES:
        raise ValueError(f"unknown OOD family {tag!r}")
    if not isinstance(seed, RngSeed):
        seed = RngSeed.named(int(seed), f"ood/{tag}/{'rot' if rotated else 'plain'}")
    states = np.empty((n, 8, 8), dtype=complex)
    members = []
    for r in range(n):
        rng = seed.generator(r)
        gme = None
        if tag == HORODECKI:
            params = (float(rng.uniform(0.05, 0.95)),)
            rho = horodecki_state(*params)
        elif tag == EDGE:
            params = tuple(float(v) for v in np.exp(rng.uniform(np.log(0.1), np.log(10), 3)))
            rho = edge_state(*params)
        elif tag == UPB:
            params = ()
            rho = upb_state()
        else:
            rho, gme = random_x_state(rng)
            params = (x_state_gme_concurrence(rho),)
        if rotated:
            rho = rotated_class_state(rho, rng)
        states[r] = rho
        members.append(OodFamily(tag, params, expected_labels(tag, gme)))
    return states, members
