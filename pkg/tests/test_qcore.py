import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qcascade import qcore
from qcascade.qcore import GHZ, W, features_of, state_of_features
from qcascade.sampling import ma_mixed_state

SINGLE = {
    "I": np.eye(2),
    "X": np.array([[0, 1], [1, 0]]),
    "Y": np.array([[0, -1j], [1j, 0]]),
    "Z": np.diag([1, -1]),
}


def brute_force_feature(rho, name):
    # oracle: explicit Kronecker product of the three named Paulis
    op = np.kron(np.kron(SINGLE[name[0]], SINGLE[name[1]]), SINGLE[name[2]])
    return np.trace(rho @ op)


def random_state(seed):
    rng = np.random.default_rng(seed)
    return ma_mixed_state(8, int(rng.integers(1, 51)), 1.0, rng)


def test_tensor_product_identity():
    assert np.array_equal(qcore.tensor_product(np.eye(2), np.eye(2)), np.eye(4))


def test_tensor_product_block_order():
    p0 = np.diag([1, 0])
    out = qcore.tensor_product(SINGLE["Z"], p0)
    # hand expansion: Z (x) |0><0| = diag(1, 0, -1, 0)
    assert np.array_equal(out, np.diag([1, 0, -1, 0]))
    assert out[0, 0] == 1 and out[2, 2] == -1


def test_tensor_product_basis_projector():
    out = qcore.tensor_product(np.diag([1, 0]), np.diag([0, 1]))
    expected = np.zeros((4, 4))
    expected[1, 1] = 1
    assert np.array_equal(out, expected)


def test_pauli_index_bijection():
    assert qcore.name_of(1) == "IIX" and qcore.index_of("IIX") == 1
    assert qcore.name_of(63) == "ZZZ" and qcore.index_of("ZZZ") == 63
    for n in range(1, 64):
        assert qcore.index_of(qcore.name_of(n)) == n
        assert qcore.flat_index(*qcore.triple_of(n)) == n
    assert len(set(qcore.FEATURE_NAMES)) == 63
    with pytest.raises(ValueError):
        qcore.index_of("III")
    with pytest.raises(ValueError):
        qcore.triple_of(0)


def test_features_of_basis_state():
    f = features_of(qcore.projector(qcore.ket("000")))
    ones = {"IIZ", "IZI", "ZII", "IZZ", "ZIZ", "ZZI", "ZZZ"}
    for name, v in zip(qcore.FEATURE_NAMES, f):
        assert v == pytest.approx(1.0 if name in ones else 0.0, abs=1e-12)


def test_features_of_ghz():
    f = dict(zip(qcore.FEATURE_NAMES, features_of(GHZ)))
    expected = {"ZZI": 1, "ZIZ": 1, "IZZ": 1, "XXX": 1, "XYY": -1, "YXY": -1, "YYX": -1}
    for name, v in f.items():
        assert v == pytest.approx(expected.get(name, 0.0), abs=1e-12), name
    # every entry against the brute-force trace
    for name in qcore.FEATURE_NAMES:
        assert f[name] == pytest.approx(brute_force_feature(GHZ, name).real, abs=1e-12)


def test_features_of_w():
    f = dict(zip(qcore.FEATURE_NAMES, features_of(W)))
    for name in ("IIZ", "IZI", "ZII"):
        assert f[name] == pytest.approx(1 / 3, abs=1e-12)
    assert f["ZZZ"] == pytest.approx(-1, abs=1e-12)


def test_features_of_rejects_wrong_dimension():
    with pytest.raises(ValueError):
        features_of(np.eye(4) / 4)


@pytest.mark.parametrize("seed", range(5))
def test_features_match_brute_force(seed):
    rho = random_state(seed)
    f = features_of(rho)
    for n, name in enumerate(qcore.FEATURE_NAMES):
        tr = brute_force_feature(rho, name)
        assert abs(tr.imag) < 1e-10
        assert f[n] == pytest.approx(tr.real, abs=1e-12)


def test_state_of_features_zero_is_maximally_mixed():
    assert np.allclose(state_of_features(np.zeros(63)), np.eye(8) / 8, atol=1e-15)


def test_state_of_features_roundtrip_ghz():
    assert np.abs(state_of_features(features_of(GHZ)) - GHZ).max() < 1e-10


def test_state_of_features_out_of_range_is_not_psd():
    f = np.zeros(63)
    f[qcore.index_of("IIZ") - 1] = 2
    rho = state_of_features(f)
    assert qcore.is_hermitian(rho)
    assert np.trace(rho).real == pytest.approx(1)
    # eigenvalues are (1 +/- 2)/8, so -1/8 appears
    assert qcore.min_eigenvalue(rho) == pytest.approx(-1 / 8)


def partial_trace_oracle(rho, q):
    # explicit sum over the traced qubit's basis
    out = np.zeros((4, 4), dtype=complex)
    for c in range(2):
        e = np.zeros((2, 1))
        e[c] = 1
        factors = [np.eye(2), np.eye(2)]
        factors.insert(q, e)
        proj = np.kron(np.kron(factors[0], factors[1]), factors[2])
        out += proj.T @ rho @ proj
    return out


def test_partial_trace_examples():
    p000 = qcore.projector(qcore.ket("000"))
    assert np.allclose(qcore.partial_trace(p000, "A"), qcore.projector(qcore.ket("00")))
    expected = (qcore.projector(qcore.ket("00")) + qcore.projector(qcore.ket("11"))) / 2
    assert np.allclose(qcore.partial_trace(GHZ, "C"), expected)
    rng = np.random.default_rng(3)
    r1, r2, r3 = (ma_mixed_state(2, 3, 1.0, rng) for _ in range(3))
    prod = qcore.kron_all(r1, r2, r3)
    assert np.allclose(qcore.partial_trace(prod, "B"), np.kron(r1, r3))


@pytest.mark.parametrize("sub,q", [("A", 0), ("B", 1), ("C", 2)])
def test_partial_trace_matches_oracle(sub, q):
    rho = random_state(11)
    out = qcore.partial_trace(rho, sub)
    assert np.allclose(out, partial_trace_oracle(rho, q), atol=1e-14)
    qcore.check_state(out, 4)


def test_partial_trace_rejects_bad_tag():
    with pytest.raises(ValueError):
        qcore.partial_trace(GHZ, "D")


def bell():
    return qcore.projector((qcore.ket("00") + qcore.ket("11")) / np.sqrt(2))


def test_partial_transpose_examples():
    rng = np.random.default_rng(0)
    prod = np.kron(ma_mixed_state(2, 2, 1.0, rng), ma_mixed_state(2, 2, 1.0, rng))
    assert qcore.min_eigenvalue(qcore.partial_transpose(prod, "B")) >= -1e-12
    assert qcore.min_eigenvalue(qcore.partial_transpose(bell(), "B")) == pytest.approx(-0.5, abs=1e-12)
    emb = np.kron(bell(), qcore.projector(qcore.ket("0")))
    assert qcore.min_eigenvalue(qcore.partial_transpose(emb, "A|BC")) == pytest.approx(-0.5, abs=1e-12)


def test_partial_transpose_matches_elementwise_definition():
    rho = random_state(5)
    for q, part in enumerate(("A|BC", "B|AC", "C|AB")):
        pt = qcore.partial_transpose(rho, part)
        for r, c in itertools.product(range(8), repeat=2):
            rb = [(r >> (2 - k)) & 1 for k in range(3)]
            cb = [(c >> (2 - k)) & 1 for k in range(3)]
            rb[q], cb[q] = cb[q], rb[q]
            src = (int("".join(map(str, rb)), 2), int("".join(map(str, cb)), 2))
            assert pt[r, c] == rho[src]


def test_partial_transpose_rejects_bad_partition():
    with pytest.raises(ValueError):
        qcore.partial_transpose(GHZ, "AB|C")


def test_min_eigenvalue_examples():
    assert qcore.min_eigenvalue(np.eye(8) / 8) == pytest.approx(0.125)
    assert qcore.min_eigenvalue(np.diag([1.0, -2.0, 3.0])) == pytest.approx(-2)
    assert qcore.min_eigenvalue(GHZ) == pytest.approx(0, abs=1e-12)
    with pytest.raises(ValueError):
        qcore.min_eigenvalue(np.array([[0, 1], [0, 0]]))


def test_check_state_rejects_invalid():
    with pytest.raises(qcore.InvalidStateError):
        qcore.check_state(np.eye(8))
    with pytest.raises(qcore.InvalidStateError):
        qcore.check_state(np.diag([1.5, -0.5]))
    assert qcore.is_valid_state(GHZ)


# --- properties ---

def test_roundtrip_and_purity_over_many_states():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        rho = ma_mixed_state(8, int(rng.integers(1, 51)), 1.0, rng)
        f = features_of(rho)
        assert np.abs(state_of_features(f) - rho).max() < 1e-10
        assert np.all(np.abs(f) <= 1 + 1e-12)
        assert (1 + f @ f) / 8 == pytest.approx(qcore.purity(rho), abs=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["A|BC", "B|AC", "C|AB"]))
def test_partial_transpose_involution(seed, part):
    rho = random_state(seed)
    assert np.array_equal(qcore.partial_transpose(qcore.partial_transpose(rho, part), part), rho)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from("ABC"))
def test_partial_trace_yields_valid_state(seed, sub):
    qcore.check_state(qcore.partial_trace(random_state(seed), sub), 4)
