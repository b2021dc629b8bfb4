import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qcascade import noise, qcore
from qcascade.noise import CHANNELS, apply_all_qubits, apply_all_qubits_full, apply_single, kraus_set
from qcascade.qcore import GHZ, W
from qcascade.sampling import LabeledDataset, ma_mixed_state


def random_state(seed):
    return ma_mixed_state(8, 10, 1.0, np.random.default_rng(seed))


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(CHANNELS), st.floats(0, 1))
def test_kraus_completeness(kind, s):
    ks = kraus_set(kind, s)
    assert np.allclose(sum(k.conj().T @ k for k in ks), np.eye(2), atol=1e-12)


@pytest.mark.parametrize("kind", CHANNELS)
def test_zero_strength_is_identity(kind):
    rho = random_state(0)
    assert np.allclose(apply_all_qubits(rho, kraus_set(kind, 0)), rho, atol=1e-14)


def test_kraus_rejects_bad_input():
    with pytest.raises(ValueError):
        kraus_set("BITFLIP", 0.1)
    with pytest.raises(ValueError):
        kraus_set(noise.DEPOLARIZING, 1.5)


def test_amplitude_damping_full_decay():
    one = np.diag([0, 1]).astype(complex)
    assert np.allclose(apply_single(one, kraus_set(noise.AMPLITUDE_DAMPING, 1)), np.diag([1, 0]))


def test_depolarizing_three_quarters_fully_mixes():
    rho1 = ma_mixed_state(2, 1, 1.0, np.random.default_rng(1))
    assert np.allclose(apply_single(rho1, kraus_set(noise.DEPOLARIZING, 0.75)), np.eye(2) / 2)
    assert np.allclose(apply_all_qubits(GHZ, kraus_set(noise.DEPOLARIZING, 0.75)), np.eye(8) / 8, atol=1e-14)


def test_depolarizing_shrinks_bloch_vector():
    # Pauli-mixing convention: r -> (1 - 4p/3) r
    p = 0.3
    rho1 = ma_mixed_state(2, 2, 1.0, np.random.default_rng(2))
    out = apply_single(rho1, kraus_set(noise.DEPOLARIZING, p))
    z_in = np.real(rho1[0, 0] - rho1[1, 1])
    z_out = np.real(out[0, 0] - out[1, 1])
    assert z_out == pytest.approx((1 - 4 * p / 3) * z_in)


@pytest.mark.parametrize("lam", [0.1, 0.5, 1.0])
def test_phase_damping_keeps_diagonal(lam):
    rho = random_state(3)
    out = apply_all_qubits(rho, kraus_set(noise.PHASE_DAMPING, lam))
    assert np.allclose(np.diag(out), np.diag(rho), atol=1e-14)


def test_phase_damping_coherence_factor():
    # each flipped qubit scales the coherence by sqrt(1 - lambda)
    lam = 0.36
    out = apply_all_qubits(GHZ, kraus_set(noise.PHASE_DAMPING, lam))
    assert out[0, 7] == pytest.approx(0.5 * (1 - lam) ** 1.5)


def test_amplitude_damping_composes():
    g1, g2 = 0.2, 0.35
    rho = random_state(4)
    two = apply_all_qubits(apply_all_qubits(rho, kraus_set(noise.AMPLITUDE_DAMPING, g1)),
                           kraus_set(noise.AMPLITUDE_DAMPING, g2))
    one = apply_all_qubits(rho, kraus_set(noise.AMPLITUDE_DAMPING, 1 - (1 - g1) * (1 - g2)))
    assert np.allclose(two, one, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(CHANNELS), st.floats(0, 1), st.integers(0, 2**31))
def test_factorised_matches_full_and_stays_valid(kind, s, seed):
    rho = random_state(seed)
    ks = kraus_set(kind, s)
    out = apply_all_qubits(rho, ks)
    assert np.allclose(out, apply_all_qubits_full(rho, ks), atol=1e-12)
    qcore.check_state(out)


def test_batched_application():
    ks = kraus_set(noise.DEPOLARIZING, 0.2)
    stack = np.stack([GHZ, W, random_state(5)])
    out = apply_all_qubits(stack, ks)
    for i in range(3):
        assert np.allclose(out[i], apply_all_qubits_full(stack[i], ks), atol=1e-12)


class ByPurity:
    """Cascade stub: class 3 for pure states, 0 otherwise."""

    def predict(self, X):
        return np.where((1 + (X * X).sum(1)) / 8 > 0.99, 3, 0)


def test_noise_sweep_rows():
    ds = LabeledDataset(np.stack([qcore.features_of(GHZ)] * 4), [3] * 4, "CASCADE4")
    rows = noise.noise_sweep(ByPurity(), ds, kinds=(noise.DEPOLARIZING,), strengths=(0.0, 0.5), seed=9)
    assert [r["strength"] for r in rows] == [0.0, 0.5]
    assert rows[0]["accuracy"] == 1 and rows[1]["accuracy"] == 0
    assert rows[0]["n_states"] == 4 and rows[0]["seed"] == 9
    with pytest.raises(ValueError):
        noise.noise_sweep(ByPurity(), ds, strengths=())


def test_corrupt_dataset_keeps_labels_and_source():
    states = [GHZ, W, random_state(3)]
    ds = LabeledDataset(np.stack([qcore.features_of(r) for r in states]), [1, 0, 1], "W")
    clean = ds.features.copy()
    out = noise.corrupt_dataset(ds, noise.DEPOLARIZING, 0.75)
    assert np.allclose(out.features, 0, atol=1e-12)  # every state becomes I/8
    assert out.labels.tolist() == [1, 0, 1] and out.kind == "W"
    assert np.array_equal(ds.features, clean)
    same = noise.corrupt_dataset(ds, noise.PHASE_DAMPING, 0.0)
    assert np.array_equal(same.features, clean)
