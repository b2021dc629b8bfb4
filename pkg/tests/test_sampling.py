import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qcascade import qcore, sampling
from qcascade.oracles import ppt_all_cuts, ppt_check, witness_value
from qcascade.qcore import GHZ, W
from qcascade.sampling import (
    ALPHA_C, EPSILON_C, RngSeed, biseparable_state, build_dataset, classB_state,
    embed_bipartite, ghz_w_mixture, haar_unitary, ma_mixed_state, separable_state,
    two_qubit_entangled, werner_w_state,
)


def bell():
    return qcore.projector((qcore.ket("00") + qcore.ket("11")) / np.sqrt(2))


def expected_ma_purity(d, n, beta):
    # E[a_i^2] = (b+1)/(n(nb+1)), E[a_i a_j] = b/(n(nb+1)), E|<u|v>|^2 = 1/d
    return ((beta + 1) + (n - 1) * beta / d) / (n * beta + 1)


@pytest.fixture(scope="module")
def ghz_ds():
    return build_dataset("GHZ", 20000, 7)


@pytest.fixture(scope="module")
def w_ds():
    return build_dataset("W", 4000, 7)


def test_haar_unitary_is_unitary():
    rng = np.random.default_rng(0)
    for d in (2, 4, 8):
        u = haar_unitary(d, rng)
        assert np.abs(u.conj().T @ u - np.eye(d)).max() < 1e-12


def test_haar_bloch_vectors_average_to_zero():
    rng = np.random.default_rng(1)
    n = 10**5
    # Bloch vector of U|0>: (2 Re(a* b), 2 Im(a* b), |a|^2 - |b|^2)
    cols = np.array([haar_unitary(2, rng)[:, 0] for _ in range(n)])
    a, b = cols[:, 0], cols[:, 1]
    r = np.column_stack([2 * (a.conj() * b).real, 2 * (a.conj() * b).imag, abs(a) ** 2 - abs(b) ** 2])
    assert np.all(np.abs(r.mean(0)) < 0.02)
    # uniform on the sphere: each coordinate has variance 1/3
    assert np.allclose(r.var(0), 1 / 3, atol=0.01)


def test_ma_single_component_is_pure():
    rng = np.random.default_rng(2)
    rho = ma_mixed_state(8, 1, 1.0, rng)
    assert qcore.purity(rho) == pytest.approx(1, abs=1e-12)


@pytest.mark.parametrize("beta", [0.1, 1.0, 100.0])
def test_ma_mean_purity_matches_closed_form(beta):
    rng = np.random.default_rng(3)
    p = [qcore.purity(ma_mixed_state(8, 50, beta, rng)) for _ in range(2000)]
    assert np.mean(p) == pytest.approx(expected_ma_purity(8, 50, beta), abs=0.01)


def test_ma_purity_decreases_with_beta():
    rng = np.random.default_rng(4)
    means = [np.mean([qcore.purity(ma_mixed_state(8, 50, b, rng)) for _ in range(1000)])
             for b in (0.1, 1.0, 100.0)]
    assert means[0] > means[1] > means[2]


def test_ma_batch_matches_closed_form():
    rng = np.random.default_rng(5)
    rhos = sampling.ma_mixed_states(3000, 4, np.full(3000, 5), 1.0, rng)
    assert np.mean([qcore.purity(r) for r in rhos]) == pytest.approx(expected_ma_purity(4, 5, 1.0), abs=0.01)
    for r in rhos[:50]:
        qcore.check_state(r, 4)


def test_separable_single_pure_term_factorises():
    rng = np.random.default_rng(6)
    rho = separable_state(rng, n_terms=1, pure_factors=True)
    f = qcore.features_of(rho)
    t = np.concatenate(([1.0], f)).reshape(4, 4, 4)
    for i in range(1, 4):
        for j in range(1, 4):
            for k in range(1, 4):
                assert t[i, j, k] == pytest.approx(t[i, 0, 0] * t[0, j, 0] * t[0, 0, k], abs=1e-12)
    assert qcore.purity(rho) == pytest.approx(1, abs=1e-12)


def test_separable_states_are_ppt():
    rng = np.random.default_rng(7)
    for _ in range(10**4):
        rho = separable_state(rng)
        qcore.check_state(rho)
        assert ppt_all_cuts(rho)


def test_two_qubit_entangled_is_npt():
    rng = np.random.default_rng(8)
    for _ in range(200):
        rho = two_qubit_entangled(rng)
        assert qcore.min_eigenvalue(qcore.partial_transpose(rho, "B")) < -1e-6


def test_two_qubit_entangled_gives_up(monkeypatch):
    monkeypatch.setattr(sampling, "_two_qubit_candidate", lambda rng, beta=1.0: np.eye(4) / 4)
    with pytest.raises(RuntimeError):
        two_qubit_entangled(np.random.default_rng(0), max_rejections=5)


def test_embedded_bell_cuts():
    rho = embed_bipartite(qcore.projector(qcore.ket("0")), bell(), "A|BC")
    assert ppt_check(rho, "A|BC")[0]
    for part in ("B|AC", "C|AB"):
        ok, lam = ppt_check(rho, part)
        assert not ok and lam == pytest.approx(-0.5, abs=1e-12)


@pytest.mark.parametrize("part,q", [("A|BC", 0), ("B|AC", 1), ("C|AB", 2)])
def test_embed_bipartite_places_single_qubit(part, q):
    rng = np.random.default_rng(9)
    single = ma_mixed_state(2, 3, 1.0, rng)
    pair = two_qubit_entangled(rng)
    rho = embed_bipartite(single, pair, part)
    assert np.allclose(_reduce_to(rho, q), single)
    assert ppt_check(rho, part)[0]


def _reduce_to(rho, q):
    t = rho.reshape([2] * 6)
    keep = "abc"[q]
    bra = "abc".replace(keep, keep.upper())
    return np.einsum(f"abc{bra}->{keep}{keep.upper()}", t)


def test_embed_bipartite_rejects_bad_partition():
    with pytest.raises(ValueError):
        embed_bipartite(np.eye(2) / 2, np.eye(4) / 4, "AB|C")


def test_biseparable_satisfies_witnesses():
    rng = np.random.default_rng(10)
    for _ in range(10**4):
        rho = biseparable_state(rng)
        assert witness_value(rho, "GHZ") >= -1e-12
        assert witness_value(rho, "W") >= -1e-12


def test_classB_satisfies_witnesses():
    rng = np.random.default_rng(11)
    for _ in range(3000):
        rho = classB_state(rng)
        qcore.check_state(rho)
        assert witness_value(rho, "GHZ") >= -1e-12
        assert witness_value(rho, "W") >= -1e-12


def test_witness_reference_values():
    assert witness_value(GHZ, "GHZ") == pytest.approx(-0.25, abs=1e-12)
    assert witness_value(W, "W") == pytest.approx(-1 / 3, abs=1e-12)


def test_werner_and_mixture_labels():
    assert werner_w_state(ALPHA_C)[1] == 0
    assert werner_w_state(np.nextafter(ALPHA_C, 1))[1] == 1
    assert werner_w_state(1.0)[1] == 1 and werner_w_state(0.0)[1] == 0
    assert ghz_w_mixture(EPSILON_C)[1] == 0
    assert ghz_w_mixture(np.nextafter(EPSILON_C, 0))[1] == 1
    rho, _ = werner_w_state(0.0)
    assert np.allclose(rho, np.eye(8) / 8)
    with pytest.raises(ValueError):
        werner_w_state(1.5)
    with pytest.raises(ValueError):
        ghz_w_mixture(-0.1)


def test_rotation_preserves_spectrum_and_entanglement_witness_class():
    rng = np.random.default_rng(12)
    rho, _ = ghz_w_mixture(0.3)
    rot, _ = ghz_w_mixture(0.3, rng)
    assert np.allclose(np.linalg.eigvalsh(rho), np.linalg.eigvalsh(rot), atol=1e-12)


def test_rng_streams():
    a = RngSeed(5, 1).generator(3).random(4)
    b = RngSeed(5, 1).generator(3).random(4)
    c = RngSeed(5, 1).generator(4).random(4)
    d = RngSeed(5, 2).generator(3).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c) and not np.array_equal(a, d)
    assert RngSeed.named(1, "x").stream == RngSeed.named(2, "x").stream
    assert RngSeed.named(1, "x").stream != RngSeed.named(1, "y").stream


@pytest.mark.parametrize("kind", ["B", "W", "GHZ", "CASCADE4"])
def test_build_dataset_determinism_and_balance(kind):
    a = build_dataset(kind, 40, 123)
    b = build_dataset(kind, 40, 123)
    c = build_dataset(kind, 40, 124)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.labels, b.labels)
    assert not np.array_equal(a.features, c.features)
    n_cls = 4 if kind == "CASCADE4" else 2
    assert a.counts() == [40 // n_cls] * n_cls
    for f in a.features:
        qcore.check_state(qcore.state_of_features(f))


def test_build_dataset_parallel_matches_serial():
    a = build_dataset("W", 24, 5)
    b = build_dataset("W", 24, 5, n_jobs=2)
    assert np.array_equal(a.features, b.features)
    assert a.sources == b.sources


def test_build_dataset_prefix_stability():
    # row r depends only on (seed, r), so a longer set extends a shorter one
    a = build_dataset("B", 10, 9)
    b = build_dataset("B", 20, 9)
    assert np.array_equal(a.features, b.features[:10])


def test_build_dataset_rejects_bad_input():
    with pytest.raises(ValueError):
        build_dataset("Q", 10, 0)
    with pytest.raises(ValueError):
        build_dataset("B", 1, 0)


def test_ghz_dataset_label_zero_rows_pass_ghz_witness(ghz_ds):
    neg = ghz_ds.labels == 0
    for rho in ghz_ds.subset(np.flatnonzero(neg)).states():
        assert witness_value(rho, "GHZ") >= -1e-9


def test_ghz_dataset_pure_rows(ghz_ds):
    idx = [i for i, s in enumerate(ghz_ds.sources) if s == "ghz_pure"]
    assert len(idx) > 1000
    for i in idx:
        f = ghz_ds.features[i]
        assert (1 + f @ f) / 8 == pytest.approx(1, abs=1e-10)
        for name in ("IIX", "IIY", "IIZ", "IXI", "IYI", "IZI", "XII", "YII", "ZII"):
            assert f[qcore.index_of(name) - 1] == pytest.approx(0, abs=1e-10)


def test_dataset_threshold_labels(ghz_ds, w_ds):
    for ds, src, crit, side in ((ghz_ds, "ghz_w", EPSILON_C, "below"), (w_ds, "werner_w", ALPHA_C, "above")):
        for s, p, lab in zip(ds.sources, ds.params, ds.labels):
            if s != src:
                continue
            want = int(p < crit) if side == "below" else int(p > crit)
            assert lab == want


def test_csv_roundtrip(tmp_path):
    ds = build_dataset("W", 12, 3)
    path = tmp_path / "w.csv"
    ds.to_csv(path)
    back = sampling.LabeledDataset.from_csv(path)
    assert back.kind == "W"
    assert np.array_equal(back.features, ds.features)
    assert np.array_equal(back.labels, ds.labels)
    assert back.sources == ds.sources
    header = path.read_text().splitlines()[0].split(",")
    assert len(header) == 64 and header[-1] == "label"


def test_split_indices_partition():
    parts = sampling.split_indices(1000, seed=3)
    assert [len(p) for p in parts] == [700, 150, 150]
    assert np.array_equal(np.sort(np.concatenate(parts)), np.arange(1000))
    again = sampling.split_indices(1000, seed=3)
    assert all(np.array_equal(a, b) for a, b in zip(parts, again))
    with pytest.raises(ValueError):
        sampling.split_indices(10, (0.5, 0.6))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_generated_states_are_valid(seed):
    rng = np.random.default_rng(seed)
    for rho in (separable_state(rng), biseparable_state(rng, n_terms=3), classB_state(rng, n_terms=2)):
        qcore.check_state(rho)
