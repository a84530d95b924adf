import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aae_emotion.aae import AaeConfig
from aae_emotion.baselines import (
    LdaModel,
    PcaModel,
    lda_fit,
    lda_project,
    pca_fit,
    pca_project,
    pca_reconstruct,
    scatter_matrices,
    vanilla_ae_encode,
    vanilla_ae_fit,
)
from aae_emotion.data import standardize_fit, synth_blobs
from aae_emotion.errors import DegenerateInputError, ShapeError, ValidationError
from aae_emotion.linalg import jacobi_eigh, symmetric_eigh

from oracles import charpoly_eigh, generalized_eig_2x2

# -- eigen solvers -------------------------------------------------------------


@given(st.integers(0, 2**32 - 1), st.integers(2, 6))
@settings(max_examples=25, deadline=None)
def test_eigen_solvers_match_charpoly_oracle(seed, n):
    rng = np.random.default_rng(seed)
    b = rng.standard_normal((n, n))
    a = b @ b.T + np.diag(np.arange(n, dtype=float))  # distinct spectrum, well separated
    w_ref, v_ref = charpoly_eigh(a)
    for w, v in (jacobi_eigh(a), symmetric_eigh(a)):
        np.testing.assert_allclose(w, w_ref, rtol=1e-8, atol=1e-8)
        np.testing.assert_allclose(v, v_ref, atol=1e-6)


def test_jacobi_diagonal_and_2x2():
    w, v = jacobi_eigh(np.diag([1.0, 3.0, 2.0]))
    np.testing.assert_array_equal(w, [3.0, 2.0, 1.0])
    w, v = jacobi_eigh(np.array([[2.0, 1.0], [1.0, 2.0]]))
    np.testing.assert_allclose(w, [3.0, 1.0])
    np.testing.assert_allclose(v[:, 0], [1 / np.sqrt(2), 1 / np.sqrt(2)])


# -- PCA ----------------------------------------------------------------------


def test_pca_two_points():
    m = pca_fit(np.array([[0.0, 0.0], [2.0, 2.0]]), 1)
    np.testing.assert_allclose(m.components[:, 0], [1 / np.sqrt(2), 1 / np.sqrt(2)])
    assert m.eigenvalues[0] == pytest.approx(4.0)


def test_pca_isotropic_equal_eigenvalues():
    x = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    m = pca_fit(x, 2)
    assert m.eigenvalues[0] == pytest.approx(m.eigenvalues[1], abs=1e-12)


@pytest.mark.parametrize("solver", ["lapack", "jacobi"])
def test_pca_random_8x5_oracle(solver):
    x = np.random.default_rng(0).standard_normal((8, 5))
    m = pca_fit(x, 5, solver=solver)
    xc = x - x.mean(axis=0)
    np.testing.assert_allclose(m.reconstruct(m.project(x)), x, atol=1e-8)
    w_ref, v_ref = charpoly_eigh(xc.T @ xc / 7)
    np.testing.assert_allclose(m.eigenvalues, w_ref, atol=1e-6)
    np.testing.assert_allclose(m.components, v_ref, atol=1e-6)


def test_pca_project_mean_is_zero_and_full_basis_round_trip():
    x = np.random.default_rng(1).standard_normal((20, 4))
    m = pca_fit(x, 4)
    np.testing.assert_allclose(pca_project(m, x.mean(axis=0)), 0.0, atol=1e-12)
    np.testing.assert_allclose(pca_reconstruct(m, pca_project(m, x)), x, atol=1e-8)


def test_pca_error_monotone_in_d():
    x = np.random.default_rng(2).standard_normal((30, 6)) @ np.diag([5, 4, 3, 2, 1, 0.5])
    errs = []
    for d in range(1, 7):
        m = pca_fit(x, d)
        errs.append(np.mean((m.reconstruct(m.project(x)) - x) ** 2))
    assert all(a >= b for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-20


def test_pca_validation_and_round_trip(tmp_path):
    with pytest.raises(DegenerateInputError, match="constant"):
        pca_fit(np.ones((5, 3)), 1)
    with pytest.raises(ValidationError):
        pca_fit(np.zeros((5, 3)) + np.arange(5)[:, None], 4)
    m = pca_fit(np.random.default_rng(0).standard_normal((10, 3)), 2)
    with pytest.raises(ShapeError):
        m.project(np.ones((1, 4)))
    m.save(tmp_path / "p.bin")
    r = PcaModel.load(tmp_path / "p.bin")
    np.testing.assert_array_equal(r.components, m.components)


# -- LDA ----------------------------------------------------------------------


def test_lda_separates_two_tight_classes():
    rng = np.random.default_rng(0)
    x = np.concatenate([-1 + 0.01 * rng.standard_normal(10), 1 + 0.01 * rng.standard_normal(10)])[:, None]
    labels = ["a"] * 10 + ["b"] * 10
    m = lda_fit(x, labels, 1)
    p = lda_project(m, x)[:, 0]
    assert np.sign(m.projection[0, 0]) == 1
    assert p[10:].mean() > 0 > p[:10].mean()


def test_lda_equal_means_give_zero_eigenvalues():
    rng = np.random.default_rng(1)
    base = rng.standard_normal((10, 3))
    x = np.vstack([base, base[:, ::-1] * [1, -1, 1], -base])
    x = x - np.repeat(np.stack([x[i * 10:(i + 1) * 10].mean(0) for i in range(3)]), 10, axis=0)
    labels = ["a"] * 10 + ["b"] * 10 + ["c"] * 10
    sw, sb = scatter_matrices(x, labels)
    assert np.abs(sb).max() < 1e-12
    assert np.abs(lda_fit(x, labels, 2).eigenvalues).max() < 1e-10


def test_lda_three_class_2d_oracle():
    rng = np.random.default_rng(3)
    centers = np.array([[0.0, 0.0], [3.0, 1.0], [1.0, 4.0]])
    cov = np.array([[1.0, 0.6], [0.6, 0.8]])
    chol = np.linalg.cholesky(cov)
    x = np.vstack([c + rng.standard_normal((6, 2)) @ chol.T for c in centers])
    labels = np.repeat(["a", "b", "c"], 6)
    m = lda_fit(x, labels, 2)
    sw, sb = scatter_matrices(x, labels)
    lam = 1e-6 * np.trace(sw) / 2
    w_ref, v_ref = generalized_eig_2x2(sb, sw + lam * np.eye(2))
    np.testing.assert_allclose(m.eigenvalues, w_ref, rtol=1e-6)
    for j in range(2):
        got = m.projection[:, j] / np.linalg.norm(m.projection[:, j])
        # equal up to sign and scale
        assert min(np.abs(got - v_ref[:, j]).max(), np.abs(got + v_ref[:, j]).max()) < 1e-6
        ref_proj = (x - x.mean(0)) @ v_ref[:, j]
        got_proj = lda_project(m, x)[:, j]
        scale = got_proj @ ref_proj / (ref_proj @ ref_proj)
        np.testing.assert_allclose(got_proj, scale * ref_proj, atol=1e-6)


def test_lda_validation_and_round_trip(tmp_path):
    x = np.random.default_rng(0).standard_normal((9, 4))
    labels = np.repeat(["a", "b", "c"], 3)
    with pytest.raises(ValidationError):
        lda_fit(x, labels, 3)
    with pytest.raises(ValidationError):
        lda_fit(x, ["a"] * 9, 1)
    with pytest.raises(ValidationError, match="fewer than 2"):
        lda_fit(x, list(labels[:8]) + ["d"], 1)
    m = lda_fit(x, labels, 2)
    m.save(tmp_path / "l.bin")
    r = LdaModel.load(tmp_path / "l.bin")
    assert r.classes == ["a", "b", "c"]
    np.testing.assert_array_equal(r.projection, m.projection)


def test_lda_handles_more_features_than_rows():
    x = np.random.default_rng(0).standard_normal((6, 20))
    m = lda_fit(x, np.repeat(["a", "b"], 3), 1)
    assert np.isfinite(m.projection).all()


# -- vanilla auto-encoder ------------------------------------------------------


def test_vanilla_ae_converges_on_blobs():
    ds = synth_blobs(4, 20, 250, separation=10.0, noise=0.5, seed=1)
    x = standardize_fit(ds.features).apply(ds.features)
    cfg = AaeConfig(input_dim=20, hidden_width=64, dropout_rate=0.2, epochs=100, recon_lr=1e-3)
    model, logs = vanilla_ae_fit(x, cfg, np.random.default_rng(0))
    assert logs[0].recon_mse >= 5 * logs[-1].recon_mse
    assert vanilla_ae_encode(model, x).shape == (len(x), 2)


def test_vanilla_ae_zero_rate_fixed_point():
    x = np.random.default_rng(0).standard_normal((30, 5))
    cfg = AaeConfig(input_dim=5, hidden_width=8, hidden_depth=1, epochs=2, recon_lr=0.0)
    model, _ = vanilla_ae_fit(x, cfg, np.random.default_rng(1))
    fresh, _ = vanilla_ae_fit(x, cfg, np.random.default_rng(1), epochs=0)
    for p, q in zip(model.encoder.parameters(), fresh.encoder.parameters()):
        np.testing.assert_array_equal(p, q)
