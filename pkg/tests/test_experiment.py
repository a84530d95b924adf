import math

import numpy as np
import pytest

from aae_emotion.data import Dataset, make_session_folds, synth_blobs
from aae_emotion.errors import ValidationError
from aae_emotion.experiment import (
    METHODS,
    TABLE2_ROWS,
    Audit,
    ExperimentConfig,
    TuningGrid,
    inner_tune,
    run_table1,
    run_table2,
    select_candidate,
)
from aae_emotion.svm import KernelSpec

FAST_AAE = {"hidden_width": 16, "hidden_depth": 1, "epochs": 3, "dropout_rate": 0.0,
            "recon_lr": 1e-3, "disc_lr": 1e-3, "gen_lr": 1e-3}


def tiny_grid(**kw):
    base = dict(code_dims=(2,), pca_dims=(2,), lda_dims=(2,), ae_dims=(2,), kernels=("linear",),
                gamma_factors=(1.0,), boxes=(1.0,))
    base.update(kw)
    return TuningGrid(**base)


def tiny_config(**kw):
    return ExperimentConfig(aae=dict(FAST_AAE), per_class=10, **kw)


def tiny_blobs(separation=6.0, seed=0, per_class=15, n_sessions=3):
    return synth_blobs(3, 6, per_class, separation=separation, seed=seed, n_sessions=n_sessions)


def signal_in_minor_component(n=60, seed=0):
    """Two correlated noise columns dominate PC1; the class lives on PC2."""
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    z = rng.standard_normal(n)
    x = np.column_stack([z, 2 * y - 1 + 0.05 * rng.standard_normal(n), z + 0.01 * rng.standard_normal(n)])
    sessions = [f"s{i % 3}" for i in range(n)]
    return Dataset(x, np.array(["a", "b"])[y], sessions, sessions)


# -- selection ------------------------------------------------------------------


def test_select_candidate_tie_rules():
    lin, rbf = KernelSpec("linear"), KernelSpec("rbf", 0.5)
    # hand-enumerated scores: three candidates tie at 0.8
    scores = {(10, lin, 1.0): 0.8, (2, rbf, 10.0): 0.8, (2, lin, 10.0): 0.8, (2, lin, 0.1): 0.7}
    assert select_candidate(scores) == (2, rbf, 10.0)
    scores[(2, lin, 1.0)] = 0.8
    assert select_candidate(scores) == (2, lin, 1.0)
    scores[(50, lin, 1.0)] = 0.81
    assert select_candidate(scores) == (50, lin, 1.0)
    with pytest.raises(ValidationError):
        select_candidate({})


def test_inner_tune_singleton_grid():
    ds = tiny_blobs()
    sel, scores = inner_tune(ds, np.arange(len(ds)), tiny_grid(), "features", tiny_config(), 0)
    assert sel == (6, KernelSpec("linear"), 1.0)
    assert len(scores) == 1


def test_inner_tune_picks_dominating_candidate():
    ds = signal_in_minor_component()
    grid = tiny_grid(pca_dims=(1, 2))
    sel, scores = inner_tune(ds, np.arange(len(ds)), grid, "pca", tiny_config(), 0)
    assert sel[0] == 2
    assert scores[(2, KernelSpec("linear"), 1.0)] > scores[(1, KernelSpec("linear"), 1.0)] + 0.3


def test_inner_tune_tie_goes_to_smaller_dimension():
    ds = signal_in_minor_component()
    grid = tiny_grid(pca_dims=(3, 2))
    sel, scores = inner_tune(ds, np.arange(len(ds)), grid, "pca", tiny_config(), 0)
    assert set(scores.values()) == {1.0}
    assert sel[0] == 2


def test_grid_dimension_caps():
    g = TuningGrid()
    assert g.dims_for("lda", 50, 4, 100) == [1, 2, 3]
    assert g.dims_for("lda", 50, 3, 100) == [1, 2]
    assert g.dims_for("pca", 20, 4, 100) == [2, 10]
    assert g.dims_for("features", 1582, 4, 100) == [1582]
    rbf = [k for k, _ in g.svm_candidates(10) if k.kind == "rbf"]
    assert sorted({k.gamma for k in rbf}) == pytest.approx([0.01, 0.1, 1.0])
    with pytest.raises(ValidationError):
        TuningGrid(kernels=("poly",))


def test_config_validation():
    with pytest.raises(ValidationError):
        ExperimentConfig(methods=("svm",))
    with pytest.raises(ValidationError):
        ExperimentConfig(aae={"code_dim": 3})


# -- table 1 --------------------------------------------------------------------


@pytest.fixture(scope="module")
def table1_report():
    return run_table1(tiny_blobs(), tiny_grid(), tiny_config(), seed=3)


def test_table1_report_structure(table1_report, tmp_path):
    r = table1_report
    assert r.methods == list(METHODS)
    assert r.folds == ["s1", "s2", "s3"]
    assert all(len(v) == 3 for v in r.uar.values())
    assert "features_vs_aae" in r.p_values
    counts = r.metadata["test_class_counts"].split("; ")
    assert [c.split(":")[0] for c in counts] == r.folds
    assert sum(int(kv.split("=")[1]) for c in counts for kv in c.split(": ")[1].split()) == 45
    paths = r.write(tmp_path)
    text = paths["report_txt"].read_text()
    for title in ("Full features", "AAE code vectors", "Auto-encoder", "LDA", "PCA"):
        assert title in text
    assert paths["report_csv"].read_text().startswith("method,fold,uar")


def test_table1_deterministic_and_parallel_equivalent(table1_report, tmp_path):
    again = run_table1(tiny_blobs(), tiny_grid(), tiny_config(), seed=3, jobs=2)
    a = table1_report.write(tmp_path / "a")
    b = again.write(tmp_path / "b")
    for k in a:
        assert a[k].read_bytes() == b[k].read_bytes()
    assert again.fingerprints == table1_report.fingerprints


def test_table1_no_signal_is_at_chance():
    ds = synth_blobs(4, 8, 60, separation=0.0, seed=1, n_sessions=3)
    r = run_table1(ds, tiny_grid(), ExperimentConfig(aae=dict(FAST_AAE)), seed=0)
    n = len(ds)
    se = math.sqrt(0.25 * 0.75 / n)
    for m in METHODS:
        pooled = r.pooled(m)
        score = float(np.mean(pooled.recalls))
        assert abs(score - 0.25) < 3 * se, (m, score)


def test_test_rows_never_used_for_fitting():
    ds = tiny_blobs()
    audit = Audit()
    run_table1(ds, tiny_grid(code_dims=(2, 3)), tiny_config(), seed=0, audit=audit)
    for i, fold in enumerate(make_session_folds(ds)):
        _, te = fold.split(ds)
        assert set(audit.rows(i, "fit")).isdisjoint(te)
        assert set(audit.rows(i, "tune")).isdisjoint(te)
        assert set(audit.rows(i, "predict")) == set(te)


def test_poisoned_test_rows_do_not_change_fitted_models():
    ds = tiny_blobs()
    plan = make_session_folds(ds)
    grid, cfg = tiny_grid(code_dims=(2, 3), boxes=(0.1, 1.0)), tiny_config()
    clean = run_table1(ds, grid, cfg, seed=0)
    _, te0 = plan[0].split(ds)
    x = ds.features.copy()
    x[te0] = 1e3 * np.random.default_rng(0).standard_normal(x[te0].shape)
    poisoned = run_table1(ds.with_features(x), grid, cfg, seed=0)
    for m in METHODS:
        assert poisoned.fingerprints[m][0] == clean.fingerprints[m][0]
        assert poisoned.selected[m][0] == clean.selected[m][0]


def test_experiment_dataset_checks():
    ds = tiny_blobs(n_sessions=1)
    with pytest.raises(ValidationError):
        run_table1(ds, tiny_grid(), tiny_config())


# -- table 2 --------------------------------------------------------------------


def test_table2_structure_and_determinism(tmp_path):
    ds = tiny_blobs()
    r1 = run_table2(ds, per_class=5, grid=tiny_grid(), config=tiny_config(), seed=1)
    r2 = run_table2(ds, per_class=5, grid=tiny_grid(), config=tiny_config(), seed=1)
    assert r1.methods == list(TABLE2_ROWS)
    assert r1.uar["chance"] == [pytest.approx(1 / 3)] * 3
    assert set(r1.p_values) == {"synthetic_only_vs_chance", "synthetic_plus_real_vs_real_only"}
    a, b = r1.write(tmp_path / "a"), r2.write(tmp_path / "b")
    for k in a:
        assert a[k].read_bytes() == b[k].read_bytes()


def test_table2_rejects_zero_per_class():
    with pytest.raises(ValidationError):
        run_table2(tiny_blobs(), per_class=0, grid=tiny_grid(), config=tiny_config())
