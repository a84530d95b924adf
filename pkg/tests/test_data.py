import itertools

import numpy as np
import pytest

from aae_emotion.data import (
    Dataset,
    FoldPlan,
    load_arff,
    load_csv,
    load_saved_arff,
    make_session_folds,
    save_arff,
    save_csv,
    standardize_apply,
    standardize_fit,
    synth_blobs,
)
from aae_emotion.errors import ParseError, SchemaError, ShapeError, ValidationError

MINIMAL_ARFF = """\
@relation 'emo'
% comment line
@attribute name string
@attribute frameTime numeric
@attribute 'pcm_loudness' numeric
@attribute mfcc1 real
@attribute emotion {neu,hap,'sad',ang}

@data
'Ses01F_impro01_F000',0,1.5,-2.25,neu
'Ses02M_script03_M011',0,3.0,4e-3,'sad'
"""


def test_csv_direct_parse(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("label,session,speaker,pitch,energy\nhap,S1,a,1,2\nsad,S1,b,3,4.5\nneu,S2,c,-1,0\n")
    ds = load_csv(p)
    assert len(ds) == 3 and ds.n_features == 2
    assert ds.feature_names == ["pitch", "energy"]
    np.testing.assert_array_equal(ds.features[1], [3.0, 4.5])
    assert list(ds.session_ids) == ["S1", "S1", "S2"]


def test_csv_missing_label_column(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("emotion,session,speaker,x\nhap,S1,a,1\n")
    with pytest.raises(SchemaError, match="'label'"):
        load_csv(p)


def test_csv_bad_cell_reports_row_and_column(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("label,session,speaker,x,y\nhap,S1,a,1,2\nsad,S1,a,1,oops\n")
    with pytest.raises(ParseError) as exc:
        load_csv(p)
    assert exc.value.line == 3 and exc.value.column == "y"


def test_csv_round_trip(tmp_path):
    ds = synth_blobs(3, 5, 7, seed=4)
    save_csv(ds, tmp_path / "r.csv")
    assert load_csv(tmp_path / "r.csv").equals(ds)


def test_csv_extra_columns_ignored_on_reload(tmp_path):
    ds = synth_blobs(2, 3, 4, seed=1)
    save_csv(ds, tmp_path / "r.csv", extra_columns={"split": ["train"] * len(ds)})
    assert load_csv(tmp_path / "r.csv", ignore_columns=("split",)).equals(ds)


def test_arff_direct_parse(tmp_path):
    p = tmp_path / "m.arff"
    p.write_text(MINIMAL_ARFF)
    ds = load_arff(p)
    assert len(ds) == 2 and ds.n_features == 2
    assert ds.feature_names == ["pcm_loudness", "mfcc1"]
    np.testing.assert_array_equal(ds.features, [[1.5, -2.25], [3.0, 4e-3]])
    assert list(ds.labels) == ["neu", "sad"]
    assert list(ds.session_ids) == ["Ses01", "Ses02"]
    assert list(ds.speaker_ids) == ["Ses01F", "Ses02M"]


def test_arff_nominal_outside_declared_set(tmp_path):
    p = tmp_path / "m.arff"
    p.write_text(MINIMAL_ARFF.replace(",neu\n", ",bored\n"))
    with pytest.raises(ParseError) as exc:
        load_arff(p)
    assert exc.value.line == 10


@pytest.mark.parametrize(
    "mutation",
    [
        lambda s: s.replace("@attribute mfcc1 real", "@attribute mfcc1 blob"),
        lambda s: s.replace("@data", ""),
        lambda s: s.replace(",1.5,", ",abc,"),
        lambda s: s.replace(",-2.25,neu", ",neu"),
    ],
)
def test_arff_malformed_inputs(tmp_path, mutation):
    p = tmp_path / "m.arff"
    p.write_text(mutation(MINIMAL_ARFF))
    with pytest.raises(ParseError):
        load_arff(p)


def test_arff_missing_class_attribute(tmp_path):
    p = tmp_path / "m.arff"
    p.write_text(MINIMAL_ARFF)
    with pytest.raises(SchemaError):
        load_arff(p, class_attribute="arousal")


def test_arff_with_1582_features(tmp_path):
    d = 1582
    head = "@relation big\n@attribute name string\n"
    head += "".join(f"@attribute f{j} numeric\n" for j in range(d))
    head += "@attribute class {a,b}\n@data\n"
    row = ",".join(["0.5"] * d)
    p = tmp_path / "big.arff"
    p.write_text(head + f"'Ses01F_x_F000',{row},a\n'Ses01F_x_M001',{row},b\n")
    assert load_arff(p).n_features == 1582


def test_arff_round_trip(tmp_path):
    ds = synth_blobs(3, 4, 5, seed=2)
    save_arff(ds, tmp_path / "r.arff")
    assert load_saved_arff(tmp_path / "r.arff").equals(ds)


def test_standardize_definition():
    rng = np.random.default_rng(0)
    x = rng.normal(3.0, 2.0, (50, 4))
    s = standardize_fit(x)
    z = standardize_apply(s, x)
    assert np.abs(z.mean(axis=0)).max() < 1e-10
    assert np.abs(z.std(axis=0) - 1).max() < 1e-10
    np.testing.assert_allclose(s.inverse(z), x, atol=1e-12)


def test_standardize_constant_feature():
    x = np.column_stack([np.arange(5.0), np.full(5, 7.0)])
    s = standardize_fit(x)
    assert s.constant_features == [1]
    assert np.all(s.apply(x)[:, 1] == 0.0)


def test_standardize_not_idempotent_on_shifted_data():
    x = np.random.default_rng(1).normal(5.0, 3.0, (20, 3))
    s = standardize_fit(x)
    once = s.apply(x)
    assert not np.allclose(s.apply(once), once)


def _check_partition(plan, ds):
    """Test sets partition the rows; train and test are disjoint in session and speaker."""
    all_rows = set(range(len(ds)))
    seen = []
    for fold in plan:
        tr, te = (set(a.tolist()) for a in fold.split(ds))
        assert tr.isdisjoint(te)
        assert tr | te == all_rows
        assert set(ds.session_ids[list(tr)]).isdisjoint(ds.session_ids[list(te)])
        assert set(ds.speaker_ids[list(tr)]).isdisjoint(ds.speaker_ids[list(te)])
        seen.append(te)
    for a, b in itertools.combinations(seen, 2):
        assert a.isdisjoint(b)
    assert set().union(*seen) == all_rows


def test_five_session_folds():
    ds = synth_blobs(4, 3, 10, seed=0, n_sessions=5)
    plan = make_session_folds(ds)
    assert len(plan) == 5
    assert [f.test_sessions for f in plan] == [(s,) for s in ds.sessions]
    _check_partition(plan, ds)


def test_two_session_folds_and_too_few():
    assert len(make_session_folds(["a", "b", "a"])) == 2
    with pytest.raises(ValidationError):
        make_session_folds(["a", "a"])


def test_fold_plan_json_round_trip(tmp_path):
    plan = make_session_folds(["x", "y", "z"])
    plan.save(tmp_path / "plan.json")
    assert FoldPlan.load(tmp_path / "plan.json") == plan


def test_blobs_deterministic_and_balanced():
    a, b = synth_blobs(seed=3), synth_blobs(seed=3)
    assert a.equals(b)
    assert not a.equals(synth_blobs(seed=4))
    for s in a.sessions:
        labels = a.labels[a.session_ids == s]
        assert set(labels) == set(a.classes)


def test_blobs_zero_separation_means_indistinguishable():
    ds = synth_blobs(4, 5, 400, separation=0.0, noise=1.0, seed=0)
    for c1, c2 in itertools.combinations(ds.classes, 2):
        a = ds.features[ds.labels == c1]
        b = ds.features[ds.labels == c2]
        se = np.sqrt(a.var(axis=0, ddof=1) / len(a) + b.var(axis=0, ddof=1) / len(b))
        assert np.all(np.abs(a.mean(axis=0) - b.mean(axis=0)) < 3 * se)


def test_blobs_separated_nearest_centroid_oracle():
    ds = synth_blobs(4, 20, 200, separation=10.0, noise=1.0, seed=0)
    tr = ds.session_ids != "s1"
    cents = {c: ds.features[tr & (ds.labels == c)].mean(axis=0) for c in ds.classes}
    names = list(cents)
    d = np.stack([np.linalg.norm(ds.features[~tr] - cents[c], axis=1) for c in names], axis=1)
    pred = np.array(names)[d.argmin(axis=1)]
    truth = ds.labels[~tr]
    recalls = [np.mean(pred[truth == c] == c) for c in names]
    assert np.mean(recalls) > 0.95


def test_dataset_validation():
    with pytest.raises(ShapeError):
        Dataset(np.zeros((3, 2)), ["a"] * 2, ["s"] * 3, ["p"] * 3)
    with pytest.raises(ShapeError):
        Dataset(np.zeros((3, 2)), ["a"] * 3, ["s"] * 3, ["p"] * 3, ["only_one"])
