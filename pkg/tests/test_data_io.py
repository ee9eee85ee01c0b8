import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sparfa_lite.analytics import TagMatrix, label_likelihood
from sparfa_lite.data_io import (Dataset, cross_validate_lambda, default_lambda_grid, draw_labels,
                                 holdout_split, kfold_indices, load_matrix, load_quantizer,
                                 load_responses, load_tags, save_quantizer, synthesize,
                                 write_matrix, write_responses, write_tags)
from sparfa_lite.errors import DataFormatError
from sparfa_lite.quantized_model import ObservedResponses, QuantizerSpec


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


# ---------------------------------------------------------------- file formats

def test_load_responses_well_formed(tmp_path, four_level):
    f = write(tmp_path / "r.csv", "learner_id,question_id,grade\nL1,Q1,4\nL2,Q1,1\nL1,Q2,3\n")
    ds = load_responses(f, four_level)
    assert len(ds.responses) == 3
    assert ds.question_ids == ["Q1", "Q2"] and ds.learner_ids == ["L1", "L2"]
    np.testing.assert_array_equal(ds.responses.to_dense(), [[4, 1], [3, 0]])


def test_load_responses_numeric_ids_sort_numerically(tmp_path, binary):
    f = write(tmp_path / "r.csv", "learner_id,question_id,grade\n10,2,1\n9,10,2\n")
    ds = load_responses(f, binary)
    assert ds.learner_ids == ["9", "10"] and ds.question_ids == ["2", "10"]


def test_load_responses_out_of_range_names_line(tmp_path, four_level):
    f = write(tmp_path / "r.csv", "learner_id,question_id,grade\nL1,Q1,4\nL1,Q2,5\n")
    with pytest.raises(DataFormatError) as err:
        load_responses(f, four_level)
    assert err.value.line == 3
    assert "r.csv:3" in str(err.value)


def test_load_responses_duplicate(tmp_path, binary):
    f = write(tmp_path / "r.csv", "learner_id,question_id,grade\nL1,Q1,1\nL2,Q1,2\nL1,Q1,2\n")
    with pytest.raises(DataFormatError, match="duplicate"):
        load_responses(f, binary)


@pytest.mark.parametrize("body", [
    "learner,question,grade\nL1,Q1,1\n",
    "learner_id,question_id,grade\nL1,Q1\n",
    "learner_id,question_id,grade\nL1,Q1,x\n",
    "",
])
def test_load_responses_parse_errors(tmp_path, binary, body):
    with pytest.raises(DataFormatError):
        load_responses(write(tmp_path / "r.csv", body), binary)


def test_quantizer_json_round_trip(tmp_path):
    q = QuantizerSpec.from_interior([-1.5, 0.0, 2.25])
    save_quantizer(tmp_path / "q.json", q)
    d = json.loads((tmp_path / "q.json").read_text())
    assert d == {"num_labels": 4, "interior_boundaries": [-1.5, 0.0, 2.25]}
    assert load_quantizer(tmp_path / "q.json") == q


@pytest.mark.parametrize("payload", [
    '{"num_labels": 3, "interior_boundaries": [0]}',
    '{"num_labels": 3, "interior_boundaries": [1, 0]}',
    '{"interior_boundaries": [0]}',
    '{"num_labels": 2, ',
])
def test_quantizer_json_errors(tmp_path, payload):
    with pytest.raises(DataFormatError):
        load_quantizer(write(tmp_path / "q.json", payload))


def test_tags_file(tmp_path):
    f = write(tmp_path / "t.csv", "question_id,tag\nQ1,algebra\nQ2,geometry\nQ2,algebra\n")
    tags = load_tags(f, ["Q1", "Q2"])
    assert tags.tag_names == ["algebra", "geometry"]
    np.testing.assert_array_equal(tags.T, [[1, 0], [1, 1]])
    write_tags(tmp_path / "t2.csv", tags, ["Q1", "Q2"])
    again = load_tags(tmp_path / "t2.csv", ["Q1", "Q2"])
    np.testing.assert_array_equal(again.T, tags.T)


def test_tags_file_errors(tmp_path):
    f = write(tmp_path / "t.csv", "question_id,tag\nQ1,algebra\nQ9,geometry\n")
    with pytest.raises(DataFormatError, match="unknown question"):
        load_tags(f, ["Q1", "Q2"])
    g = write(tmp_path / "g.csv", "question_id,tag\nQ1,algebra\n")
    with pytest.raises(ValueError):  # Q2 has no tag
        load_tags(g, ["Q1", "Q2"])


def test_matrix_round_trip_is_exact(tmp_path):
    M = np.random.default_rng(0).normal(size=(3, 4)) * 1e3
    write_matrix(tmp_path / "m.csv", M, ["a", "b", "c"], ["w", "x", "y", "z"])
    M2, qids, lids = load_matrix(tmp_path / "m.csv")
    np.testing.assert_array_equal(M, M2)
    assert qids == ["a", "b", "c"] and lids == ["w", "x", "y", "z"]


@st.composite
def datasets(draw):
    Q = draw(st.integers(1, 6))
    N = draw(st.integers(1, 6))
    P = draw(st.integers(2, 5))
    cells = draw(st.sets(st.tuples(st.integers(0, Q - 1), st.integers(0, N - 1)), min_size=1))
    # every id must be observed to be recoverable from the file alone
    cells |= {(i, i % N) for i in range(Q)} | {(j % Q, j) for j in range(N)}
    cells = sorted(cells)
    labels = draw(st.lists(st.integers(1, P), min_size=len(cells), max_size=len(cells)))
    numeric = draw(st.booleans())
    qids = [str(3 * i + 1) if numeric else f"q{i:02d}" for i in range(Q)]
    lids = [str(7 * j) if numeric else f"learner-{j:02d}" for j in range(N)]
    rows, cols = zip(*cells)
    obs = ObservedResponses(Q, N, rows, cols, labels)
    q = QuantizerSpec.from_interior(list(range(P - 1)))
    return Dataset(obs, q, qids, lids)


@given(ds=datasets())
def test_responses_round_trip(tmp_path_factory, ds):
    path = tmp_path_factory.mktemp("rt") / "r.csv"
    write_responses(path, ds)
    back = load_responses(path, ds.quantizer)
    assert back.responses == ds.responses
    assert back.question_ids == ds.question_ids
    assert back.learner_ids == ds.learner_ids


# ---------------------------------------------------------------- generator

def test_synthesize_contracts(binary):
    full = synthesize(6, 9, 2, binary, observed_fraction=1.0, seed=3)
    assert len(full.responses) == 54
    assert np.linalg.matrix_rank(full.Z_true) == 2
    a = synthesize(20, 30, 3, binary, observed_fraction=0.5, scale=2.0, seed=11)
    b = synthesize(20, 30, 3, binary, observed_fraction=0.5, scale=2.0, seed=11)
    np.testing.assert_array_equal(a.Z_true, b.Z_true)
    assert a.responses == b.responses
    assert 0.3 < len(a.responses) / 600 < 0.7
    with pytest.raises(ValueError):
        synthesize(5, 10, 6, binary, seed=0)
    with pytest.raises(ValueError):
        synthesize(5, 10, 2, binary, observed_fraction=0.0, seed=0)


def test_synthesize_zero_scores_give_fair_coin(binary):
    truth = synthesize(100, 100, 1, binary, scale=0.0, seed=5)
    n = len(truth.responses)
    freq = np.mean(truth.responses.labels == 2)
    assert abs(freq - 0.5) <= 3 * np.sqrt(0.25 / n)


@pytest.mark.parametrize("interior", [[0.0], [-1.0, 0.0, 1.0], [-2.0, 0.5]])
def test_generator_label_frequencies_match_likelihood(interior):
    q = QuantizerSpec.from_interior(interior)
    rng = np.random.default_rng(2024)
    draws = 10_000
    for z in (-3.0, -1.0, -0.25, 0.0, 0.5, 2.0):
        labels = draw_labels(np.full(draws, z), q, rng)
        for p in q.labels:
            prob = label_likelihood(z, p, q)
            sigma = np.sqrt(prob * (1 - prob) / draws)
            assert abs(np.mean(labels == p) - prob) <= 3 * sigma + 1e-12, (z, p)


# ---------------------------------------------------------------- splitting

def test_holdout_split_examples():
    obs = ObservedResponses(10, 10, *np.divmod(np.arange(100), 10), np.ones(100, dtype=int))
    train, test = holdout_split(obs, 0.2, seed=1)
    assert (len(train), len(test)) == (80, 20)
    t2, s2 = holdout_split(obs, 0.2, seed=1)
    assert train == t2 and test == s2
    for bad in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            holdout_split(obs, bad, seed=0)


def test_holdout_split_partition_properties():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 60))
        frac = float(rng.uniform(0.01, 0.99))
        seed = int(rng.integers(0, 2**31))
        cells = rng.choice(100, size=n, replace=False)
        obs = ObservedResponses(10, 10, cells // 10, cells % 10, rng.integers(1, 3, n))
        train, test = holdout_split(obs, frac, seed=seed)
        key = lambda o: set(zip(o.rows.tolist(), o.cols.tolist()))  # noqa: E731
        assert key(train) | key(test) == key(obs)
        assert not key(train) & key(test)
        assert len(test) == int(np.floor(frac * n + 0.5))
        again = holdout_split(obs, frac, seed=seed)
        assert again[0] == train and again[1] == test


def test_kfold_indices_partition():
    parts = kfold_indices(23, 5, seed=0)
    assert sorted(np.concatenate(parts).tolist()) == list(range(23))
    assert {len(p) for p in parts} <= {4, 5}
    with pytest.raises(ValueError):
        kfold_indices(3, 4)
    with pytest.raises(ValueError):
        kfold_indices(10, 1)


# ---------------------------------------------------------------- cross-validation

def test_default_lambda_grid():
    grid = default_lambda_grid(4, 25)
    assert len(grid) == 10
    assert grid[0] == pytest.approx(1.0) and grid[-1] == pytest.approx(1000.0)
    assert np.allclose(np.diff(np.log(grid)), np.log(10) / 3)


def test_cv_single_lambda(binary):
    truth = synthesize(8, 10, 2, binary, observed_fraction=0.9, scale=2.0, seed=1)
    rep = cross_validate_lambda(truth.responses, binary, [3.0], folds=3, seed=0)
    assert rep.best_lambda == 3.0
    assert rep.fold_lik.shape == (1, 3)


def test_cv_ties_go_to_smaller_lambda(binary):
    # every radius large enough to contain the unconstrained optimum scores identically
    obs = ObservedResponses.from_entries(2, 2, [(0, 0, 1), (0, 1, 2), (1, 0, 2), (1, 1, 1)])
    rep = cross_validate_lambda(obs, binary, [1e-9, 2e-9], folds=2, seed=0, metric="cor")
    assert rep.mean_cor[0] == rep.mean_cor[1]
    assert rep.best_lambda == 1e-9


def test_cv_metric_validation(binary):
    obs = ObservedResponses.from_entries(2, 2, [(0, 0, 1), (1, 1, 2)])
    with pytest.raises(ValueError):
        cross_validate_lambda(obs, binary, [1.0], folds=2, metric="auc")
    with pytest.raises(ValueError):
        cross_validate_lambda(obs, binary, [], folds=2)
    with pytest.raises(ValueError):
        cross_validate_lambda(obs, binary, [1.0], folds=3)


def test_cv_is_deterministic(binary):
    truth = synthesize(10, 12, 2, binary, observed_fraction=0.8, scale=2.0, seed=4)
    a = cross_validate_lambda(truth.responses, binary, [1.0, 10.0], folds=3, seed=9)
    b = cross_validate_lambda(truth.responses, binary, [10.0, 1.0], folds=3, seed=9)
    assert a.best_lambda == b.best_lambda
    np.testing.assert_array_equal(a.fold_loglik, b.fold_loglik[::-1])


def test_cv_finds_interior_regime_on_synthetic_rank3():
    q = QuantizerSpec.binary()
    truth = synthesize(30, 40, 3, q, observed_fraction=0.8, scale=2.0, seed=12)
    grid = default_lambda_grid(30, 40)
    rep = cross_validate_lambda(truth.responses, q, grid, folds=3, seed=0)
    # mean probability is not maximized at the smallest radius
    assert int(np.argmax(rep.mean_lik)) > 0
    # the held-out log-likelihood has an interior maximum: both regimes exist
    best = int(np.argmax(rep.mean_loglik))
    assert 0 < best < len(grid) - 1
    assert rep.best_lambda == grid[best]
