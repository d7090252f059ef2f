"""Logit-averaged ensembles: member math, training reproducibility, and the
size sweep's prefix-reuse trick."""

import numpy as np
import pytest

from pctlab import nn
from pctlab.datasets import SPLIT_TEST, SPLIT_TRAIN, SyntheticSpec, generate
from pctlab.ensembles import (Ensemble, ensemble_logits, sweep_ensemble_size,
                              train_ensemble)
from pctlab.flips import report_from_arrays
from pctlab.losses import make_ce_objective

SPEC = SyntheticSpec(num_classes=4, input_dim=5, samples_per_class=50,
                     cluster_spread=1.1, seed=21)
CFG = nn.TrainConfig(epochs=3, batch_size=32, seed=2)


@pytest.fixture(scope="module")
def data():
    return generate(SPEC)


@pytest.fixture(scope="module")
def train_xy(data):
    rows = data.rows_of_split(SPLIT_TRAIN)
    return data.features[rows], data.labels[rows]


def _models(n: int, seed0: int = 0):
    return [nn.init_model([5, 6, 4], seed=seed0 + j) for j in range(n)]


def test_ensemble_requires_homogeneous_members():
    with pytest.raises(ValueError, match="at least one"):
        Ensemble([])
    mixed = [_models(1)[0], nn.init_model([5, 6, 3], seed=9)]
    with pytest.raises(ValueError, match="share"):
        Ensemble(mixed)


def test_logits_batch_is_member_mean():
    members = _models(3)
    ens = Ensemble(members)
    x = np.random.default_rng(0).standard_normal((7, 5))
    per = [nn.batch_logits(m, x) for m in members]
    np.testing.assert_allclose(ens.logits_batch(x),
                               (per[0] + per[1] + per[2]) / 3,
                               rtol=1e-13, atol=1e-15)
    assert ens.size == 3 and ens.num_classes == 4
    assert ens.parameter_count() == 3 * members[0].parameter_count()


def test_single_member_ensemble_equals_member_exactly():
    member = _models(1)[0]
    ens = Ensemble([member])
    x = np.random.default_rng(1).standard_normal((6, 5))
    np.testing.assert_array_equal(ens.logits_batch(x),
                                  nn.batch_logits(member, x))
    np.testing.assert_array_equal(ens.predict_batch(x),
                                  nn.predict_batch(member, x))
    np.testing.assert_array_equal(ensemble_logits(ens, x[0]),
                                  nn.batch_logits(member, x[:1])[0])


def test_ensemble_logits_rejects_batches():
    ens = Ensemble(_models(1))
    with pytest.raises(ValueError):
        ensemble_logits(ens, np.zeros((2, 5)))


def test_prediction_is_permutation_invariant():
    members = _models(4)
    x = np.random.default_rng(2).standard_normal((10, 5))
    a = Ensemble(members).logits_batch(x)
    b = Ensemble(members[::-1]).logits_batch(x)
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-15)


def test_train_ensemble_member_j_matches_individual_run(train_xy):
    x, y = train_xy
    ens = train_ensemble([5, 8, 4], x, y, CFG, size=3, base_seed=40)
    for j, member in enumerate(ens.members):
        solo = nn.train(nn.init_model([5, 8, 4], seed=40 + j), x, y,
                        make_ce_objective(y), nn.with_seed(CFG, 40 + j)).model
        for la, lb in zip(member.layers, solo.layers):
            np.testing.assert_array_equal(la.weights, lb.weights)
            np.testing.assert_array_equal(la.bias, lb.bias)


def test_concurrent_training_matches_sequential(train_xy):
    x, y = train_xy
    seq = train_ensemble([5, 8, 4], x, y, CFG, size=4, base_seed=7)
    par = train_ensemble([5, 8, 4], x, y, CFG, size=4, base_seed=7,
                         max_workers=3)
    for ma, mb in zip(seq.members, par.members):
        for la, lb in zip(ma.layers, mb.layers):
            np.testing.assert_array_equal(la.weights, lb.weights)


def test_train_ensemble_rejects_bad_size(train_xy):
    x, y = train_xy
    with pytest.raises(ValueError):
        train_ensemble([5, 4], x, y, CFG, size=0, base_seed=0)


def test_sweep_validates_sizes_and_seed_ranges(data):
    with pytest.raises(ValueError, match="ascending"):
        sweep_ensemble_size([5, 4], [5, 4], data, CFG, [2, 1], 0, 100)
    with pytest.raises(ValueError, match="ascending"):
        sweep_ensemble_size([5, 4], [5, 4], data, CFG, [], 0, 100)
    with pytest.raises(ValueError, match="overlap"):
        sweep_ensemble_size([5, 4], [5, 4], data, CFG, [1, 4], 0, 2)


def test_sweep_prefix_rows_match_direct_ensembles(data, train_xy):
    x, y = train_xy
    result = sweep_ensemble_size([5, 8, 4], [5, 8, 4], data, CFG, [1, 2],
                                 old_base_seed=0, new_base_seed=50)
    assert [r.size for r in result.rows] == [1, 2]

    test_rows = data.rows_of_split(SPLIT_TEST)
    xt, yt = data.features[test_rows], data.labels[test_rows]
    for size, row in zip((1, 2), result.rows):
        old = train_ensemble([5, 8, 4], x, y, CFG, size, base_seed=0)
        new = train_ensemble([5, 8, 4], x, y, CFG, size, base_seed=50)
        report = report_from_arrays(yt, old.predict_batch(xt),
                                    new.predict_batch(xt))
        assert (row.er_old, row.er_new, row.nfr) == (
            report.er_old, report.er_new, report.nfr)


def test_sweep_csv_layout(data):
    result = sweep_ensemble_size([5, 4], [5, 4], data, CFG, [1],
                                 old_base_seed=0, new_base_seed=10)
    lines = result.to_csv().splitlines()
    assert lines[0] == "L,er_old,er_new,nfr,rel_nfr"
    assert lines[1].startswith("1,")
    assert len(lines) == 2
