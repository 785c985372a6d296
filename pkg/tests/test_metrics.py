"""Metric rows, the trace CSV contract, and the 1-D transport diagnostic."""

import numpy as np
import pytest

from wframe import (
    CSV_HEADER,
    MetricRow,
    MetricTrace,
    empirical_w2_1d,
    mean_energy,
    random_bank,
    response_distance,
)
from wframe.oracle import brute_force_w2


def _row(i=0, **kw):
    base = dict(iteration=i, mode="frame", energy_mean=-1.5,
                response_distance=0.25, w2_1d=0.5, theta_norm=1.0,
                update_norm=0.125, diverged=False)
    base.update(kw)
    return MetricRow(**base)


def test_csv_header_contract():
    assert CSV_HEADER == ("iter,mode,energy_mean,response_distance,"
                          "w2_1d,theta_norm,update_norm,diverged")


def test_row_csv_line_pinned():
    line = _row().to_csv_line()
    assert line == "0,frame,-1.5,0.25,0.5,1.0,0.125,false"
    assert _row(diverged=True).to_csv_line().endswith(",true")


def test_row_csv_line_full_precision():
    v = 0.1 + 0.2  # not exactly 0.3
    line = _row(energy_mean=v).to_csv_line()
    assert repr(v) in line


def test_row_validation():
    with pytest.raises(ValueError):
        _row(mode="both")
    with pytest.raises(ValueError):
        _row(i=-1)


def test_trace_is_append_only_and_ordered():
    tr = MetricTrace()
    tr.append(_row(0))
    tr.append(_row(1))
    assert len(tr) == 2
    assert tr[1].iteration == 1
    with pytest.raises(ValueError):
        tr.append(_row(1))
    lines = tr.to_csv().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 3
    assert tr.to_csv().endswith("\n")


def test_response_distance_hand_case():
    bank = random_bank(2, (2,), seed=0)
    obs = np.random.default_rng(1).standard_normal((5, 6))
    syn = np.random.default_rng(2).standard_normal((7, 6))
    gap = (bank.theta_gradient_batch(obs).mean(axis=0)
           - bank.theta_gradient_batch(syn).mean(axis=0))
    want = float(np.abs(gap).mean())
    assert response_distance(bank, obs, syn) == pytest.approx(want, rel=1e-14)


def test_response_distance_zero_on_identical_batches():
    bank = random_bank(3, (2,), seed=1)
    batch = np.random.default_rng(3).standard_normal((4, 5))
    assert response_distance(bank, batch, batch.copy()) == 0.0


def test_response_distance_is_a_metric_on_batches():
    """Symmetry and the triangle inequality over random batch triples."""
    bank = random_bank(3, (2,), seed=4)
    rng = np.random.default_rng(7)
    for _ in range(20):
        X, Y, Z = (rng.standard_normal((4, 5)) for _ in range(3))
        dxy = response_distance(bank, X, Y)
        dyx = response_distance(bank, Y, X)
        assert dxy == pytest.approx(dyx, abs=1e-12)
        dxz = response_distance(bank, X, Z)
        dyz = response_distance(bank, Y, Z)
        assert dxz <= dxy + dyz + 1e-12


def test_response_distance_ignores_theta():
    bank = random_bank(3, (2,), seed=5)
    rng = np.random.default_rng(8)
    X, Y = rng.standard_normal((2, 4, 5))
    base = response_distance(bank, X, Y)
    bank.theta = 100.0 * rng.standard_normal(3)
    assert response_distance(bank, X, Y) == base


def test_mean_energy_matches_batch_mean():
    bank = random_bank(3, (2,), seed=2, bias_std=0.1)
    bank.theta = np.array([1.0, -0.5, 0.25])
    batch = np.random.default_rng(4).standard_normal((6, 5))
    want = float(bank.energy_batch(batch).mean())
    assert mean_energy(bank, batch) == pytest.approx(want, rel=1e-14)


def test_w2_1d_pinned():
    # sorted pairing: |0-1|=1 and |1-2|=1, rms = 1
    assert empirical_w2_1d([0.0, 1.0], [2.0, 1.0]) == pytest.approx(1.0)
    assert empirical_w2_1d([3.0, -1.0], [-1.0, 3.0]) == 0.0


def test_w2_1d_permutation_invariant():
    rng = np.random.default_rng(5)
    a = rng.standard_normal(8)
    b = rng.standard_normal(8)
    base = empirical_w2_1d(a, b)
    assert empirical_w2_1d(rng.permutation(a), rng.permutation(b)) == \
        pytest.approx(base, rel=1e-15)


def test_w2_1d_requires_equal_sizes():
    with pytest.raises(ValueError):
        empirical_w2_1d([1.0], [1.0, 2.0])


def test_w2_1d_agrees_with_exhaustive_assignment():
    rng = np.random.default_rng(6)
    for _ in range(25):
        n = int(rng.integers(1, 7))
        a = rng.standard_normal(n)
        b = rng.standard_normal(n)
        assert empirical_w2_1d(a, b) == pytest.approx(brute_force_w2(a, b),
                                                      abs=1e-12)


def test_w2_1d_is_a_metric():
    """Symmetric, triangle inequality, zero exactly when sorted samples agree."""
    rng = np.random.default_rng(9)
    for _ in range(20):
        a, b, c = rng.standard_normal((3, 6))
        assert empirical_w2_1d(a, b) == pytest.approx(empirical_w2_1d(b, a),
                                                      abs=1e-15)
        assert empirical_w2_1d(a, c) <= (empirical_w2_1d(a, b)
                                         + empirical_w2_1d(b, c) + 1e-12)
    a = rng.standard_normal(6)
    assert empirical_w2_1d(a, rng.permutation(a)) == 0.0
    assert empirical_w2_1d(a, a + 1e-9) > 0.0
