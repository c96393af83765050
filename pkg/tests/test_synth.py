import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from predsens.data import correlation_matrix, standardize_matrix
from predsens.errors import NotPSDError
from predsens.synth import (
    SHIFT_SCHEDULE,
    CorrelationSpec,
    StackedMatrix,
    SynthWarning,
    cholesky_psd,
    draw_raw,
    generate_exact_oracle,
    generate_synthetic,
    recolor,
    sweep,
    target_matrix,
    tolerance,
    whiten,
)

from conftest import ar1_predictors, make_dataset


def pearson(a, b):
    a = a - a.mean()
    b = b - b.mean()
    return float(a @ b / math.sqrt((a @ a) * (b @ b)))


def linear_data(rng, n=2000, p=3, r2=0.5):
    x = ar1_predictors(rng, n, p)
    signal = x @ np.linspace(1.0, 0.2, p)
    noise_sd = math.sqrt(signal.var() * (1 - r2) / r2)
    y = 50 + 10 * (signal + noise_sd * rng.standard_normal(n))
    return make_dataset(x, y)


def standardized_stack(rng, n=500, p=3):
    d = linear_data(rng, n, p)
    s = StackedMatrix.stack(d.outcome, draw_raw(n, 1), d.predictors)
    z, _ = standardize_matrix(s.data)
    return StackedMatrix(z)


# -- draw_raw ---------------------------------------------------------------

def test_draw_raw_deterministic():
    np.testing.assert_array_equal(draw_raw(50, 7), draw_raw(50, 7))


def test_draw_raw_moments():
    r = draw_raw(100_000, 3)
    assert abs(r.mean()) <= 0.02
    assert abs(r.std(ddof=1) - 1) <= 0.02


def test_draw_raw_independent_seeds():
    assert abs(pearson(draw_raw(100_000, 1), draw_raw(100_000, 2))) <= 0.02


def test_draw_raw_needs_two():
    with pytest.raises(ValueError):
        draw_raw(1, 0)


# -- cholesky_psd -----------------------------------------------------------

def test_cholesky_identity():
    L, shift = cholesky_psd(np.eye(4))
    np.testing.assert_array_equal(L, np.eye(4))
    assert shift == 0.0


def test_cholesky_hand_factor():
    L, shift = cholesky_psd(np.array([[1.0, 0.5], [0.5, 1.0]]))
    hand = np.array([[1.0, 0.0], [0.5, math.sqrt(0.75)]])
    np.testing.assert_allclose(L, hand, rtol=0, atol=1e-12)
    assert shift == 0.0


def test_cholesky_singular_escalates():
    m = np.ones((2, 2))
    L, shift = cholesky_psd(m)
    assert shift > 0 and shift in SHIFT_SCHEDULE
    np.testing.assert_allclose(L @ L.T, m + shift * np.eye(2), rtol=0, atol=1e-12)


def test_cholesky_indefinite_names_minor():
    m = np.array([[1.0, 0.9, 0.9], [0.9, 1.0, -0.9], [0.9, -0.9, 1.0]])
    with pytest.raises(NotPSDError) as exc:
        cholesky_psd(m)
    assert exc.value.minor == 3
    assert "minor of order 3" in str(exc.value)


def test_cholesky_rejects_asymmetric():
    with pytest.raises(ValueError):
        cholesky_psd(np.array([[1.0, 0.2], [0.3, 1.0]]))


# -- whiten / recolor -------------------------------------------------------

def test_whiten_identity_on_uncorrelated():
    rng = np.random.default_rng(0)
    centered = rng.standard_normal((200, 3))
    centered -= centered.mean(axis=0)
    # orthonormal centered columns scaled to unit sample variance
    c = np.linalg.qr(centered)[0] * math.sqrt(199)
    np.testing.assert_allclose(whiten(StackedMatrix(c)).data, c, atol=1e-10)


def test_whiten_two_columns_rho_09():
    rng = np.random.default_rng(2)
    a = rng.standard_normal(1000)
    b = 0.9 * a + math.sqrt(1 - 0.81) * rng.standard_normal(1000)
    z, _ = standardize_matrix(np.column_stack([a, b, rng.standard_normal(1000)]))
    w = whiten(StackedMatrix(z)).data
    assert abs(pearson(w[:, 0], w[:, 1])) <= 1e-10


def test_whiten_identity_correlation_and_idempotent():
    s = standardized_stack(np.random.default_rng(3))
    w = whiten(s)
    k, _ = correlation_matrix(w.data)
    np.testing.assert_allclose(k, np.eye(k.shape[0]), atol=1e-8)
    np.testing.assert_allclose(whiten(w).data, w.data, atol=1e-8)


def test_round_trip_recolor_with_k_hat():
    s = standardized_stack(np.random.default_rng(4))
    k_hat, _ = correlation_matrix(s.data)
    back = recolor(whiten(s), k_hat)
    np.testing.assert_allclose(back.data, s.data, atol=1e-8)


def test_recolor_zero_spec_on_identity():
    rng = np.random.default_rng(5)
    z, _ = standardize_matrix(rng.standard_normal((300, 4)))
    w = whiten(StackedMatrix(z))
    out = recolor(w, CorrelationSpec(0.0), np.eye(4))
    k, _ = correlation_matrix(out.data)
    np.testing.assert_allclose(k, np.eye(4), atol=1e-8)


def test_recolor_hits_targets():
    s = standardized_stack(np.random.default_rng(6), p=2)
    k_hat, _ = correlation_matrix(s.data)
    out = recolor(whiten(s), CorrelationSpec(0.4, (0.0, 0.0)), k_hat)
    col = out.data[:, 1]
    achieved = [pearson(col, out.data[:, j]) for j in (0, 2, 3)]
    np.testing.assert_allclose(achieved, [0.4, 0.0, 0.0], atol=1e-8)
    k, _ = correlation_matrix(out.data)
    np.testing.assert_allclose(k, target_matrix(CorrelationSpec(0.4, (0.0, 0.0)), k_hat), atol=1e-8)


def test_recolor_indefinite_target_reports_entries():
    # 3x3 determinant 1 - 2 * 0.99**2 < 0
    k_hat = np.array([[1.0, 0.0, 0.99], [0.0, 1.0, 0.0], [0.99, 0.0, 1.0]])
    w = StackedMatrix(np.random.default_rng(0).standard_normal((10, 3)))
    with pytest.raises(NotPSDError) as exc:
        recolor(w, CorrelationSpec(0.99), k_hat)
    assert exc.value.entries["rho_outcome"] == 0.99
    assert "0.99" in str(exc.value)


def test_recolor_spec_requires_k_hat():
    w = StackedMatrix(np.zeros((4, 3)))
    with pytest.raises(ValueError):
        recolor(w, CorrelationSpec(0.1))


@settings(max_examples=30, deadline=None)
@given(
    rho_y=st.floats(-0.6, 0.6),
    rho_x=st.lists(st.floats(-0.3, 0.3), min_size=3, max_size=3),
    seed=st.integers(0, 2**31),
)
def test_recolor_property(rho_y, rho_x, seed):
    rng = np.random.default_rng(seed)
    z, _ = standardize_matrix(rng.standard_normal((120, 5)))
    s = StackedMatrix(z)
    k_hat, _ = correlation_matrix(z)
    spec = CorrelationSpec(rho_y, tuple(rho_x))
    try:
        out = recolor(whiten(s), spec, k_hat)
    except NotPSDError:
        assert np.linalg.eigvalsh(target_matrix(spec, k_hat)).min() < 1e-4
        return
    k, _ = correlation_matrix(out.data)
    if out.shift_used == 0:
        np.testing.assert_allclose(k, target_matrix(spec, k_hat), atol=1e-8)
        np.testing.assert_allclose(out.data[:, [0, 2, 3, 4]], z[:, [0, 2, 3, 4]], atol=1e-8)


# -- end to end -------------------------------------------------------------

def test_zero_target_is_uncorrelated():
    d = linear_data(np.random.default_rng(7), n=400)
    res = generate_synthetic(d, CorrelationSpec(0.0, seed=1))
    assert abs(pearson(res.r, d.outcome)) <= 3 / math.sqrt(400)


def test_generate_against_pearson_oracle():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((5000, 3))
    y = x[:, 0] + rng.standard_normal(5000)
    d = make_dataset(x, y)
    res = generate_synthetic(d, CorrelationSpec(0.4, seed=9))
    assert abs(pearson(res.r, y) - 0.4) <= 0.02
    assert max(abs(pearson(res.r, x[:, j])) for j in range(3)) <= 0.02
    assert res.achieved_outcome == pytest.approx(pearson(res.r, y), abs=1e-14)


def test_achieved_computed_on_original_data():
    d = linear_data(np.random.default_rng(9), n=800)
    res = generate_synthetic(d, CorrelationSpec(0.3, (0.1, 0.0, -0.1), seed=2))
    for j in range(3):
        assert res.achieved_predictors[j] == pytest.approx(pearson(res.r, d.predictors[:, j]), abs=1e-14)
    assert res.within_tolerance()


def test_rescaled_matches_raw_draw_moments():
    d = linear_data(np.random.default_rng(10), n=600)
    res = generate_synthetic(d, CorrelationSpec(0.2, seed=5))
    raw = draw_raw(600, 5)
    assert res.r.mean() == pytest.approx(raw.mean(), abs=1e-10)
    assert res.r.std(ddof=1) == pytest.approx(raw.std(ddof=1), abs=1e-10)


def test_generate_deterministic():
    d = linear_data(np.random.default_rng(11), n=300)
    a = generate_synthetic(d, CorrelationSpec(0.3, seed=4))
    b = generate_synthetic(d, CorrelationSpec(0.3, seed=4))
    np.testing.assert_array_equal(a.r, b.r)
    assert a.to_json() == b.to_json()


def test_data_untouched():
    d = linear_data(np.random.default_rng(12), n=300)
    before = d.values.copy()
    generate_synthetic(d, CorrelationSpec(0.3, seed=4))
    np.testing.assert_array_equal(d.values, before)


def test_sweep_is_monotone():
    d = linear_data(np.random.default_rng(13), n=1000)
    res = sweep(d, [0.1, 0.2, 0.3, 0.4, 0.5], seed=3)
    ach = [r.achieved_outcome for r in res]
    assert len(res) == 5
    assert all(b > a for a, b in zip(ach, ach[1:]))


def test_unattainable_target_raises():
    d = linear_data(np.random.default_rng(14), n=500, r2=0.9)
    with pytest.raises(NotPSDError):
        generate_synthetic(d, CorrelationSpec(0.5))


def test_constant_predictor_excluded():
    rng = np.random.default_rng(15)
    x = np.column_stack([rng.standard_normal(300), np.full(300, 2.0)])
    d = make_dataset(x, x[:, 0] + rng.standard_normal(300))
    res = generate_synthetic(d, CorrelationSpec(0.3, seed=1))
    assert res.degenerate.tolist() == [False, True]
    assert res.achieved_predictors[1] == 0.0
    assert res.achieved_outcome == pytest.approx(0.3, abs=1e-10)


def test_tolerance_violation_warns():
    rng = np.random.default_rng(16)
    x = np.column_stack([rng.standard_normal(300), np.full(300, 2.0)])
    d = make_dataset(x, x[:, 0] + rng.standard_normal(300))
    with pytest.warns(SynthWarning):
        res = generate_synthetic(d, CorrelationSpec(0.3, (0.0, 0.2), seed=1))
    assert not res.within_tolerance()


def test_exact_oracle():
    d = linear_data(np.random.default_rng(17), n=500)
    res = generate_exact_oracle(d, CorrelationSpec(0.4, seed=3))
    assert pearson(res.r, d.outcome) == pytest.approx(0.4, abs=1e-12)
    assert np.abs(res.achieved_predictors).max() <= 1e-12
    zero = generate_exact_oracle(d, CorrelationSpec(0.0, seed=3))
    assert abs(pearson(zero.r, d.outcome)) <= 1e-12
    main = generate_synthetic(d, CorrelationSpec(0.4, seed=3))
    assert abs(main.achieved_outcome - res.achieved_outcome) <= tolerance(500)


def test_exact_oracle_rank_error():
    d = make_dataset(np.random.default_rng(0).standard_normal((4, 2)), [1.0, 2.0, 0.0, 3.0])
    with pytest.raises(NotPSDError):
        generate_exact_oracle(d, CorrelationSpec(0.1))


def test_spec_validation():
    with pytest.raises(ValueError):
        CorrelationSpec(1.0)
    with pytest.raises(ValueError):
        CorrelationSpec(0.1, (1.5,))
    with pytest.raises(ValueError):
        CorrelationSpec(0.1, tikhonov_alpha=-1)


def test_result_serialization(tmp_path):
    d = linear_data(np.random.default_rng(18), n=200)
    res = generate_synthetic(d, CorrelationSpec(0.2, seed=8))
    payload = json.loads(res.to_json())
    assert payload["seed"] == 8
    assert payload["target"]["rho_outcome"] == 0.2
    p = tmp_path / "r.csv"
    res.write_csv(p)
    back = np.loadtxt(p, skiprows=1)
    np.testing.assert_array_equal(back, res.r)
