import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simresnet.core import ContractError, DomainError
from simresnet.metrics import (
    DegenerateFitError,
    aggregate_errors,
    error_report,
    fit_lognormal,
    histogram,
    picture_error,
)


def test_picture_error_examples():
    assert picture_error([[0.4], [0.6]], 0.5) == pytest.approx(0.2, abs=1e-12)
    assert picture_error([[0.5], [0.5]], 0.5) == 0.0
    assert picture_error([[0.2, 0.8]], 0.5) == pytest.approx(0.6, abs=1e-12)
    # a 1-d array is read as M scalar outputs
    assert picture_error(np.array([0.4, 0.6]), 0.5) == pytest.approx(0.2, abs=1e-12)
    with pytest.raises(ContractError):
        picture_error(np.empty((0, 1)), 0.5)


def test_aggregate_examples():
    bar, theta = aggregate_errors([0.2, 0.4])
    assert bar == pytest.approx(0.3, abs=1e-12) and theta == pytest.approx(0.01, abs=1e-12)
    assert aggregate_errors([1.7, 1.7, 1.7]) == (1.7, 0.0)
    assert aggregate_errors([2.5]) == (2.5, 0.0)
    with pytest.raises(ContractError):
        aggregate_errors([])


@given(st.lists(st.floats(0, 100), min_size=1, max_size=50))
def test_theta_is_mean_square_minus_square_mean(etas):
    bar, theta = aggregate_errors(etas)
    e = np.array(etas)
    assert theta >= 0
    assert theta == pytest.approx(np.mean(e**2) - np.mean(e) ** 2, abs=1e-12 * max(1.0, np.max(e) ** 2))


@given(
    st.lists(st.floats(-1, 1), min_size=1, max_size=20),
    st.integers(1, 3),
    st.floats(0.01, 1.0),
)
def test_shift_changes_eta_by_m_d_delta(values, d, delta):
    out = np.tile(np.array(values)[:, None], (1, d))
    target = -2.0  # every residual positive, so shifting up by delta adds exactly delta each
    before = picture_error(out, target)
    after = picture_error(out + delta, target)
    assert after - before == pytest.approx(len(values) * d * delta, rel=1e-9)


def test_error_report():
    rep = error_report([("a", 0.2), ("b", 0.4)])
    assert rep.P == 2
    assert np.allclose(rep.etas, [0.2, 0.4])
    assert rep.eta_bar == pytest.approx(0.3) and rep.theta == pytest.approx(0.01)


def test_histogram_examples():
    h = histogram([0, 1, 2, 3], 2)
    assert np.array_equal(h.edges, [0.0, 1.5, 3.0])
    assert np.array_equal(h.counts, [2, 2])
    assert h.rows() == [(0.0, 1.5, 2), (1.5, 3.0, 2)]
    c = histogram([0.7] * 5, 10)
    assert c.counts.tolist() == [5]
    assert c.edges[0] < 0.7 < c.edges[1]
    with pytest.raises(ContractError):
        histogram([], 3)
    with pytest.raises(ContractError):
        histogram([1.0, 2.0], 0)


@settings(max_examples=50)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=200), st.integers(1, 30))
def test_histogram_conserves_counts(values, bins):
    h = histogram(values, bins)
    assert h.counts.sum() == len(values)
    assert len(h.edges) == len(h.counts) + 1


def test_fit_lognormal_examples():
    fit = fit_lognormal([1.0, np.e**2])
    assert fit.mu == pytest.approx(1.0, abs=1e-12) and fit.s == pytest.approx(1.0, abs=1e-12)
    assert fit.median == pytest.approx(np.e)
    with pytest.raises(DegenerateFitError):
        fit_lognormal([np.e] * 4)
    with pytest.raises(DomainError):
        fit_lognormal([1.0, -2.0])
    with pytest.raises(ContractError):
        fit_lognormal([3.0])


def test_fit_lognormal_recovers_parameters_at_p70():
    rng = np.random.default_rng(2024)
    misses = 0
    for _ in range(200):
        fit = fit_lognormal(rng.lognormal(5.5, 0.1, 70))
        misses += abs(fit.mu - 5.5) / 5.5 > 0.05 or abs(fit.s - 0.1) / 0.1 > 0.2
    # the 20% band on s is about two standard errors at n = 70
    assert misses <= 10


@given(st.floats(0.01, 100.0))
def test_fit_lognormal_scale_equivariant(c):
    x = np.array([120.0, 250.0, 300.0, 410.0, 290.0])
    a, b = fit_lognormal(x), fit_lognormal(c * x)
    assert b.mu == pytest.approx(a.mu + np.log(c), abs=1e-12)
    assert b.s == pytest.approx(a.s, abs=1e-12)


def test_lognormal_pdf_integrates_to_one():
    fit = fit_lognormal([200.0, 300.0, 260.0])
    x = np.linspace(1e-6, 2000, 400001)
    assert np.trapezoid(fit.pdf(x), x) == pytest.approx(1.0, abs=1e-6)
    assert fit.pdf(-1.0) == 0.0
