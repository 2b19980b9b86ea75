import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lsrk.exceptions import ContractError
from lsrk.metrics import (
    MetricsReport,
    SampledFunction,
    function_range,
    gauss_legendre_integrate,
    gauss_legendre_nodes,
    made,
    wase,
)
from lsrk.simulation import TrueCoefficients


@pytest.mark.parametrize("nodes", [1, 2, 5, 20, 50, 100])
def test_constant_integrates_exactly(nodes):
    assert gauss_legendre_integrate(lambda t: np.ones_like(t), 0, 1, nodes) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("nodes", [2, 3, 10, 50])
def test_quadratic(nodes):
    assert abs(gauss_legendre_integrate(lambda t: t * t, 0, 1, nodes) - 1 / 3) < 1e-14


def test_exponential():
    assert abs(gauss_legendre_integrate(np.exp, 0, 1, 20) - (math.e - 1)) < 1e-10


@settings(max_examples=100, deadline=None)
@given(nodes=st.integers(1, 12), data=st.data())
def test_polynomial_exactness(nodes, data):
    degree = data.draw(st.integers(0, 2 * nodes - 1))
    a = data.draw(st.floats(-2, 2))
    b = a + data.draw(st.floats(0.1, 3))
    coefs = np.array(data.draw(st.lists(st.floats(-5, 5), min_size=degree + 1, max_size=degree + 1)))
    poly = np.polynomial.Polynomial(coefs)
    exact = poly.integ()(b) - poly.integ()(a)
    got = gauss_legendre_integrate(poly, a, b, nodes)
    assert got == pytest.approx(exact, rel=1e-10, abs=1e-10 * max(1.0, np.abs(coefs).sum() * max(abs(a), abs(b)) ** degree * (b - a)))


def test_nodes_inside_interval():
    t, w = gauss_legendre_nodes(0.2, 0.7, 30)
    assert np.all((t > 0.2) & (t < 0.7))
    assert w.sum() == pytest.approx(0.5, rel=1e-14)
    with pytest.raises(ContractError):
        gauss_legendre_nodes(1, 0)
    with pytest.raises(ContractError):
        gauss_legendre_nodes(0, 1, 0)


def _offset(f, c):
    return lambda t: f(t) + c


def test_made_wase_exact_and_unit_offset():
    f = np.exp
    assert made([f], [f]) == 0.0 and wase([f], [f]) == 0.0
    r = function_range(f)
    assert r == pytest.approx(math.e - 1)
    assert made([f], [_offset(f, r)]) == pytest.approx(1.0, rel=1e-13)
    assert wase([f], [_offset(f, r)]) == pytest.approx(1.0, rel=1e-13)


def test_study1_offsets():
    truth = TrueCoefficients.for_study(1)
    fs = [truth["beta0"], truth["beta1"]]
    est = [_offset(f, 0.1 * function_range(f)) for f in fs]
    assert made(fs, est) == pytest.approx(0.1, rel=1e-12)
    assert wase(fs, est) == pytest.approx(0.01, rel=1e-12)


def test_sign_of_offset_irrelevant():
    f = np.sin
    r = function_range(f)
    assert made([f], [_offset(f, -0.3 * r)]) == pytest.approx(made([f], [_offset(f, 0.3 * r)]), rel=1e-14)


def test_flat_function_has_no_range():
    with pytest.raises(ContractError):
        function_range(lambda t: np.full_like(t, 2.0))
    with pytest.raises(ContractError):
        made([], [])
    with pytest.raises(ContractError):
        made([np.exp], [])


def test_sampled_function():
    t = np.linspace(0, 1, 11)
    f = SampledFunction(t, t ** 2)
    assert f(t) is f.values
    assert f(0.05) == pytest.approx(0.005)
    assert f(-1.0) == 0.0 and f(2.0) == 1.0
    with pytest.raises(ContractError):
        SampledFunction(t, t[:-1])


def test_report_json():
    rep = MetricsReport(0.1, 0.01, {"beta1": 0.2})
    data = json.loads(rep.to_json())
    assert data == {"made": 0.1, "wase": 0.01, "per_function_ise": {"beta1": 0.2}, "runtime_seconds": 0.0}
