import math

import numpy as np
import pytest

from solitonlab.gaussian import (GaussianError, GaussianWeight, entropy, f_functional, volume_growth_certificate,
                                 weighted_integral)
from solitonlab.surfaces import Sphere, make_catalog, refine, translate


def test_plane_gaussian_mass(plane10):
    w = GaussianWeight.on(plane10)
    v = weighted_integral(plane10, np.ones(plane10.size), w, lambda0=1.0)
    assert v.value == pytest.approx(4 * math.pi, abs=1e-6)
    assert v.truncation_tail_bound >= 0
    assert weighted_integral(plane10, np.zeros(plane10.size), w, 1.0).value == 0.0


def test_noncompact_requires_lambda0(plane10):
    with pytest.raises(GaussianError):
        weighted_integral(plane10, np.ones(plane10.size), GaussianWeight.on(plane10))


def test_sphere_weighted_mass(sphere):
    v = weighted_integral(sphere, np.ones(sphere.size), GaussianWeight.on(sphere))
    assert v.value == pytest.approx(16 * math.pi / math.e, abs=1e-3)


def test_f_functional_values(sphere, plane10):
    assert f_functional(plane10, lambda0=1.0).value == pytest.approx(1.0, abs=1e-6)
    assert f_functional(sphere).value == pytest.approx(4 / math.e, abs=1e-3)
    assert f_functional(sphere, t0=2.0).value < 4 / math.e
    with pytest.raises(GaussianError):
        f_functional(sphere, t0=0.0)


def test_f_functional_translation_invariance(sphere):
    shift = np.array([1.5, -0.5, 2.0])
    a = f_functional(sphere, np.array([0.2, 0.1, 0.0]), 0.7).value
    b = f_functional(translate(sphere, shift), np.array([0.2, 0.1, 0.0]) + shift, 0.7).value
    assert a == pytest.approx(b, abs=1e-10)


def test_sphere_entropy(sphere):
    res = entropy(sphere)
    assert res.value == pytest.approx(4 / math.e, abs=1e-3)
    assert np.linalg.norm(res.x0) < 1e-2 and abs(res.t0 - 1) < 1e-2
    rng = np.random.default_rng(1)
    for _ in range(10):
        x0 = rng.normal(size=3)
        t0 = math.exp(rng.uniform(-2, 2))
        assert res.value >= f_functional(sphere, x0, t0).value - 1e-12
    assert abs(res.value - f_functional(sphere).value) <= 1e-6


def test_translated_sphere_entropy(sphere):
    res = entropy(translate(sphere, (5.0, 0.0, 0.0)))
    assert res.value == pytest.approx(4 / math.e, abs=1e-3)
    assert np.allclose(res.x0, [5, 0, 0], atol=1e-2) and abs(res.t0 - 1) < 1e-2


def test_plane_entropy_flat(plane10):
    res = entropy(plane10, lambda0_hint=1.0)
    assert res.value == pytest.approx(1.0, abs=1e-5)
    assert res.degenerate


def test_entropy_requires_hint_on_truncated(plane10):
    with pytest.raises(GaussianError):
        entropy(plane10)


def test_quadrature_converges_under_refinement():
    # centre off the pole axis so the value is not captured exactly by the cell measures
    x0, t0 = np.array([0.7, 0.3, 0.5]), 0.6
    ref = f_functional(make_catalog(Sphere(2), 256), x0, t0).value
    s = make_catalog(Sphere(2), 16)
    e1 = abs(f_functional(s, x0, t0).value - ref)
    e2 = abs(f_functional(refine(s, 2), x0, t0).value - ref)
    assert e1 / e2 >= 2 ** 1.9


def test_volume_growth(plane, sphere):
    r = volume_growth_certificate(plane, np.zeros(3), 1.0, 1.0)
    assert r.lhs == pytest.approx(math.pi, rel=1e-3)
    assert r.rhs == pytest.approx(4 * math.pi * math.exp(-0.25), rel=1e-12)
    assert r.passed and r.verify()
    r = volume_growth_certificate(sphere, np.zeros(3), 3.0, 4 / math.e)
    assert r.lhs == pytest.approx(16 * math.pi, rel=1e-6)
    assert r.rhs == pytest.approx(math.exp(-0.25) * 4 * math.pi * (4 / math.e) * 9, rel=1e-12)
    assert r.passed


def test_volume_growth_failure_is_reported(sphere):
    r = volume_growth_certificate(sphere, np.array([2.0, 0, 0]), 3.0, 0.01)
    assert not r.passed
