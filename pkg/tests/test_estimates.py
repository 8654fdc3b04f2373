import math

import numpy as np
import pytest

from conftest import GIRTH, nearest
from solitonlab import estimates as est
from solitonlab.estimates import (CustomRadial, EstimateError, LinearAnnulus, Logarithmic, bind, bootstrap_pointwise_bound,
                                  choi_schoen, choi_schoen_epsilon, integral_curvature_decay, log_cutoff_energy,
                                  mean_value_monotonicity, random_annulus_cutoffs, scale_invariant_energy,
                                  simons_inequality_check, ssy_constant, ssy_inequality)
from solitonlab.surfaces import GraphPatch, Sphere, make_catalog, make_graph

LAMBDA_SPHERE = 4 / math.e


@pytest.fixture(scope="module")
def near_flat():
    p = GraphPatch.from_function(lambda P: 0.01 * P[..., 0] * P[..., 1], ((-2, 2), (-2, 2)), 33)
    return make_graph(p)


# cutoffs -------------------------------------------------------------------

def test_linear_annulus_values_and_gradient(plane):
    c = LinearAnnulus(R=4.0, a=1.0)
    b = bind(c, plane.x, plane.nu)
    r = b.dist
    assert np.all(b.values[r <= 3.0] == 1.0) and np.all(b.values[r >= 4.0] == 0.0)
    assert np.all(b.grad_norm <= c.slope_bound + 4 * plane.chart.h / c.a**2)
    with pytest.raises(EstimateError):
        LinearAnnulus(R=1.0, a=2.0)


def test_logarithmic_matches_definition(plane):
    eta = Logarithmic(r0=2.0, k=3)
    b = bind(eta, plane.x, plane.nu)
    r = b.dist
    inner = math.exp(-3) * 2.0
    assert np.all(b.values[r <= inner] == 1.0) and np.all(b.values[r > 2.0] == 0.0)
    mid = (r > inner) & (r <= 2.0)
    assert np.allclose(b.values[mid], (math.log(2.0) - np.log(r[mid])) / 3)
    assert np.all(b.grad_norm[mid] <= 1 / (3 * r[mid]) + 1e-12)
    with pytest.raises(EstimateError):
        Logarithmic(r0=1.0, k=1)


def test_custom_radial():
    c = CustomRadial(radii=(0.0, 1.0, 2.0), values=(1.0, 1.0, 0.0))
    assert np.allclose(c.profile(np.array([0.5, 1.5, 3.0])), [1.0, 0.5, 0.0])
    assert np.allclose(c.slope(np.array([0.5, 1.5, 3.0])), [0.0, 1.0, 0.0])
    with pytest.raises(EstimateError):
        CustomRadial(radii=(0.0, 1.0), values=(1.0, 1.0))


def test_tangential_gradient_on_sphere(sphere):
    # radial cutoff about the centre of a sphere has zero tangential gradient
    b = bind(LinearAnnulus(R=2.5, a=1.0), sphere.x, sphere.nu)
    assert np.max(b.grad_norm) < 1e-6


# integral decay and bootstrap -------------------------------------------------

def test_prop31_plane(plane):
    r = integral_curvature_decay(plane, 6.0, 1.0)
    assert r.lhs == 0.0 and r.passed and r.hypothesis_status == "holds"
    C = 16 * math.exp(-1 / 16) * 4 * math.pi
    assert r.constants["C"].value == pytest.approx(C, rel=1e-12)
    assert r.verify()


def test_prop31_cylinder_fails(cylinder):
    r = integral_curvature_decay(cylinder, 10.0, LAMBDA_SPHERE)
    assert not r.passed
    assert r.hypothesis_status == "not 1/2-stable"
    assert r.lhs == pytest.approx(0.5 * 2 * math.pi * math.sqrt(2) * 2 * math.sqrt(81 - 2), rel=1e-2)


@pytest.mark.parametrize("R", [6.0, 8.0])
def test_prop31_shrinker(shrinker, R):
    r = integral_curvature_decay(shrinker, R, 1.05)
    assert r.passed and r.hypothesis_status == "holds"


def test_prop31_precondition(plane):
    with pytest.raises(EstimateError):
        integral_curvature_decay(plane, 1.0, 1.0)


def test_bootstrap(plane, shrinker, cylinder):
    assert bootstrap_pointwise_bound(plane, (0, 0, 0), 6.0, 1.0).passed
    r = bootstrap_pointwise_bound(shrinker, nearest(shrinker, (0, 0, 0)), 8.0, 1.05)
    assert r.passed and r.verify()
    r = bootstrap_pointwise_bound(cylinder, GIRTH, 10.0, LAMBDA_SPHERE)
    assert not r.passed and any("not applicable" in n for n in r.notes)


# Simons inequality -------------------------------------------------------------

@pytest.mark.parametrize("surf", ["sphere", "cylinder6", "plane"])
def test_simons_inequality(surf, request):
    assert simons_inequality_check(request.getfixturevalue(surf)).passed


def test_simons_inequality_values(sphere, cylinder6):
    # lhs is the worst value of rhs - laplacian
    assert simons_inequality_check(sphere).lhs == pytest.approx(-0.25, abs=1e-12)
    assert simons_inequality_check(cylinder6).lhs == pytest.approx(-0.125, abs=2e-3)


# mean value ----------------------------------------------------------------------

def test_mean_value_plane(plane):
    tr = mean_value_monotonicity(plane, (0, 0, 0))
    assert np.all(tr.g == 0) and tr.monotone


def test_mean_value_sphere(sphere):
    tr = mean_value_monotonicity(sphere, (2, 0, 0), s_max=0.5)
    assert tr.monotone and tr.radii.size == 16
    assert tr.g[0] == pytest.approx(math.pi / 2, rel=1e-2)
    assert tr.C_prime == pytest.approx(0.125 + 2 * (1 / (3 * math.sqrt(2))) ** 2)


def test_mean_value_cylinder(cylinder6):
    tr = mean_value_monotonicity(cylinder6, GIRTH, s_max=0.5)
    assert tr.monotone
    assert tr.csv().startswith("s,g,h\n")


def test_mean_value_preconditions(sphere):
    with pytest.raises(EstimateError):
        mean_value_monotonicity(sphere, (2, 0, 0), R=3.0)
    with pytest.raises(EstimateError):
        mean_value_monotonicity(sphere, (3, 0, 0))
    with pytest.raises(EstimateError):
        mean_value_monotonicity(sphere, (2, 0, 0), s_max=1.5)


# Choi-Schoen --------------------------------------------------------------------

def test_choi_schoen_epsilon():
    assert choi_schoen_epsilon(2) == pytest.approx(math.pi / 4 * math.exp(-4), rel=1e-12)


def test_choi_schoen_plane(plane):
    r = choi_schoen(plane, (0, 0, 0), 1.0)
    assert r.passed and r.extra["energy"] == 0.0 and r.lhs == 0.0


def test_choi_schoen_sphere_hypothesis_fails(sphere):
    r = choi_schoen(sphere, (2, 0, 0), 0.5)
    assert not r.passed and r.hypothesis_status == "fails"
    assert r.extra["energy"] == pytest.approx(0.5 * math.pi * 0.25, rel=1e-2)
    assert r.lhs <= 1.0


def test_choi_schoen_near_flat(near_flat):
    r = choi_schoen(near_flat, (0, 0, 0), 1.0)
    assert r.extra["energy"] < choi_schoen_epsilon(2)
    assert r.passed and r.verify()


def test_choi_schoen_theta(sphere):
    with pytest.raises(EstimateError):
        choi_schoen(sphere, (2, 0, 0), 0.75)


# SSY ----------------------------------------------------------------------------

def test_ssy_constant():
    assert ssy_constant(2, 0.0).value == pytest.approx(5.0)
    c = ssy_constant(3, 0.5)
    assert c.recompute({"n": 3, "q": 0.5, "a": est.ssy_default_a(3, 0.5)}) == pytest.approx(c.value, rel=1e-12)
    with pytest.raises(EstimateError):
        ssy_constant(2, 0.5, a=2.0)


def test_ssy_plane(plane):
    for q in (0.0, 0.5):
        r = ssy_inequality(plane, LinearAnnulus(R=5.0, a=1.0), q, R=6.0)
        assert r.lhs == 0.0 and r.rhs == 0.0 and r.passed


def test_ssy_tilted(tilted):
    for q in (0.0, 0.5):
        for c in random_annulus_cutoffs(tilted, 5.0, 10, seed=3):
            assert ssy_inequality(tilted, c, q, R=5.0).passed


@pytest.mark.parametrize("q", [0.0, 0.5])
def test_ssy_shrinker(shrinker, q):
    reps = [ssy_inequality(shrinker, c, q, R=6.0) for c in random_annulus_cutoffs(shrinker, 6.0, 20, seed=0)]
    assert all(r.passed and r.verify() for r in reps)
    assert any(r.lhs > 0 for r in reps)


def test_ssy_rejections(plane):
    with pytest.raises(EstimateError):
        ssy_inequality(plane, LinearAnnulus(R=5.0, a=1.0), 0.5, a=2.0, R=6.0)
    with pytest.raises(EstimateError):
        ssy_inequality(plane, LinearAnnulus(R=5.0, a=1.0, center=(2.0, 0.0, 0.0)), 0.0, R=6.0)
    with pytest.raises(EstimateError):
        ssy_inequality(plane, LinearAnnulus(R=5.0, a=1.0), 0.9, R=6.0)


def test_ssy_translator_weight(bowl2):
    s = bowl2[1]
    r = ssy_inequality(s, LinearAnnulus(R=3.0, a=1.0), 0.0, R=3.0, operator="translator")
    assert r.operator == "translator" and r.constants["K"].value == 4.0 and r.passed


# scale-invariant energies --------------------------------------------------------

def test_lemma43_plane(plane):
    assert scale_invariant_energy(plane, (0, 0, 0), 0.5, 3.0, 1.0).passed


def test_lemma43_cylinder_p2(cylinder6):
    r = scale_invariant_energy(cylinder6, GIRTH, 0.25, 2.0, 1.5)
    assert r.lhs == pytest.approx(0.5 * math.pi * 0.25**2, rel=2e-2)
    assert r.passed and r.verify()


def test_lemma43_sphere_p4(sphere):
    r = scale_invariant_energy(sphere, (2, 0, 0), 0.25, 4.0, LAMBDA_SPHERE)
    assert r.lhs == pytest.approx(0.25 * math.pi * 0.25**2, rel=2e-2)
    assert r.passed and r.verify()


def test_lemma43_constants():
    c = est.lemma43_constants(2, 1.0, 0.25, 2.0)
    V0 = math.exp(-0.25) * 4 * math.pi
    assert c["C_2"].value == pytest.approx(4 * math.e * V0 * 4, rel=1e-12)
    assert c["C_0"].value == 5.0


def test_lemma43_preconditions(sphere):
    with pytest.raises(EstimateError):
        scale_invariant_energy(sphere, (2, 0, 0), 0.3, 2.0, 1.0)
    with pytest.raises(EstimateError):
        scale_invariant_energy(sphere, (2, 0, 0), 0.25, 5.0, 1.0)


# logarithmic cutoff ---------------------------------------------------------------

def test_log_cutoff_plane(plane):
    r = log_cutoff_energy(plane, (0, 0, 0), 0.25, 3, 1.0)
    assert r.lhs == 0.0 and r.passed


def test_log_cutoff_sphere(sphere):
    r = log_cutoff_energy(sphere, (2, 0, 0), 0.125, 2, LAMBDA_SPHERE)
    assert r.passed and r.verify()
    assert r.extra["rings_within_bounds"]
    C = math.exp(3) * math.exp(-0.25) * 4 * math.pi * LAMBDA_SPHERE
    assert r.rhs == pytest.approx(C / 2, rel=1e-12)


def test_log_cutoff_preconditions(sphere):
    with pytest.raises(EstimateError):
        log_cutoff_energy(sphere, (2, 0, 0), 0.125, 1, 1.0)
    with pytest.raises(EstimateError):
        log_cutoff_energy(sphere, (2, 0, 0), 0.2, 2, 1.0)
    with pytest.raises(EstimateError):
        log_cutoff_energy(sphere, (2, 0, 0), 0.125, 6, 1.0, cells=24)


# common invariants ------------------------------------------------------------------

def test_constants_recompute(sphere, cylinder6):
    reps = [integral_curvature_decay(cylinder6, 5.0, 1.5, hypothesis="caller-asserted"),
            scale_invariant_energy(sphere, (2, 0, 0), 0.25, 3.0, LAMBDA_SPHERE),
            log_cutoff_energy(cylinder6, GIRTH, 0.15, 3, 1.5),
            choi_schoen(sphere, (2, 0, 0), 0.5),
            bootstrap_pointwise_bound(cylinder6, GIRTH, 5.0, 1.5, hypothesis="caller-asserted")]
    for r in reps:
        for c in r.constants.values():
            assert c.recompute(r.params) == pytest.approx(c.value, rel=1e-12)
        assert r.verify()
        assert r.passed == (r.lhs <= r.rhs and r.hypothesis_status in ("holds", "caller-asserted", "not checked"))


def test_refuses_high_dimension():
    s = make_catalog(Sphere(7), 5)
    with pytest.raises(EstimateError):
        integral_curvature_decay(s, 5.0, 2.0)
