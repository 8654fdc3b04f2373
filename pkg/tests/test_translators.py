import math

import numpy as np
import pytest

from solitonlab.geometry import compute_geometry, radial_d1
from solitonlab.surfaces import Hyperplane, make_catalog
from solitonlab.translators import (TranslatorError, bowl_solve, translator_curvature_report,
                                    translator_first_eigenvalue, translator_residual, translator_simons_residual,
                                    volume_ratio_sup)


@pytest.fixture(scope="module")
def vertical_plane():
    return make_catalog(Hyperplane((1.0, 0.0, 0.0)), 0.25, 4.0)


def test_profile_invariants(bowl2, bowl3):
    for n, (prof, _) in ((2, bowl2), (3, bowl3)):
        assert prof.u[0] == 0.0 and prof.du[0] == 0.0
        assert np.all(np.diff(prof.du) > 0)
        assert radial_d1(prof.du, prof.step, parity=-1)[0] == pytest.approx(1 / n, abs=1e-6)


def test_profile_csv(bowl2):
    prof, s = bowl2
    lines = prof.csv(compute_geometry(s).normA2).strip().splitlines()
    assert lines[0] == "r,u,du,normA2"
    assert len(lines) == prof.r.size + 1


def test_asymptotic_paraboloid():
    prof, _ = bowl_solve(2, 40.0, 0.04)
    half, _ = bowl_solve(2, 40.0, 0.02)
    ratios = []
    for R in (10, 20, 40):
        i = int(round(R / prof.step))
        j = int(round(R / half.step))
        ratios.append(prof.u[i] / (R**2 / 2))
        assert prof.u[i] == pytest.approx(half.u[j], rel=1e-8)
    assert ratios[0] < ratios[1] < ratios[2] < 1 and ratios[2] > 0.99


def test_step_precondition():
    with pytest.raises(TranslatorError):
        bowl_solve(2, 10.0, 10.0)
    with pytest.raises(TranslatorError):
        bowl_solve(1, 10.0, 0.01)


@pytest.mark.parametrize("n", [2, 3])
def test_bowl_residual_converges(n):
    a = translator_residual(bowl_solve(n, 10.0, 0.02)[1])["sup"]
    b = translator_residual(bowl_solve(n, 10.0, 0.01)[1])["sup"]
    assert b <= 1e-6
    assert a / b >= 3.5


def test_tip_curvature(bowl2, bowl3):
    for n, (_, s) in ((2, bowl2), (3, bowl3)):
        f = compute_geometry(s)
        assert f.H[s.index == 0][0] == pytest.approx(1.0, abs=1e-12)
        rep = translator_curvature_report(s)
        assert rep.extra["sup_normA2"] == pytest.approx(1 / n, abs=1e-4)
        assert rep.extra["attained_at_tip"]


def test_curvature_decreasing(bowl2):
    _, s = bowl2
    a2 = compute_geometry(s).normA2[np.argsort(s.index)]
    assert np.all(np.diff(a2) < 0)


def test_planes(vertical_plane):
    assert translator_residual(vertical_plane)["sup"] == 0.0
    assert translator_simons_residual(vertical_plane)["sup"] == 0.0
    assert translator_first_eigenvalue(vertical_plane, 3.0).first > 0
    assert translator_curvature_report(vertical_plane).extra["sup_normA"] == 0.0
    flat = make_catalog(Hyperplane((0.0, 0.0, 1.0)), 0.25, 4.0)
    assert np.allclose(np.abs(translator_residual(flat)["residual"]), 1.0)


def test_simons_residual_converges():
    a = translator_simons_residual(bowl_solve(2, 10.0, 0.02)[1], (1.0, 5.0))
    b = translator_simons_residual(bowl_solve(2, 10.0, 0.01)[1], (1.0, 5.0))
    assert a["sup"] / b["sup"] >= 3.5
    assert b["tip_lower_accuracy"]


@pytest.mark.parametrize("R", [2.0, 4.0, 6.0])
def test_bowl_is_stable(bowl2, R):
    assert translator_first_eigenvalue(bowl2[1], R).first >= -1e-3


def test_inflated_potential_is_unstable(bowl2):
    assert translator_first_eigenvalue(bowl2[1], 4.0, potential_scale=10.0).first < 0


def test_volume_ratio_stable_under_halving(bowl2):
    a = volume_ratio_sup(bowl_solve(2, 10.0, 0.02)[1])
    b = volume_ratio_sup(bowl2[1])
    assert math.isfinite(b) and abs(a - b) <= 0.05 * b


def test_report_with_lambda0(bowl2):
    rep = translator_curvature_report(bowl2[1], lambda0=10.0)
    assert rep.passed and rep.operator == "translator"
    assert not translator_curvature_report(bowl2[1], lambda0=1.0).passed
