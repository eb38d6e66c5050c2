import math

import numpy as np
import pytest

from dmap import InvalidParameterError
from dmap.accuracy import AccuracyParams, f_of_gamma, gamma_for_accuracy, simulate_f

ALPHAS = [0.0, math.radians(15), math.radians(30), math.radians(90)]


def _ratio_form_A(a):
    num = 3 * (1 - math.cos(a)) + 12 / math.pi * math.sin(a)
    den = 1 - 0.5 * (math.sin(a) * math.cos(a) ** 2 + (1 - math.sin(a)) ** 2 * (2 + math.sin(a)))
    return num / den


@pytest.mark.parametrize("a", ALPHAS[1:] + [math.radians(1), math.radians(60)])
def test_reduced_A_equals_ratio_form(a):
    assert AccuracyParams(a).A == pytest.approx(_ratio_form_A(a), rel=1e-12)


def test_gamma0_at_15_degrees():
    g0 = AccuracyParams(math.radians(15)).gamma0
    assert g0 == pytest.approx(math.sqrt(3) * math.sin(math.atan(1 / math.sqrt(2)) + math.radians(15)))
    assert g0 == pytest.approx(1.332, abs=1e-3)


@pytest.mark.parametrize("a", ALPHAS)
def test_gamma0_at_least_one(a):
    assert AccuracyParams(a).gamma0 >= 1.0
    assert f_of_gamma(1.0, AccuracyParams(a)) == 1.0


@pytest.mark.parametrize("a", ALPHAS)
def test_flat_then_continuous(a):
    p = AccuracyParams(a)
    assert f_of_gamma(0.3, p) == 1.0 and f_of_gamma(p.gamma0, p) == 1.0
    assert abs(f_of_gamma(p.gamma0 * (1 + 1e-12), p) - 1.0) <= 1e-9


@pytest.mark.parametrize("a", [math.radians(v) for v in (6.5, 15, 30, 60, 90)])
def test_nonincreasing(a):
    p = AccuracyParams(a)
    g = np.linspace(0.05, 40, 5000)
    f = np.array([f_of_gamma(x, p) for x in g])
    assert np.all(np.diff(f) <= 1e-15)
    assert np.all((f > 0) & (f <= 1))


def test_small_fov_overshoot():
    # slope just above gamma0 is (A - 3 gamma0^2) / gamma0^3, positive below about 6.48 degrees
    for deg, rising in [(0.0, True), (6.4, True), (6.6, False)]:
        p = AccuracyParams(math.radians(deg))
        assert (p.A > 3 * p.gamma0**2) == rising
        assert (f_of_gamma(p.gamma0 * 1.0001, p) > 1.0) == rising


def test_f_rejects_nonpositive():
    with pytest.raises(InvalidParameterError):
        f_of_gamma(0.0, AccuracyParams(0.2))
    with pytest.raises(InvalidParameterError):
        AccuracyParams(-0.1)


def _bisect(omega, p):
    lo, hi = p.gamma0, 1e4
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f_of_gamma(mid, p) > omega:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_omega_one_gives_one():
    assert gamma_for_accuracy(1.0, AccuracyParams(0.3)) == 1.0


@pytest.mark.parametrize("alpha_deg", [15, 30])
@pytest.mark.parametrize("omega", [0.5, 0.6, 0.7, 0.8, 0.9])
def test_inversion_matches_bisection(alpha_deg, omega):
    p = AccuracyParams(math.radians(alpha_deg))
    g = gamma_for_accuracy(omega, p)
    assert g > p.gamma0
    assert abs(f_of_gamma(g, p) - omega) <= 1e-6
    assert g == pytest.approx(_bisect(omega, p), rel=1e-9)


def test_inverse_of_f_is_identity():
    p = AccuracyParams(math.radians(20))
    for g in np.linspace(p.gamma0 * 1.01, 30, 50):
        assert gamma_for_accuracy(f_of_gamma(g, p), p) == pytest.approx(g, rel=1e-6)


@pytest.mark.parametrize("omega", [0.0, -0.5, 1.2])
def test_omega_domain(omega):
    with pytest.raises(InvalidParameterError):
        gamma_for_accuracy(omega, AccuracyParams(0.2))


def test_simulation_self_ratio_and_trend():
    a = math.radians(15)
    one = simulate_f(10.0, 0.5, a, 1.0, seed=3, n_cells=20_000)
    assert one.f_empirical == 1.0 and one.V == one.V_I > 0
    lo = simulate_f(10.0, 0.5, a, 4.0, seed=3, n_cells=20_000)
    assert 0 < lo.f_empirical < 1
    assert simulate_f(10.0, 0.5, a, 4.0, seed=3, n_cells=20_000) == lo


def test_simulation_domain():
    with pytest.raises(InvalidParameterError):
        simulate_f(1.0, 2.0, 0.2, 1.0)
