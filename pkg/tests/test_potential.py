import numpy as np
import pytest

from acflow.errors import ValidationError
from acflow.potential import PotentialSpec, standing_wave, validate_potential


@pytest.fixture(scope="module")
def quartic():
    return PotentialSpec.quartic()


@pytest.fixture(scope="module")
def wave(quartic):
    return standing_wave(quartic)


class TestValidate:
    def test_quartic_passes_with_unit_convexity_margin(self, quartic):
        rep = validate_potential(quartic)
        assert rep["ok"]
        conv = next(c for c in rep["conditions"]
                    if c["name"] == "convex-near-wells")
        # min of W'' = 3 s^2 - 1 over alpha <= |s| <= 1 is exactly beta = 1
        assert conv["margin"] + quartic.beta == pytest.approx(1.0, abs=1e-5)

    def test_quartic_with_small_alpha_fails_convexity(self):
        p = PotentialSpec.quartic()
        p.alpha = 0.5
        rep = validate_potential(p)
        assert not rep["ok"]
        conv = next(c for c in rep["conditions"]
                    if c["name"] == "convex-near-wells")
        assert not conv["ok"]
        # witness near s = 0.5 where W'' = -0.25
        assert quartic_d2w(conv["witness"]) < 1.0

    def test_unnormalized_quartic_passes(self):
        p = PotentialSpec(W=lambda s: (1 - s * s) ** 2,
                          dW=lambda s: 4 * s * (s * s - 1),
                          d2W=lambda s: 12 * s * s - 4,
                          alpha=np.sqrt(2 / 3), beta=4.0, gamma=0.0,
                          name="unnormalized")
        assert validate_potential(p)["ok"]


def quartic_d2w(s):
    return 3 * s * s - 1


class TestStandingWave:
    def test_matches_tanh_closed_form(self, wave):
        s = np.linspace(-5, 5, 2001)
        assert np.abs(wave.q(s) - np.tanh(s / np.sqrt(2))).max() <= 1e-6

    def test_sigma_quartic_closed_form(self, wave):
        # integral of (1 - s^2)/sqrt(2) over [-1, 1] = 2 sqrt(2) / 3
        assert wave.sigma == pytest.approx(2 * np.sqrt(2) / 3, abs=1e-6)

    def test_origin_and_monotonicity(self, wave):
        assert wave.q(0.0) == pytest.approx(0.0, abs=1e-9)
        s = np.linspace(-wave.s_max, wave.s_max, 5001)
        assert (np.diff(wave.q(s)) >= -1e-12).all()

    def test_ode_residual(self, quartic, wave):
        s = np.linspace(-8, 8, 4001)
        res = wave.dq(s) - np.sqrt(2 * quartic.W(wave.q(s)))
        assert np.abs(res).max() <= 1e-8

    def test_equipartition_identity(self, quartic, wave):
        s = np.linspace(-8, 8, 4001)
        res = wave.dq(s) ** 2 / 2 - quartic.W(wave.q(s))
        assert np.abs(res).max() <= 1e-8

    def test_second_derivative_is_well_slope(self, quartic, wave):
        s = np.linspace(-8, 8, 4001)
        q2 = wave._spline.derivative(2)(s)
        assert np.abs(q2 - quartic.dW(wave.q(s))).max() <= 1e-6

    def test_flat_potential_stalls(self):
        # scaling the quartic by delta stretches the profile by 1/sqrt(delta);
        # delta = 0.01 pushes the 1 - 1e-6 approach past |s| = 60
        delta = 0.01
        p = PotentialSpec(W=lambda s: delta * (1 - s * s) ** 2 / 4,
                          dW=lambda s: delta * (s * s * s - s),
                          d2W=lambda s: delta * (3 * s * s - 1),
                          alpha=np.sqrt(2 / 3), beta=delta, gamma=0.0,
                          name="flat")
        assert validate_potential(p)["ok"]
        with pytest.raises(ValidationError):
            standing_wave(p)
