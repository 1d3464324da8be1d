import numpy as np
import pytest

from acflow.errors import ValidationError
from acflow.geometry import DomainSpec, build_domain
from acflow.initial_data import (
    InterfaceSpec, prepare, signed_distance_to_interface, verify_assumptions,
)
from acflow.potential import PotentialSpec, standing_wave
from acflow.solver import grad_centered, make_field


@pytest.fixture(scope="module")
def quartic():
    return PotentialSpec.quartic()


@pytest.fixture(scope="module")
def wave(quartic):
    return standing_wave(quartic)


@pytest.fixture(scope="module")
def disk():
    return build_domain(DomainSpec.disk(1.0), 0.01)


@pytest.fixture(scope="module")
def flower():
    return build_domain(DomainSpec.flower(1.0, 0.2, 3), 0.01)


@pytest.fixture(scope="module")
def prepared_line(flower, quartic, wave):
    # horizontal line hits the flower's petal tip and trough orthogonally
    return prepare(flower, quartic, InterfaceSpec.line(0.0, angle_deg=90.0),
                   eps=0.04, wave=wave)


class TestInterfaceDistance:
    def test_line_is_coordinate_away_from_boundary(self, disk):
        d = signed_distance_to_interface(disk, InterfaceSpec.line(0.0))
        X, _ = disk.cell_centers()
        far = disk.inside & (np.abs(disk.d) > disk.c2)
        assert np.abs(d[far] - X[far]).max() < 1e-9

    def test_collar_correction_kills_normal_derivative(self, flower):
        d = signed_distance_to_interface(
            flower, InterfaceSpec.line(0.0, angle_deg=90.0))
        gx, gy = grad_centered(d, flower.h)
        bp = flower.boundary_pts
        dn = (flower.interp(gx, bp) * flower.boundary_normals[:, 0]
              + flower.interp(gy, bp) * flower.boundary_normals[:, 1])
        assert np.abs(dn).max() <= 5 * flower.h

    def test_redistanced_field_has_unit_gradient(self, flower):
        d = signed_distance_to_interface(
            flower, InterfaceSpec.line(0.0, angle_deg=90.0), redistance=True)
        gx, gy = grad_centered(d, flower.h)
        core = flower.inside & (np.abs(flower.d) > 2 * flower.h) \
            & (np.abs(d) > 2 * flower.h) & (np.abs(d) < 0.3)
        res = np.abs(np.hypot(gx[core], gy[core]) - 1.0)
        assert res.max() < 0.02

    def test_interface_outside_domain_rejected(self, disk):
        with pytest.raises(ValidationError):
            signed_distance_to_interface(
                disk, InterfaceSpec.circle((5.0, 0.0), 0.3))

    def test_oblique_interface_rejected(self, flower):
        # vertical line through the flower meets the wall ~31 deg off 90
        with pytest.raises(ValidationError):
            signed_distance_to_interface(flower, InterfaceSpec.line(0.0))


class TestPrepare:
    def test_under_resolved_eps_rejected(self, disk, quartic, wave):
        with pytest.raises(ValidationError):
            prepare(disk, quartic, InterfaceSpec.line(0.0), eps=0.02,
                    wave=wave)

    def test_equipartition_pointwise(self, prepared_line, flower, quartic):
        # prepared data carries only the discretization-floor discrepancy
        from acflow.measures import snapshot
        m = snapshot(prepared_line.field, flower, quartic)
        eps = 0.04
        away = flower.inside & (np.abs(flower.d) > flower.c2 / 2)
        assert np.abs(m.xi[away]).max() <= 0.05 / eps

    def test_gradient_sup_bound(self, prepared_line, quartic):
        row = next(r for r in prepared_line.report["rows"]
                   if r["name"] == "gradient-sup")
        # max sqrt(2W) = 1/sqrt(2) for the quartic
        assert row["measured"] <= 1 / np.sqrt(2) + 0.1
        assert row["ok"]

    def test_all_assumptions_pass(self, prepared_line):
        assert prepared_line.report["ok"]

    def test_constant_field_trivial(self, disk, quartic, wave):
        pf = prepare(disk, quartic, InterfaceSpec.line(0.0), eps=0.05,
                     wave=wave)
        pf.field.u[:] = 1.0
        rep = verify_assumptions(pf, disk, quartic)
        d0 = next(r for r in rep["rows"] if r["name"] == "density-ratio")
        assert d0["measured"] == pytest.approx(0.0, abs=1e-12)
        assert rep["ok"]

    def test_contact_angle_of_zero_set(self, prepared_line, flower):
        from acflow.varifold import contact_angle
        crossings = contact_angle(prepared_line.field, flower)
        assert len(crossings) >= 2
        for _, ang in crossings:
            assert abs(ang - 90.0) <= 3.0

    def test_d0_stable_under_refinement(self, quartic, wave):
        spec = InterfaceSpec.line(0.0, angle_deg=90.0)
        vals = []
        for h in (0.02, 0.01):
            g = build_domain(DomainSpec.flower(1.0, 0.2, 3), h)
            pf = prepare(g, quartic, spec, eps=0.08, wave=wave)
            vals.append(pf.D0)
        assert abs(vals[1] - vals[0]) <= 0.1 * max(vals)


class TestVerify:
    def test_scaled_field_fails_max_norm(self, prepared_line, flower,
                                         quartic):
        bad = prepare(flower, quartic, InterfaceSpec.line(0.0, angle_deg=90.0),
                      eps=0.04)
        bad.field.u = bad.field.u * 1.2
        rep = verify_assumptions(bad, flower, quartic)
        row = next(r for r in rep["rows"] if r["name"] == "max-norm")
        assert not row["ok"]
        assert not rep["ok"]

    def test_noise_field_fails_discrepancy_vs_reference(self, prepared_line,
                                                        flower, quartic):
        rng = np.random.default_rng(5)
        noisy = prepare(flower, quartic,
                        InterfaceSpec.line(0.0, angle_deg=90.0), eps=0.04)
        noisy.field.u = np.clip(
            noisy.field.u + 0.5 * rng.standard_normal(noisy.field.u.shape),
            -1.0, 1.0)
        rep = verify_assumptions(noisy, flower, quartic,
                                 reference=prepared_line)
        row = next(r for r in rep["rows"] if r["name"] == "discrepancy-sup")
        assert not row["ok"]
