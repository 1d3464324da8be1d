import numpy as np
import pytest

from acflow.errors import ValidationError
from acflow.geometry import (
    DomainSpec, build_domain, nearest_point, reflect, reflected_ball_mask,
    reflection_inequality_check,
)


@pytest.fixture(scope="module")
def disk():
    return build_domain(DomainSpec.disk(1.0), 1.0 / 64.0)


@pytest.fixture(scope="module")
def flower():
    return build_domain(DomainSpec.flower(1.0, 0.2, 3), 1.0 / 128.0)


@pytest.fixture(scope="module")
def capsule():
    return build_domain(DomainSpec.capsule(2.4, 0.8), 1.0 / 100.0)


def _collar_samples(g, seed, n, depth):
    """n random points with |signed distance| below depth (batched)."""
    rng = np.random.default_rng(seed)
    out = []
    need = n
    while need > 0:
        cand = rng.uniform((g.x0, g.y0),
                           (g.x0 + g.h * (g.nx - 1), g.y0 + g.h * (g.ny - 1)),
                           size=(max(4 * need, 256), 2))
        d = g.signed_distance(cand)
        take = cand[np.abs(d) < depth][:need]
        out.append(take)
        need -= len(take)
    return np.concatenate(out, axis=0)


def flower_curvature_oracle(r0=1.0, a=0.2, k=3, n=200001):
    # closed-form curvature of the polar curve r = r0 (1 + a cos k th)
    th = np.linspace(0, 2 * np.pi, n)
    r = r0 * (1 + a * np.cos(k * th))
    rp = -r0 * a * k * np.sin(k * th)
    rpp = -r0 * a * k * k * np.cos(k * th)
    kap = (r * r + 2 * rp * rp - r * rpp) / (r * r + rp * rp) ** 1.5
    return np.max(np.abs(kap))


class TestBuildDomain:
    def test_disk_kappa_c2(self, disk):
        assert disk.kappa == pytest.approx(1.0, rel=0.02)
        assert disk.c2 == pytest.approx(1.0 / 6.0, rel=0.02)

    def test_flower_kappa_matches_polar_oracle(self, flower):
        assert flower.kappa == pytest.approx(flower_curvature_oracle(),
                                             rel=1e-3)

    def test_coarse_grid_rejected(self):
        with pytest.raises(ValidationError):
            build_domain(DomainSpec.disk(1.0), 0.5)

    def test_degenerate_flower_rejected(self):
        with pytest.raises(ValidationError):
            build_domain(DomainSpec.flower(1.0, 1.1, 3), 0.01)

    def test_capsule_kappa(self, capsule):
        assert capsule.kappa == pytest.approx(2.0 / 0.8, rel=1e-6)

    def test_disk_boundary_quadrature_length(self, disk):
        assert np.sum(disk.boundary_weights) == pytest.approx(2 * np.pi,
                                                              abs=1e-3)

    def test_flower_boundary_quadrature_length(self, flower):
        th = np.linspace(0, 2 * np.pi, 400001)
        r = 1 + 0.2 * np.cos(3 * th)
        rp = -0.6 * np.sin(3 * th)
        per = np.trapezoid(np.sqrt(r * r + rp * rp), th)
        assert np.sum(flower.boundary_weights) == pytest.approx(per, rel=1e-3)

    def test_eikonal_residual_in_collar(self, flower):
        g = flower
        h = g.h
        gx = (g.d[1:-1, 2:] - g.d[1:-1, :-2]) / (2 * h)
        gy = (g.d[2:, 1:-1] - g.d[:-2, 1:-1]) / (2 * h)
        m = np.abs(g.d[1:-1, 1:-1]) < 3 * g.c2
        res = np.abs(np.hypot(gx[m], gy[m]) - 1.0)
        assert res.max() <= 10 * h

    def test_normal_agrees_with_distance_gradient(self, flower):
        g = flower
        h = g.h
        gx = (g.d[1:-1, 2:] - g.d[1:-1, :-2]) / (2 * h)
        gy = (g.d[2:, 1:-1] - g.d[:-2, 1:-1]) / (2 * h)
        m = g.collar[1:-1, 1:-1] & (np.abs(g.d[1:-1, 1:-1]) < 3 * g.c2)
        dx = gx[m] - g.nu_x[1:-1, 1:-1][m]
        dy = gy[m] - g.nu_y[1:-1, 1:-1][m]
        assert np.hypot(dx, dy).max() <= 10 * h

    def test_dump_text(self, disk):
        txt = disk.dump_text()
        lines = txt.strip().split("\n")
        assert len(lines) == disk.ny
        assert "#" in lines[disk.ny // 2]


class TestNearestPoint:
    def test_disk_radial(self, disk):
        xi = nearest_point(disk, (0.9, 0.0))
        assert np.allclose(xi, (1.0, 0.0), atol=1e-9)

    def test_flower_distance_matches_dense_oracle(self, flower):
        # oracle: distance to a very dense boundary sampling
        th = np.linspace(0, 2 * np.pi, 2_000_001)
        r = 1 + 0.2 * np.cos(3 * th)
        bd = np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
        pts = _collar_samples(flower, 7, 200, 5 * flower.c2)
        d = flower.signed_distance(pts)
        from scipy.spatial import cKDTree
        oracle, _ = cKDTree(bd).query(pts)
        xi = nearest_point(flower, pts)
        h = flower.h
        assert np.abs(np.linalg.norm(pts - xi, axis=1) - oracle).max() <= 2 * h * h
        assert np.abs(np.abs(d) - oracle).max() <= 2 * h * h

    def test_center_outside_collar_errors(self, disk):
        with pytest.raises(ValidationError):
            nearest_point(disk, (0.0, 0.0))


class TestReflect:
    def test_disk_collinear(self, disk):
        xt = reflect(disk, (0.9, 0.0))
        assert np.allclose(xt, (1.1, 0.0), atol=1e-9)

    def test_isometry_about_foot(self, flower):
        pts = _collar_samples(flower, 11, 300, 5 * flower.c2)
        xt = reflect(flower, pts)
        xi = nearest_point(flower, pts)
        lhs = np.linalg.norm(xt - xi, axis=1)
        rhs = np.linalg.norm(pts - xi, axis=1)
        assert np.abs(lhs - rhs).max() <= 1e-12

    def test_involution(self, flower):
        pts = _collar_samples(flower, 13, 1000, 4 * flower.c2)
        back = reflect(flower, reflect(flower, pts))
        worst = np.linalg.norm(back - pts, axis=1).max()
        assert worst <= 4 * flower.h * flower.h


class TestReflectedBall:
    def test_on_boundary_nonempty_and_contained(self, disk):
        a = np.array([1.0, 0.0])
        m = reflected_ball_mask(disk, a, 0.05)
        assert m.any()
        X, Y = disk.cell_centers()
        rr = np.hypot(X[m] - a[0], Y[m] - a[1])
        assert rr.max() < 0.25

    def test_deep_center_small_radius_empty(self, disk):
        a = np.array([0.8, 0.0])          # dist to boundary 0.2
        m = reflected_ball_mask(disk, a, 0.1)
        assert not m.any()

    def test_flower_five_r_inclusion_sampled(self, flower):
        # Hypotheses: a in N_{2 c2}, dist(a, boundary) <= r, B_r(a) in N_{3 c2}
        g = flower
        rng = np.random.default_rng(17)
        pts = _collar_samples(g, 17, 20_000, 2 * g.c2)
        da = np.abs(g.signed_distance(pts))
        rmax = 2.9 * g.c2 - da
        keep = rmax > da
        pts, da, rmax = pts[keep], da[keep], rmax[keep]
        rs = rng.uniform(da, rmax)
        X, Y = g.cell_centers()
        checked = 0
        for p, r in zip(pts, rs):
            m = reflected_ball_mask(g, p, r)
            checked += 1
            if m.any():
                rr = np.hypot(X[m] - p[0], Y[m] - p[1])
                assert rr.max() < 5 * r + 1e-12
            if checked >= 10_000:
                break
        assert checked >= 10_000

    def test_center_outside_two_collars_errors(self, disk):
        with pytest.raises(ValidationError):
            reflected_ball_mask(disk, (0.0, 0.0), 0.05)


class TestReflectionInequalities:
    def test_symmetric_pair_on_disk(self, disk):
        p = (0.97, 0.0)
        rep = reflection_inequality_check(disk, p, p)
        assert not rep["skipped"]
        assert not rep["violation"]
        assert rep["lhs"] == pytest.approx(rep["rhs_factor2"] / 2, abs=1e-12)

    def test_flower_sampled_pairs_no_violation(self, flower):
        g = flower
        rng = np.random.default_rng(19)
        ys = _collar_samples(g, 23, 200_000, g.c2 / 2)
        ys = ys[g.signed_distance(ys) <= 0]
        tys = reflect(g, ys)
        ang = rng.uniform(0, 2 * np.pi, size=len(ys))
        rad = rng.uniform(0, g.c2 / 2, size=len(ys))
        xs = tys + rad[:, None] * np.stack([np.cos(ang), np.sin(ang)], axis=1)
        xs_in = g.signed_distance(xs) <= 0
        checked = 0
        for x, y, ok in zip(xs, ys, xs_in):
            if not ok:
                continue
            rep = reflection_inequality_check(g, x, y)
            if rep["skipped"]:
                continue
            checked += 1
            assert not rep["violation"]
            if checked >= 10_000:
                break
        assert checked >= 10_000

    def test_precondition_violation_is_skipped(self, disk):
        rep = reflection_inequality_check(disk, (0.1, 0.0), (0.2, 0.0))
        assert rep["skipped"]
        assert not rep["violation"]


class TestCustomDomain:
    def test_ellipse_like_level_set(self):
        spec = DomainSpec.custom("hypot(x / 1.2, y) - 1.0",
                                 ((-1.5, 1.5), (-1.3, 1.3)))
        g = build_domain(spec, 0.02)
        assert g.kappa > 0
        assert g.inside_count > 0
        d0 = g.signed_distance(np.array([[0.0, 0.0]]))[0]
        assert d0 < -0.9
