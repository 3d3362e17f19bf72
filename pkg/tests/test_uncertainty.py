"""Uncertainty tests: sampling determinism, propagation, ellipse properties.

Containment and minimality are probed directly on the returned quadratic
form; the pdf normalization is checked by trapezoidal quadrature.
"""

import math

import numpy as np
import pytest

from nvfield import (
    ConeMeasurement,
    EllipseEstimate,
    bivariate_pdf,
    combine_subsets,
    enclosing_ellipse,
    nv_axis,
    propagate_subsets,
    reconstruct_triple,
    sample_tilt_angles,
)
from nvfield.cones import folded_tilt_deg
from nvfield.errors import DegenerateEllipseError
from nvfield.uncertainty import AngleCloud

PAPER_MEASUREMENTS = (
    ConeMeasurement(axis=nv_axis("NV1"), theta_deg=13.44, sigma_deg=0.15),
    ConeMeasurement(axis=nv_axis("NV2"), theta_deg=62.924, sigma_deg=0.005),
    ConeMeasurement(axis=nv_axis("NV3"), theta_deg=66.612, sigma_deg=0.006),
)


def ellipse_form_values(est, points):
    """(x - mu)^T (9 Sigma)^(-1) (x - mu) for every point."""
    inv = np.linalg.inv(9.0 * est.covariance_sigma)
    deltas = np.asarray(points) - est.center_mu
    return np.einsum("ij,jk,ik->i", deltas, inv, deltas)


def gaussian_cloud(seed, n=800, center=(10.0, 100.0), spread=(1.0, 0.4), tilt_deg=30.0):
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((n, 2)) * spread
    r = math.radians(tilt_deg)
    rot = np.array([[math.cos(r), -math.sin(r)], [math.sin(r), math.cos(r)]])
    return raw @ rot.T + center


class TestSampling:
    def test_zero_sigma_limit(self):
        m = ConeMeasurement(axis=nv_axis("NV1"), theta_deg=40.0, sigma_deg=1e-300)
        (samples,) = sample_tilt_angles([m], 1000, seed=1)
        assert np.allclose(samples, 40.0, atol=1e-290)

    def test_sample_moments(self):
        m = ConeMeasurement(axis=nv_axis("NV2"), theta_deg=62.924, sigma_deg=0.005)
        (samples,) = sample_tilt_angles([m], 100_000, seed=2)
        assert 0.0049 <= np.std(samples) <= 0.0051
        assert abs(np.mean(samples) - 62.924) < 4 * 0.005 / math.sqrt(100_000)

    def test_bit_identical_across_runs(self):
        a = sample_tilt_angles(PAPER_MEASUREMENTS, 5000, seed=42)
        b = sample_tilt_angles(PAPER_MEASUREMENTS, 5000, seed=42)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_streams_independent_of_order(self):
        # per-measurement streams keyed by index: subsetting does not reshuffle
        full = sample_tilt_angles(PAPER_MEASUREMENTS, 100, seed=9)
        first_two = sample_tilt_angles(PAPER_MEASUREMENTS[:2], 100, seed=9)
        assert np.array_equal(full[0], first_two[0])
        assert np.array_equal(full[1], first_two[1])

    def test_clamped_to_physical_range(self):
        m = ConeMeasurement(axis=nv_axis("NV1"), theta_deg=0.5, sigma_deg=5.0)
        (samples,) = sample_tilt_angles([m], 10_000, seed=3)
        assert samples.min() >= 0.0 and samples.max() <= 90.0


class TestPropagation:
    def test_zero_noise_collapse(self):
        tight = tuple(
            ConeMeasurement(axis=m.axis, theta_deg=m.theta_deg, sigma_deg=1e-12)
            for m in PAPER_MEASUREMENTS
        )
        reference = reconstruct_triple(tight)
        clouds = propagate_subsets(tight, 500, seed=4, reference=reference)
        for cloud in clouds:
            # every sample solves the pair system at the deterministic angles
            assert np.ptp(cloud.points[:, 0]) < 1e-9
            assert np.ptp(cloud.points[:, 1]) < 1e-9

    def test_paper_clouds_near_center(self):
        clouds = propagate_subsets(PAPER_MEASUREMENTS, 20_000, seed=5)
        assert [c.subset_label for c in clouds] == ["NV1+NV2", "NV1+NV3", "NV2+NV3"]
        for cloud in clouds:
            mean = cloud.points.mean(axis=0)
            assert abs(mean[0] - (-33.45)) < 1.5
            assert abs(mean[1] - 116.50) < 1.5

    def test_spread_scales_with_sigma(self):
        doubled = tuple(
            ConeMeasurement(axis=m.axis, theta_deg=m.theta_deg, sigma_deg=2 * m.sigma_deg)
            for m in PAPER_MEASUREMENTS
        )
        base = propagate_subsets(PAPER_MEASUREMENTS, 50_000, seed=6)
        wide = propagate_subsets(doubled, 50_000, seed=6)
        for b, w in zip(base, wide):
            ratio = np.std(w.points, axis=0) / np.std(b.points, axis=0)
            assert np.all(np.abs(ratio - 2.0) < 0.2)  # linear regime within 10%

    def test_determinism(self):
        a = propagate_subsets(PAPER_MEASUREMENTS, 5000, seed=7)
        b = propagate_subsets(PAPER_MEASUREMENTS, 5000, seed=7)
        for ca, cb in zip(a, b):
            assert np.array_equal(ca.points, cb.points)

    def test_drop_warning_on_unstable_geometry(self):
        # grazing pair: theta1 + theta4 close to the internal tangency
        m = (
            ConeMeasurement(axis=nv_axis("NV1"), theta_deg=13.44, sigma_deg=0.3),
            ConeMeasurement(axis=nv_axis("NV2"), theta_deg=62.924, sigma_deg=0.005),
            ConeMeasurement(axis=nv_axis("NV4"), theta_deg=84.0, sigma_deg=0.5),
        )
        clouds = propagate_subsets(m, 20_000, seed=8)
        label_to_cloud = {c.subset_label: c for c in clouds}
        grazing = label_to_cloud["NV1+NV4"]
        assert grazing.n_dropped > 0.01 * 20_000
        assert grazing.warnings and "unstable" in grazing.warnings[0]


class TestEnclosingEllipse:
    def test_four_point_square(self):
        pts = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        est = enclosing_ellipse(pts, coverage=1.0)
        assert np.allclose(est.center_mu, [0.0, 0.0], atol=1e-9)
        values = ellipse_form_values(est, pts)
        # circle through all four points
        assert np.allclose(values, 1.0, atol=1e-6)

    @pytest.mark.parametrize("seed", range(8))
    def test_containment_and_minimality(self, seed):
        pts = gaussian_cloud(seed)
        est = enclosing_ellipse(pts, coverage=0.997)
        n_keep = pts.shape[0] - est.n_trimmed
        # identify the kept subset the same way the implementation does
        mean = pts.mean(axis=0)
        centered = pts - mean
        cov_inv = np.linalg.inv(centered.T @ centered / (pts.shape[0] - 1))
        order = np.argsort(np.einsum("ij,jk,ik->i", centered, cov_inv, centered), kind="stable")
        kept = pts[np.sort(order[:n_keep])]
        values = ellipse_form_values(est, kept)
        assert values.max() <= 1.0 + 1e-6
        # shrinking the radii by 0.999 must lose at least one kept point
        assert values.max() * (1.0 / 0.999**2) > 1.0

    def test_coverage_monotonicity(self):
        pts = gaussian_cloud(99, n=2000)
        areas = []
        for coverage in (0.9, 0.95, 0.99, 0.997, 1.0):
            est = enclosing_ellipse(pts, coverage=coverage)
            areas.append(math.pi * 9.0 * math.sqrt(np.linalg.det(est.covariance_sigma)))
        assert all(a2 >= a1 - 1e-12 for a1, a2 in zip(areas, areas[1:]))

    def test_collinear_rejected(self):
        t = np.linspace(0, 1, 50)
        pts = np.column_stack([t, 2.0 * t + 1.0])
        with pytest.raises(DegenerateEllipseError):
            enclosing_ellipse(pts, coverage=1.0)

    def test_identical_points_rejected(self):
        pts = np.tile([[3.0, 4.0]], (20, 1))
        with pytest.raises(DegenerateEllipseError):
            enclosing_ellipse(pts, coverage=1.0)

    def test_tiny_cloud_scale(self):
        # zero-noise limit: radii collapse with the sample spread
        rng = np.random.default_rng(12)
        pts = np.array([50.0, 70.0]) + 1e-6 * rng.standard_normal((500, 2))
        est = enclosing_ellipse(pts, coverage=1.0)
        radii = np.sqrt(np.linalg.eigvalsh(9.0 * est.covariance_sigma))
        assert np.all(radii < 1e-4)

    def test_bad_coverage_rejected(self):
        with pytest.raises(ValueError):
            enclosing_ellipse(gaussian_cloud(1), coverage=0.0)


class TestCombineSubsets:
    def test_paper_pipeline_union(self):
        clouds = propagate_subsets(PAPER_MEASUREMENTS, 20_000, seed=11)
        est = combine_subsets(clouds)
        assert abs(est.center_mu[0] - (-33.45)) < 0.5
        assert abs(est.center_mu[1] - 116.50) < 0.5
        # deterministic point inside the 3-sigma ellipse
        det = reconstruct_triple(PAPER_MEASUREMENTS)
        value = ellipse_form_values(est, [[det.phi_deg, det.psi_deg]])[0]
        assert value <= 1.0

    def test_union_containment(self):
        clouds = propagate_subsets(PAPER_MEASUREMENTS, 5000, seed=13)
        est = combine_subsets(clouds, coverage=1.0)
        union = np.vstack([c.points for c in clouds])
        assert ellipse_form_values(est, union).max() <= 1.0 + 1e-6

    def test_wrong_count_rejected(self):
        clouds = propagate_subsets(PAPER_MEASUREMENTS, 1000, seed=14)
        with pytest.raises(ValueError):
            combine_subsets(clouds[:2])


class TestBivariatePdf:
    def make_estimate(self, sigma):
        return EllipseEstimate(
            center_mu=np.array([1.0, -2.0]),
            covariance_sigma=np.asarray(sigma, dtype=float),
            coverage=0.997,
        )

    def test_peak_value(self):
        est = self.make_estimate([[2.0, 0.3], [0.3, 0.5]])
        det = np.linalg.det(est.covariance_sigma)
        assert bivariate_pdf(est.center_mu, est) == pytest.approx(
            1.0 / (2 * math.pi * math.sqrt(det))
        )

    def test_unit_circle_closed_form(self):
        est = self.make_estimate(np.eye(2))
        x = est.center_mu + np.array([1.0, 0.0])
        assert bivariate_pdf(x, est) == pytest.approx(math.exp(-0.5) / (2 * math.pi))

    def test_normalization_by_quadrature(self):
        # trapezoidal quadrature over a 6-sigma box
        est = self.make_estimate([[1.5, -0.4], [-0.4, 0.8]])
        sds = np.sqrt(np.diag(est.covariance_sigma))
        xs = np.linspace(est.center_mu[0] - 6 * sds[0], est.center_mu[0] + 6 * sds[0], 201)
        ys = np.linspace(est.center_mu[1] - 6 * sds[1], est.center_mu[1] + 6 * sds[1], 201)
        grid = np.array([[bivariate_pdf(np.array([x, y]), est) for y in ys] for x in xs])
        integral = np.trapezoid(np.trapezoid(grid, ys, axis=1), xs)
        assert abs(integral - 1.0) < 1e-3

    def test_non_positive_definite_rejected(self):
        with pytest.raises(ValueError):
            self.make_estimate([[1.0, 2.0], [2.0, 1.0]])

    def test_three_identical_clouds_degenerate(self):
        point = np.array([[10.0, 20.0]])
        clouds = [
            AngleCloud(subset_label=f"c{k}", points=point.repeat(10, axis=0))
            for k in range(3)
        ]
        with pytest.raises(DegenerateEllipseError):
            combine_subsets(clouds, coverage=1.0)
