"""Monte Carlo propagation of tilt-angle noise and enclosing-ellipse summaries.

Each measured tilt is resampled from its normal distribution; the pairwise
cone systems are re-solved per sample (root nearest the deterministic
solution, preventing branch hopping) and each axis-pair subset yields a
cloud in flattened (phi, psi) coordinates.  A cloud is summarized by the
minimum-volume enclosing ellipse of its best 99.7%, reported as (mu, Sigma)
with Sigma scaled so the ellipse boundary is the 3-sigma contour:

    boundary = { x : (x - mu)^T (9 Sigma)^(-1) (x - mu) = 1 }.

Sampling uses counter-based Philox streams keyed per measurement, so per-
measurement sample streams are reproducible regardless of execution order;
results are bit-identical for a fixed (measurements, n, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .cones import ConeMeasurement, FieldEstimate, reconstruct_triple
from .errors import DegenerateEllipseError

DEFAULT_COVERAGE = 0.997
MVEE_GAP_TOL = 1e-8          # relative duality gap target
MVEE_ITERATION_CAP = 10_000
DROP_WARNING_FRACTION = 0.01  # disjoint-sample fraction that flags unstable geometry


@dataclass(frozen=True)
class AngleCloud:
    """Monte Carlo (phi, psi) samples for one axis-pair subset, degrees."""

    subset_label: str
    points: np.ndarray            # shape (n, 2), columns phi/psi
    n_dropped: int = 0            # samples whose cones were disjoint
    warnings: tuple[str, ...] = field(default=())

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
            raise ValueError(f"points must have shape (n, 2), got {pts.shape}")
        psi = pts[:, 1]
        if np.any(psi < 0.0) or np.any(psi > 180.0):
            raise ValueError("psi values must lie in [0, 180] deg")
        if np.ptp(pts[:, 0]) > 360.0:
            raise ValueError("phi values must lie on a single 360-deg branch")
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class EllipseEstimate:
    """Center and covariance of the enclosing ellipse, degrees / degrees^2."""

    center_mu: np.ndarray         # (phi, psi)
    covariance_sigma: np.ndarray  # 2x2, boundary at the 3-sigma contour
    coverage: float
    n_trimmed: int = 0

    def __post_init__(self):
        mu = np.asarray(self.center_mu, dtype=float)
        sig = np.asarray(self.covariance_sigma, dtype=float)
        if mu.shape != (2,) or sig.shape != (2, 2):
            raise ValueError("center must be length 2 and covariance 2x2")
        if not 0.0 < self.coverage <= 1.0:
            raise ValueError(f"coverage must lie in (0, 1], got {self.coverage}")
        try:
            np.linalg.cholesky(sig)
        except np.linalg.LinAlgError as err:
            raise ValueError("covariance must be positive definite") from err
        object.__setattr__(self, "center_mu", mu)
        object.__setattr__(self, "covariance_sigma", sig)


def _measurement_stream(seed: int, index: int) -> np.random.Generator:
    # One Philox stream per measurement: key = (seed, measurement index).
    return np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), index]))


def sample_tilt_angles(measurements, n_samples: int, seed: int):
    """Independent Normal(theta_i, sigma_i) draws per measurement, degrees.

    Samples are clamped to the physical range [0, 90] deg.  Returns one
    array of length ``n_samples`` per measurement, deterministic for a
    fixed seed and independent of evaluation order.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    out = []
    for index, m in enumerate(measurements):
        draws = m.theta_deg + m.sigma_deg * _measurement_stream(seed, index).standard_normal(
            n_samples
        )
        out.append(np.clip(draws, 0.0, 90.0))
    return out


def _pair_label(m_i: ConeMeasurement, m_j: ConeMeasurement) -> str:
    return f"{m_i.axis.label}+{m_j.axis.label}"


def propagate_subsets(
    measurements,
    n_samples: int,
    seed: int,
    reference: FieldEstimate | None = None,
):
    """Monte Carlo clouds for the three axis-pair subsets of a triple.

    Per sample and pair the two plane equations plus normalization are
    solved with the sign assignment realized by the deterministic triple
    solution; of the two sphere roots the one nearest that solution is
    kept.  Samples with disjoint cones are dropped and counted; a subset
    losing more than 1% of its samples carries an unstable-geometry
    warning.
    """
    measurements = tuple(measurements)
    if len(measurements) != 3:
        raise ValueError(f"exactly three measurements required, got {len(measurements)}")
    if len({m.axis.label for m in measurements}) != 3:
        raise ValueError("measurements must use three distinct axes")
    if reference is None:
        reference = reconstruct_triple(measurements)
    ref_dir = reference.direction
    phi_ref = reference.phi_deg
    signs = [math.copysign(1.0, float(np.dot(ref_dir, m.axis.direction))) for m in measurements]

    theta_samples = sample_tilt_angles(measurements, n_samples, seed)
    constants = [
        signs[k] * np.cos(np.radians(theta_samples[k])) for k in range(3)
    ]

    clouds = []
    for (ia, ib) in ((0, 1), (0, 2), (1, 2)):
        ni = measurements[ia].axis.direction
        nj = measurements[ib].axis.direction
        g = float(np.dot(ni, nj))
        den = 1.0 - g * g
        ci, cj = constants[ia], constants[ib]
        alpha = (ci - g * cj) / den
        beta = (cj - g * ci) / den
        b_par = alpha[:, None] * ni + beta[:, None] * nj
        t2 = (1.0 - (alpha**2 + beta**2 + 2.0 * g * alpha * beta)) / den
        keep = t2 >= 0.0
        n_dropped = int(np.sum(~keep))
        if n_dropped == n_samples:
            raise DegenerateEllipseError(
                f"all samples dropped for subset {_pair_label(measurements[ia], measurements[ib])}"
            )
        t = np.sqrt(t2[keep])
        cross = np.cross(ni, nj)
        roots_plus = b_par[keep] + t[:, None] * cross
        roots_minus = b_par[keep] - t[:, None] * cross
        nearer_plus = (roots_plus @ ref_dir) >= (roots_minus @ ref_dir)
        chosen = np.where(nearer_plus[:, None], roots_plus, roots_minus)
        chosen /= np.linalg.norm(chosen, axis=1, keepdims=True)

        phi = np.degrees(np.arctan2(chosen[:, 1], chosen[:, 0]))
        psi = np.degrees(np.arccos(np.clip(chosen[:, 2], -1.0, 1.0)))
        # Unwrap onto the branch containing the reference azimuth.
        phi = phi + 360.0 * np.round((phi_ref - phi) / 360.0)

        warnings = ()
        if n_dropped > DROP_WARNING_FRACTION * n_samples:
            warnings = (
                f"unstable geometry: {n_dropped}/{n_samples} samples had disjoint cones",
            )
        clouds.append(
            AngleCloud(
                subset_label=_pair_label(measurements[ia], measurements[ib]),
                points=np.column_stack([phi, psi]),
                n_dropped=n_dropped,
                warnings=warnings,
            )
        )
    return clouds


def _mvee(points: np.ndarray, tol: float, iteration_cap: int):
    """Minimum-volume enclosing ellipse by Khachiyan-type iterations.

    Works on the convex hull only (the optimum depends on hull vertices
    alone) and uses Frank-Wolfe steps with away steps so the duality gap
    target is reachable; the returned ellipse is rescaled to contain every
    input point exactly.  Returns (center, shape E) with the ellipse
    { x : (x-c)^T E (x-c) <= 1 }.
    """
    d = points.shape[1]
    try:
        hull_points = points[np.unique(ConvexHull(points).vertices)]
    except QhullError as err:
        raise DegenerateEllipseError(f"rank-deficient point set: {err}") from err
    m = hull_points.shape[0]
    lifted = np.column_stack([hull_points, np.ones(m)])

    # Kumar-Yildirim style start: extremes along fixed directions.
    u = np.zeros(m)
    for direction in ((1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, -1.0)):
        proj = hull_points @ np.asarray(direction)
        u[int(np.argmax(proj))] = 1.0
        u[int(np.argmin(proj))] = 1.0
    if u.sum() == 0.0:
        u[:] = 1.0
    u /= u.sum()

    target = d + 1.0
    for _ in range(iteration_cap):
        x_mat = lifted.T @ (lifted * u[:, None])
        try:
            x_inv = np.linalg.inv(x_mat)
        except np.linalg.LinAlgError as err:
            raise DegenerateEllipseError("singular moment matrix") from err
        w = np.einsum("ij,jk,ik->i", lifted, x_inv, lifted)
        j_up = int(np.argmax(w))
        gap_up = w[j_up] - target
        support = np.where(u > 1e-14)[0]
        j_dn = support[int(np.argmin(w[support]))]
        gap_dn = target - w[j_dn]
        if gap_up <= tol * target and gap_dn <= tol * target:
            break
        if gap_up >= gap_dn:
            step = gap_up / (target * (w[j_up] - 1.0))
            u *= 1.0 - step
            u[j_up] += step
        else:
            step = gap_dn / (target * (w[j_dn] - 1.0))
            step = min(step, u[j_dn] / (1.0 - u[j_dn]))
            u *= 1.0 + step
            u[j_dn] -= step
            np.clip(u, 0.0, None, out=u)

    center = u @ hull_points
    second_moment = hull_points.T @ (hull_points * u[:, None]) - np.outer(center, center)
    try:
        shape = np.linalg.inv(second_moment) / d
    except np.linalg.LinAlgError as err:
        raise DegenerateEllipseError("degenerate second-moment matrix") from err
    # Exact containment: the largest quadratic-form value defines the boundary.
    deltas = points - center
    values = np.einsum("ij,jk,ik->i", deltas, shape, deltas)
    max_value = float(np.max(values))
    if max_value <= 0.0:
        raise DegenerateEllipseError("all points coincide with the center")
    return center, shape / max_value


def enclosing_ellipse(cloud, coverage: float = DEFAULT_COVERAGE) -> EllipseEstimate:
    """Smallest enclosing ellipse of the best ``coverage`` fraction of a cloud.

    The ceil((1-coverage) n) points of largest Mahalanobis distance under
    the sample covariance are discarded; the minimum-volume enclosing
    ellipse of the rest is computed to a 1e-8 duality gap (cap 10^4
    iterations) and reported with the boundary identified as the 3-sigma
    contour.  Collinear or coincident point sets raise
    ``DegenerateEllipseError``.
    """
    points = cloud.points if isinstance(cloud, AngleCloud) else np.asarray(cloud, dtype=float)
    if not 0.0 < coverage <= 1.0:
        raise ValueError(f"coverage must lie in (0, 1], got {coverage}")
    n = points.shape[0]
    n_trim = int(math.ceil((1.0 - coverage) * n))
    if n - n_trim < 3:
        raise ValueError(f"{n} points with coverage {coverage} leave fewer than 3")

    if n_trim > 0:
        mean = points.mean(axis=0)
        centered = points - mean
        cov = centered.T @ centered / (n - 1)
        try:
            cov_inv = np.linalg.inv(cov)
        except np.linalg.LinAlgError as err:
            raise DegenerateEllipseError("singular sample covariance") from err
        mahalanobis = np.einsum("ij,jk,ik->i", centered, cov_inv, centered)
        keep_idx = np.argsort(mahalanobis, kind="stable")[: n - n_trim]
        kept = points[np.sort(keep_idx)]
    else:
        kept = points

    # Condition the problem: shift/scale per coordinate (affine-equivariant).
    offset = kept.mean(axis=0)
    scale = kept.std(axis=0)
    if np.any(scale <= 0.0) or not np.all(np.isfinite(scale)):
        raise DegenerateEllipseError("point set is collinear or coincident")
    conditioned = (kept - offset) / scale
    center_c, shape_c = _mvee(conditioned, MVEE_GAP_TOL, MVEE_ITERATION_CAP)

    scale_inv = np.diag(1.0 / scale)
    shape = scale_inv @ shape_c @ scale_inv
    center = offset + scale * center_c
    try:
        sigma = np.linalg.inv(shape) / 9.0  # boundary = 3-sigma contour
    except np.linalg.LinAlgError as err:
        raise DegenerateEllipseError("degenerate ellipse shape") from err
    sigma = (sigma + sigma.T) / 2.0
    return EllipseEstimate(
        center_mu=center, covariance_sigma=sigma, coverage=coverage, n_trimmed=n_trim
    )


def combine_subsets(clouds, coverage: float = DEFAULT_COVERAGE) -> EllipseEstimate:
    """Enclosing ellipse of the union of the three subset clouds."""
    clouds = tuple(clouds)
    if len(clouds) != 3:
        raise ValueError(f"exactly three clouds required, got {len(clouds)}")
    stacked = np.vstack([c.points for c in clouds])
    if np.ptp(stacked[:, 0]) > 360.0:
        raise ValueError("clouds do not share a common phi branch")
    return enclosing_ellipse(stacked, coverage=coverage)


def bivariate_pdf(x, est: EllipseEstimate) -> float:
    """Bivariate normal density at ``x`` for the ellipse's (mu, Sigma)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (2,):
        raise ValueError(f"x must have shape (2,), got {x.shape}")
    sigma = est.covariance_sigma
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as err:
        raise ValueError("covariance must be positive definite") from err
    delta = x - est.center_mu
    solved = np.linalg.solve(chol, delta)
    quad = float(solved @ solved)
    det = float(np.linalg.det(sigma))
    return math.exp(-0.5 * quad) / (2.0 * math.pi * math.sqrt(det))
