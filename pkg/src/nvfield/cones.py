"""Tilt-angle extraction and cone-intersection geometry on the NV tetrahedron.

A pulsed-ODMR measurement of one NV orientation yields the tilt angle
theta between the field and that NV axis, folded into [0, 90] deg because
the splitting cannot distinguish B from -B.  Each measurement therefore
constrains the unit field direction to a cone; the plane equation of the
cone-sphere cut for axis n_i is

    n_i . B = s_i cos(theta_i),   s_i in {+1, -1},

and two such planes plus |B| = 1 leave a quadratic with 0, 1 or 2 roots.
Three measured orientations pin the direction up to the global B/-B sign.

All functions are pure; measurement values never mutate.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .constants import PhysicalConstants
from .errors import (
    AmbiguousSolutionError,
    ConesDisjointError,
    InconsistentConesError,
    InconsistentFrequenciesError,
)

_SQRT3 = math.sqrt(3.0)

# arccos(1/sqrt(3)) = 54.7356... deg, the tetrahedral folding boundary.
MAGIC_ANGLE_DEG = math.degrees(math.acos(1.0 / _SQRT3))
# Angle between distinct tetrahedral axes, arccos(-1/3) = 109.47 deg.
TETRAHEDRAL_ANGLE_DEG = math.degrees(math.acos(-1.0 / 3.0))

TANGENCY_TOL_DEG = 1e-6      # angle-sum window treated as cone tangency
CLUSTER_THRESHOLD_DEG = 5.0  # pairwise roots closer than this form one cluster
DEGENERACY_TOL_DEG = 1e-2    # all-axes proximity to the magic angle

AXIS_LABELS = ("NV1", "NV2", "NV3", "NV4")
_AXIS_DIRECTIONS = {
    "NV1": np.array([1.0, -1.0, -1.0]) / _SQRT3,
    "NV2": np.array([-1.0, 1.0, -1.0]) / _SQRT3,
    "NV3": np.array([-1.0, -1.0, 1.0]) / _SQRT3,
    "NV4": np.array([1.0, 1.0, 1.0]) / _SQRT3,
}


@dataclass(frozen=True)
class NvAxis:
    """One of the four NV principal-axis orientations in the cubic frame."""

    label: str
    direction: np.ndarray

    def __post_init__(self):
        if self.label not in _AXIS_DIRECTIONS:
            raise ValueError(f"unknown NV axis label {self.label!r}")
        expected = _AXIS_DIRECTIONS[self.label]
        got = np.asarray(self.direction, dtype=float)
        if got.shape != (3,) or np.max(np.abs(got - expected)) > 1e-12:
            raise ValueError(f"direction does not match the {self.label} catalog entry")
        object.__setattr__(self, "direction", expected.copy())


def nv_axis(label: str) -> NvAxis:
    """Catalog lookup: NV1=[1,-1,-1], NV2=[-1,1,-1], NV3=[-1,-1,1], NV4=[1,1,1]."""
    if label not in _AXIS_DIRECTIONS:
        raise ValueError(f"unknown NV axis label {label!r}")
    return NvAxis(label=label, direction=_AXIS_DIRECTIONS[label])


def all_axes() -> tuple[NvAxis, ...]:
    return tuple(nv_axis(lbl) for lbl in AXIS_LABELS)


@dataclass(frozen=True)
class ConeMeasurement:
    """Measured tilt angle of the field to one NV axis, with its uncertainty."""

    axis: NvAxis
    theta_deg: float
    sigma_deg: float

    def __post_init__(self):
        if not 0.0 <= self.theta_deg <= 90.0:
            raise ValueError(f"theta_deg must lie in [0, 90], got {self.theta_deg}")
        if not self.sigma_deg > 0.0:
            raise ValueError(f"sigma_deg must be positive, got {self.sigma_deg}")


@dataclass(frozen=True)
class FieldEstimate:
    """Reconstructed unit field direction with spherical angles and residuals."""

    direction: np.ndarray
    phi_deg: float
    psi_deg: float
    residuals_deg: dict[str, float]
    warnings: tuple[str, ...] = field(default=())


def extract_field_and_tilt(
    f_minus: float, f_plus: float, c: PhysicalConstants
) -> tuple[float, float]:
    """Closed-form (|B| in Gauss, theta in degrees) from one transition pair.

    Uses the exact S=1 invariants of the electron Hamiltonian: with
    lam0 = (2D - f+ - f-)/3 the ms=0-like eigenvalue,

        gamma^2 B^2 = (f+^2 + f-^2 - f+ f- - D^2) / 3
        sin^2 theta = -lam0 (lam0 + f+)(lam0 + f-) / (D gamma^2 B^2)

    theta is clamped to [0, 90] deg; sin^2 values within 1e-9 of [0, 1] are
    clamped onto the boundary.  Inconsistent pairs (typically misidentified
    peaks) raise ``InconsistentFrequenciesError``.
    """
    if f_minus > f_plus:
        raise ValueError(f"f_minus={f_minus} exceeds f_plus={f_plus}")
    d = c.zfs_d_mhz
    lam0 = (2.0 * d - f_plus - f_minus) / 3.0
    gamma2_b2 = (f_plus**2 + f_minus**2 - f_plus * f_minus - d**2) / 3.0
    if gamma2_b2 <= 0.0:
        raise InconsistentFrequenciesError(
            f"frequencies ({f_minus}, {f_plus}) imply non-positive field magnitude",
            f_minus=f_minus,
            f_plus=f_plus,
        )
    sin2 = -lam0 * (lam0 + f_plus) * (lam0 + f_minus) / (d * gamma2_b2)
    if sin2 < -1e-9 or sin2 > 1.0 + 1e-9:
        raise InconsistentFrequenciesError(
            f"frequencies ({f_minus}, {f_plus}) imply sin^2(theta) = {sin2:.3e} "
            f"outside [0, 1]",
            f_minus=f_minus,
            f_plus=f_plus,
        )
    sin2 = 0.0 if sin2 <= 0.0 else min(sin2, 1.0)
    magnitude = math.sqrt(gamma2_b2) / c.gamma_e_mhz_per_g
    theta = math.degrees(math.asin(math.sqrt(sin2)))
    return magnitude, theta


def fold_angle(theta_deg: float) -> tuple[float, float]:
    """Fold a measured tilt across the tetrahedral boundary arccos(1/sqrt(3)).

    Returns (theta_folded_deg, sign): the identity with sign +1 for
    theta <= 54.7356 deg, otherwise (180 - theta, -1), i.e. the same cone
    described about the point-mirrored axis.  The sign multiplies the plane
    constant cos(theta) in the intersection equations.
    """
    if not 0.0 <= theta_deg <= 90.0:
        raise ValueError(f"theta_deg must lie in [0, 90], got {theta_deg}")
    if theta_deg <= MAGIC_ANGLE_DEG:
        return theta_deg, 1.0
    return 180.0 - theta_deg, -1.0


def to_spherical(direction: np.ndarray) -> tuple[float, float]:
    """(phi, psi) in degrees for a unit vector: psi from +z, phi = atan2(y, x).

    phi is defined as 0 on the poles.  Raises ``ValueError`` when the input
    norm deviates from 1 by more than 1e-9.
    """
    v = np.asarray(direction, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"direction needs 3 components, got shape {v.shape}")
    if abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise ValueError(f"direction is not a unit vector (norm {np.linalg.norm(v)!r})")
    psi = math.degrees(math.acos(min(max(v[2], -1.0), 1.0)))
    if psi == 0.0 or psi == 180.0:
        return 0.0, psi
    phi = math.degrees(math.atan2(v[1], v[0]))
    if phi <= -180.0:
        phi = 180.0
    return phi, psi


def spherical_to_direction(phi_deg: float, psi_deg: float) -> np.ndarray:
    """Unit vector for azimuth phi and polar angle psi, both in degrees."""
    phi = math.radians(phi_deg)
    psi = math.radians(psi_deg)
    return np.array(
        [math.sin(psi) * math.cos(phi), math.sin(psi) * math.sin(phi), math.cos(psi)]
    )


def folded_tilt_deg(direction: np.ndarray, axis: NvAxis) -> float:
    """Tilt of a unit direction to an NV axis, folded into [0, 90] deg."""
    d = abs(float(np.dot(direction, axis.direction)))
    return math.degrees(math.acos(min(d, 1.0)))


def _pair_quadratic(ni, nj, ci, cj):
    """Solve the two plane equations; returns (B_parallel, t^2, cross)."""
    g = float(np.dot(ni, nj))
    den = 1.0 - g * g
    alpha = (ci - g * cj) / den
    beta = (cj - g * ci) / den
    b_par = alpha * ni + beta * nj
    t2 = (1.0 - (alpha * alpha + beta * beta + 2.0 * alpha * beta * g)) / den
    return b_par, t2, np.cross(ni, nj)


def _is_tangent(theta_i, theta_j, signs):
    """Tangency test in angle terms, within TANGENCY_TOL_DEG.

    For equal signs the effective axes are 109.47 deg apart and the cones
    touch externally at theta_i + theta_j = 109.47 deg; for opposite signs
    the separation is 70.53 deg with external (sum) and internal
    (difference) tangencies.
    """
    if signs[0] * signs[1] > 0:
        gamma = TETRAHEDRAL_ANGLE_DEG
    else:
        gamma = 180.0 - TETRAHEDRAL_ANGLE_DEG
    if abs(theta_i + theta_j - gamma) <= TANGENCY_TOL_DEG:
        return True
    if abs(abs(theta_i - theta_j) - gamma) <= TANGENCY_TOL_DEG:
        return True
    return False


def pairwise_intersection(
    m_i: ConeMeasurement, m_j: ConeMeasurement, signs: tuple[float, float]
) -> list[np.ndarray]:
    """Unit directions shared by two tilt cones under a given sign assignment.

    Returns two roots in the generic case and exactly one at tangency
    (detected within 1e-6 deg on the angle conditions).  Raises
    ``ConesDisjointError`` with the discriminant when the cones miss.
    """
    if m_i.axis.label == m_j.axis.label:
        raise ValueError("pairwise intersection needs two distinct axes")
    si, sj = signs
    if si not in (-1.0, 1.0) or sj not in (-1.0, 1.0):
        raise ValueError(f"signs must be +-1, got {signs}")
    ci = si * math.cos(math.radians(m_i.theta_deg))
    cj = sj * math.cos(math.radians(m_j.theta_deg))
    b_par, t2, cross = _pair_quadratic(m_i.axis.direction, m_j.axis.direction, ci, cj)
    if _is_tangent(m_i.theta_deg, m_j.theta_deg, signs):
        norm = np.linalg.norm(b_par)
        if norm == 0.0:
            raise ConesDisjointError(t2, m_i.axis.label, m_j.axis.label)
        return [b_par / norm]
    if t2 < 0.0:
        raise ConesDisjointError(t2, m_i.axis.label, m_j.axis.label)
    t = math.sqrt(t2)
    return [b_par + t * cross, b_par - t * cross]


def _canonicalize(direction, measurements):
    """Pick the B/-B representative: positive dot with the least-tilted axis."""
    least = min(measurements, key=lambda m: m.theta_deg)
    if float(np.dot(direction, least.axis.direction)) < 0.0:
        return -direction
    return direction


def _estimate_from_direction(direction, measurements, warnings=()):
    direction = direction / np.linalg.norm(direction)
    direction = _canonicalize(direction, measurements)
    phi, psi = to_spherical(direction)
    residuals = {
        m.axis.label: abs(m.theta_deg - folded_tilt_deg(direction, m.axis))
        for m in measurements
    }
    return FieldEstimate(
        direction=direction,
        phi_deg=phi,
        psi_deg=psi,
        residuals_deg=residuals,
        warnings=tuple(warnings),
    )


def _angle_between_deg(u, v):
    return math.degrees(math.acos(min(max(float(np.dot(u, v)), -1.0), 1.0)))


def _cluster_roots(root_lists, threshold_deg):
    """Greedy nearest-angle clustering seeded on the first pair's roots.

    Returns a list of (centroid, rms_spread, members) for every seed whose
    nearest partner from each remaining pair lies within the threshold.
    """
    clusters = []
    for seed in root_lists[0]:
        members = [seed]
        ok = True
        for roots in root_lists[1:]:
            dists = [_angle_between_deg(seed, r) for r in roots]
            k = int(np.argmin(dists))
            if dists[k] > threshold_deg:
                ok = False
                break
            members.append(roots[k])
        if not ok:
            continue
        centroid = np.mean(members, axis=0)
        norm = np.linalg.norm(centroid)
        if norm == 0.0:
            continue
        centroid = centroid / norm
        spread = math.sqrt(
            np.mean([_angle_between_deg(centroid, m) ** 2 for m in members])
        )
        clusters.append((centroid, spread, members))
    return clusters


# A just-disjoint pair collapses onto its closest-approach direction when the
# realized tilt misses the measurement by no more than this; rounded inputs
# (the published angles carry 3-5 digits) would otherwise solve as disjoint.
COLLAPSE_TOL_DEG = 0.1


def _solve_with_signs(measurements, signs):
    """All pairwise roots under one sign assignment, or None when any pair is disjoint.

    Pairs that miss tangency by less than COLLAPSE_TOL_DEG (in realized
    tilt) contribute their collapsed tangent root instead of failing.
    """
    root_lists = []
    for (ia, ib) in itertools.combinations(range(3), 2):
        m_a, m_b = measurements[ia], measurements[ib]
        try:
            roots = pairwise_intersection(m_a, m_b, (signs[ia], signs[ib]))
        except ConesDisjointError:
            ca = signs[ia] * math.cos(math.radians(m_a.theta_deg))
            cb = signs[ib] * math.cos(math.radians(m_b.theta_deg))
            b_par, _, _ = _pair_quadratic(m_a.axis.direction, m_b.axis.direction, ca, cb)
            norm = np.linalg.norm(b_par)
            if norm == 0.0:
                return None
            collapsed = b_par / norm
            miss = max(
                abs(m_a.theta_deg - folded_tilt_deg(collapsed, m_a.axis)),
                abs(m_b.theta_deg - folded_tilt_deg(collapsed, m_b.axis)),
            )
            if miss > COLLAPSE_TOL_DEG:
                return None
            roots = [collapsed]
        root_lists.append(roots)
    return root_lists


def _total_residual(direction, measurements):
    return sum(
        (m.theta_deg - folded_tilt_deg(direction, m.axis)) ** 2 for m in measurements
    )


def reconstruct_pair(
    m_i: ConeMeasurement, m_j: ConeMeasurement
) -> list[FieldEstimate]:
    """Candidate directions from two measured orientations.

    Applies the folding heuristic first and falls back to the remaining
    sign assignments when the folded cones are disjoint.  Returns one
    estimate at tangency, otherwise two mirror-symmetric candidates.
    """
    if m_i.axis.label == m_j.axis.label:
        raise ValueError("two distinct axes are required")
    # The grazing configuration takes precedence: at theta_i + theta_j equal
    # to the axis separation the equal-sign cones touch in exactly one point.
    if abs(m_i.theta_deg + m_j.theta_deg - TETRAHEDRAL_ANGLE_DEG) <= TANGENCY_TOL_DEG:
        roots = pairwise_intersection(m_i, m_j, (1.0, 1.0))
        return [_estimate_from_direction(r, (m_i, m_j)) for r in roots]
    _, s_i = fold_angle(m_i.theta_deg)
    _, s_j = fold_angle(m_j.theta_deg)
    assignments = [(s_i, s_j)]
    for alt in ((1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)):
        if alt not in assignments:
            assignments.append(alt)
    last_error = None
    for signs in assignments:
        try:
            roots = pairwise_intersection(m_i, m_j, signs)
        except ConesDisjointError as err:
            last_error = err
            continue
        return [_estimate_from_direction(r, (m_i, m_j)) for r in roots]
    raise last_error


def reconstruct_triple(
    measurements,
    cluster_threshold_deg: float = CLUSTER_THRESHOLD_DEG,
) -> FieldEstimate:
    """Reconstruct the unit field direction from three measured orientations.

    Folds each tilt, solves the three pairwise systems, clusters the roots
    across pairs and returns the renormalized cluster centroid with
    per-axis residuals.  When the folding heuristic yields no consistent
    cluster the solver enumerates sign assignments and keeps the one with
    the smallest total residual.  The B/-B representative is fixed by the
    least-tilted axis.

    Raises ``InconsistentConesError`` when no assignment produces a cluster
    and ``AmbiguousSolutionError`` when two distinct clusters tie.
    """
    measurements = tuple(measurements)
    if len(measurements) != 3:
        raise ValueError(f"exactly three measurements required, got {len(measurements)}")
    labels = {m.axis.label for m in measurements}
    if len(labels) != 3:
        raise ValueError("measurements must use three distinct axes")

    degenerate = all(
        abs(m.theta_deg - MAGIC_ANGLE_DEG) <= DEGENERACY_TOL_DEG for m in measurements
    )
    warnings = ()
    if degenerate:
        # All cones at the magic angle: the solution set is the six cube-axis
        # directions; clamp onto the exact boundary and report the degeneracy.
        measurements = tuple(
            ConeMeasurement(axis=m.axis, theta_deg=MAGIC_ANGLE_DEG, sigma_deg=m.sigma_deg)
            for m in measurements
        )
        warnings = (
            "degenerate geometry: all tilt angles at arccos(1/sqrt(3)); "
            "any cube-axis direction fits equally well",
        )

    heuristic = tuple(fold_angle(m.theta_deg)[1] for m in measurements)
    sign_sets = [heuristic]
    # Remaining assignments up to the global B/-B flip.
    for s2 in (1.0, -1.0):
        for s3 in (1.0, -1.0):
            cand = (1.0, s2, s3)
            flipped = tuple(-s for s in cand)
            if cand not in sign_sets and flipped not in sign_sets:
                sign_sets.append(cand)

    best = None  # (residual, centroid, spread, signs)
    ties = []
    all_candidates = []
    for signs in sign_sets:
        root_lists = _solve_with_signs(measurements, signs)
        if root_lists is None:
            continue
        all_candidates.extend(r for roots in root_lists for r in roots)
        clusters = _cluster_roots(root_lists, cluster_threshold_deg)
        for centroid, spread, _ in clusters:
            residual = _total_residual(centroid, measurements)
            if best is None or residual < best[0] - 1e-12:
                best = (residual, centroid, spread, signs)
                ties = []
            elif abs(residual - best[0]) <= 1e-12:
                if _angle_between_deg(centroid, best[1]) > 1e-6 and not degenerate:
                    ties.append(centroid)
        if signs == heuristic and best is not None and best[2] <= cluster_threshold_deg:
            # The heuristic produced an internally consistent cluster: done.
            break

    if best is None:
        raise InconsistentConesError([np.asarray(c) for c in all_candidates])
    if ties:
        raise AmbiguousSolutionError(
            [best[1]] + ties,
            "two sign assignments explain the measurements equally well",
        )
    direction = best[1]
    if degenerate:
        # Snap onto the nearest cube axis; residuals are exactly zero there.
        axis_index = int(np.argmax(np.abs(direction)))
        snapped = np.zeros(3)
        snapped[axis_index] = math.copysign(1.0, direction[axis_index])
        direction = snapped
    return _estimate_from_direction(direction, measurements, warnings)
