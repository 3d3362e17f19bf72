"""NV ground-state spin model: Hamiltonians, eigensolver, transition lines.

The electron model is the S=1 Hamiltonian

    H = D Sz^2 + gamma_e (Bx Sx + By Sy + Bz Sz)          [3x3, MHz]

with the full vector Zeeman coupling (an axial coupling cannot produce the
tilt dependence this package reconstructs).  The nine-level model adds the
14N nuclear spin:

    H9 = D Sz^2 x 1 + gamma_e (B.S) x 1 + A S.I + Q 1 x Iz^2
         + gamma_n |B| 1 x Iz                             [9x9, MHz]

Basis ordering is |m = +S ... -S>, and the product basis is electron-major:
index = 3*i_S + i_I.  All operations here are pure functions of their
arguments; returned arrays are freshly allocated and safe to share across
threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import PhysicalConstants
from .errors import DegenerateLabelingError, EigensolverConvergenceError

HERMITICITY_RTOL = 1e-9        # max relative asymmetry accepted by the eigensolver
JACOBI_SWEEP_CAP = 100         # cyclic sweeps before declaring non-convergence
JACOBI_OFF_TOL = 1e-12         # off-diagonal norm target, relative to ||H||_F


@dataclass(frozen=True)
class FieldVector:
    """Magnetic field vector in the diamond cubic frame, components in Gauss."""

    components: np.ndarray

    def __post_init__(self):
        comp = np.asarray(self.components, dtype=float)
        if comp.shape != (3,):
            raise ValueError(f"field vector needs 3 components, got {comp.shape}")
        if not np.all(np.isfinite(comp)):
            raise ValueError("field components must be finite")
        object.__setattr__(self, "components", comp)

    @classmethod
    def from_spherical(cls, magnitude_g: float, phi_deg: float, psi_deg: float):
        """Build from magnitude (Gauss), azimuth phi and polar angle psi (degrees)."""
        if magnitude_g < 0:
            raise ValueError("magnitude must be non-negative")
        phi = math.radians(phi_deg)
        psi = math.radians(psi_deg)
        return cls(
            magnitude_g
            * np.array(
                [math.sin(psi) * math.cos(phi), math.sin(psi) * math.sin(phi), math.cos(psi)]
            )
        )

    @property
    def magnitude(self) -> float:
        return float(np.linalg.norm(self.components))

    @property
    def direction(self) -> np.ndarray:
        """Unit vector along the field; raises for a zero field."""
        m = self.magnitude
        if m == 0.0:
            raise ValueError("zero field has no direction")
        return self.components / m


@dataclass(frozen=True)
class SpinOperatorSet:
    """Cartesian spin matrices for one spin, dimensionless, basis |m=+S..-S>."""

    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray

    @property
    def dimension(self) -> int:
        return self.sz.shape[0]


@dataclass(frozen=True)
class EigenSystem:
    """Eigenvalues (MHz, ascending) and orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def spin_operators(spin: float) -> SpinOperatorSet:
    """Angular-momentum matrices for a spin quantum number in {1/2, 1, 3/2, ...}.

    Built from the ladder operators: (S+)_{m',m} = sqrt(S(S+1) - m(m+1)) for
    m' = m+1, with rows/columns ordered m = +S ... -S.
    """
    two_s = 2.0 * spin
    if not math.isclose(two_s, round(two_s), abs_tol=1e-12) or spin <= 0:
        raise ValueError(f"spin must be a positive half-integer, got {spin}")
    s = round(two_s) / 2.0
    dim = round(two_s) + 1
    m_values = [s - k for k in range(dim)]
    sz = np.diag(np.array(m_values, dtype=complex))
    s_plus = np.zeros((dim, dim), dtype=complex)
    for k in range(1, dim):
        m = m_values[k]  # source state, raised to m+1 at row k-1
        s_plus[k - 1, k] = math.sqrt(s * (s + 1) - m * (m + 1))
    s_minus = s_plus.conj().T
    sx = (s_plus + s_minus) / 2.0
    sy = (s_plus - s_minus) / 2.0j
    return SpinOperatorSet(sx=sx, sy=sy, sz=sz)


def build_electron_hamiltonian(
    b: FieldVector, c: PhysicalConstants
) -> np.ndarray:
    """3x3 electron Hamiltonian D Sz^2 + gamma_e B.S in MHz."""
    ops = spin_operators(1)
    bx, by, bz = b.components
    h = c.zfs_d_mhz * (ops.sz @ ops.sz)
    h = h + c.gamma_e_mhz_per_g * (bx * ops.sx + by * ops.sy + bz * ops.sz)
    return h


def build_full_hamiltonian(b: FieldVector, c: PhysicalConstants) -> np.ndarray:
    """9x9 electron-nuclear Hamiltonian in MHz.

    The nuclear Zeeman term is kept axial with the field magnitude,
    gamma_n |B| Iz; it is a sub-kHz correction at the field scales handled
    here and only the configured rate enters.
    """
    s = spin_operators(1)
    i_ops = spin_operators(1)
    eye = np.eye(3, dtype=complex)
    bx, by, bz = b.components
    h = c.zfs_d_mhz * np.kron(s.sz @ s.sz, eye)
    h += c.gamma_e_mhz_per_g * np.kron(bx * s.sx + by * s.sy + bz * s.sz, eye)
    h += c.hyperfine_a_mhz * (
        np.kron(s.sx, i_ops.sx) + np.kron(s.sy, i_ops.sy) + np.kron(s.sz, i_ops.sz)
    )
    h += c.quadrupole_q_mhz * np.kron(eye, i_ops.sz @ i_ops.sz)
    h += c.gamma_n_mhz_per_g * b.magnitude * np.kron(eye, i_ops.sz)
    return h


def _jacobi_real_symmetric(a_in, tol_rel=JACOBI_OFF_TOL, max_sweeps=JACOBI_SWEEP_CAP):
    """Cyclic Jacobi rotations on a real symmetric matrix (list-of-lists).

    Returns (diagonal, rotation columns, final off-diagonal norm).  Small
    matrices only; plain Python floats beat array overhead below ~20x20.
    """
    n = len(a_in)
    a = [list(map(float, row)) for row in a_in]
    v = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    norm_h = math.sqrt(sum(a[i][j] * a[i][j] for i in range(n) for j in range(n)))
    threshold = tol_rel * norm_h

    def off_norm():
        return math.sqrt(
            2.0 * sum(a[p][q] * a[p][q] for p in range(n) for q in range(p + 1, n))
        )

    for _ in range(max_sweeps):
        off = off_norm()
        if off <= threshold:
            return [a[i][i] for i in range(n)], v, off
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p][q]
                if apq == 0.0:
                    continue
                tau = (a[q][q] - a[p][p]) / (2.0 * apq)
                t = (1.0 if tau >= 0.0 else -1.0) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                cth = 1.0 / math.sqrt(1.0 + t * t)
                sth = t * cth
                a[p][p] -= t * apq
                a[q][q] += t * apq
                a[p][q] = 0.0
                a[q][p] = 0.0
                for i in range(n):
                    if i != p and i != q:
                        aip, aiq = a[i][p], a[i][q]
                        a[i][p] = aip * cth - aiq * sth
                        a[p][i] = a[i][p]
                        a[i][q] = aip * sth + aiq * cth
                        a[q][i] = a[i][q]
                for i in range(n):
                    vip, viq = v[i][p], v[i][q]
                    v[i][p] = vip * cth - viq * sth
                    v[i][q] = vip * sth + viq * cth
    off = off_norm()
    if off <= threshold:
        return [a[i][i] for i in range(n)], v, off
    raise EigensolverConvergenceError(off, max_sweeps)


def _complex_from_embedding(w, v, n, scale):
    """Recover n complex eigenpairs from the 2n real-symmetric embedding.

    Eigenvalues of [[A,-B],[B,A]] come in duplicate pairs; each eigenvalue
    cluster of complex multiplicity d spans a 2d-dimensional real space that
    maps onto the d-dimensional complex eigenspace via (x, y) -> x + iy.
    Modified Gram-Schmidt with a re-orthogonalization pass extracts an
    orthonormal complex basis per cluster.
    """
    order = np.argsort(w, kind="stable")
    w = w[order]
    v = v[:, order]
    clusters = []
    start = 0
    for i in range(1, 2 * n + 1):
        if i == 2 * n or (w[i] - w[i - 1]) > 1e-8 * scale:
            clusters.append((start, i))
            start = i
    values = []
    vectors = []
    for lo, hi in clusters:
        m = hi - lo
        if m % 2 != 0:
            # Pairing broke down: treat adjacent levels as one cluster next pass.
            raise EigensolverConvergenceError(float(w[hi - 1] - w[lo]), JACOBI_SWEEP_CAP)
        d = m // 2
        lam = float(np.mean(w[lo:hi]))
        basis = []
        candidates = [v[:n, k] + 1j * v[n:, k] for k in range(lo, hi)]
        for cand in candidates:
            vec = cand.astype(complex)
            for _ in range(2):  # second pass restores orthogonality to ~1e-15
                for g in basis:
                    vec = vec - g * np.vdot(g, vec)
            norm = np.linalg.norm(vec)
            if norm > 1e-6:
                basis.append(vec / norm)
            if len(basis) == d:
                break
        if len(basis) != d:
            raise EigensolverConvergenceError(float("nan"), JACOBI_SWEEP_CAP)
        values.extend([lam] * d)
        vectors.extend(basis)
    return np.array(values), np.column_stack(vectors)


def eigensolve_hermitian(h: np.ndarray) -> EigenSystem:
    """Diagonalize a Hermitian matrix by cyclic Jacobi rotations.

    Real-symmetric inputs are handled directly; complex Hermitian inputs go
    through the real-symmetric embedding [[Re H, -Im H], [Im H, Re H]].
    Raises ``ValueError`` for non-Hermitian input and
    ``EigensolverConvergenceError`` after the sweep cap.
    """
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"matrix must be square, got shape {h.shape}")
    n = h.shape[0]
    norm = np.linalg.norm(h)
    asym = np.linalg.norm(h - h.conj().T)
    if asym > HERMITICITY_RTOL * max(norm, 1e-300):
        raise ValueError(f"matrix is not Hermitian (relative asymmetry {asym / max(norm, 1e-300):.2e})")
    h = (h + h.conj().T) / 2.0  # symmetrize away representable round-off

    if not np.iscomplexobj(h) or np.max(np.abs(h.imag)) == 0.0:
        diag, rot, _ = _jacobi_real_symmetric(np.real(h).tolist())
        w = np.array(diag)
        v = np.array(rot)
        order = np.argsort(w, kind="stable")
        return EigenSystem(eigenvalues=w[order], eigenvectors=v[:, order].astype(complex))

    a, b = h.real, h.imag
    embedded = np.block([[a, -b], [b, a]])
    diag, rot, _ = _jacobi_real_symmetric(embedded.tolist())
    scale = max(np.max(np.abs(diag)), 1e-300)
    w, v = _complex_from_embedding(np.array(diag), np.array(rot), n, scale)
    order = np.argsort(w, kind="stable")
    return EigenSystem(eigenvalues=w[order], eigenvectors=v[:, order])


# Basis index of |ms=0> in the 3x3 model and the ms=0 block in the 9x9 model.
_MS_LABELS = (1, 0, -1)
_MI_LABELS = (1, 0, -1)
MIN_LABEL_OVERLAP = 0.5


def _classify_levels_3(eig: EigenSystem):
    """Map each 3x3 eigenstate to an ms label by largest basis overlap."""
    overlaps = np.abs(eig.eigenvectors) ** 2  # [basis, state]
    ms0_overlap = overlaps[1, :]
    i0 = int(np.argmax(ms0_overlap))
    if ms0_overlap[i0] < MIN_LABEL_OVERLAP:
        raise DegenerateLabelingError(ms0_overlap.tolist())
    return i0


def transition_frequencies(eig: EigenSystem, mode: str):
    """ODMR transition lines from an eigensystem of this module's Hamiltonians.

    mode="electron" (3x3): returns [("f_minus", f-), ("f_plus", f+)], the two
    transition frequencies out of the ms=0-like level, lower first.  The
    ms=0-like level is found by eigenvector overlap, not energy order.

    mode="mi_resolved" (9x9): returns six (label, frequency) pairs, two
    hyperfine triplets labelled "f_minus[mI=+1]" etc., each triplet ordered
    by frequency.  mI labels come from nuclear-subspace overlap.

    Raises ``DegenerateLabelingError`` when any required overlap is below 0.5.
    """
    n = eig.eigenvalues.shape[0]
    if mode == "electron":
        if n != 3:
            raise ValueError("electron mode expects a 3x3 eigensystem")
        i0 = _classify_levels_3(eig)
        lam0 = eig.eigenvalues[i0]
        others = sorted(eig.eigenvalues[k] for k in range(3) if k != i0)
        return [("f_minus", float(others[0] - lam0)), ("f_plus", float(others[1] - lam0))]

    if mode == "mi_resolved":
        if n != 9:
            raise ValueError("mi_resolved mode expects a 9x9 eigensystem")
        overlaps = np.abs(eig.eigenvectors) ** 2  # [basis 3*iS+iI, state]
        assignment = {}
        for k in range(9):
            idx = int(np.argmax(overlaps[:, k]))
            if overlaps[idx, k] < MIN_LABEL_OVERLAP:
                raise DegenerateLabelingError(overlaps[:, k].tolist())
            label = (_MS_LABELS[idx // 3], _MI_LABELS[idx % 3])
            if label in assignment:
                raise DegenerateLabelingError(overlaps[:, k].tolist())
            assignment[label] = float(eig.eigenvalues[k])
        lines = {+1: [], -1: []}
        for ms in (+1, -1):
            for mi in _MI_LABELS:
                lines[ms].append((mi, assignment[(ms, mi)] - assignment[(0, mi)]))
        # Lower-frequency manifold is reported as the f_minus branch.
        mean_freq = {ms: np.mean([f for _, f in lines[ms]]) for ms in (+1, -1)}
        low_ms, high_ms = ((-1, +1) if mean_freq[-1] <= mean_freq[+1] else (+1, -1))
        out = []
        for branch, ms in (("f_minus", low_ms), ("f_plus", high_ms)):
            for mi, f in sorted(lines[ms], key=lambda t: t[1]):
                out.append((f"{branch}[mI={mi:+d}]", float(f)))
        return out

    raise ValueError(f"unknown mode {mode!r}")
