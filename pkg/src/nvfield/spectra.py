"""Pulsed-ODMR spectrum synthesis, normalization and line fitting.

Spectra are dimensionless signals on an ascending MHz grid, normalized so
the full Rabi contrast spans one unit.  Dips are modelled as Lorentzians,

    signal(f) = baseline - sum_k depth_k * (w_k/2)^2 / ((f - c_k)^2 + (w_k/2)^2),

with per-peak FWHM so washed-out lines can be fit alongside sharp ones.
The default synthetic linewidth of 0.25 MHz FWHM matches the Rabi drive
used for the pulsed scheme this package targets.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .errors import (
    FitConvergenceError,
    PeakSeedingError,
    SpectrumFormatError,
    UnclassifiablePolarizationError,
)

DEFAULT_LINEWIDTH_FWHM_MHZ = 0.25
SMOOTHING_WINDOW = 5          # samples, moving average used for peak seeding
FIT_COST_TOL = 1e-10          # relative cost change declaring convergence
FIT_MAX_ITERATIONS = 200
MIN_MODULATION_DEPTH = 0.05   # below this the polarization pairs are indistinguishable


@dataclass(frozen=True)
class Spectrum:
    """Normalized signal on a strictly ascending frequency grid (MHz)."""

    frequencies_mhz: np.ndarray
    signal: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.frequencies_mhz, dtype=float)
        s = np.asarray(self.signal, dtype=float)
        if f.ndim != 1 or f.shape != s.shape:
            raise ValueError("frequency grid and signal must be 1-D and equal length")
        if f.size < 2:
            raise ValueError("spectrum needs at least 2 samples")
        if not np.all(np.diff(f) > 0):
            raise ValueError("frequency grid must be strictly ascending")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(s))):
            raise ValueError("spectrum values must be finite")
        object.__setattr__(self, "frequencies_mhz", f)
        object.__setattr__(self, "signal", s)


@dataclass(frozen=True)
class Peak:
    """One fitted Lorentzian dip."""

    center_mhz: float
    fwhm_mhz: float
    depth: float


@dataclass(frozen=True)
class PeakSet:
    """Fitted multiplet: peaks sorted by center, common baseline, RMS residual."""

    peaks: tuple[Peak, ...]
    baseline: float
    fit_residual: float
    center_stderr_mhz: tuple[float, ...] | None = field(default=None)

    def __post_init__(self):
        for p in self.peaks:
            if not p.fwhm_mhz > 0:
                raise ValueError(f"FWHM must be positive, got {p.fwhm_mhz}")
            if not 0.0 < p.depth <= 1.5:
                raise ValueError(f"depth must lie in (0, 1.5], got {p.depth}")

    @property
    def centers_mhz(self) -> tuple[float, ...]:
        return tuple(p.center_mhz for p in self.peaks)


@dataclass(frozen=True)
class PolarizationSweep:
    """Photoluminescence counts versus half-wave-plate rotation angle."""

    waveplate_deg: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.waveplate_deg, dtype=float)
        c = np.asarray(self.counts, dtype=float)
        if a.ndim != 1 or a.shape != c.shape:
            raise ValueError("angles and counts must be 1-D and equal length")
        if a.size < 8:
            raise ValueError("polarization sweep needs at least 8 samples")
        if np.ptp(a) < 90.0:
            raise ValueError("sweep must span at least 90 deg of waveplate rotation")
        object.__setattr__(self, "waveplate_deg", a)
        object.__setattr__(self, "counts", c)


@dataclass(frozen=True)
class PolarizationFit:
    """Result of a polarization-sweep classification."""

    axis_pair: str        # "pair-A" or "pair-B"
    phase_deg: float      # waveplate phase folded into [0, 45)
    modulation_depth: float


def _lorentzian_dip(f, center, fwhm, depth):
    hw2 = (fwhm / 2.0) ** 2
    return depth * hw2 / ((f - center) ** 2 + hw2)


def simulate_pulsed_odmr(
    lines,
    linewidth_fwhm_mhz: float,
    f_start_mhz: float,
    f_stop_mhz: float,
    f_step_mhz: float,
    noise_sd: float = 0.0,
    seed: int = 0,
) -> Spectrum:
    """Synthesize a normalized pulsed-ODMR spectrum.

    ``lines`` is a sequence of (frequency MHz, relative contrast) pairs; the
    signal is 1 minus the Lorentzian dips plus Gaussian noise of the given
    standard deviation, deterministic for a fixed seed.  The grid must
    cover every line center.
    """
    if linewidth_fwhm_mhz <= 0:
        raise ValueError(f"linewidth must be positive, got {linewidth_fwhm_mhz}")
    if f_step_mhz <= 0 or f_stop_mhz <= f_start_mhz:
        raise ValueError("grid must satisfy f_start < f_stop with positive step")
    n = int(math.floor((f_stop_mhz - f_start_mhz) / f_step_mhz + 1e-9)) + 1
    f = f_start_mhz + f_step_mhz * np.arange(n)
    for center, _ in lines:
        if center < f[0] or center > f[-1]:
            raise ValueError(f"grid [{f[0]}, {f[-1]}] MHz excludes line at {center} MHz")
    signal = np.ones(n)
    for center, contrast in lines:
        signal -= _lorentzian_dip(f, center, linewidth_fwhm_mhz, contrast)
    if noise_sd > 0.0:
        rng = np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), 0]))
        signal = signal + noise_sd * rng.standard_normal(n)
    return Spectrum(frequencies_mhz=f, signal=signal)


def normalize_rabi_contrast(raw: Spectrum, bright_level: float, dark_level: float) -> Spectrum:
    """Rescale raw counts so the Rabi bright/dark levels map to 1 and 0."""
    if bright_level <= dark_level:
        raise ValueError(
            f"bright level {bright_level} must exceed dark level {dark_level}"
        )
    scaled = (raw.signal - dark_level) / (bright_level - dark_level)
    return Spectrum(frequencies_mhz=raw.frequencies_mhz, signal=scaled)


def _seed_peaks(spectrum: Spectrum, n_peaks: int):
    """Deterministic initial guess: deepest local minima after smoothing."""
    s = spectrum.signal
    f = spectrum.frequencies_mhz
    kernel = np.ones(SMOOTHING_WINDOW) / SMOOTHING_WINDOW
    smooth = np.convolve(s, kernel, mode="same")
    minima = []
    for i in range(1, len(smooth) - 1):
        if smooth[i] <= smooth[i - 1] and smooth[i] < smooth[i + 1]:
            minima.append(i)
    if len(minima) < n_peaks:
        raise PeakSeedingError(
            f"found {len(minima)} candidate minima, need {n_peaks}"
        )
    baseline0 = float(np.median(smooth))
    minima.sort(key=lambda i: smooth[i])  # deepest first
    chosen = sorted(minima[:n_peaks])
    step = float(np.median(np.diff(f)))
    peaks = []
    for i in chosen:
        depth0 = max(baseline0 - smooth[i], 1e-3)
        half = smooth[i] + depth0 / 2.0
        left = i
        while left > 0 and smooth[left] < half:
            left -= 1
        right = i
        while right < len(smooth) - 1 and smooth[right] < half:
            right += 1
        width0 = max((f[right] - f[left]), 2.0 * step)
        peaks.append((float(f[i]), width0, min(depth0, 1.4)))
    return baseline0, peaks


def fit_lorentzian_multiplet(
    s: Spectrum, n_peaks: int, initial_guess: PeakSet | None = None
) -> PeakSet:
    """Nonlinear least-squares fit of ``baseline - sum of Lorentzian dips``.

    Seeding without an explicit guess uses the ``n_peaks`` deepest local
    minima of the 5-sample moving-average smoothed signal.  Convergence is
    declared at a relative cost change below 1e-10 within 200 iterations;
    otherwise ``FitConvergenceError`` carries the last residual.  Peaks are
    returned sorted by center, with per-center standard errors estimated
    from the Jacobian.
    """
    if n_peaks < 1:
        raise ValueError(f"n_peaks must be >= 1, got {n_peaks}")
    n_min = 5 * (3 * n_peaks + 1)
    if s.signal.size < n_min:
        raise ValueError(
            f"spectrum has {s.signal.size} samples, need >= {n_min} for {n_peaks} peaks"
        )
    f = s.frequencies_mhz
    span = float(f[-1] - f[0])
    step = float(np.median(np.diff(f)))

    if initial_guess is not None:
        baseline0 = initial_guess.baseline
        seeds = [(p.center_mhz, p.fwhm_mhz, p.depth) for p in initial_guess.peaks]
        if len(seeds) != n_peaks:
            raise ValueError("initial guess must carry exactly n_peaks peaks")
    else:
        baseline0, seeds = _seed_peaks(s, n_peaks)

    x0 = [baseline0]
    lower = [-np.inf]
    upper = [np.inf]
    for center, width, depth in seeds:
        x0 += [center, width, depth]
        lower += [float(f[0]), step / 10.0, 1e-6]
        upper += [float(f[-1]), 2.0 * span, 1.5]
    x0 = np.clip(np.asarray(x0, dtype=float), lower, upper)

    def model(x):
        out = np.full_like(f, x[0])
        for k in range(n_peaks):
            c, w, d = x[1 + 3 * k : 4 + 3 * k]
            out = out - _lorentzian_dip(f, c, w, d)
        return out

    result = least_squares(
        lambda x: model(x) - s.signal,
        x0,
        bounds=(lower, upper),
        method="trf",
        ftol=FIT_COST_TOL,
        xtol=1e-14,
        gtol=None,
        max_nfev=FIT_MAX_ITERATIONS * (3 * n_peaks + 2),
    )
    rms = float(np.sqrt(np.mean(result.fun**2)))
    if result.status == 0 or not np.all(np.isfinite(result.x)):
        raise FitConvergenceError(rms)

    # Center standard errors from the Gauss-Newton covariance.
    n_params = len(result.x)
    dof = max(f.size - n_params, 1)
    stderr = [float("nan")] * n_peaks
    try:
        jtj = result.jac.T @ result.jac
        cov = np.linalg.inv(jtj) * (2.0 * result.cost / dof)
        for k in range(n_peaks):
            stderr[k] = float(math.sqrt(max(cov[1 + 3 * k, 1 + 3 * k], 0.0)))
    except np.linalg.LinAlgError:
        pass

    indices = sorted(range(n_peaks), key=lambda k: result.x[1 + 3 * k])
    peaks = tuple(
        Peak(
            center_mhz=float(result.x[1 + 3 * k]),
            fwhm_mhz=float(result.x[2 + 3 * k]),
            depth=float(result.x[3 + 3 * k]),
        )
        for k in indices
    )
    return PeakSet(
        peaks=peaks,
        baseline=float(result.x[0]),
        fit_residual=rms,
        center_stderr_mhz=tuple(stderr[k] for k in indices),
    )


def extract_mI0_frequency(triplet: PeakSet) -> float:
    """Center of the middle line of a hyperfine triplet (the mI = 0 transition)."""
    if len(triplet.peaks) != 3:
        raise ValueError(f"expected exactly 3 peaks, got {len(triplet.peaks)}")
    return triplet.centers_mhz[1]


def fit_polarization_sweep(
    p: PolarizationSweep, pair_a_phase_deg: float = 0.0
) -> PolarizationFit:
    """Classify a photoluminescence anisotropy sweep into one of two axis pairs.

    Fits counts(a) = c0 + c1 cos^2(2(a - a0)) through its linearization in
    (1, cos 4a, sin 4a).  The phase is folded into [0, 45) deg; the pair
    label follows whichever of 0 or 22.5 deg (relative to the configured
    pair-A reference) is closer on the 45-deg torus.  A 45-deg waveplate
    offset corresponds to the 90-deg polarization rotation between pairs.
    """
    a = np.radians(p.waveplate_deg)
    design = np.column_stack([np.ones_like(a), np.cos(4.0 * a), np.sin(4.0 * a)])
    coeffs, *_ = np.linalg.lstsq(design, p.counts, rcond=None)
    mean_level, cos_c, sin_c = coeffs
    amplitude = math.hypot(cos_c, sin_c)
    c1 = 2.0 * amplitude
    c0 = mean_level - amplitude
    modulation = math.inf if c0 <= 0 else c1 / c0
    if modulation < MIN_MODULATION_DEPTH:
        raise UnclassifiablePolarizationError(modulation)
    phase = math.degrees(math.atan2(sin_c, cos_c)) / 4.0
    folded = (phase - pair_a_phase_deg) % 45.0

    def torus_distance(x, ref):
        d = abs((x - ref) % 45.0)
        return min(d, 45.0 - d)

    label = "pair-A" if torus_distance(folded, 0.0) <= torus_distance(folded, 22.5) else "pair-B"
    return PolarizationFit(axis_pair=label, phase_deg=folded, modulation_depth=modulation)


# --- CSV interchange -------------------------------------------------------

SPECTRUM_HEADER = ("frequency_mhz", "signal")
POLARIZATION_HEADER = ("waveplate_deg", "counts")


def _read_two_column_csv(path, header):
    rows = []
    try:
        handle = open(path, "r", encoding="utf-8", newline="")
    except OSError as err:
        raise SpectrumFormatError(str(path), 0, f"cannot open file: {err}") from err
    with handle:
        reader = csv.reader(handle)
        for line_number, row in enumerate(reader, start=1):
            if line_number == 1:
                if [c.strip() for c in row] != list(header):
                    raise SpectrumFormatError(
                        str(path), 1, f"expected header {','.join(header)!r}"
                    )
                continue
            if not row:
                continue
            if len(row) != 2:
                raise SpectrumFormatError(
                    str(path), line_number, f"expected 2 columns, got {len(row)}"
                )
            try:
                rows.append((float(row[0]), float(row[1])))
            except ValueError as err:
                raise SpectrumFormatError(str(path), line_number, str(err)) from err
    if not rows:
        raise SpectrumFormatError(str(path), 1, "no data rows")
    return np.array(rows)


def read_spectrum_csv(path) -> Spectrum:
    """Read a two-column ``frequency_mhz,signal`` CSV (header required)."""
    data = _read_two_column_csv(path, SPECTRUM_HEADER)
    try:
        return Spectrum(frequencies_mhz=data[:, 0], signal=data[:, 1])
    except ValueError as err:
        raise SpectrumFormatError(str(path), 2, str(err)) from err


def write_spectrum_csv(path, spectrum: Spectrum) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(",".join(SPECTRUM_HEADER) + "\n")
        for f, s in zip(spectrum.frequencies_mhz, spectrum.signal):
            handle.write(f"{float(f)!r},{float(s)!r}\n")


def read_polarization_csv(path) -> PolarizationSweep:
    """Read a two-column ``waveplate_deg,counts`` CSV (header required)."""
    data = _read_two_column_csv(path, POLARIZATION_HEADER)
    try:
        return PolarizationSweep(waveplate_deg=data[:, 0], counts=data[:, 1])
    except ValueError as err:
        raise SpectrumFormatError(str(path), 2, str(err)) from err


def write_polarization_csv(path, sweep: PolarizationSweep) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(",".join(POLARIZATION_HEADER) + "\n")
        for a, c in zip(sweep.waveplate_deg, sweep.counts):
            handle.write(f"{float(a)!r},{float(c)!r}\n")
