"""End-to-end reconstruction pipeline and machine-readable reporting.

Two ingestion paths feed the same reconstruction: inline tilt angles
(theta_i +- sigma_i per axis) or pairs of spectrum CSVs per axis that are
fitted, reduced to the mI=0 transition pair and converted to (|B|, theta)
with an uncertainty propagated from the fit.  Reports serialize to
canonical JSON (sorted keys, full float precision) so identical inputs and
seeds produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import importlib.metadata
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import spectra as spectra_mod
from .config import PipelineConfig
from .cones import (
    ConeMeasurement,
    FieldEstimate,
    extract_field_and_tilt,
    folded_tilt_deg,
    nv_axis,
    reconstruct_pair,
    reconstruct_triple,
)
from .errors import AmbiguousSolutionError, ConfigError
from .spin import FieldVector, build_electron_hamiltonian, build_full_hamiltonian, eigensolve_hermitian, transition_frequencies
from .uncertainty import AngleCloud, EllipseEstimate, combine_subsets, enclosing_ellipse, propagate_subsets

try:
    TOOL_VERSION = importlib.metadata.version("nvfield")
except importlib.metadata.PackageNotFoundError:  # running from a source tree
    TOOL_VERSION = "0.1.0"

REPORT_FORMAT_VERSION = "1"

# Synthetic spectra written by `forward --write-spectra` and `simulate`.
SYNTHETIC_MARGIN_MHZ = 4.0
SYNTHETIC_STEP_MHZ = 0.02
SYNTHETIC_LINE_CONTRAST = 0.3


@dataclass(frozen=True)
class AxisTransitions:
    """Forward-model prediction for one NV orientation."""

    axis_label: str
    theta_deg: float            # folded tilt between field and axis
    f_minus_mhz: float
    f_plus_mhz: float


@dataclass(frozen=True)
class PerNvExtraction:
    """Measurement row of a reconstruction report."""

    axis_label: str
    theta_deg: float
    sigma_deg: float
    b_magnitude_gauss: float | None = None
    f_minus_mhz: float | None = None
    f_plus_mhz: float | None = None


@dataclass(frozen=True)
class ReconstructionReport:
    per_nv: tuple[PerNvExtraction, ...]
    estimate: FieldEstimate
    clouds: tuple[AngleCloud, ...]
    subset_ellipses: tuple[EllipseEstimate, ...]
    combined_ellipse: EllipseEstimate
    config: PipelineConfig
    input_hashes: dict[str, str]


def axis_frame_field(magnitude_g: float, theta_deg: float) -> FieldVector:
    """Field of given magnitude at tilt theta in an NV axis frame (x-z plane).

    Transition frequencies depend on the field only through (|B|, theta),
    so placing the transverse component on x keeps the Hamiltonian real.
    """
    r = math.radians(theta_deg)
    return FieldVector(
        np.array([magnitude_g * math.sin(r), 0.0, magnitude_g * math.cos(r)])
    )


def forward_transitions(config: PipelineConfig, field: FieldVector) -> list[AxisTransitions]:
    """Per-axis folded tilt and electron transition pair for a lab field."""
    rows = []
    magnitude = field.magnitude
    for label in ("NV1", "NV2", "NV3", "NV4"):
        axis = nv_axis(label)
        if magnitude == 0.0:
            theta = 0.0
        else:
            theta = folded_tilt_deg(field.direction, axis)
        h = build_electron_hamiltonian(axis_frame_field(magnitude, theta), config.constants)
        lines = dict(transition_frequencies(eigensolve_hermitian(h), "electron"))
        rows.append(
            AxisTransitions(
                axis_label=label,
                theta_deg=theta,
                f_minus_mhz=lines["f_minus"],
                f_plus_mhz=lines["f_plus"],
            )
        )
    return rows


def synthetic_triplet_spectra(
    config: PipelineConfig,
    axis_label: str,
    field: FieldVector,
    noise_sd: float = 0.0,
    seed: int = 0,
):
    """Synthetic mI-resolved spectra for one axis: (f_minus Spectrum, f_plus Spectrum)."""
    axis = nv_axis(axis_label)
    theta = folded_tilt_deg(field.direction, axis) if field.magnitude > 0 else 0.0
    h9 = build_full_hamiltonian(axis_frame_field(field.magnitude, theta), config.constants)
    lines = transition_frequencies(eigensolve_hermitian(h9), "mi_resolved")
    out = []
    for branch in ("f_minus", "f_plus"):
        branch_lines = [
            (freq, SYNTHETIC_LINE_CONTRAST)
            for label, freq in lines
            if label.startswith(branch + "[")
        ]
        centers = [freq for freq, _ in branch_lines]
        out.append(
            spectra_mod.simulate_pulsed_odmr(
                branch_lines,
                linewidth_fwhm_mhz=config.fit.linewidth_init_mhz,
                f_start_mhz=min(centers) - SYNTHETIC_MARGIN_MHZ,
                f_stop_mhz=max(centers) + SYNTHETIC_MARGIN_MHZ,
                f_step_mhz=SYNTHETIC_STEP_MHZ,
                noise_sd=noise_sd,
                seed=seed,
            )
        )
    return tuple(out)


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _theta_sigma_from_fit(f_minus, sigma_minus, f_plus, sigma_plus, constants):
    """Propagate the two fitted center uncertainties into the tilt angle."""
    _, theta0 = extract_field_and_tilt(f_minus, f_plus, constants)
    eps = 1e-6  # MHz, central differences
    _, tm = extract_field_and_tilt(f_minus + eps, f_plus, constants)
    _, tm2 = extract_field_and_tilt(f_minus - eps, f_plus, constants)
    _, tp = extract_field_and_tilt(f_minus, f_plus + eps, constants)
    _, tp2 = extract_field_and_tilt(f_minus, f_plus - eps, constants)
    d_minus = (tm - tm2) / (2 * eps)
    d_plus = (tp - tp2) / (2 * eps)
    var = (d_minus * sigma_minus) ** 2 + (d_plus * sigma_plus) ** 2
    return theta0, math.sqrt(var)


def gather_measurements(config: PipelineConfig):
    """Resolve config inputs into (ConeMeasurements, per-NV rows, file hashes)."""
    config.require_inputs()
    rows = []
    measurements = []
    hashes: dict[str, str] = {}
    if config.inputs.measurements:
        for m in config.inputs.measurements:
            measurements.append(
                ConeMeasurement(axis=nv_axis(m.axis), theta_deg=m.theta_deg, sigma_deg=m.sigma_deg)
            )
            rows.append(
                PerNvExtraction(axis_label=m.axis, theta_deg=m.theta_deg, sigma_deg=m.sigma_deg)
            )
    else:
        floor = config.fit.sigma_floor_deg
        for entry in config.inputs.spectra:
            pair = []
            for csv_path in (entry.f_minus_csv, entry.f_plus_csv):
                spectrum = spectra_mod.read_spectrum_csv(csv_path)
                if config.inputs.bright_level is not None and config.inputs.dark_level is not None:
                    spectrum = spectra_mod.normalize_rabi_contrast(
                        spectrum, config.inputs.bright_level, config.inputs.dark_level
                    )
                peaks = spectra_mod.fit_lorentzian_multiplet(spectrum, config.fit.n_peaks)
                if config.fit.n_peaks == 3:
                    center = spectra_mod.extract_mI0_frequency(peaks)
                    k_mid = 1
                else:
                    k_mid = len(peaks.peaks) // 2
                    center = peaks.centers_mhz[k_mid]
                stderr = 0.0
                if peaks.center_stderr_mhz is not None:
                    err = peaks.center_stderr_mhz[k_mid]
                    stderr = err if math.isfinite(err) else 0.0
                pair.append((center, stderr))
                hashes[str(csv_path)] = _sha256_file(csv_path)
            (f_minus, sd_minus), (f_plus, sd_plus) = pair
            magnitude, theta = extract_field_and_tilt(f_minus, f_plus, config.constants)
            _, sigma = _theta_sigma_from_fit(f_minus, sd_minus, f_plus, sd_plus, config.constants)
            sigma = max(sigma, floor)
            measurements.append(
                ConeMeasurement(axis=nv_axis(entry.axis), theta_deg=theta, sigma_deg=sigma)
            )
            rows.append(
                PerNvExtraction(
                    axis_label=entry.axis,
                    theta_deg=theta,
                    sigma_deg=sigma,
                    b_magnitude_gauss=magnitude,
                    f_minus_mhz=f_minus,
                    f_plus_mhz=f_plus,
                )
            )
    return measurements, rows, hashes


def _select_subset(measurements, rows, subset):
    if subset is None:
        if len(measurements) == 3:
            return measurements, rows
        raise ConfigError(
            f"{len(measurements)} measurements supplied; choose three with inputs.subset"
        )
    by_label = {m.axis.label: (m, r) for m, r in zip(measurements, rows)}
    missing = [lbl for lbl in subset if lbl not in by_label]
    if missing:
        raise ConfigError(f"subset axes missing from inputs: {missing}")
    chosen = [by_label[lbl] for lbl in subset]
    return [m for m, _ in chosen], [r for _, r in chosen]


def run_reconstruction(config: PipelineConfig) -> ReconstructionReport:
    """Fit/extract, reconstruct, propagate and summarize one measurement set.

    Two measurements raise ``AmbiguousSolutionError`` carrying both
    candidate directions; fewer raise ``ConfigError``.
    """
    measurements, rows, hashes = gather_measurements(config)
    subset = config.inputs.subset
    if subset is not None:
        measurements, rows = _select_subset(measurements, rows, subset)
    if len(measurements) < 2:
        raise ConfigError(f"need at least 2 measurements, got {len(measurements)}")
    if len(measurements) == 2:
        candidates = reconstruct_pair(measurements[0], measurements[1])
        raise AmbiguousSolutionError(
            candidates,
            "two measured orientations leave "
            f"{len(candidates)} candidate field directions; supply a third axis",
        )
    if len(measurements) > 3:
        measurements, rows = _select_subset(measurements, rows, None)  # raises with guidance

    estimate = reconstruct_triple(measurements)
    clouds = propagate_subsets(
        measurements,
        n_samples=config.monte_carlo.n_samples,
        seed=config.monte_carlo.seed,
        reference=estimate,
    )
    coverage = config.monte_carlo.coverage
    subset_ellipses = tuple(enclosing_ellipse(c, coverage=coverage) for c in clouds)
    combined = combine_subsets(clouds, coverage=coverage)
    return ReconstructionReport(
        per_nv=tuple(rows),
        estimate=estimate,
        clouds=tuple(clouds),
        subset_ellipses=subset_ellipses,
        combined_ellipse=combined,
        config=config,
        input_hashes=hashes,
    )


# --- serialization ----------------------------------------------------------


def _plain(value):
    """Recursively convert numpy containers/scalars to JSON-native types."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    return value


def ellipse_to_dict(est: EllipseEstimate) -> dict:
    return _plain(
        {
            "mu": est.center_mu,
            "sigma": est.covariance_sigma,
            "coverage": est.coverage,
            "n_dropped": est.n_trimmed,
        }
    )


def estimate_to_dict(estimate: FieldEstimate) -> dict:
    return _plain(
        {
            "direction": estimate.direction,
            "phi_deg": estimate.phi_deg,
            "psi_deg": estimate.psi_deg,
            "residuals_deg": estimate.residuals_deg,
            "warnings": list(estimate.warnings),
        }
    )


def report_to_dict(report: ReconstructionReport) -> dict:
    subsets = []
    for cloud, ellipse in zip(report.clouds, report.subset_ellipses):
        subsets.append(
            {
                "label": cloud.subset_label,
                "n_samples": int(cloud.points.shape[0]),
                "n_disjoint_dropped": cloud.n_dropped,
                "warnings": list(cloud.warnings),
                "ellipse": ellipse_to_dict(ellipse),
                "cloud_csv": cloud_csv_name(cloud.subset_label),
            }
        )
    return _plain(
        {
            "format_version": REPORT_FORMAT_VERSION,
            "provenance": {
                "config_sha256": report.config.config_hash(),
                "input_sha256": report.input_hashes,
                "seed": report.config.monte_carlo.seed,
                "tool_version": TOOL_VERSION,
            },
            "config": report.config.canonical_dict(),
            "per_nv": [
                {
                    "axis": r.axis_label,
                    "theta_deg": r.theta_deg,
                    "sigma_deg": r.sigma_deg,
                    "b_magnitude_gauss": r.b_magnitude_gauss,
                    "f_minus_mhz": r.f_minus_mhz,
                    "f_plus_mhz": r.f_plus_mhz,
                }
                for r in report.per_nv
            ],
            "field_estimate": estimate_to_dict(report.estimate),
            "subsets": subsets,
            "combined": {"ellipse": ellipse_to_dict(report.combined_ellipse)},
        }
    )


def canonical_json(payload: dict) -> str:
    """Deterministic JSON serialization (sorted keys, repr-exact floats)."""
    return json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n"


def cloud_csv_name(subset_label: str) -> str:
    return "cloud_" + subset_label.replace("+", "_") + ".csv"


def write_report(report: ReconstructionReport, out_dir) -> Path:
    """Write report.json plus one phi/psi CSV per subset cloud; returns report path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.json"
    report_path.write_text(canonical_json(report_to_dict(report)), encoding="utf-8")
    for cloud in report.clouds:
        path = out_dir / cloud_csv_name(cloud.subset_label)
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write("phi_deg,psi_deg\n")
            for phi, psi in cloud.points:
                handle.write(f"{float(phi)!r},{float(psi)!r}\n")
    return report_path


def peakset_to_dict(peaks) -> dict:
    return _plain(
        {
            "baseline": peaks.baseline,
            "fit_residual": peaks.fit_residual,
            "peaks": [
                {"center_mhz": p.center_mhz, "fwhm_mhz": p.fwhm_mhz, "depth": p.depth}
                for p in peaks.peaks
            ],
            "center_stderr_mhz": (
                list(peaks.center_stderr_mhz) if peaks.center_stderr_mhz else None
            ),
        }
    )
