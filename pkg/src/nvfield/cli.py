"""Command line interface: forward, fit, reconstruct, simulate.

Distinct exit codes mark the failure classes a batch caller needs to tell
apart: 2 config/parse, 3 fit failure, 4 inconsistent cones, 5 degenerate
ellipse, 6 ambiguous two-axis solution.  Human-readable numbers print with
6 significant digits; JSON artifacts keep full precision.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click
import numpy as np

from . import pipeline
from .config import PipelineConfig, load_config
from .cones import AXIS_LABELS
from .errors import (
    AmbiguousSolutionError,
    ConesDisjointError,
    ConfigError,
    DegenerateEllipseError,
    FitConvergenceError,
    InconsistentConesError,
    InconsistentFrequenciesError,
    PeakSeedingError,
    SpectrumFormatError,
)
from .spectra import fit_lorentzian_multiplet, read_spectrum_csv, write_spectrum_csv
from .spin import FieldVector

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FIT = 3
EXIT_CONES = 4
EXIT_ELLIPSE = 5
EXIT_AMBIGUOUS = 6


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _load(config_path) -> PipelineConfig:
    if config_path is None:
        return PipelineConfig()
    return load_config(config_path)


def _field_from_options(field, magnitude, phi, psi) -> FieldVector:
    if field is not None and any(v is not None for v in (phi, psi)):
        raise ConfigError("give either --field or --phi/--psi, not both")
    if field is not None:
        return FieldVector(np.array(field, dtype=float))
    if phi is None or psi is None:
        raise ConfigError("field requires --field BX BY BZ or --magnitude with --phi and --psi")
    return FieldVector.from_spherical(magnitude, phi, psi)


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group()
@click.version_option(pipeline.TOOL_VERSION, prog_name="nvfield")
def main():
    """Reconstruct 3D magnetic-field orientation from NV pulsed-ODMR data."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--field", nargs=3, type=float, default=None, help="Field vector Bx By Bz in Gauss (cubic frame).")
@click.option("--magnitude", type=float, default=230.0, show_default=True, help="Field magnitude in Gauss.")
@click.option("--phi", type=float, default=None, help="Azimuth of the field in degrees.")
@click.option("--psi", type=float, default=None, help="Polar angle of the field in degrees.")
@click.option("--write-spectra", is_flag=True, help="Write synthetic mI-resolved spectra CSVs per axis.")
@click.option("--noise-sd", type=float, default=0.0, show_default=True, help="Gaussian noise on synthetic spectra.")
@click.option("--seed", type=int, default=None, help="Noise seed (defaults to the config seed).")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=".", show_default=True)
def forward(config_path, field, magnitude, phi, psi, write_spectra, noise_sd, seed, out_dir):
    """Predict per-axis tilt angles and transition frequencies for a known field."""
    try:
        config = _load(config_path)
        field_vec = _field_from_options(field, magnitude, phi, psi)
        rows = pipeline.forward_transitions(config, field_vec)
    except ConfigError as err:
        _fail(EXIT_CONFIG, str(err))
    except ValueError as err:
        _fail(EXIT_CONFIG, str(err))

    click.echo("axis  theta_deg  f_minus_mhz  f_plus_mhz")
    for row in rows:
        click.echo(
            f"{row.axis_label}  {_fmt(row.theta_deg):>9}  {_fmt(row.f_minus_mhz):>11}  "
            f"{_fmt(row.f_plus_mhz):>10}"
        )
    if write_spectra:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        use_seed = config.monte_carlo.seed if seed is None else seed
        for row in rows:
            minus, plus = pipeline.synthetic_triplet_spectra(
                config, row.axis_label, field_vec, noise_sd=noise_sd, seed=use_seed
            )
            write_spectrum_csv(out / f"{row.axis_label}_fminus.csv", minus)
            write_spectrum_csv(out / f"{row.axis_label}_fplus.csv", plus)
        click.echo(f"wrote synthetic spectra for 4 axes to {out}")


@main.command()
@click.argument("spectrum_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--n-peaks", type=int, default=None, help="Number of dips to fit (default from config).")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
def fit(spectrum_csv, n_peaks, config_path):
    """Fit a Lorentzian multiplet to a spectrum CSV and print the peaks as JSON."""
    try:
        config = _load(config_path)
        n = config.fit.n_peaks if n_peaks is None else n_peaks
        if n < 1:
            raise ConfigError(f"n_peaks must be >= 1, got {n}")
        spectrum = read_spectrum_csv(spectrum_csv)
        if (
            config.inputs.bright_level is not None
            and config.inputs.dark_level is not None
        ):
            from .spectra import normalize_rabi_contrast

            spectrum = normalize_rabi_contrast(
                spectrum, config.inputs.bright_level, config.inputs.dark_level
            )
        peaks = fit_lorentzian_multiplet(spectrum, n)
    except (SpectrumFormatError, ConfigError) as err:
        _fail(EXIT_CONFIG, str(err))
    except ValueError as err:
        _fail(EXIT_CONFIG, str(err))
    except (FitConvergenceError, PeakSeedingError) as err:
        _fail(EXIT_FIT, str(err))
    click.echo(pipeline.canonical_json(pipeline.peakset_to_dict(peaks)), nl=False)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None, help="Override the Monte Carlo seed.")
@click.option("--samples", type=int, default=None, help="Override the Monte Carlo sample count.")
@click.option("--coverage", type=float, default=None, help="Override the ellipse coverage fraction.")
@click.option("--subset", type=str, default=None, help="Comma-separated axes, e.g. NV1,NV2,NV4.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=".", show_default=True)
def reconstruct(config_path, seed, samples, coverage, subset, out_dir):
    """Run the full pipeline: fit/extract, intersect cones, propagate, report."""
    try:
        config = load_config(config_path).with_overrides(
            seed=seed,
            n_samples=samples,
            coverage=coverage,
            subset=subset.split(",") if subset else None,
        )
        report = pipeline.run_reconstruction(config)
    except (ConfigError, SpectrumFormatError) as err:
        _fail(EXIT_CONFIG, str(err))
    except (FitConvergenceError, PeakSeedingError) as err:
        _fail(EXIT_FIT, str(err))
    except AmbiguousSolutionError as err:
        click.echo("error: ambiguous reconstruction, candidate directions:", err=True)
        for cand in err.candidates:
            if hasattr(cand, "phi_deg"):
                click.echo(
                    f"  phi={_fmt(cand.phi_deg)} deg, psi={_fmt(cand.psi_deg)} deg",
                    err=True,
                )
            else:
                click.echo(f"  direction={np.round(np.asarray(cand), 6).tolist()}", err=True)
        sys.exit(EXIT_AMBIGUOUS)
    except (ConesDisjointError, InconsistentConesError, InconsistentFrequenciesError) as err:
        _fail(EXIT_CONES, str(err))
    except DegenerateEllipseError as err:
        _fail(EXIT_ELLIPSE, str(err))
    except ValueError as err:
        _fail(EXIT_CONFIG, str(err))

    report_path = pipeline.write_report(report, out_dir)
    est = report.estimate
    click.echo(f"field direction: phi={_fmt(est.phi_deg)} deg, psi={_fmt(est.psi_deg)} deg")
    for label, residual in est.residuals_deg.items():
        click.echo(f"  residual {label}: {_fmt(residual)} deg")
    for warning in est.warnings:
        click.echo(f"  warning: {warning}")
    mu = report.combined_ellipse.center_mu
    sig = report.combined_ellipse.covariance_sigma
    click.echo(
        f"combined ellipse: mu=({_fmt(mu[0])}, {_fmt(mu[1])}) deg, "
        f"sigma=[[{_fmt(sig[0, 0])}, {_fmt(sig[0, 1])}], [{_fmt(sig[1, 0])}, {_fmt(sig[1, 1])}]] deg^2"
    )
    click.echo(f"report written to {report_path}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--axis", type=click.Choice(AXIS_LABELS), required=True)
@click.option("--field", nargs=3, type=float, default=None, help="Field vector Bx By Bz in Gauss.")
@click.option("--magnitude", type=float, default=230.0, show_default=True)
@click.option("--phi", type=float, default=None)
@click.option("--psi", type=float, default=None)
@click.option("--noise-sd", type=float, default=0.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=".", show_default=True)
def simulate(config_path, axis, field, magnitude, phi, psi, noise_sd, seed, out_dir):
    """Write synthetic mI-resolved pulsed-ODMR spectra for one NV orientation."""
    try:
        config = _load(config_path)
        field_vec = _field_from_options(field, magnitude, phi, psi)
        minus, plus = pipeline.synthetic_triplet_spectra(
            config, axis, field_vec, noise_sd=noise_sd, seed=seed
        )
    except ConfigError as err:
        _fail(EXIT_CONFIG, str(err))
    except ValueError as err:
        _fail(EXIT_CONFIG, str(err))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    minus_path = out / f"{axis}_fminus.csv"
    plus_path = out / f"{axis}_fplus.csv"
    write_spectrum_csv(minus_path, minus)
    write_spectrum_csv(plus_path, plus)
    click.echo(f"wrote {minus_path} and {plus_path}")


if __name__ == "__main__":
    main()
