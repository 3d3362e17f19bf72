"""Pipeline configuration: a single JSON file driving every subcommand.

Schema (all sections optional except ``inputs`` where noted)::

    {
      "format_version": "1",
      "constants": { ... PhysicalConstants fields ... },
      "monte_carlo": {"n_samples": 100000, "seed": 42, "coverage": 0.997},
      "fit": {"n_peaks": 3, "linewidth_init_mhz": 0.25, "sigma_floor_deg": 1e-6},
      "inputs": {
        "measurements": [{"axis": "NV1", "theta_deg": 13.44, "sigma_deg": 0.15}, ...],
        "spectra": [{"axis": "NV1", "f_minus_csv": "...", "f_plus_csv": "..."}, ...],
        "bright_level": 1.0, "dark_level": 0.0,
        "subset": ["NV1", "NV2", "NV3"]
      }
    }

Exactly one of ``measurements`` (inline tilt angles) or ``spectra`` (CSV
files, fitted before extraction) may be present.  Relative paths resolve
against the config file's directory, and every referenced file must exist
at load time.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .constants import PhysicalConstants
from .cones import AXIS_LABELS
from .errors import ConfigError

FORMAT_VERSION = "1"

DEFAULT_N_SAMPLES = 100_000
DEFAULT_SEED = 0
DEFAULT_COVERAGE = 0.997
DEFAULT_N_PEAKS = 3
DEFAULT_LINEWIDTH_INIT_MHZ = 0.25
DEFAULT_SIGMA_FLOOR_DEG = 1e-6


@dataclass(frozen=True)
class MonteCarloSettings:
    n_samples: int = DEFAULT_N_SAMPLES
    seed: int = DEFAULT_SEED
    coverage: float = DEFAULT_COVERAGE

    def __post_init__(self):
        if self.n_samples < 100:
            raise ConfigError(f"monte_carlo.n_samples must be >= 100, got {self.n_samples}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("monte_carlo.seed must fit in an unsigned 64-bit integer")
        if not 0.5 < self.coverage <= 1.0:
            raise ConfigError(f"monte_carlo.coverage must lie in (0.5, 1], got {self.coverage}")


@dataclass(frozen=True)
class FitSettings:
    n_peaks: int = DEFAULT_N_PEAKS
    linewidth_init_mhz: float = DEFAULT_LINEWIDTH_INIT_MHZ
    sigma_floor_deg: float = DEFAULT_SIGMA_FLOOR_DEG

    def __post_init__(self):
        if self.n_peaks < 1:
            raise ConfigError(f"fit.n_peaks must be >= 1, got {self.n_peaks}")
        if self.linewidth_init_mhz <= 0:
            raise ConfigError("fit.linewidth_init_mhz must be positive")
        if self.sigma_floor_deg <= 0:
            raise ConfigError("fit.sigma_floor_deg must be positive")


@dataclass(frozen=True)
class InlineMeasurement:
    axis: str
    theta_deg: float
    sigma_deg: float


@dataclass(frozen=True)
class SpectraInput:
    axis: str
    f_minus_csv: Path
    f_plus_csv: Path


@dataclass(frozen=True)
class PipelineInputs:
    measurements: tuple[InlineMeasurement, ...] = ()
    spectra: tuple[SpectraInput, ...] = ()
    bright_level: float | None = None
    dark_level: float | None = None
    subset: tuple[str, ...] | None = None


@dataclass(frozen=True)
class PipelineConfig:
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)
    monte_carlo: MonteCarloSettings = field(default_factory=MonteCarloSettings)
    fit: FitSettings = field(default_factory=FitSettings)
    inputs: PipelineInputs = field(default_factory=PipelineInputs)
    source_path: Path | None = None

    def require_inputs(self):
        if not self.inputs.measurements and not self.inputs.spectra:
            raise ConfigError("config has no inputs.measurements and no inputs.spectra")

    def canonical_dict(self) -> dict:
        """Fully resolved configuration as plain JSON types (for hashing/reports)."""
        d = {
            "format_version": FORMAT_VERSION,
            "constants": self.constants.to_dict(),
            "monte_carlo": {
                "n_samples": self.monte_carlo.n_samples,
                "seed": self.monte_carlo.seed,
                "coverage": self.monte_carlo.coverage,
            },
            "fit": {
                "n_peaks": self.fit.n_peaks,
                "linewidth_init_mhz": self.fit.linewidth_init_mhz,
                "sigma_floor_deg": self.fit.sigma_floor_deg,
            },
            "inputs": {},
        }
        if self.inputs.measurements:
            d["inputs"]["measurements"] = [
                {"axis": m.axis, "theta_deg": m.theta_deg, "sigma_deg": m.sigma_deg}
                for m in self.inputs.measurements
            ]
        if self.inputs.spectra:
            d["inputs"]["spectra"] = [
                {
                    "axis": s.axis,
                    "f_minus_csv": str(s.f_minus_csv),
                    "f_plus_csv": str(s.f_plus_csv),
                }
                for s in self.inputs.spectra
            ]
        if self.inputs.bright_level is not None:
            d["inputs"]["bright_level"] = self.inputs.bright_level
        if self.inputs.dark_level is not None:
            d["inputs"]["dark_level"] = self.inputs.dark_level
        if self.inputs.subset is not None:
            d["inputs"]["subset"] = list(self.inputs.subset)
        return d

    def config_hash(self) -> str:
        canonical = json.dumps(self.canonical_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def with_overrides(self, seed=None, n_samples=None, coverage=None, subset=None):
        """New config with CLI flag values substituted where given."""
        mc = MonteCarloSettings(
            n_samples=self.monte_carlo.n_samples if n_samples is None else int(n_samples),
            seed=self.monte_carlo.seed if seed is None else int(seed),
            coverage=self.monte_carlo.coverage if coverage is None else float(coverage),
        )
        inputs = self.inputs
        if subset is not None:
            inputs = PipelineInputs(
                measurements=inputs.measurements,
                spectra=inputs.spectra,
                bright_level=inputs.bright_level,
                dark_level=inputs.dark_level,
                subset=_validated_subset(subset),
            )
        return PipelineConfig(
            constants=self.constants,
            monte_carlo=mc,
            fit=self.fit,
            inputs=inputs,
            source_path=self.source_path,
        )


def _validated_subset(labels) -> tuple[str, ...]:
    labels = tuple(labels)
    for label in labels:
        if label not in AXIS_LABELS:
            raise ConfigError(f"unknown axis {label!r} in subset")
    if len(set(labels)) != len(labels):
        raise ConfigError("subset contains duplicate axes")
    return labels


def _expect_mapping(value, name):
    if not isinstance(value, dict):
        raise ConfigError(f"{name} must be a JSON object")
    return value


def load_config(path) -> PipelineConfig:
    """Load and validate a pipeline configuration file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}:{err.lineno}: invalid JSON: {err.msg}") from err
    return config_from_dict(raw, base_dir=path.parent, source_path=path)


def config_from_dict(raw: dict, base_dir=None, source_path=None) -> PipelineConfig:
    raw = _expect_mapping(raw, "config")
    base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
    version = raw.get("format_version", FORMAT_VERSION)
    if str(version) != FORMAT_VERSION:
        raise ConfigError(f"unsupported format_version {version!r}")
    known = {"format_version", "constants", "monte_carlo", "fit", "inputs"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")

    try:
        constants = PhysicalConstants.from_dict(
            _expect_mapping(raw.get("constants", {}), "constants")
        )
    except ValueError as err:
        raise ConfigError(f"constants: {err}") from err

    mc_raw = _expect_mapping(raw.get("monte_carlo", {}), "monte_carlo")
    mc = MonteCarloSettings(
        n_samples=int(mc_raw.get("n_samples", DEFAULT_N_SAMPLES)),
        seed=int(mc_raw.get("seed", DEFAULT_SEED)),
        coverage=float(mc_raw.get("coverage", DEFAULT_COVERAGE)),
    )

    fit_raw = _expect_mapping(raw.get("fit", {}), "fit")
    fit = FitSettings(
        n_peaks=int(fit_raw.get("n_peaks", DEFAULT_N_PEAKS)),
        linewidth_init_mhz=float(fit_raw.get("linewidth_init_mhz", DEFAULT_LINEWIDTH_INIT_MHZ)),
        sigma_floor_deg=float(fit_raw.get("sigma_floor_deg", DEFAULT_SIGMA_FLOOR_DEG)),
    )

    inputs_raw = _expect_mapping(raw.get("inputs", {}), "inputs")
    measurements = []
    for k, entry in enumerate(inputs_raw.get("measurements", [])):
        entry = _expect_mapping(entry, f"inputs.measurements[{k}]")
        try:
            axis = str(entry["axis"])
            theta = float(entry["theta_deg"])
            sigma = float(entry["sigma_deg"])
        except KeyError as err:
            raise ConfigError(f"inputs.measurements[{k}]: missing {err}") from err
        if axis not in AXIS_LABELS:
            raise ConfigError(f"inputs.measurements[{k}]: unknown axis {axis!r}")
        measurements.append(InlineMeasurement(axis=axis, theta_deg=theta, sigma_deg=sigma))

    spectra = []
    for k, entry in enumerate(inputs_raw.get("spectra", [])):
        entry = _expect_mapping(entry, f"inputs.spectra[{k}]")
        try:
            axis = str(entry["axis"])
            f_minus = base_dir / entry["f_minus_csv"]
            f_plus = base_dir / entry["f_plus_csv"]
        except KeyError as err:
            raise ConfigError(f"inputs.spectra[{k}]: missing {err}") from err
        if axis not in AXIS_LABELS:
            raise ConfigError(f"inputs.spectra[{k}]: unknown axis {axis!r}")
        for p in (f_minus, f_plus):
            if not p.is_file():
                raise ConfigError(f"inputs.spectra[{k}]: file not found: {p}")
        spectra.append(SpectraInput(axis=axis, f_minus_csv=f_minus, f_plus_csv=f_plus))

    if measurements and spectra:
        raise ConfigError("inputs must provide measurements or spectra, not both")

    subset = inputs_raw.get("subset")
    inputs = PipelineInputs(
        measurements=tuple(measurements),
        spectra=tuple(spectra),
        bright_level=(
            float(inputs_raw["bright_level"]) if "bright_level" in inputs_raw else None
        ),
        dark_level=(
            float(inputs_raw["dark_level"]) if "dark_level" in inputs_raw else None
        ),
        subset=_validated_subset(subset) if subset is not None else None,
    )
    return PipelineConfig(
        constants=constants,
        monte_carlo=mc,
        fit=fit,
        inputs=inputs,
        source_path=Path(source_path) if source_path else None,
    )
