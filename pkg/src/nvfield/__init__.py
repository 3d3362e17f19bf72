"""nvfield: 3D magnetic-field orientation from single-NV pulsed ODMR.

Forward spin-model simulation, spectral line fitting, tilt-cone
intersection over the NV tetrahedron and Monte Carlo uncertainty
summarized by minimum-volume enclosing ellipses.
"""

from .constants import PhysicalConstants
from .cones import (
    ConeMeasurement,
    FieldEstimate,
    NvAxis,
    extract_field_and_tilt,
    fold_angle,
    nv_axis,
    pairwise_intersection,
    reconstruct_pair,
    reconstruct_triple,
    spherical_to_direction,
    to_spherical,
)
from .spectra import (
    PeakSet,
    PolarizationSweep,
    Spectrum,
    extract_mI0_frequency,
    fit_lorentzian_multiplet,
    fit_polarization_sweep,
    normalize_rabi_contrast,
    simulate_pulsed_odmr,
)
from .spin import (
    EigenSystem,
    FieldVector,
    SpinOperatorSet,
    build_electron_hamiltonian,
    build_full_hamiltonian,
    eigensolve_hermitian,
    spin_operators,
    transition_frequencies,
)
from .uncertainty import (
    AngleCloud,
    EllipseEstimate,
    bivariate_pdf,
    combine_subsets,
    enclosing_ellipse,
    propagate_subsets,
    sample_tilt_angles,
)

__version__ = "0.1.0"

__all__ = [
    "PhysicalConstants",
    "ConeMeasurement",
    "FieldEstimate",
    "NvAxis",
    "extract_field_and_tilt",
    "fold_angle",
    "nv_axis",
    "pairwise_intersection",
    "reconstruct_pair",
    "reconstruct_triple",
    "spherical_to_direction",
    "to_spherical",
    "PeakSet",
    "PolarizationSweep",
    "Spectrum",
    "extract_mI0_frequency",
    "fit_lorentzian_multiplet",
    "fit_polarization_sweep",
    "normalize_rabi_contrast",
    "simulate_pulsed_odmr",
    "EigenSystem",
    "FieldVector",
    "SpinOperatorSet",
    "build_electron_hamiltonian",
    "build_full_hamiltonian",
    "eigensolve_hermitian",
    "spin_operators",
    "transition_frequencies",
    "AngleCloud",
    "EllipseEstimate",
    "bivariate_pdf",
    "combine_subsets",
    "enclosing_ellipse",
    "propagate_subsets",
    "sample_tilt_angles",
    "__version__",
]
