"""Exception hierarchy for the nvfield package.

Plain invalid arguments (out-of-range scalars, malformed shapes) raise
``ValueError``; the classes below mark failures that callers may want to
catch and handle individually, and they carry the diagnostic payload the
pipeline reports (discriminants, candidate solutions, residuals).
"""


class NvFieldError(Exception):
    """Base class for all nvfield-specific errors."""


class EigensolverConvergenceError(NvFieldError):
    """Jacobi sweeps hit the iteration cap before the off-diagonal norm target."""

    def __init__(self, residual, max_sweeps):
        self.residual = residual
        self.max_sweeps = max_sweeps
        super().__init__(
            f"eigensolver did not converge within {max_sweeps} sweeps "
            f"(off-diagonal residual {residual:.3e})"
        )


class DegenerateLabelingError(NvFieldError):
    """Eigenstate could not be assigned a spin label (subspace overlap below 0.5)."""

    def __init__(self, overlaps):
        self.overlaps = overlaps
        super().__init__(f"ambiguous level identification, overlaps {overlaps}")


class InconsistentFrequenciesError(NvFieldError):
    """A transition pair (f-, f+) is incompatible with any physical (|B|, theta)."""

    def __init__(self, message, f_minus=None, f_plus=None):
        self.f_minus = f_minus
        self.f_plus = f_plus
        super().__init__(message)


class ConesDisjointError(NvFieldError):
    """Two tilt cones have no common direction on the unit sphere."""

    def __init__(self, discriminant, axis_i=None, axis_j=None):
        self.discriminant = discriminant
        self.axis_i = axis_i
        self.axis_j = axis_j
        where = f" ({axis_i}/{axis_j})" if axis_i else ""
        super().__init__(
            f"cones do not intersect{where}, discriminant {discriminant:.3e}"
        )


class InconsistentConesError(NvFieldError):
    """No candidate direction is shared by all three pairwise intersections."""

    def __init__(self, candidates):
        self.candidates = candidates
        super().__init__(
            f"no consistent intersection cluster across the three cone pairs "
            f"({len(candidates)} candidates examined)"
        )


class AmbiguousSolutionError(NvFieldError):
    """More than one equally good field direction is compatible with the input."""

    def __init__(self, candidates, message=None):
        self.candidates = candidates
        super().__init__(
            message or f"{len(candidates)} equally likely field orientations"
        )


class FitConvergenceError(NvFieldError):
    """Nonlinear least squares did not converge; carries the last residual."""

    def __init__(self, residual, message=None):
        self.residual = residual
        super().__init__(message or f"fit did not converge, residual {residual:.3e}")


class PeakSeedingError(NvFieldError):
    """Fewer candidate minima in the spectrum than requested peaks."""


class UnclassifiablePolarizationError(NvFieldError):
    """Polarization sweep has too little modulation to assign an axis pair."""

    def __init__(self, modulation_depth):
        self.modulation_depth = modulation_depth
        super().__init__(
            f"modulation depth {modulation_depth:.4f} below 0.05, "
            f"axis pairs indistinguishable"
        )


class DegenerateEllipseError(NvFieldError):
    """Point cloud is rank deficient; no finite-area enclosing ellipse exists."""


class SpectrumFormatError(NvFieldError):
    """Malformed spectrum or polarization CSV; names the offending line."""

    def __init__(self, path, line_number, message):
        self.path = path
        self.line_number = line_number
        super().__init__(f"{path}:{line_number}: {message}")


class ConfigError(NvFieldError):
    """Invalid or incomplete pipeline configuration."""
