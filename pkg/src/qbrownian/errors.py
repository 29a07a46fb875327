"""Exception hierarchy shared by all qbrownian modules."""


class QBrownianError(Exception):
    """Base class for all package errors."""


class NonRealTrace(QBrownianError):
    """Trace of a density state has an imaginary part above tolerance."""


class NonRealMoment(QBrownianError):
    """Position moment has an imaginary residue above tolerance."""


class BoxMismatch(QBrownianError):
    """Objects built on different lattice boxes were combined."""


class TruncatedBoxShift(QBrownianError):
    """Lattice translation requested on a truncated (non-periodic) box."""


class NegativeWeight(QBrownianError):
    """Measure atom with negative weight."""


class TruncationTooLossy(QBrownianError):
    """Kernel truncation discarded too much mass."""


class ZeroKernel(QBrownianError):
    """Operation undefined for an identically-zero kernel."""


class GridTooCoarse(QBrownianError):
    """Torus discretization too coarse: eigenvalue not stable under refinement."""


class StepSizeUnderflow(QBrownianError):
    """Adaptive integrator step size fell below the minimum."""


class BoundaryMassExceeded(QBrownianError):
    """Evolved state accumulated too much weight near the box boundary."""


class KernelConstraintViolated(QBrownianError):
    """Gain kernel couples fibers of mismatched parity; fiber assembly impossible."""


class IllConditioned(QBrownianError):
    """Projected fiber generator lost its dissipative lower bound."""


class SingularLindbladian(QBrownianError):
    """Fiber dissipator solve did not converge (no spectral gap?)."""


class TailDominates(QBrownianError):
    """Exponentially-weighted time average dominated by the extrapolated tail."""


class WindowTooShort(QBrownianError):
    """Diffusion fit window contains too few samples."""


class NoPlateau(QBrownianError):
    """Second moment kept growing: localization regime not reached."""


class NonlinearRegime(QBrownianError):
    """Residual curvature too large for a linear small-coupling fit."""


class NotNormal(QBrownianError):
    """Matrix fails the normality tolerance."""


class NotAccretive(QBrownianError):
    """Matrix real part is not positive (semi)definite as required."""


class AbsorbingState(QBrownianError):
    """Jump process reached a state with zero exit rate."""


class ConfigInvalid(QBrownianError):
    """Experiment configuration failed schema validation."""
