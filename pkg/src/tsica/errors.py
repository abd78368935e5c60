"""Exception types raised across the package."""


class TsicaError(Exception):
    """Base class for all package-specific errors."""


# --- volume I/O ---

class UnrecognizedFormat(TsicaError):
    """Neither the magic field nor the header-size field is plausible."""


class UnsupportedDatatype(TsicaError):
    """Header declares a sample type outside the supported set."""


class TruncatedHeader(TsicaError):
    """Header stream is shorter than the fixed header length or malformed."""


class TruncatedData(TsicaError):
    """Image payload ends before the extent implied by the header."""


class SizeMismatch(TsicaError):
    """Header dimensions are inconsistent with the payload layout."""


class HeaderVolumeMismatch(TsicaError):
    """Header extents disagree with the volume being written."""


# --- eigendecomposition / whitening ---

class DegenerateInput(TsicaError):
    """Every column of the input matrix has zero variance."""


class NumericalFailure(TsicaError):
    """The eigensolver failed to converge or produced invalid output."""


class RankDeficient(TsicaError):
    """Fewer usable eigenvalues than the requested component count."""


class NoComponent(TsicaError):
    """The automatic component-count rule retained nothing."""


# --- FastICA ---

class NotWhitened(TsicaError):
    """Input to FastICA does not have identity sample covariance."""


# --- pipeline ---

class ExtentMismatch(TsicaError):
    """Mask and volume spatial extents differ."""


class EmptyMask(TsicaError):
    """Mask includes no voxels."""


class IndexOutOfRange(TsicaError):
    """Component index outside 1..m."""


# --- component analysis ---

class NoDominantBin(TsicaError):
    """Spectrum has no non-DC bin above the noise floor."""


class ZeroVariance(TsicaError):
    """A correlation input is constant."""


class AllZero(TsicaError):
    """Signal is identically zero."""


class BothAllZero(TsicaError):
    """Binary correlation undefined: both sequences have empty support."""


class DegenerateThreshold(TsicaError):
    """Energy-index threshold collapsed to zero."""


class SingularNormalEquations(TsicaError):
    """Least-squares normal equations are singular or ill-conditioned."""
