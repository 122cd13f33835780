"""Exception taxonomy shared by all tikzrig modules."""


class TikzRigError(Exception):
    """Base class for every error raised by this package."""


# --- sandbox ---------------------------------------------------------------

class NoDrawableContent(TikzRigError):
    """Input has neither a tikzpicture nor a document environment."""


class ToolchainMissing(TikzRigError, EnvironmentError):
    """The configured LaTeX engine or rasterizer binary cannot be resolved."""


class RenderFailed(TikzRigError):
    """The rasterizer subprocess failed or produced unreadable output."""


# --- image metrics ---------------------------------------------------------

class EmptyContent(TikzRigError):
    """An image contains no pixels below the background threshold."""


class ZeroVector(TikzRigError):
    """Cosine similarity requested on an all-zero embedding."""


class InvalidThreshold(TikzRigError):
    """Hinge threshold outside [0, 1)."""


# --- code metrics ----------------------------------------------------------

class EmptyCorpus(TikzRigError):
    """Trivial n-gram mining called on an empty corpus."""


# --- reward math -----------------------------------------------------------

class GroupTooSmall(TikzRigError):
    """Advantage normalization needs at least two rollouts."""


class LengthMismatch(TikzRigError):
    """Per-token log-probability lists differ in length."""


class MissingScores(TikzRigError):
    """A successful compile was scored without visual scores attached."""


class InvalidBand(TikzRigError):
    """Curriculum band with tau_min > tau_max."""


# --- backends --------------------------------------------------------------

class BackendError(TikzRigError):
    """Base class for wire-protocol backend failures."""


class BackendTimeout(BackendError):
    """No response within timeout after all retries."""


class ProtocolError(BackendError):
    """Malformed or non-conforming backend response."""


class DimensionMismatch(BackendError):
    """Embedding backend returned a vector of unexpected length."""


class SchemaViolation(BackendError):
    """Judge reply violates the required JSON schema."""


class RepairUnavailable(BackendError):
    """No repair rule matched and no remote repair agent is configured."""


# --- data engine -----------------------------------------------------------

class PreScreenFailed(TikzRigError):
    """Record does not qualify for benchmark stratification."""


class ConfigError(TikzRigError):
    """Invalid or inconsistent configuration."""
