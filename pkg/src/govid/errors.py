"""Exception hierarchy shared by all govid modules.

Every error raised on a contract violation derives from GovidError so the
CLI can map failures onto its documented exit codes.
"""


class GovidError(Exception):
    """Base class for all govid errors."""


# ---- block construction / stepping ----

class NonPositiveDt(GovidError):
    pass


class InvalidLimits(GovidError):
    """limits.min >= limits.max, or an initial value outside the limits."""


class DelayShorterThanDt(GovidError):
    """A pure delay with 0 < T < dt cannot be represented at this rate."""


class DtMismatch(GovidError):
    """Block stepped with a dt different from the one it was built with."""


class NonlinearBlock(GovidError):
    """discretize_linear called on a gate, limiter or saturation block."""


# ---- plant assembly / simulation ----

class InvalidParams(GovidError):
    """A parameter set violates a model invariant; message names the field."""


class NoSteadyState(GovidError):
    """Requested operating point has no feasible equilibrium."""


class RateMismatch(GovidError):
    """Input TimeSeries dt differs from the model dt."""


class MissingChannel(GovidError):
    def __init__(self, name):
        super().__init__(f"required channel '{name}' not present")
        self.name = name


class WrongModelKind(GovidError):
    """Subsystem id not defined for this model kind."""


# ---- signal ingestion / preprocessing ----

class MalformedCsv(GovidError):
    def __init__(self, line, detail=""):
        super().__init__(f"malformed CSV at line {line}: {detail}")
        self.line = line


class NonUniformSampling(GovidError):
    def __init__(self, index):
        super().__init__(f"non-uniform sampling at row {index}")
        self.index = index


class EmptyFile(GovidError):
    pass


class CutoffAboveNyquist(GovidError):
    pass


class MissingBase(GovidError):
    def __init__(self, channel):
        super().__init__(f"no per-unit base given for channel '{channel}'")
        self.channel = channel


class NonPositiveBase(GovidError):
    pass


class DegeneratePeriod(GovidError):
    pass


class ConstantChannel(GovidError):
    """SNR is undefined for a constant channel."""


# ---- least squares ----

class GateSwitchInWindow(GovidError):
    """Low-select changed branch inside the data window; LS is invalid there."""


class InsufficientData(GovidError):
    """Fewer samples than regressor columns."""


class SingularRegressor(GovidError):
    """Condition number of the regressor exceeds the configured threshold."""


class LengthMismatch(GovidError):
    pass


class EmptySignal(GovidError):
    pass


# ---- optimizers ----

class BadLambda(GovidError):
    """Levy exponent outside (1, 3]."""


class ObjectiveFailure(GovidError):
    """Objective raised; carries the per-generation history gathered so far."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


class LsFailed(GovidError):
    """Least-squares pre-identification failed; caller may fall back."""


# ---- validation ----

class TooFewSamples(GovidError):
    pass


class AlphaOutOfRange(GovidError):
    pass


class IncompleteRun(GovidError):
    def __init__(self, missing):
        super().__init__(f"run record incomplete: missing {missing}")
        self.missing = missing


# ---- configuration ----

class ConfigError(GovidError):
    """Run configuration failed schema validation."""
