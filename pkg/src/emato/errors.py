"""Exception types shared across the toolkit."""


class EmatoError(Exception):
    """Base class for all toolkit errors."""


class InvalidSpecError(EmatoError):
    """A map spec, gear spec, scenario config, or constraint set is malformed."""


class EnvelopeError(EmatoError):
    """An (engine speed, torque) query fell outside the engine operating envelope."""


class DegenerateSamplesError(EmatoError):
    """Fit samples do not span enough of the (v, a_t) box for a unique fit."""


class AlignmentError(EmatoError):
    """Two per-step sequences that must share (dt, length) do not."""


class NoFeasibleCandidateError(EmatoError):
    """Every sampled trajectory candidate was rejected by the feasibility check."""


class UndefinedMetricError(EmatoError):
    """A metric is undefined for this run (e.g. fuel per meter over zero distance)."""
