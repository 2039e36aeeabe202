"""Exception types shared across the pipeline."""


class PipelineError(Exception):
    """Base class for all earsleep errors."""


class EmptyRecording(PipelineError):
    """Recording has too few samples to work with."""


class InvalidCutoff(PipelineError):
    """Filter cutoff outside (0, Nyquist) or low >= high."""


class NonFiniteSample(PipelineError):
    """NaN or Inf encountered in a sample stream."""


class NoOverlap(PipelineError):
    """Recording and hypnogram do not overlap in time."""


class DegenerateEpoch(PipelineError):
    """Epoch has zero variance / zero in-band power; features undefined."""


class SmoteInfeasible(PipelineError):
    """A class has no samples to oversample from."""


class SplitInfeasible(PipelineError):
    """Not enough participants or per-class samples for the requested CV."""


class SingleClassTraining(PipelineError):
    """Training labels contain fewer than two classes."""


class NonFiniteFeature(PipelineError):
    """NaN or Inf in a feature matrix handed to the classifier."""


class ShapeError(PipelineError):
    """Array dimensions inconsistent with the model or with each other."""


class ModelFormatError(PipelineError):
    """Model document malformed, truncated, or of an unsupported version."""


class EmptyEvaluation(PipelineError):
    """Confusion matrix with zero total count."""


class OnsetUndefined(PipelineError):
    """No qualifying run of Asleep epochs on one side of the comparison."""


class ParseError(PipelineError):
    """Malformed input file.

    Carries the offending 1-based line number when known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
