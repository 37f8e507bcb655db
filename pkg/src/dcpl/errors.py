"""Exception hierarchy.

Every error carries a stable ``kind`` (the class name) so the CLI can emit
structured diagnostics. ``ValidationError`` subclasses map to exit status 1,
``NumericalError`` subclasses to exit status 2.
"""


class DcplError(Exception):
    """Base class for all library errors."""

    exit_code = 1

    @property
    def kind(self) -> str:
        return type(self).__name__


class ValidationError(DcplError):
    exit_code = 1


class NumericalError(DcplError):
    exit_code = 2


# model / persistence
class InvalidConfig(ValidationError):
    pass


class MalformedContainer(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class NonFiniteTensor(ValidationError):
    pass


class ConfigMismatch(ValidationError):
    pass


class TokenOutOfRange(ValidationError):
    pass


class SequenceTooLong(ValidationError):
    pass


class MalformedCorpus(ValidationError):
    pass


class EmptyHypothesis(NumericalError):
    pass


# decompositions
class IndexOutOfRange(ValidationError):
    pass


class IncompleteTrace(ValidationError):
    pass


class WidthMismatch(ValidationError):
    pass


class WrongSublayerKind(ValidationError):
    pass


class DegenerateStd(NumericalError):
    pass


class UndefinedDerivative(NumericalError):
    pass


class ReconstructionError(NumericalError):
    pass


# indicators / stats
class ZeroNorm(NumericalError):
    def __init__(self, message: str, sentence_id=None, position=None):
        super().__init__(message)
        self.sentence_id = sentence_id
        self.position = position


class EmptyCorpus(ValidationError):
    pass


class DegenerateSeries(NumericalError):
    pass


class EmptySeries(ValidationError):
    pass


class EmptyGroup(ValidationError):
    pass


class TooManyAssignments(ValidationError):
    pass


class MisalignedCheckpoints(ValidationError):
    pass


class InsufficientSentences(ValidationError):
    pass


# scoring
class MalformedRow(ValidationError):
    pass


class DuplicateKey(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


# cli
class UnknownSubcommand(ValidationError):
    pass


class InvalidManifest(ValidationError):
    pass
