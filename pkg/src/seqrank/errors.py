"""Exception hierarchy shared across the package."""


class SeqrankError(Exception):
    """Base class for all domain errors."""


class DegenerateInputError(SeqrankError):
    """Too few points to span a 3-D hull."""


class DegenerateShapeError(SeqrankError):
    """A shape whose initial hull has zero volume."""


class GenerationFailureError(SeqrankError):
    """Scene generation could not place objects after the retry budget."""


class ResolutionFailureError(SeqrankError):
    """Interpenetration resolution did not converge."""


class SettleFailureError(SeqrankError):
    """Gravity settling did not reach a fixed point."""


class NoViableSequenceError(SeqrankError):
    """Every root branch of the search tree was pruned."""

    def __init__(self, message, stats=None):
        super().__init__(message)
        self.stats = stats


class InsufficientDataError(SeqrankError):
    """Not enough samples to fit a model."""


class UnknownClassError(SeqrankError):
    """An object class has no fitted visibility entry."""
