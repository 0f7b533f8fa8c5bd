"""Exception hierarchy shared by every module."""


class BTWhyError(Exception):
    """Base class for all package errors."""


class ValidationError(BTWhyError):
    """A tree, state model or file failed structural validation."""


class UnknownNode(BTWhyError, KeyError):
    pass


class UnknownVariable(BTWhyError, KeyError):
    pass


class MissingVariable(ValidationError):
    """A leaf refers to a state variable that the state model does not declare."""


class RangeViolation(BTWhyError, ValueError):
    """A value falls outside the declared range of its variable."""


class IndexMismatch(BTWhyError, ValueError):
    pass


class OutOfRange(BTWhyError, IndexError):
    pass


class MissingParentValue(BTWhyError, KeyError):
    pass


class ReplayMismatch(BTWhyError):
    """The explanation model disagrees with what the episodic memory recorded."""


class InvalidQuery(BTWhyError, ValueError):
    pass


class NoExplanationFound(BTWhyError):
    """The counterfactual search exhausted its depth budget without a hit."""

    def __init__(self, message: str, candidates_evaluated: int = 0, max_depth: int = 0):
        super().__init__(message)
        self.candidates_evaluated = candidates_evaluated
        self.max_depth = max_depth


class NoPreviousTick(InvalidQuery):
    pass
