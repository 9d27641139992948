"""Exceptions raised by mimo_feedback. `exit_code` is what the CLI returns."""


class FeedbackSimError(Exception):
    exit_code = 1


class InvalidArgumentError(FeedbackSimError, ValueError):
    exit_code = 2


class UsageError(FeedbackSimError):
    exit_code = 2


class ResourceLimitError(FeedbackSimError):
    exit_code = 3


class NumericError(FeedbackSimError):
    exit_code = 4


class DegenerateDrawError(NumericError): pass


class DegenerateDecompositionError(NumericError): pass


class InvariantViolation(NumericError): pass


class SingularChannelError(NumericError):

    def __init__(self, message, condition=None):
        NumericError.__init__(self, message)
        self.condition = condition


class OutputError(FeedbackSimError):

    def __init__(self, message, path=None):
        FeedbackSimError.__init__(self, "{} (path: {})".format(message, path))
        self.path = path
