"""Exception hierarchy shared by every mflab module."""


class MflabError(Exception):
    """Base class for all errors raised by mflab."""


class InvalidParameter(MflabError, ValueError):
    pass


class NegativeCount(InvalidParameter):
    pass


class EmptyPopulation(InvalidParameter):
    pass


class DimensionMismatch(InvalidParameter):
    pass


class StepInvalid(InvalidParameter):
    pass


class OutOfRange(InvalidParameter):
    pass


class HorizonMismatch(InvalidParameter):
    pass


class TooFewReplicas(InvalidParameter):
    pass


class ConfigError(MflabError):
    """Malformed or missing experiment configuration.

    ``path`` names the file and ``field`` the offending dotted key, when known.
    """

    def __init__(self, message, path=None, field=None):
        self.path = path
        self.field = field
        where = ""
        if path is not None:
            where = f"{path}"
            if field:
                where += f" [{field}]"
            where += ": "
        elif field:
            where = f"[{field}]: "
        super().__init__(where + message)


class BoundViolation(MflabError):
    """A revision protocol produced off-diagonal row sums above the clock rate.

    The offending population state and payoff vector are kept on the
    exception so that callers (and the CLI) can report where the protocol
    stopped being a valid switching rule.
    """

    def __init__(self, message, state=None, payoff=None, row=None, row_sum=None):
        super().__init__(message)
        self.state = state
        self.payoff = payoff
        self.row = row
        self.row_sum = row_sum
