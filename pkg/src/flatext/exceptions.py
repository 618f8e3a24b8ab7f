"""Exception hierarchy shared by all modules."""


class FlatExtError(Exception):
    """Base class for all errors raised by flatext."""


class InputError(FlatExtError, ValueError):
    """Malformed or inconsistent user input."""


# algebra
class NonTerminatingRewrite(FlatExtError):
    pass


class ConfluenceError(InputError):
    pass


class ZeroElement(FlatExtError, ValueError):
    pass


# filtration / hankel
class DimensionOverflow(FlatExtError):
    pass


class MissingMoment(InputError):
    def __init__(self, word, label=None):
        self.word = word
        super().__init__(f"no moment value for word {label or word!r}")


class NonHermitianMoments(InputError):
    pass


class NotFlat(FlatExtError):
    def __init__(self, certificate, message=None):
        self.certificate = certificate
        super().__init__(
            message
            or f"functional is not flat: rank_C={certificate.rank_C}, rank_B={certificate.rank_B}"
        )


class HypothesisError(FlatExtError):
    """The truncation does not satisfy the hypotheses required for a flat extension."""

    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)


# extension
class SingularGram(FlatExtError):
    pass


class EscapesC(FlatExtError):
    def __init__(self, word, label=None):
        self.word = word
        super().__init__(f"word {label or word!r} is outside the span of C")


# solvers
class RelationViolation(InputError):
    pass


class NonCommutingOps(FlatExtError):
    pass


class NegativeWeight(FlatExtError):
    pass


class BoundViolation(FlatExtError):
    pass


class CenterNotDiagonalizable(FlatExtError):
    pass


class GramNotPD(FlatExtError):
    pass


# cli_io
class ParseError(InputError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)


class ValidationError(InputError):
    def __init__(self, message, path=()):
        self.path = tuple(path)
        loc = "/".join(str(p) for p in self.path)
        super().__init__(f"{loc}: {message}" if loc else message)
