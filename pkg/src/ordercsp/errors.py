"""Exception hierarchy. Every domain failure derives from OrderCspError."""


class OrderCspError(Exception):
    pass


class NotAPermutation(OrderCspError, ValueError):
    pass


class DuplicateCoordinate(OrderCspError):
    pass


class LengthMismatch(OrderCspError):
    pass


class OutOfRange(OrderCspError):
    pass


class ArityTooLarge(OrderCspError):
    pass


class ArityMismatch(OrderCspError):
    pass


class ArityUnsupported(OrderCspError):
    pass


class BadIndex(OrderCspError):
    pass


class EmptySat(OrderCspError):
    pass


class NotARelaxation(OrderCspError):
    pass


class TooLarge(OrderCspError):
    pass


class DegenerateMixture(OrderCspError):
    pass


class HasUniformBlock(OrderCspError):
    pass


class ParseError(OrderCspError):
    def __init__(self, msg: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


class DuplicateIndexInTuple(OrderCspError):
    pass


class TooLargeForExact(OrderCspError):
    pass


class TypeMismatch(OrderCspError):
    pass


class InconsistentCommonOrder(OrderCspError):
    pass


class InconsistentTag(OrderCspError):
    pass


class Unsatisfiable(OrderCspError):
    pass
