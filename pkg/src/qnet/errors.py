"""Exception hierarchy shared by every qnet module."""


class QnetError(Exception):
    """Base class for all qnet errors."""


class EmptyTopology(QnetError, ValueError):
    pass


class InvalidColumnSize(QnetError, ValueError):
    pass


class PathCountOverflow(QnetError, OverflowError):
    pass


class PathTopologyMismatch(QnetError, ValueError):
    pass


class TopologyMismatch(QnetError, ValueError):
    pass


class InvalidDistribution(QnetError, ValueError):
    pass


class NodeAbsent(QnetError, KeyError):
    pass


class NodeUnvisited(QnetError, ValueError):
    pass


class InsufficientData(QnetError, ValueError):
    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class DegenerateVariance(QnetError, ArithmeticError):
    pass


class InvalidPValue(QnetError, ValueError):
    pass


class ParseError(QnetError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class IndexOutOfRange(ParseError):
    pass


class NonFiniteQuality(ParseError):
    pass


class EmptyDataset(ParseError):
    pass
