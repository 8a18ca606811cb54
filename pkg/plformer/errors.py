"""Exception hierarchy shared by every plformer module, MIT License"""


class PLFormerError(Exception):
    """Base class of all errors raised by plformer."""


class ValidationError(PLFormerError, ValueError):
    """An input violates a documented invariant or domain."""


class SceneFormatError(ValidationError):
    """A scene file is malformed.

    Args:
    - message: a description of the problem.
    - line: the 1-based line number where the problem was found.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = "line {}: {}".format(line, message)
        super(SceneFormatError, self).__init__(message)


class ShapeError(ValidationError):
    """Two tensors have incompatible shapes for an op."""

    def __init__(self, op, shape_a, shape_b, detail=""):
        self.op = op
        self.shape_a = tuple(shape_a)
        self.shape_b = tuple(shape_b)
        message = "{}: incompatible shapes {} and {}".format(
            op, list(self.shape_a), list(self.shape_b))
        if detail:
            message += " ({})".format(detail)
        super(ShapeError, self).__init__(message)


class OutOfBoundsError(ValidationError):
    """A point lies outside the scene it is queried against."""


class SceneGenerationError(ValidationError):
    """Scene generator parameters cannot produce a valid scene."""


class LinkMismatchError(ValidationError):
    """Predictions and ground truth do not cover the same link ids."""

    def __init__(self, missing, extra):
        self.missing = sorted(missing)
        self.extra = sorted(extra)
        parts = []
        if self.missing:
            parts.append("{} link(s) without prediction, first missing id {}".format(
                len(self.missing), self.missing[0]))
        if self.extra:
            parts.append("{} prediction(s) for unknown links, first extra id {}".format(
                len(self.extra), self.extra[0]))
        super(LinkMismatchError, self).__init__("; ".join(parts))


class NonFiniteError(PLFormerError, ArithmeticError):
    """A NaN or Inf appeared where finite values are required."""


class DivergenceError(NonFiniteError):
    """Training produced a non-finite loss."""

    def __init__(self, step, loss):
        self.step = step
        self.loss = loss
        super(DivergenceError, self).__init__(
            "training diverged at step {} (loss {})".format(step, loss))
