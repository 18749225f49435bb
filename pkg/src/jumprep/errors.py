"""Exception hierarchy shared by every module."""


class JumpRepError(Exception):
    pass


class OutOfDomain(JumpRepError, ValueError):
    pass


class NoPiece(JumpRepError, ValueError):
    pass


class NonDifferentiable(JumpRepError, ValueError):
    pass


class OutOfRange(JumpRepError, ValueError):
    pass


class InvalidSystem(JumpRepError, ValueError):
    pass


class IndexOutOfRange(JumpRepError, IndexError):
    pass


class ArityMismatch(JumpRepError, ValueError):
    pass


class EntryCapExceeded(JumpRepError, RuntimeError):
    def __init__(self, x, cap):
        super().__init__(f"orbit of {x} did not enter the target set within {cap} steps")
        self.x = x
        self.cap = cap


class GridMismatch(JumpRepError, ValueError):
    pass


class TailUnbounded(JumpRepError, ValueError):
    pass


class QuadratureFailure(JumpRepError, RuntimeError):
    pass


class NonConvergence(JumpRepError, RuntimeError):
    pass


class OrbitEscape(JumpRepError, RuntimeError):
    pass


class UnknownEntry(JumpRepError, KeyError):
    pass
