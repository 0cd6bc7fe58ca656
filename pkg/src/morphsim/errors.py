"""Exception hierarchy shared by every morphsim module."""


class MorphError(Exception):
    """Base class for all morphsim errors."""


class MeshError(MorphError, ValueError):
    pass


class DegenerateFace(MeshError):
    def __init__(self, message, face=None):
        super().__init__(message)
        self.face = face


class DegenerateNormal(MeshError):
    def __init__(self, message, vertex=None, face=None):
        super().__init__(message)
        self.vertex = vertex
        self.face = face


class DegenerateAngle(MeshError):
    def __init__(self, message, face=None):
        super().__init__(message)
        self.face = face


class ParseError(MeshError):
    pass


class NonQuadFace(MeshError):
    pass


class SingularSystem(MorphError, ValueError):
    pass


class SingularJacobian(MorphError, ValueError):
    pass


class NegativeSpeed(MorphError, ValueError):
    pass


class BadPitch(MorphError, ValueError):
    pass


class BadGeometry(MorphError, ValueError):
    pass


class FitFailure(MorphError):
    pass


class SolverError(MorphError, ArithmeticError):
    """Numerical failure inside the least-squares solver."""


class FactorizationFailure(SolverError):
    pass


class LinearSolveFailure(SolverError):
    pass


class NonFiniteResidual(SolverError):
    pass
