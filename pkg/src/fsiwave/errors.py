"""Exception hierarchy shared by all fsiwave modules."""


class FsiwError(Exception):
    """Base class for every error raised by the package."""


class InvalidSpec(FsiwError):
    """A domain description violates its containment or size constraints."""


class MeshError(FsiwError):
    """Mesh generation produced a triangulation that fails its invariants."""


class InvalidArgument(FsiwError, ValueError):
    pass


class DegenerateInput(FsiwError, ValueError):
    """A quantity is undefined for the given input (e.g. a ratio with zero denominator)."""


class SolveFailure(FsiwError):
    pass


class AssemblyFailure(FsiwError):
    pass


class PicardDivergence(FsiwError):
    """Fixed-point iteration for the convection term did not converge."""


class BlowUp(FsiwError):
    """Energy grew past the guard threshold during time integration."""


class InsufficientWindow(FsiwError, ValueError):
    pass


class MissingArtifacts(FsiwError):
    pass
