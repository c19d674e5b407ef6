"""Exception types shared across the package."""


class MeshError(ValueError):
    """Invalid mesh data (bad shapes, indices, or degenerate faces)."""


class DegenerateFaceError(MeshError):
    """A face with (near-)zero area or repeated vertex indices."""

    def __init__(self, face_index, message=None):
        self.face_index = int(face_index)
        super().__init__(message or f"degenerate face {face_index}")


class ObjParseError(ValueError):
    """OBJ/MTL parse failure, carrying the offending line number."""

    def __init__(self, path, line_number, message):
        self.path = str(path)
        self.line_number = int(line_number)
        super().__init__(f"{path}:{line_number}: {message}")


class FactorizationError(RuntimeError):
    """Sparse factorization of the gauge-fixed Laplacian failed."""


class ConfigError(ValueError):
    """Invalid run configuration."""


class GuidanceError(RuntimeError):
    """A guidance provider call failed."""


class PipelineError(RuntimeError):
    """Optimization aborted (NaN gradients, repeated provider failures)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ProtocolError(GuidanceError):
    """Remote guidance response violated the wire protocol."""
