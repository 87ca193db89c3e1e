"""Exception types shared across the package."""


class DevImplicitError(Exception):
    """Base class for all package errors."""


class ConfigurationError(DevImplicitError):
    """Invalid configuration value (unknown activation, bad rank, unknown key, ...)."""


class DimensionError(DevImplicitError):
    """Array shapes do not agree with the declared layer or batch dimensions."""


class StateError(DevImplicitError):
    """Operation called out of order (e.g. backward before forward)."""


class SingularPointError(DevImplicitError):
    """Curvature requested where the field gradient is below the floor."""


class EmptyBatchError(DevImplicitError):
    """A reduction over samples was requested but no valid sample remained."""


class DegenerateInputError(DevImplicitError):
    """Geometric input without usable extent (e.g. all points coincide)."""


class CloudParseError(DevImplicitError):
    """Point cloud file could not be parsed; message carries file and line."""


class TrainingDivergedError(DevImplicitError):
    """Loss became non-finite during optimization."""


class NonManifoldError(DevImplicitError):
    """Mesh has edges shared by more than two triangles."""

    def __init__(self, edges):
        self.edges = list(edges)
        super().__init__(
            f"mesh is non-manifold at {len(self.edges)} edge(s): "
            + ", ".join(str(e) for e in self.edges[:8])
            + ("..." if len(self.edges) > 8 else "")
        )
