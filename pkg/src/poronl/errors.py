"""Exception hierarchy shared by the solver modules."""


class PoronlError(Exception):
    """Base class for all solver errors."""


class ConfigError(PoronlError, ValueError):
    """Invalid run configuration, parameter set or unsupported option."""


class MeshError(PoronlError):
    """Structurally corrupt mesh (degenerate or inverted triangles)."""


class SolverError(PoronlError):
    """Factorization or solve failed (singular pivot, dimension mismatch)."""


class DivergenceError(PoronlError):
    """Non-finite values appeared in the discrete solution."""


class IncompressibleLimitError(ConfigError):
    """Poisson ratio at (or beyond) 1/2, where the Lame parameter is undefined."""


class OrderUndefined(PoronlError, ValueError):
    """Observed order requested from a zero or negative error."""
