"""Exception types shared across the toolkit."""


class EmtresError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(EmtresError, ValueError):
    """A physical parameter is outside its admissible domain."""


class AssemblyError(EmtresError):
    """The network cannot be assembled into a solvable nodal system."""


class DivergenceError(EmtresError):
    """The time-domain solution became non-finite."""

    def __init__(self, time, node):
        self.time = time
        self.node = node
        super().__init__(f"non-finite solution at t={time:.9g} s (node {node})")


class SteadyStateError(EmtresError):
    """No steady state was reached within the allowed horizon."""


class WindowError(EmtresError, ValueError):
    """A requested measurement/analysis window falls outside the record."""


class UnsupportedElementError(EmtresError):
    """An element class is not admissible for the requested analysis."""


class ConfigError(EmtresError):
    """A scenario document is syntactically or semantically invalid."""
