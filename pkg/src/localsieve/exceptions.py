"""Exception types raised across the package."""


class GridMismatchError(ValueError):
    """Two grid functions (or a kernel and a grid) do not live on the same grid."""


class PaddingContractError(ValueError):
    """A Fourier-side operation was asked to act on a function too close to the box edge."""


class AtomConstructionError(RuntimeError):
    """An atom generator could not produce an admissible atom."""


class ConfigurationError(ValueError):
    """An experiment configuration is malformed or references unknown objects."""
