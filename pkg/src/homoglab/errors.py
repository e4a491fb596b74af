"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration problems exit 2, solver
failures exit 3, violated mathematical invariants exit 4.
"""


class HomoglabError(Exception):
    """Base class for all package errors."""


class InputError(HomoglabError, ValueError):
    """Malformed direct inputs to an operation (bad shapes, out-of-range args)."""


class ConfigError(HomoglabError):
    """Malformed experiment configuration (unknown registry name, bad field)."""


class SolverError(HomoglabError):
    """A numerical routine failed to produce a usable result."""


class InvariantError(HomoglabError):
    """A mathematical invariant that the code promises to certify was violated."""


class ExtrapolationError(InputError):
    """A tabulated function was queried outside its grid hull."""

    def __init__(self, point, hull):
        self.point = point
        self.hull = hull
        super().__init__(f"query {point} lies outside the tabulated hull {hull}")


class ErgodicWindowError(SolverError):
    """No admissible ergodic shift was found in the scanned window."""

    def __init__(self, window_start, window_length, eta):
        self.window_start = window_start
        self.window_length = window_length
        self.eta = eta
        super().__init__(
            "no shift tau with dist(tau*xi, Z^d) < "
            f"{eta} in window [{window_start}, {window_start + window_length}]"
        )
