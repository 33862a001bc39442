"""Exception types shared across the solvers."""


class AllocationError(ValueError):
    """An allocation breaks one of its structural constraints."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations)
        super().__init__(f"allocation violates {len(self.violations)} constraint(s): {lines}")


class BracketError(ValueError):
    """Bisection endpoints do not enclose a sign change."""


class NumericError(ArithmeticError):
    """A numeric routine failed to converge or produced garbage."""


class EllipsoidDegeneracyError(NumericError):
    """The ellipsoid shape matrix stopped being positive definite."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class LPRecoveryError(NumericError):
    """Primal recovery from converged duals failed."""

    def __init__(self, message, lam=None, beta=None, tie_set=None):
        super().__init__(message)
        self.lam = lam
        self.beta = beta
        self.tie_set = tie_set


class InfeasibleError(Exception):
    """No schedule satisfies the demands under the given time/power limits.

    ``details`` carries whatever the feasibility probe measured, e.g. the
    minimum achievable transmission time or the average power needed at
    ``T_max``.
    """

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details


class UnboundedError(Exception):
    """The objective keeps decreasing as the frame length grows."""


class ScenarioError(ValueError):
    """Malformed scenario file."""
