#################################################################################################
# ERRORS
#################################################################################################
class EfimovError(Exception):
    """
    Base class of every error raised by the solver chain. The command line catches this one
    and turns it into an exit status.
    """


class DomainError(EfimovError, ValueError):
    """Argument outside the domain of an operation (x < -1/e for W, y <= 0, ...)"""


class SingularPoint(EfimovError, ValueError):
    """Evaluation exactly at a point interaction centre"""


class NoEfimovRegime(EfimovError):
    """
    The mass ratio is sub-critical: mu/nu * W(1)^2 <= 1/4, so beta is not real.
    :param mu_over_nu: mu/nu of the rejected configuration
    :param critical_ratio: M/m above which the Efimov regime starts
    """

    def __init__(self, mu_over_nu, critical_ratio):
        self.mu_over_nu = mu_over_nu
        self.critical_ratio = critical_ratio
        super().__init__(
            f"no Efimov regime: mu/nu * W(1)^2 = {mu_over_nu:.6g} * W(1)^2 <= 1/4 "
            f"(critical mass ratio M/m = {critical_ratio:.6g})"
        )


class DegenerateInner(EfimovError):
    """a and b both vanish, which the zero-energy inner solution cannot do"""


class BracketFailure(EfimovError):
    """No sign change of the matching determinant inside the bracket of level n"""

    def __init__(self, n, lower, upper, reason="no sign change"):
        self.n = n
        self.lower = lower
        self.upper = upper
        super().__init__(f"level {n}: {reason} in [{lower:.6e}, {upper:.6e}]")


class SeedUnderflow(EfimovError):
    """lambda_n^0 * r0 fell below the representable range"""


class StepSizeUnderflow(EfimovError):
    """The adaptive integrator could not keep its step above the minimum"""


class MacdonaldUnderflow(EfimovError, ArithmeticError):
    """exp(-x) underflows, K_{i beta}(x) is zero in double precision"""


class NonConvergence(EfimovError):
    """An iterative reference method ran past its limit"""


class InsufficientDomain(EfimovError):
    """The finite-difference box is too short for the requested eigenfunctions"""


class ConfigError(EfimovError, ValueError):
    """Invalid run configuration"""
