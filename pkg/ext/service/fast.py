import logging
import math
from enum import Enum

import numpy as np
from scipy.interpolate import CubicSpline

from ext.service.errors import DomainError, SingularPoint
from ext.service.specialfn import W1, lambert_w0

log = logging.getLogger(__name__)

# Guard radius in units of r0 below which v is evaluated from the averaged slope of g
GUARD_X = 1e-6
# Two-point Gauss-Legendre nodes on [0, 1]
_GAUSS2 = (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0))
_GAP_MAX_ITER = 50


#################################################################################################
# CUTOFF PROFILE
#################################################################################################
class ProfileKind(str, Enum):
    BUMP = "bump"
    QUINTIC = "quintic"
    TABLE = "custom-table"


class CutoffProfile:
    """
    The regularising function theta: theta(0) = 1, theta(r) = 0 for r >= r0, at least C^1.
    Internally every kind is a shape function of x = r / r0, so rescaling r0 keeps the shape.
    """

    def __init__(self, kind=ProfileKind.BUMP, r0=1.0, spline=None):
        kind = ProfileKind(kind)
        if not r0 > 0.0 or math.isinf(r0):
            raise DomainError(f"cutoff radius r0 must be finite and > 0, got {r0!r}")
        if kind is ProfileKind.TABLE and spline is None:
            raise DomainError("a custom-table profile needs its tabulated values, use profile_from_table")
        self.__kind = kind
        self.__r0 = float(r0)
        self.__spline = spline

    @property
    def kind(self):
        return self.__kind

    @property
    def r0(self):
        return self.__r0

    def rescaled(self, r0):
        """Same dimensionless shape on a different cutoff radius"""
        return CutoffProfile(self.__kind, r0, self.__spline)

    def shape(self, x):
        """
        Profile in the dimensionless variable x = r / r0.
        :return: (theta, 1 - theta, d theta / dx), the deficit computed without cancellation
        """
        if x >= 1.0:
            return 0.0, 1.0, 0.0
        if x <= 0.0:
            x = 0.0
        if self.__kind is ProfileKind.BUMP:
            one_minus = (1.0 - x) * (1.0 + x)
            q = x * x / one_minus
            if q > 745.0:
                return 0.0, 1.0, 0.0
            theta = math.exp(-q)
            return theta, -math.expm1(-q), -theta * 2.0 * x / (one_minus * one_minus)
        if self.__kind is ProfileKind.QUINTIC:
            deficit = x**3 * (10.0 + x * (-15.0 + 6.0 * x))
            return 1.0 - deficit, deficit, -30.0 * x * x * (1.0 - x) ** 2
        theta = float(self.__spline(x))
        return theta, 1.0 - theta, float(self.__spline(x, 1))

    def theta(self, r):
        return self.shape(r / self.__r0)[0]

    def deficit(self, r):
        return self.shape(r / self.__r0)[1]

    def derivative(self, r):
        return self.shape(r / self.__r0)[2] / self.__r0

    def __repr__(self):
        return f"CutoffProfile(kind={self.__kind.value!r}, r0={self.__r0!r})"


def profile_from_table(r, theta, atol=1e-12):
    """
    Custom-table profile: cubic spline through (r, theta), clamped to zero slope at r0 = r[-1]
    so that theta is C^1 across the cutoff.
    :param r: increasing radii starting at 0
    :param theta: tabulated values, theta[0] = 1 and theta[-1] = 0
    :return: CutoffProfile of kind custom-table
    """
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if r.ndim != 1 or r.shape != theta.shape or r.size < 4:
        raise DomainError("profile table needs matching 1-d arrays with at least 4 points")
    if r[0] != 0.0 or np.any(np.diff(r) <= 0.0):
        raise DomainError("profile table radii must start at 0 and increase")
    if abs(theta[0] - 1.0) > atol or abs(theta[-1]) > atol:
        raise DomainError("profile table must satisfy theta(0) = 1 and theta(r0) = 0")
    r0 = float(r[-1])
    spline = CubicSpline(r / r0, theta, bc_type=("not-a-knot", (1, 0.0)))
    return CutoffProfile(ProfileKind.TABLE, r0, spline)


def theta_eval(profile, r):
    """
    theta(r) for r >= 0
    """
    if r < 0.0:
        raise DomainError(f"theta_eval: r must be >= 0, got {r!r}")
    return profile.theta(r)


def theta_derivative(profile, r):
    if r < 0.0:
        raise DomainError(f"theta_derivative: r must be >= 0, got {r!r}")
    return profile.derivative(r)


#################################################################################################
# MODEL PARAMETERS
#################################################################################################
class ModelParams:
    """
    Masses and reduced masses of the (boson, boson, light particle) system, hbar = 1:
    mu = M, nu = 4 M m / (2M + m).
    """

    def __init__(self, mu, nu, profile=None, M=None, m=None):
        if not (mu > 0.0 and nu > 0.0) or math.isinf(mu) or math.isinf(nu):
            raise DomainError(f"mu and nu must be finite and > 0, got mu={mu!r}, nu={nu!r}")
        self.__mu = float(mu)
        self.__nu = float(nu)
        self.__M = M
        self.__m = m
        self.__profile = profile if profile is not None else CutoffProfile()

    @classmethod
    def from_masses(cls, M, m, profile=None):
        if not (M > 0.0 and m > 0.0):
            raise DomainError(f"masses must be > 0, got M={M!r}, m={m!r}")
        return cls(M, 4.0 * M * m / (2.0 * M + m), profile, M=float(M), m=float(m))

    @classmethod
    def from_mass_ratio(cls, ratio, profile=None):
        """M/m given, light mass taken as the unit"""
        return cls.from_masses(float(ratio), 1.0, profile)

    @property
    def mu(self):
        return self.__mu

    @property
    def nu(self):
        return self.__nu

    @property
    def M(self):
        return self.__M

    @property
    def m(self):
        return self.__m

    @property
    def mass_ratio(self):
        if self.__M is None:
            return None
        return self.__M / self.__m

    @property
    def profile(self):
        return self.__profile

    @property
    def r0(self):
        return self.__profile.r0

    @property
    def mu_over_nu(self):
        return self.__mu / self.__nu

    def with_profile(self, profile):
        return ModelParams(self.__mu, self.__nu, profile, M=self.__M, m=self.__m)

    def __repr__(self):
        return f"ModelParams(mu={self.__mu!r}, nu={self.__nu!r}, profile={self.__profile!r})"


#################################################################################################
# FAST EIGENVALUE
#################################################################################################
def lambert_gap(theta, deficit):
    """
    g = W(exp(theta)) - theta. Away from theta = 1 this is the difference itself; close to it
    the difference cancels, so g is taken from the equivalent equation g - expm1(-g) = 1 - theta
    (ln W + W = theta gives g = -ln W) solved by Newton, which converges monotonically from g = deficit/2.
    """
    if deficit > 0.25:
        return lambert_w0(math.exp(theta)) - theta
    if deficit <= 0.0:
        return 0.0
    g = 0.5 * deficit
    for _ in range(_GAP_MAX_ITER):
        step = (g - math.expm1(-g) - deficit) / (1.0 + math.exp(-g))
        g -= step
        if abs(step) <= 2.0 * math.ulp(g):
            break
    return g


def _gap_slope(shape, x):
    """dg/dx = -theta'(x) / (1 + W(exp(theta(x))))"""
    theta, deficit, dtheta = shape(x)
    return -dtheta / (1.0 + theta + lambert_gap(theta, deficit))


def fast_eigenvalue(params, y):
    """
    The only eigenvalue of the fast Hamiltonian with point interactions at +-y/2:
    E(y) = -(W(exp(theta(y))) - theta(y))^2 / (nu y^2)
    :param params: ModelParams
    :param y: boson separation, > 0
    :return: E(y) < 0
    """
    if not y > 0.0:
        raise DomainError(f"fast_eigenvalue: y must be > 0, got {y!r}")
    theta, deficit, _ = params.profile.shape(y / params.r0)
    g = lambert_gap(theta, deficit)
    return -((g / y) ** 2) / params.nu


def eigenvalue_residual(params, y):
    """
    Relative residual (s exp(s) - exp(theta)) / exp(theta) of the fast eigenvalue equation,
    with s = sqrt(nu * (-E)) * y + theta back-substituted from fast_eigenvalue.
    """
    theta = params.profile.theta(y)
    s = math.sqrt(params.nu * -fast_eigenvalue(params, y)) * y + theta
    return s * math.exp(s - theta) - 1.0


def green(lam, nu, distance):
    """
    G^lambda(x) = exp(-sqrt(lambda nu) |x|) / |x|
    """
    return np.exp(-math.sqrt(lam * nu) * distance) / distance


def fast_eigenfunction(params, y, x):
    """
    Unnormalised fast eigenfunction G(x + y/2) + G(x - y/2) with lambda = -E(y), q = 1.
    The boson separation is taken along the third axis.
    :param y: separation, > 0
    :param x: light-particle position, shape (3,) or (..., 3)
    :return: float or array of values
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 3:
        raise DomainError("fast_eigenfunction: x must be a 3-vector or an array of 3-vectors")
    lam = -fast_eigenvalue(params, y)
    half = np.array([0.0, 0.0, 0.5 * y])
    d_plus = np.linalg.norm(x + half, axis=-1)
    d_minus = np.linalg.norm(x - half, axis=-1)
    if np.any(d_plus == 0.0) or np.any(d_minus == 0.0):
        raise SingularPoint("fast_eigenfunction evaluated at a point interaction centre x = +-y/2")
    values = green(lam, params.nu, d_plus) + green(lam, params.nu, d_minus)
    return float(values) if values.ndim == 0 else values


#################################################################################################
# EFFECTIVE POTENTIAL
#################################################################################################
class EffectivePotential:
    """
    v(r) = mu E(r), the potential of the slow s-wave problem. Immutable.
    Beyond r0 it is exactly -(mu/nu) W(1)^2 / r^2 = -(beta^2 + 1/4) / r^2.
    """

    def __init__(self, params, inner_constant=None):
        self.__params = params
        self.__inner_constant = None if inner_constant is None else float(inner_constant)
        self.__strength = params.mu_over_nu * W1 * W1

    @classmethod
    def with_inner_constant(cls, params, value):
        """v forced to the constant value on [0, r0], the exterior left untouched"""
        return cls(params, inner_constant=value)

    @property
    def params(self):
        return self.__params

    @property
    def r0(self):
        return self.__params.r0

    @property
    def epsilon_guard(self):
        return GUARD_X * self.__params.r0

    @property
    def inner_constant(self):
        return self.__inner_constant

    @property
    def exterior_strength(self):
        """(mu/nu) W(1)^2, the coefficient of -1/r^2 outside r0"""
        return self.__strength

    def scaled(self, x):
        """
        Dimensionless potential U(x) = r0^2 v(r0 x); it depends on the profile shape and mu/nu only.
        """
        if x >= 1.0:
            return -self.__strength / (x * x)
        if self.__inner_constant is not None:
            return self.__inner_constant * self.r0**2
        shape = self.__params.profile.shape
        if x < GUARD_X:
            # g(x)/x as the mean of g' over [0, x], two-point Gauss
            slope = 0.5 * (_gap_slope(shape, _GAUSS2[0] * x) + _gap_slope(shape, _GAUSS2[1] * x))
            return -self.__params.mu_over_nu * slope * slope
        theta, deficit, _ = shape(x)
        g = lambert_gap(theta, deficit)
        return -self.__params.mu_over_nu * (g / x) ** 2

    def __call__(self, r):
        if r < 0.0:
            raise DomainError(f"effective potential needs r >= 0, got {r!r}")
        r0 = self.r0
        if r >= r0:
            return -self.__strength / (r * r)
        return self.scaled(r / r0) / (r0 * r0)

    def depth_scaled(self, samples=4001):
        """
        max(-U) over [0, inf); every bound state has (lambda r0)^2 below it
        """
        grid = np.linspace(0.0, 1.0, samples)
        return max(-self.scaled(x) for x in grid)


def effective_potential(params):
    """
    :return: EffectivePotential v = mu E for the given parameters
    """
    return EffectivePotential(params)


def potential_table(pot, n_rows, extent=2.0):
    """
    Rows (r, theta, E, v, v r^2) on r = extent * r0 * (i + 1) / n_rows, in physical units.
    """
    params = pot.params
    rows = []
    for i in range(n_rows):
        r = extent * params.r0 * (i + 1) / n_rows
        v = pot(r)
        rows.append((r, params.profile.theta(r), v / params.mu, v, v * r * r))
    return rows


def well_depth(pot):
    """max(-v) over [0, inf) in physical units, an upper bound on lambda^2 for bound states"""
    return pot.depth_scaled() / pot.r0**2
