import logging
import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import integrate

from ext.service.errors import DomainError, MacdonaldUnderflow

log = logging.getLogger(__name__)

EULER_GAMMA = 0.57721566490153286061

# 1/e split in a double and its rounding error, so that x + 1/e keeps its digits near the branch point
_INV_E_HI = 0.36787944117144233
_INV_E_LO = -1.2428753672788363e-17
_BRANCH_SLACK = 2.0 * math.ulp(_INV_E_HI)
_HALLEY_MAX_ITER = 32

# Macdonald evaluation windows
SMALL_Z_FACTOR = 1e-6
LARGE_Z = 50.0
UNDERFLOW_Z = 700.0
_QUAD_EPSREL = 1e-12
_QUAD_EPSABS = 1e-15
_QUAD_LIMIT = 400

# Shifted path t + i phi for beta above 10/pi: phi stops _SHIFT_MARGIN / beta short of pi/2
_SHIFT_MARGIN = 5.0
_SHIFT_TAIL = 50.0
_SHIFT_PANEL_PHASE = 6.0
_SHIFT_NODES = 20

_GAMMA_SERIES_TERMS = 2000


#################################################################################################
# LAMBERT W
#################################################################################################
def lambert_w0(x):
    """
    Principal branch of the Lambert function, the solution w >= -1 of w * exp(w) = x.
    Halley iteration from a piecewise initial guess: branch-point series near -1/e,
    log1p in the middle, log - log log for large x.
    :param x: real >= -1/e (values up to two ulps below -1/e are clamped to the branch point)
    :return: w in [-1, inf)
    """
    x = float(x)
    if math.isnan(x):
        raise DomainError("lambert_w0: x is NaN")
    if math.isinf(x):
        if x > 0:
            return math.inf
        raise DomainError("lambert_w0: x = -inf is below -1/e")

    # Distance to the branch point, carried with the low part of 1/e
    gap = (x + _INV_E_HI) + _INV_E_LO
    if gap <= 0.0:
        if gap < -_BRANCH_SLACK:
            raise DomainError(f"lambert_w0: x = {x!r} is below -1/e")
        return -1.0
    if x == 0.0:
        return 0.0

    if x < -0.25:
        p = math.sqrt(2.0 * math.e * gap)
        w = -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * (11.0 / 72.0 - p * 43.0 / 540.0)))
    elif x <= math.e:
        w = math.log1p(x)
        w *= 1.0 - math.log1p(w) / (2.0 + w)
    else:
        l1 = math.log(x)
        l2 = math.log(l1)
        w = l1 - l2 + l2 / l1

    for _ in range(_HALLEY_MAX_ITER):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        if f == 0.0 or wp1 <= 0.0:
            break
        dw = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w_next = w - dw
        if w_next <= -1.0:
            # overshoot past the branch point: halve the distance instead
            w_next = 0.5 * (w - 1.0)
        if abs(w_next - w) <= 4.0 * math.ulp(1.0) * (1.0 + abs(w_next)):
            w = w_next
            break
        w = w_next
    return w


lambert_w0_array = np.vectorize(lambert_w0, otypes=[float])
lambert_w0_array.__doc__ = "Elementwise lambert_w0 for numpy arrays"

W1 = lambert_w0(1.0)


#################################################################################################
# GAMMA PHASE
#################################################################################################
@dataclass(frozen=True)
class GammaPhase:
    beta: float
    theta_beta: float
    abs_sq: float


def _phase_series(beta):
    """
    arg Gamma(1 + i beta) before wrapping: -gamma*beta + sum_k (beta/k - arctan(beta/k)).
    The tail past N is closed with Euler-Maclaurin on f(k) = beta/k - arctan(beta/k).
    """
    n_terms = max(_GAMMA_SERIES_TERMS, int(math.ceil(50.0 * beta)))
    ratio = beta / np.arange(1, n_terms + 1, dtype=float)
    head = math.fsum(ratio - np.arctan(ratio))

    n = float(n_terms)
    q = beta / n
    integral = 0.5 * beta * math.log1p(q * q) + (n * math.atan(q) - beta)
    f_n = q - math.atan(q)
    df_n = -(beta**3) / (n * n * (n * n + beta * beta))
    tail = integral - 0.5 * f_n - df_n / 12.0
    return -EULER_GAMMA * beta + head + tail


def gamma_phase(beta):
    """
    Phase and squared modulus of Gamma(1 + i beta).
    :param beta: real >= 0
    :return: GammaPhase with theta_beta in (-pi, pi] and abs_sq = pi beta / sinh(pi beta)
    """
    beta = float(beta)
    if not beta >= 0.0 or math.isinf(beta):
        raise DomainError(f"gamma_phase: beta must be finite and >= 0, got {beta!r}")
    if beta == 0.0:
        return GammaPhase(beta=0.0, theta_beta=0.0, abs_sq=1.0)

    theta = math.remainder(_phase_series(beta), 2.0 * math.pi)
    if theta <= -math.pi:
        theta += 2.0 * math.pi
    # pi b / sinh(pi b) written so that it neither overflows nor loses digits
    abs_sq = 2.0 * math.pi * beta * math.exp(-math.pi * beta) / -math.expm1(-2.0 * math.pi * beta)
    return GammaPhase(beta=beta, theta_beta=theta, abs_sq=abs_sq)


def macdonald_amplitude(beta):
    """
    Envelope sqrt(pi / (beta sinh(pi beta))) of K_{i beta} near the origin
    """
    if beta <= 0.0:
        raise DomainError("macdonald_amplitude: beta must be > 0")
    return math.sqrt(gamma_phase(beta).abs_sq) / beta


#################################################################################################
# MACDONALD FUNCTION K_{i beta}
#################################################################################################
class Method(str, Enum):
    QUADRATURE = "quadrature"
    SMALL_ARGUMENT = "small_argument_asymptotic"
    LARGE_ARGUMENT = "large_argument_asymptotic"


@dataclass(frozen=True)
class MacdonaldValue:
    value: float
    derivative: float
    method: Method


def small_z_crossover(beta):
    return SMALL_Z_FACTOR * (1.0 + beta)


def large_z_crossover(beta):
    # the series only starts to converge once 8x exceeds 4 beta^2
    return max(LARGE_Z, 2.0 * beta * beta)


def _check_args(beta, x):
    if not beta >= 0.0 or math.isinf(beta):
        raise DomainError(f"Macdonald order beta must be finite and >= 0, got {beta!r}")
    if not x > 0.0 or math.isinf(x):
        raise DomainError(f"Macdonald argument must be finite and > 0, got {x!r}")


def _cosh_integral(beta, x, power):
    """
    exp(x) * integral_0^inf cosh(t)^power * exp(-x cosh t) * cos(beta t) dt.
    The factor exp(-x) is taken out so the integrand stays O(1) at large x.
    """
    t_max = math.acosh(1.0 + 745.0 / x)

    def integrand(t):
        return math.cosh(t) ** power * math.exp(-2.0 * x * math.sinh(0.5 * t) ** 2)

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            if beta > 0.0:
                result, _ = integrate.quad(
                    integrand, 0.0, t_max, weight="cos", wvar=beta,
                    epsabs=_QUAD_EPSABS, epsrel=_QUAD_EPSREL, limit=_QUAD_LIMIT,
                )
            else:
                result, _ = integrate.quad(
                    integrand, 0.0, t_max,
                    epsabs=_QUAD_EPSABS, epsrel=_QUAD_EPSREL, limit=_QUAD_LIMIT,
                )
        except integrate.IntegrationWarning as warning:
            log.debug("K_i%.6g(%.6g): %s, retrying with a looser target", beta, x, warning)
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            kwargs = {"weight": "cos", "wvar": beta} if beta > 0.0 else {}
            result, _ = integrate.quad(
                integrand, 0.0, t_max, epsabs=1e-13, epsrel=1e-10, limit=4 * _QUAD_LIMIT, **kwargs
            )
    return result


def contour_shift(beta, x):
    """
    Height phi of the horizontal path t + i phi the quadrature runs on. On the real axis the
    integrand of K_{i beta} swings with amplitude 1 while the result is of order exp(-pi beta / 2),
    so the digits cancel away as beta grows. On the saddle line arcsin(beta / x), capped at
    pi/2 - 5/beta, the loss stays below exp(5). Zero while beta <= 10/pi.
    """
    if 0.5 * math.pi * beta <= _SHIFT_MARGIN:
        return 0.0
    cap = 0.5 * math.pi - _SHIFT_MARGIN / beta
    return min(cap, math.asin(min(1.0, beta / x)))


def _shifted_integrals(beta, x, phi):
    """
    With psi = beta u - x sin(phi) sinh u and d = exp(-2 x cos(phi) sinh^2(u/2)), returns
        int_0^inf d cos(psi) du
        int_0^inf d (cos(phi) cosh u cos(psi) - sin(phi) sinh u sin(psi)) du
    on composite Gauss-Legendre panels, each spanning at most a few radians of phase or decay.
    """
    cos_phi, sin_phi = math.cos(phi), math.sin(phi)
    damping = x * cos_phi
    u_max = math.acosh(1.0 + _SHIFT_TAIL / damping)
    edges = [0.0]
    while edges[-1] < u_max:
        ahead = min(edges[-1] + 1.0, u_max)
        rate = beta + 1.0 + x * sin_phi * math.cosh(ahead) + damping * math.sinh(ahead)
        edges.append(min(u_max, edges[-1] + min(1.0, _SHIFT_PANEL_PHASE / rate)))
    edges = np.asarray(edges)
    nodes, weights = np.polynomial.legendre.leggauss(_SHIFT_NODES)
    half = 0.5 * np.diff(edges)
    u = (edges[:-1, None] + half[:, None] * (nodes[None, :] + 1.0)).ravel()
    w = (half[:, None] * weights[None, :]).ravel()
    log.debug("K_i%.6g(%.6g): phi = %.6g, %d panels up to u = %.6g", beta, x, phi, len(half), u_max)
    decay = np.exp(-2.0 * damping * np.sinh(0.5 * u) ** 2)
    psi = beta * u - x * sin_phi * np.sinh(u)
    cos_psi, sin_psi = np.cos(psi), np.sin(psi)
    even = float(np.dot(w, decay * cos_psi))
    odd = float(np.dot(w, decay * (cos_phi * np.cosh(u) * cos_psi - sin_phi * np.sinh(u) * sin_psi)))
    return even, odd


def macdonald_quadrature(beta, x):
    """
    Reference path: K_{i beta}(x) = int_0^inf exp(-x cosh t) cos(beta t) dt, derivative by
    differentiating under the integral sign. Above beta = 10/pi the integral runs on the line
    t + i phi of contour_shift instead, where it no longer cancels.
    :param beta: order, real >= 0
    :param x: argument, real > 0
    :return: MacdonaldValue tagged QUADRATURE
    """
    beta, x = float(beta), float(x)
    _check_args(beta, x)
    if x > UNDERFLOW_Z:
        raise MacdonaldUnderflow(f"K_i{beta:g}({x:g}) underflows: exp(-x) is below the double range")
    phi = contour_shift(beta, x)
    if phi == 0.0:
        scale = math.exp(-x)
        value = scale * _cosh_integral(beta, x, 0)
        derivative = -scale * _cosh_integral(beta, x, 1)
    else:
        scale = math.exp(-(beta * phi + x * math.cos(phi)))
        if scale == 0.0:
            raise MacdonaldUnderflow(f"K_i{beta:g}({x:g}) underflows: exp(-beta phi) is below the double range")
        even, odd = _shifted_integrals(beta, x, phi)
        value = scale * even
        derivative = -scale * odd
    return MacdonaldValue(value=value, derivative=derivative, method=Method.QUADRATURE)


def macdonald_small_z(beta, x):
    """
    Leading small-argument behaviour, error O(x^2):
        K_{i beta}(x)   = -A sin(beta ln(x/2) - theta_beta)
        x K'_{i beta}(x) = -A beta cos(beta ln(x/2) - theta_beta),   A = sqrt(pi / (beta sinh(pi beta)))
    beta = 0 gives the limit -ln(x/2) - gamma.
    """
    beta, x = float(beta), float(x)
    _check_args(beta, x)
    log_half = math.log(0.5 * x)
    if beta == 0.0:
        return MacdonaldValue(
            value=-(log_half + EULER_GAMMA), derivative=-1.0 / x, method=Method.SMALL_ARGUMENT
        )
    phase = gamma_phase(beta)
    amplitude = math.sqrt(phase.abs_sq) / beta
    argument = beta * log_half - phase.theta_beta
    return MacdonaldValue(
        value=-amplitude * math.sin(argument),
        derivative=-beta * amplitude * math.cos(argument) / x,
        method=Method.SMALL_ARGUMENT,
    )


def macdonald_large_z(beta, x):
    """
    Large-argument series sqrt(pi/2x) exp(-x) sum_k a_k(i beta) / x^k, summed until the terms
    stop decreasing or drop below double precision. The first correction is -(4 beta^2 + 1)/(8x).
    """
    beta, x = float(beta), float(x)
    _check_args(beta, x)
    if x > UNDERFLOW_Z:
        raise MacdonaldUnderflow(f"K_i{beta:g}({x:g}) underflows: exp(-x) is below the double range")
    four_b2 = 4.0 * beta * beta
    term = 1.0
    value_sum = 1.0
    derivative_sum = 1.0 + 0.5 / x
    k = 0
    while True:
        k += 1
        next_term = -term * (four_b2 + (2 * k - 1) ** 2) / (8.0 * k * x)
        if abs(next_term) >= abs(term):
            break
        term = next_term
        value_sum += term
        derivative_sum += term * (1.0 + (k + 0.5) / x)
        if abs(term) < 1e-17 * abs(value_sum):
            break
    prefactor = math.sqrt(math.pi / (2.0 * x)) * math.exp(-x)
    return MacdonaldValue(
        value=prefactor * value_sum,
        derivative=-prefactor * derivative_sum,
        method=Method.LARGE_ARGUMENT,
    )


def macdonald(beta, x):
    """
    K_{i beta}(x) and K'_{i beta}(x): small-argument expansion below 1e-6 (1 + beta),
    large-argument series above max(50, 2 beta^2), quadrature in between.
    :param beta: order, real >= 0
    :param x: argument, real > 0
    :return: MacdonaldValue with the path that produced it
    """
    beta, x = float(beta), float(x)
    _check_args(beta, x)
    if x > UNDERFLOW_Z:
        raise MacdonaldUnderflow(f"K_i{beta:g}({x:g}) underflows: exp(-x) is below the double range")
    if x < small_z_crossover(beta):
        return macdonald_small_z(beta, x)
    if x > large_z_crossover(beta):
        return macdonald_large_z(beta, x)
    return macdonald_quadrature(beta, x)
