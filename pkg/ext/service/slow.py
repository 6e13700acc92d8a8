import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from ext.service.errors import (BracketFailure, DegenerateInner, DomainError,
                                MacdonaldUnderflow, NoEfimovRegime,
                                SeedUnderflow, StepSizeUnderflow)
from ext.service.fast import effective_potential
from ext.service.specialfn import W1, gamma_phase, macdonald

log = logging.getLogger(__name__)

DEFAULT_ROOT_TOL = 1e-12
DEFAULT_ODE_TOL = 1e-11
SEED_FLOOR = 1e-290
# brentq cannot resolve a relative width below 4 machine epsilons
MIN_ROOT_TOL = 4.0 * np.finfo(float).eps
# Geometric sign-scan points per seed bracket
_BRACKET_SAMPLES = 12
# Composite Gauss on [0, r0] for the inner norm
_INNER_PANELS = 8
_INNER_NODES = 16
# Exterior norm: Gauss in log z up to the split, Gauss-Laguerre beyond it
_LOG_PANEL_WIDTH = 1.0
_LOG_NODES = 12
_LAGUERRE_NODES = 40


#################################################################################################
# BETA
#################################################################################################
@dataclass(frozen=True)
class BetaParam:
    beta: float
    mu_over_nu: float

    @property
    def ratio_limit(self):
        """e^{2 pi / beta}, the limit of E_n / E_{n+1}"""
        return math.exp(2.0 * math.pi / self.beta)


def critical_mass_ratio():
    """M/m above which mu/nu W(1)^2 > 1/4, from mu/nu = (2M + m) / (4m)"""
    return 0.5 * (1.0 / (W1 * W1) - 1.0)


def beta_param(params):
    """
    beta = sqrt(mu/nu W(1)^2 - 1/4)
    :return: BetaParam
    :raises NoEfimovRegime: when mu/nu W(1)^2 <= 1/4
    """
    mu_over_nu = params.mu_over_nu
    beta_sq = mu_over_nu * W1 * W1 - 0.25
    if beta_sq <= 0.0:
        raise NoEfimovRegime(mu_over_nu, critical_mass_ratio())
    return BetaParam(beta=math.sqrt(beta_sq), mu_over_nu=mu_over_nu)


#################################################################################################
# INNER PROBLEM
#################################################################################################
@dataclass(frozen=True)
class InnerSolution:
    lam: float
    w_r0: float
    dw_r0: float
    tol: float
    slope: float = 1.0


def _integrate_scaled(pot, kappa, tol, slope=1.0, t_eval=None):
    """
    w'' = (U(x) + kappa^2) w on [0, 1] in x = r / r0, w(0) = 0, w'(0) = slope.
    Dormand-Prince 5(4); atol follows the slope so a rescaled slope reproduces the same steps.
    """
    if not 1e-14 <= tol < 1e-3:
        raise DomainError(f"inner tolerance must lie in [1e-14, 1e-3), got {tol!r}")
    kappa_sq = kappa * kappa
    scaled = pot.scaled

    def rhs(x, y):
        return (y[1], (scaled(x) + kappa_sq) * y[0])

    solution = solve_ivp(
        rhs, (0.0, 1.0), (0.0, slope), method="RK45",
        rtol=tol, atol=1e-3 * tol * abs(slope), t_eval=t_eval,
    )
    if solution.status != 0:
        raise StepSizeUnderflow(f"inner integration at kappa = {kappa:.6e} failed: {solution.message}")
    return solution


def integrate_inner(pot, lam, tol=DEFAULT_ODE_TOL, slope=1.0):
    """
    Solve w'' - (v + lambda^2) w = 0 on [0, r0] with w(0) = 0, w'(0) = slope.
    :param pot: EffectivePotential
    :param lam: lambda = sqrt(-mu E_BO) >= 0
    :param tol: local error tolerance of the integrator
    :return: InnerSolution with w(r0) and w'(r0) in physical units
    """
    if not lam >= 0.0:
        raise DomainError(f"integrate_inner: lambda must be >= 0, got {lam!r}")
    if slope == 0.0:
        raise DomainError("integrate_inner: the initial slope must be non-zero")
    r0 = pot.r0
    solution = _integrate_scaled(pot, lam * r0, tol, slope)
    w_x, dw_x = solution.y[0, -1], solution.y[1, -1]
    return InnerSolution(lam=lam, w_r0=r0 * w_x, dw_r0=dw_x, tol=tol, slope=slope)


def _inner_on_nodes(pot, kappa, x_nodes, tol, slope=1.0):
    """w_x at the given dimensionless nodes in [0, 1)"""
    t_eval = np.append(np.asarray(x_nodes, dtype=float), 1.0)
    solution = _integrate_scaled(pot, kappa, tol, slope, t_eval=t_eval)
    return solution.y[0, :-1], solution.y[0, -1], solution.y[1, -1]


#################################################################################################
# MATCHING
#################################################################################################
def matching_determinant(inner, beta, r0):
    """
    [w(r0)/2 - r0 w'(r0)] K_{i beta}(lambda r0) + lambda r0 w(r0) K'_{i beta}(lambda r0)
    :param inner: InnerSolution at lambda
    :param beta: BetaParam
    :param r0: cutoff radius
    :return: D(lambda)
    :raises MacdonaldUnderflow: lambda r0 too large for K to be representable
    """
    kappa = inner.lam * r0
    if not kappa > 0.0:
        raise DomainError("matching_determinant needs lambda > 0")
    k = macdonald(beta.beta, kappa)
    return (0.5 * inner.w_r0 - r0 * inner.dw_r0) * k.value + kappa * inner.w_r0 * k.derivative


@dataclass(frozen=True)
class MatchingCoefficients:
    a: float
    b: float
    alpha_phase: float


def compute_ab(pot, beta, tol=DEFAULT_ODE_TOL):
    """
    a = w0(r0)/2 - r0 w0'(r0), b = beta w0(r0) from the zero-energy inner solution.
    alpha_phase is arctan(b/a) on (-pi/2, pi/2], with pi/2 for a = 0.
    :raises DegenerateInner: a and b both vanish
    """
    r0 = pot.r0
    inner = integrate_inner(pot, 0.0, tol)
    a = 0.5 * inner.w_r0 - r0 * inner.dw_r0
    b = beta.beta * inner.w_r0
    if max(abs(a), abs(b)) < 1e-12 * r0:
        raise DegenerateInner(f"a = {a:.3e} and b = {b:.3e} both vanish, the inner solution is broken")
    return MatchingCoefficients(a=a, b=b, alpha_phase=fold_phase(math.atan2(b, a)))


def fold_phase(angle):
    """Bring an atan2 angle onto the arctan branch (-pi/2, pi/2]"""
    if angle > 0.5 * math.pi:
        return angle - math.pi
    if angle <= -0.5 * math.pi:
        return angle + math.pi
    return angle


#################################################################################################
# SEEDS
#################################################################################################
def _log_seed_origin(coeffs, beta, r0):
    """ln(lambda_0^0) = ln(2 / r0) + (theta_beta - alpha) / beta"""
    theta = gamma_phase(beta.beta).theta_beta
    return math.log(2.0 / r0) + (theta - coeffs.alpha_phase) / beta.beta


def seed_levels(coeffs, beta, r0, n_from, n_to):
    """
    Homogeneous solutions lambda_n^0 = (2/r0) e^{(theta_beta - alpha)/beta} e^{-n pi/beta}.
    :return: list for n = n_from .. n_to, strictly decreasing
    :raises SeedUnderflow: lambda_n^0 r0 < 1e-290
    """
    if n_to < n_from:
        raise DomainError(f"seed_levels: n_to = {n_to} is below n_from = {n_from}")
    origin = _log_seed_origin(coeffs, beta, r0)
    step = math.pi / beta.beta
    seeds = []
    for n in range(n_from, n_to + 1):
        seed = math.exp(origin - n * step)
        if seed * r0 < SEED_FLOOR:
            raise SeedUnderflow(f"seed of level {n} is {seed * r0:.3e} / r0, below {SEED_FLOOR:g}")
        seeds.append(seed)
    return seeds


def homogeneous_energy(seed, params):
    """E_n^0 = -(lambda_n^0)^2 / mu"""
    return -seed * seed / params.mu


#################################################################################################
# SPECTRUM
#################################################################################################
@dataclass(frozen=True)
class SpectrumLevel:
    n: int
    lambda_n: float
    eta_n: float
    energy: float
    A_n: float
    B_n: float
    seed: float
    converged: bool = True
    diagnostic: str = ""


def _unconverged(n, seed, params, diagnostic, lam=math.nan, eta=math.nan):
    energy = -lam * lam / params.mu if not math.isnan(lam) else math.nan
    return SpectrumLevel(
        n=n, lambda_n=lam, eta_n=eta, energy=energy, A_n=math.nan, B_n=math.nan,
        seed=seed, converged=False, diagnostic=diagnostic,
    )


class _Determinant:
    """D as a function of kappa = lambda r0, memoised on exact arguments"""

    def __init__(self, pot, beta, ode_tol, slope=1.0):
        self.pot = pot
        self.beta = beta
        self.ode_tol = ode_tol
        self.slope = slope
        self.values = {}

    def __call__(self, kappa):
        if kappa not in self.values:
            r0 = self.pot.r0
            inner = integrate_inner(self.pot, kappa / r0, self.ode_tol, self.slope)
            self.values[kappa] = matching_determinant(inner, self.beta, r0)
        return self.values[kappa]


def exterior_norm(beta, kappa):
    """
    int_kappa^inf z K_{i beta}(z)^2 dz, numerically: Gauss panels in ln z where K oscillates,
    Gauss-Laguerre on the exponential tail.
    """
    b = beta.beta
    z_split = max(kappa, 1.0 + b)
    total = 0.0
    if kappa < z_split:
        t_lo, t_hi = math.log(kappa), math.log(z_split)
        n_panels = max(1, int(math.ceil((t_hi - t_lo) / _LOG_PANEL_WIDTH)))
        nodes, weights = np.polynomial.legendre.leggauss(_LOG_NODES)
        edges = np.linspace(t_lo, t_hi, n_panels + 1)
        for left, right in zip(edges[:-1], edges[1:]):
            half = 0.5 * (right - left)
            for node, weight in zip(nodes, weights):
                z = math.exp(left + half * (node + 1.0))
                total += half * weight * z * z * macdonald(b, z).value ** 2
    nodes, weights = np.polynomial.laguerre.laggauss(_LAGUERRE_NODES)
    for s, weight in zip(nodes, weights):
        z = z_split + 0.5 * s
        try:
            k = macdonald(b, z).value
        except MacdonaldUnderflow:
            continue
        total += 0.5 * weight * z * k * k * math.exp(s)
    return total


def exterior_norm_closed_form(beta, kappa):
    """
    int_kappa^inf z K_{i beta}^2 dz = (kappa^2/2) K'^2 - (kappa^2 - beta^2) K^2 / 2,
    from d/dz [(z^2/2) K'^2 - (z^2 + nu^2) K^2 / 2] = -z K^2 with nu^2 = -beta^2
    """
    k = macdonald(beta.beta, kappa)
    return 0.5 * kappa * kappa * k.derivative**2 - 0.5 * (kappa * kappa - beta.beta**2) * k.value**2


def inner_norm(pot, lam, tol=DEFAULT_ODE_TOL):
    """int_0^r0 w_lambda(r)^2 dr with composite Gauss-Legendre"""
    nodes, weights = np.polynomial.legendre.leggauss(_INNER_NODES)
    edges = np.linspace(0.0, 1.0, _INNER_PANELS + 1)
    half = 0.5 * (edges[1] - edges[0])
    x_nodes = np.concatenate([left + half * (nodes + 1.0) for left in edges[:-1]])
    x_weights = np.tile(half * weights, _INNER_PANELS)
    w_x, _, _ = _inner_on_nodes(pot, lam * pot.r0, x_nodes, tol)
    return pot.r0**3 * float(np.dot(x_weights, w_x * w_x))


def _amplitudes(pot, beta, lam, ode_tol):
    """
    A_n, B_n with B_n > 0 fixing unit L^2 norm on the half-line; A_n from the first matching
    equation, or from the derivative equation when w(r0) vanishes.
    """
    r0 = pot.r0
    kappa = lam * r0
    inner = integrate_inner(pot, lam, ode_tol)
    k = macdonald(beta.beta, kappa)
    w, dw = inner.w_r0, inner.dw_r0
    if abs(w) > 1e-12 * (abs(w) + r0 * abs(dw)):
        ratio = math.sqrt(r0) * k.value / w
    elif dw != 0.0:
        ratio = (k.value + 2.0 * kappa * k.derivative) / (2.0 * math.sqrt(r0) * dw)
    else:
        raise BracketFailure(0, kappa, kappa, "w(r0) and w'(r0) vanish together")
    norm = ratio * ratio * inner_norm(pot, lam, ode_tol) + exterior_norm(beta, kappa) / (lam * lam)
    b_n = 1.0 / math.sqrt(norm)
    return ratio * b_n, b_n


def _sign_changes(det, lower, upper, samples):
    grid = np.geomspace(lower, upper, samples + 1)
    values = [det(k) for k in grid]
    return [
        (grid[i], grid[i + 1]) for i in range(samples) if values[i] * values[i + 1] < 0.0
    ] + [(grid[i], grid[i]) for i in range(samples + 1) if values[i] == 0.0]


def _refine(det, lower, upper, tol):
    if lower == upper:
        return lower
    root, info = brentq(
        det, lower, upper, xtol=1e-3 * tol * lower, rtol=tol, maxiter=200, full_output=True, disp=False
    )
    if not info.converged:
        raise BracketFailure(0, lower, upper, f"Brent did not converge: {info.flag}")
    return root


def solve_spectrum(params, n_levels, tol=DEFAULT_ROOT_TOL, ode_tol=DEFAULT_ODE_TOL, pot=None, slope=1.0):
    """
    Bound states of the slow problem, deepest first. Level n is searched in
    [lambda_n^0 e^{-pi/2beta}, lambda_n^0 e^{pi/2beta}]; consecutive brackets tile the
    lambda axis, the first one being cut at the bottom of the well. Each bracket is scanned on
    12 geometric points; when one holds several roots they all come back under the same n.
    :param params: ModelParams in the Efimov regime
    :param n_levels: number of levels requested
    :param tol: relative tolerance on lambda_n
    :param ode_tol: inner integrator tolerance
    :param pot: optional EffectivePotential, built from params when omitted
    :param slope: initial slope w'0(0) of the inner solution; the roots do not depend on it
    :return: list of SpectrumLevel, converged or flagged
    :raises NoEfimovRegime: sub-critical mass ratio
    """
    if n_levels < 1:
        raise DomainError(f"n_levels must be >= 1, got {n_levels}")
    if not MIN_ROOT_TOL <= tol < 1e-3:
        raise DomainError(f"root tolerance must lie in [{MIN_ROOT_TOL:.3g}, 1e-3), got {tol!r}")
    beta = beta_param(params)
    pot = pot if pot is not None else effective_potential(params)
    r0 = params.r0
    coeffs = compute_ab(pot, beta, ode_tol)
    det = _Determinant(pot, beta, ode_tol, slope)

    origin = _log_seed_origin(coeffs, beta, r0) + math.log(r0)
    step = math.pi / beta.beta
    kappa_max = math.sqrt(pot.depth_scaled())

    def edge(j):
        # lower bracket end of level j in kappa units, upper end of level j + 1
        return math.exp(origin - (j + 0.5) * step)

    n_first = math.floor((origin - 0.5 * step - math.log(kappa_max)) / step) + 1
    log.info(
        "beta = %.10g, a = %.6g, b = %.6g, alpha = %.6g, first bracket n = %d, kappa_max = %.6g",
        beta.beta, coeffs.a, coeffs.b, coeffs.alpha_phase, n_first, kappa_max,
    )

    roots = []
    top_lower, top_upper = edge(n_first), min(edge(n_first - 1), kappa_max)
    for lower, upper in _sign_changes(det, top_lower, top_upper, _BRACKET_SAMPLES):
        roots.append(_refine(det, lower, upper, tol))
    if not roots:
        log.info("no bound state between %.6g and the bottom of the well", top_lower)
    roots.sort(reverse=True)

    levels = []
    # deeper roots of the partial bracket borrow the indices above it
    for offset, kappa in enumerate(roots):
        n = n_first - (len(roots) - 1 - offset)
        levels.append(_build_level(params, pot, beta, n, kappa, origin, step, ode_tol))

    n = n_first + 1
    while len(levels) < n_levels:
        seed_kappa = math.exp(origin - n * step)
        if seed_kappa < SEED_FLOOR:
            log.warning("level %d: seed lambda r0 = %.3e underflows, stopping at %d levels", n, seed_kappa, len(levels))
            break
        lower, upper = edge(n), edge(n - 1)
        try:
            changes = _sign_changes(det, lower, upper, _BRACKET_SAMPLES)
            if not changes:
                raise BracketFailure(n, lower / r0, upper / r0)
            found = sorted((_refine(det, a, b, tol) for a, b in changes), reverse=True)
            note = f"bracket {n} holds {len(found)} roots" if len(found) > 1 else ""
            if note:
                log.warning("level %d: %s", n, note)
            levels.extend([_build_level(params, pot, beta, n, kappa, origin, step, ode_tol, note) for kappa in found])
        except (BracketFailure, MacdonaldUnderflow, StepSizeUnderflow) as err:
            log.warning("level %d not converged: %s", n, err)
            levels.append(_unconverged(n, seed_kappa / r0, params, str(err)))
        n += 1
    return levels[:n_levels]


def _build_level(params, pot, beta, n, kappa, origin, step, ode_tol, note=""):
    r0 = params.r0
    seed = math.exp(origin - n * step) / r0
    lam = kappa / r0
    eta = beta.beta * math.log(lam / seed)
    if not abs(eta) < 0.5 * math.pi:
        return _unconverged(n, seed, params, f"eta = {eta:.6g} outside (-pi/2, pi/2)", lam=lam, eta=eta)
    a_n, b_n = _amplitudes(pot, beta, lam, ode_tol)
    log.debug("level %d: lambda r0 = %.15g, eta = %.6g", n, kappa, eta)
    return SpectrumLevel(
        n=n, lambda_n=lam, eta_n=eta, energy=-lam * lam / params.mu,
        A_n=a_n, B_n=b_n, seed=seed, diagnostic=note,
    )


def count_levels(levels, z):
    """Converged levels with E < z"""
    return sum(1 for level in levels if level.converged and level.energy < z)


#################################################################################################
# EIGENFUNCTIONS
#################################################################################################
def slow_eigenfunction(level, pot, beta, r, tol=DEFAULT_ODE_TOL):
    """
    u_n(r) = A_n w_{lambda_n}(r) on [0, r0], B_n sqrt(r) K_{i beta}(lambda_n r) beyond.
    :param r: radius or array of radii >= 0
    :return: float or array
    """
    radii = np.asarray(r, dtype=float)
    flat = np.atleast_1d(radii).ravel()
    if np.any(flat < 0.0):
        raise DomainError("slow_eigenfunction needs r >= 0")
    r0 = pot.r0
    values = np.zeros_like(flat)

    inside = flat <= r0
    if np.any(inside):
        # the integrator wants strictly increasing output points
        x, back = np.unique(flat[inside] / r0, return_inverse=True)
        interior = x < 1.0
        w = np.empty(x.size)
        w_nodes, w_end, _ = _inner_on_nodes(pot, level.lambda_n * r0, x[interior], tol)
        w[interior] = w_nodes
        w[~interior] = w_end
        values[inside] = level.A_n * r0 * w[back]

    for i in np.flatnonzero(~inside):
        try:
            k = macdonald(beta.beta, level.lambda_n * flat[i]).value
        except MacdonaldUnderflow:
            k = 0.0
        values[i] = level.B_n * math.sqrt(flat[i]) * k

    if radii.ndim == 0:
        return float(values[0])
    return values.reshape(radii.shape)


def matching_mismatch(level, pot, beta, tol=DEFAULT_ODE_TOL):
    """
    Jumps of u and r0 u' across r0, relative to sqrt(u^2 + (r0 u')^2) on the outer side.
    """
    r0 = pot.r0
    kappa = level.lambda_n * r0
    inner = integrate_inner(pot, level.lambda_n, tol)
    k = macdonald(beta.beta, kappa)
    u_in = level.A_n * inner.w_r0
    du_in = level.A_n * inner.dw_r0
    u_out = level.B_n * math.sqrt(r0) * k.value
    du_out = level.B_n * (0.5 * k.value / math.sqrt(r0) + level.lambda_n * math.sqrt(r0) * k.derivative)
    scale = math.hypot(u_out, r0 * du_out)
    return abs(u_in - u_out) / scale, r0 * abs(du_in - du_out) / scale


def node_count(level, pot, beta, r_grid):
    """Sign changes of u_n along r_grid (exact zeros are skipped)"""
    values = slow_eigenfunction(level, pot, beta, r_grid)
    signs = np.sign(values[values != 0.0])
    return int(np.count_nonzero(signs[1:] != signs[:-1]))
