import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import bisect

from ext.service.errors import DomainError, InsufficientDomain, NonConvergence

log = logging.getLogger(__name__)

TAIL_MASS_LIMIT = 1e-8
# fraction of the box, measured from r_max, that counts as the tail
TAIL_FRACTION = 0.1
_PANEL_NODES = 20
_MAX_PANELS = 2**16


#################################################################################################
# FINITE-DIFFERENCE SPECTRUM
#################################################################################################
@dataclass(frozen=True)
class RadialGrid:
    """Uniform interior nodes r_i = i h, i = 1..n_points, Dirichlet at 0 and r_max"""

    r_max: float
    n_points: int

    def __post_init__(self):
        if not self.r_max > 0.0:
            raise DomainError(f"RadialGrid: r_max must be > 0, got {self.r_max!r}")
        if self.n_points < 100:
            raise DomainError(f"RadialGrid: n_points must be >= 100, got {self.n_points}")

    @classmethod
    def for_momentum(cls, lam, n_points, reach=25.0):
        """Box of length reach / lambda, enough to hold the tail of a level with momentum lambda"""
        return cls(r_max=reach / lam, n_points=n_points)

    @property
    def spacing(self):
        return self.r_max / (self.n_points + 1)

    @property
    def nodes(self):
        return self.spacing * np.arange(1, self.n_points + 1, dtype=float)

    def halved(self):
        """Same box, spacing h/2"""
        return RadialGrid(r_max=self.r_max, n_points=2 * self.n_points + 1)

    def widened(self, factor=2.0):
        """Box stretched by factor at fixed spacing"""
        n = int(round((self.n_points + 1) * factor)) - 1
        return RadialGrid(r_max=self.spacing * (n + 1), n_points=n)


@dataclass(frozen=True)
class OracleResult:
    """eigenvalues are mu E, ascending and negative"""

    eigenvalues: tuple
    grid: RadialGrid
    richardson_pair: "OracleResult" = None

    @property
    def extrapolated(self):
        """(4 E_{h/2} - E_h) / 3 where a finer grid is available, the raw values otherwise"""
        if self.richardson_pair is None:
            return self.eigenvalues
        fine = self.richardson_pair.eigenvalues
        return tuple((4.0 * f - c) / 3.0 for c, f in zip(self.eigenvalues, fine))

    @property
    def error_estimate(self):
        """Leading h^2 error of the raw eigenvalues on this grid, 4 |E_{h/2} - E_h| / 3"""
        if self.richardson_pair is None:
            return tuple(math.nan for _ in self.eigenvalues)
        fine = self.richardson_pair.eigenvalues
        return tuple(4.0 * abs(f - c) / 3.0 for c, f in zip(self.eigenvalues, fine))


def _potential_on_grid(pot, beta, r):
    """v on (0, r0], the exact -(beta^2 + 1/4)/r^2 beyond"""
    values = -(beta.beta**2 + 0.25) / (r * r)
    inner = np.flatnonzero(r <= pot.r0)
    values[inner] = [pot(radius) for radius in r[inner]]
    return values


def fd_spectrum(pot, beta, grid, k, check_tail=True):
    """
    Lowest k negative eigenvalues of -d^2/dr^2 + v_eff by central differences, through LAPACK's
    Sturm-count bisection. The k-th eigenvector, by inverse iteration, is checked for tail mass.
    :param pot: EffectivePotential
    :param beta: BetaParam
    :param grid: RadialGrid
    :param k: number of eigenvalues
    :return: OracleResult
    :raises InsufficientDomain: the k-th eigenfunction still carries mass near r_max
    """
    if k < 1:
        raise DomainError(f"fd_spectrum: k must be >= 1, got {k}")
    h = grid.spacing
    r = grid.nodes
    diagonal = 2.0 / (h * h) + _potential_on_grid(pot, beta, r)
    off_diagonal = np.full(grid.n_points - 1, -1.0 / (h * h))
    log.debug("fd_spectrum: %d points, h = %.3e, r_max = %.6g", grid.n_points, h, grid.r_max)

    select = (0, k - 1)
    if check_tail:
        values, vectors = eigh_tridiagonal(
            diagonal, off_diagonal, select="i", select_range=select, lapack_driver="stebz"
        )
        negative = values < 0.0
        if np.any(negative):
            last = vectors[:, np.flatnonzero(negative)[-1]]
            weight = last * last
            tail = weight[r > (1.0 - TAIL_FRACTION) * grid.r_max].sum() / weight.sum()
            if tail > TAIL_MASS_LIMIT:
                raise InsufficientDomain(
                    f"tail mass {tail:.3e} of eigenvalue {values[negative][-1]:.6g} exceeds "
                    f"{TAIL_MASS_LIMIT:g}, widen r_max = {grid.r_max:.6g}"
                )
    else:
        values = eigh_tridiagonal(
            diagonal, off_diagonal, eigvals_only=True, select="i", select_range=select, lapack_driver="stebz"
        )
    values = values[values < 0.0]
    if values.size < k:
        log.warning("fd_spectrum: only %d of %d requested eigenvalues are negative", values.size, k)
    return OracleResult(eigenvalues=tuple(float(v) for v in values), grid=grid)


def fd_richardson(pot, beta, grid, k):
    """fd_spectrum on h and h/2, combined in OracleResult.extrapolated"""
    coarse = fd_spectrum(pot, beta, grid, k)
    fine = fd_spectrum(pot, beta, grid.halved(), k, check_tail=False)
    return OracleResult(eigenvalues=coarse.eigenvalues, grid=grid, richardson_pair=fine)


def compare(levels, oracle, params):
    """
    Matched energies against the extrapolated finite-difference ones, deepest first.
    :return: list of (rank, n, E_matched, E_fd, |delta|, |delta| / |E_matched|)
    """
    rows = []
    for rank, (level, fd_value) in enumerate(zip(levels, oracle.extrapolated)):
        e_fd = fd_value / params.mu
        delta = abs(level.energy - e_fd)
        rows.append((rank, level.n, level.energy, e_fd, delta, delta / abs(level.energy)))
    return rows


def bound_violations(levels, oracle, params):
    """
    Ranks whose matched energy lies above the raw finite-difference energy by more than its
    error estimate. Truncating the box only raises the finite-difference levels.
    :return: list of (rank, n, E_matched - E_fd_raw, estimate), empty when the bound holds
    """
    rows = []
    for rank, (level, raw, estimate) in enumerate(zip(levels, oracle.eigenvalues, oracle.error_estimate)):
        excess = level.energy - raw / params.mu
        if excess > estimate / params.mu:
            log.debug("rank %d: matched energy above the finite-difference one by %.3e", rank, excess)
            rows.append((rank, level.n, excess, estimate / params.mu))
    return rows


#################################################################################################
# SPECIAL FUNCTION REFERENCES
#################################################################################################
def quadrature_reference_K(beta, x, abs_tol=1e-12):
    """
    K_{i beta}(x) = int_0^inf exp(-x cosh t) cos(beta t) dt by composite Gauss-Legendre,
    doubling the number of panels until two passes agree to abs_tol.
    :raises NonConvergence: more than 2^16 panels needed
    """
    if not x > 1e-8:
        raise DomainError(f"quadrature_reference_K needs x > 1e-8, got {x!r}")
    if not beta >= 0.0:
        raise DomainError(f"quadrature_reference_K needs beta >= 0, got {beta!r}")
    # exp(-x cosh t) < abs_tol * 1e-4 beyond t_max
    t_max = math.acosh(1.0 + (math.log(1.0 / abs_tol) + 10.0) / x)
    nodes, weights = np.polynomial.legendre.leggauss(_PANEL_NODES)

    def composite(panels):
        edges = np.linspace(0.0, t_max, panels + 1)
        half = 0.5 * (edges[1] - edges[0])
        t = (edges[:-1, None] + half * (nodes[None, :] + 1.0)).ravel()
        f = np.exp(-x * np.cosh(t)) * np.cos(beta * t)
        return half * float(np.dot(np.tile(weights, panels), f))

    panels = 1
    estimate = composite(panels)
    while panels < _MAX_PANELS:
        panels *= 2
        refined = composite(panels)
        if abs(refined - estimate) <= abs_tol:
            return refined
        estimate = refined
    raise NonConvergence(f"K_i{beta:g}({x:g}) did not settle to {abs_tol:g} within {_MAX_PANELS} panels")


def lambert_reference(x):
    """Principal W by bisection of w exp(w) - x on [-1, max(1, ln(1 + x)) + 1]"""
    x = float(x)

    def f(w):
        return w * math.exp(w) - x

    if f(-1.0) >= 0.0:
        return -1.0
    upper = max(1.0, math.log1p(x)) + 1.0
    return bisect(f, -1.0, upper, xtol=1e-13, maxiter=400)
