import math

import numpy as np
import pytest

from ext.service.errors import DomainError, SingularPoint
from ext.service.fast import (CutoffProfile, EffectivePotential, ModelParams,
                              ProfileKind, eigenvalue_residual,
                              effective_potential, fast_eigenfunction,
                              fast_eigenvalue, lambert_gap, potential_table,
                              profile_from_table, theta_derivative,
                              theta_eval, well_depth)
from ext.service.specialfn import W1, lambert_w0

PROFILES = [ProfileKind.BUMP, ProfileKind.QUINTIC]


#################################################################################################
# PROFILES
#################################################################################################
def test_bump_values():
    profile = CutoffProfile(ProfileKind.BUMP, 1.0)
    assert theta_eval(profile, 0.0) == 1.0
    assert theta_eval(profile, 1.0) == 0.0
    assert theta_eval(profile, 2.0) == 0.0
    assert theta_eval(profile, 1.0 / math.sqrt(2.0)) == pytest.approx(math.exp(-1.0), rel=1e-12)
    assert theta_derivative(profile, 0.0) == 0.0


def test_bump_follows_r0():
    profile = CutoffProfile(ProfileKind.BUMP, 2.5)
    assert theta_eval(profile, 2.5 / math.sqrt(2.0)) == pytest.approx(math.exp(-1.0), rel=1e-12)
    assert theta_eval(profile, 2.5) == 0.0
    assert profile.rescaled(1.0).theta(0.5) == pytest.approx(profile.theta(1.25), rel=1e-15)


def test_quintic_values():
    profile = CutoffProfile(ProfileKind.QUINTIC, 1.0)
    assert theta_eval(profile, 0.0) == 1.0
    assert theta_eval(profile, 1.0) == 0.0
    assert theta_eval(profile, 0.5) == pytest.approx(0.5, abs=1e-15)
    assert theta_derivative(profile, 0.0) == 0.0
    assert theta_derivative(profile, 1.0 - 1e-12) == pytest.approx(0.0, abs=1e-20)


def test_theta_rejects_negative_radius():
    with pytest.raises(DomainError):
        theta_eval(CutoffProfile(), -1e-3)
    with pytest.raises(DomainError):
        CutoffProfile(ProfileKind.BUMP, 0.0)


def test_custom_table_profile_reproduces_bump():
    bump = CutoffProfile(ProfileKind.BUMP, 2.0)
    r = np.linspace(0.0, 2.0, 401)
    table = profile_from_table(r, [bump.theta(x) for x in r])
    assert table.kind is ProfileKind.TABLE
    assert table.r0 == 2.0
    for x in np.linspace(0.0025, 1.9975, 50):
        assert table.theta(x) == pytest.approx(bump.theta(x), abs=1e-5)
    assert table.theta(2.0) == 0.0
    assert table.theta(3.0) == 0.0
    assert table.derivative(2.0 - 1e-12) == pytest.approx(0.0, abs=1e-6)


def test_custom_table_validation():
    with pytest.raises(DomainError):
        profile_from_table([0.0, 0.5, 1.0, 1.5], [0.9, 0.5, 0.2, 0.0])
    with pytest.raises(DomainError):
        profile_from_table([0.1, 0.5, 1.0, 1.5], [1.0, 0.5, 0.2, 0.0])
    with pytest.raises(DomainError):
        profile_from_table([0.0, 1.0], [1.0, 0.0])


#################################################################################################
# PARAMETERS
#################################################################################################
def test_reduced_masses():
    params = ModelParams.from_masses(50.0, 1.0)
    assert params.mu == 50.0
    assert params.nu == pytest.approx(200.0 / 101.0, rel=1e-15)
    assert params.mu_over_nu == pytest.approx(25.25, rel=1e-14)
    assert params.mass_ratio == 50.0
    assert ModelParams.from_mass_ratio(1.0).mu_over_nu == pytest.approx(0.75, rel=1e-15)


def test_explicit_reduced_masses():
    params = ModelParams(2.0, 0.5)
    assert params.mu_over_nu == 4.0
    assert params.mass_ratio is None
    with pytest.raises(DomainError):
        ModelParams(-1.0, 1.0)


#################################################################################################
# FAST EIGENVALUE
#################################################################################################
@pytest.mark.parametrize("kind", PROFILES)
def test_fast_eigenvalue_outside_cutoff(kind):
    params = ModelParams(1.0, 1.0, CutoffProfile(kind, 1.0))
    for y in (1.0, 1.5, 4.0, 100.0):
        assert fast_eigenvalue(params, y) == pytest.approx(-W1 * W1 / (y * y), rel=1e-14)
    assert fast_eigenvalue(params, 2.0) * 4.0 == pytest.approx(-0.321651, abs=1e-6)


@pytest.mark.parametrize("kind", PROFILES)
def test_fast_eigenvalue_residual(kind):
    rng = np.random.default_rng(20240611)
    for _ in range(1000):
        nu = 10.0 ** rng.uniform(-1.0, 1.0)
        y = 10.0 ** rng.uniform(-5.0, 0.5)
        params = ModelParams(1.0, nu, CutoffProfile(kind, 1.0))
        assert fast_eigenvalue(params, y) < 0.0
        assert abs(eigenvalue_residual(params, y)) <= 1e-12


def test_fast_eigenvalue_vanishes_at_origin_for_bump():
    params = ModelParams(1.0, 1.0)
    assert abs(fast_eigenvalue(params, 1e-4)) < 1e-8
    assert abs(fast_eigenvalue(params, 1e-6)) < abs(fast_eigenvalue(params, 1e-4))


def test_fast_eigenvalue_rejects_nonpositive_separation():
    with pytest.raises(DomainError):
        fast_eigenvalue(ModelParams(1.0, 1.0), 0.0)


def test_lambert_gap_paths_agree():
    for deficit in np.linspace(0.2, 0.25, 11):
        theta = 1.0 - deficit
        direct = lambert_w0(math.exp(theta)) - theta
        assert lambert_gap(theta, deficit) == pytest.approx(direct, rel=1e-12)
    assert lambert_gap(1.0, 0.0) == 0.0


#################################################################################################
# EFFECTIVE POTENTIAL
#################################################################################################
@pytest.mark.parametrize("kind", PROFILES)
def test_exterior_inverse_square(kind):
    params = ModelParams.from_mass_ratio(50.0, CutoffProfile(kind, 1.0))
    pot = effective_potential(params)
    for r in (1.0, 1.1, 2.0, 17.0, 1e4):
        assert pot(r) * r * r == pytest.approx(-params.mu_over_nu * W1 * W1, rel=1e-13)


def test_profile_swap_leaves_exterior_unchanged():
    bump = effective_potential(ModelParams.from_mass_ratio(50.0))
    quintic = effective_potential(ModelParams.from_mass_ratio(50.0, CutoffProfile(ProfileKind.QUINTIC, 1.0)))
    for r in np.linspace(1.0, 5.0, 17):
        assert bump(r) == quintic(r)


@pytest.mark.parametrize("kind", PROFILES)
def test_potential_negative_and_bounded(kind):
    params = ModelParams.from_mass_ratio(50.0, CutoffProfile(kind, 1.0))
    pot = effective_potential(params)
    values = np.array([pot(r) for r in np.geomspace(1e-12, 10.0, 400)])
    assert np.all(values < 0.0)
    assert np.all(np.isfinite(values))
    assert np.max(-values) < 1e3


def test_potential_matches_fast_eigenvalue_above_guard(pot_50, params_50):
    for r in (2e-6, 1e-3, 0.3, 0.9):
        assert pot_50(r) == pytest.approx(params_50.mu * fast_eigenvalue(params_50, r), rel=1e-14)


def test_guard_continuity(pot_50):
    eps = pot_50.epsilon_guard
    below = pot_50(eps * (1.0 - 1e-9))
    above = pot_50(eps * (1.0 + 1e-9))
    assert abs(below - above) <= 1e-8 * abs(above)
    assert pot_50(0.0) == 0.0


def test_bump_potential_vanishes_at_origin(pot_50):
    assert abs(pot_50(1e-9)) < 1e-15


def test_inner_constant_potential(params_50):
    pot = EffectivePotential.with_inner_constant(params_50, -2.0)
    assert pot(0.0) == -2.0
    assert pot(0.7) == -2.0
    assert pot(1.5) == effective_potential(params_50)(1.5)
    assert pot.scaled(0.5) == -2.0


def test_well_depth(pot_50):
    depth = well_depth(pot_50)
    samples = [-pot_50(r) for r in np.linspace(0.0, 3.0, 301)]
    assert depth >= max(samples) * (1.0 - 1e-12)
    assert depth > pot_50.exterior_strength * 0.99


def test_potential_table(pot_50, params_50):
    rows = potential_table(pot_50, 100)
    assert len(rows) == 100
    for r, theta, energy, v, v_r2 in rows:
        assert v == pytest.approx(params_50.mu * energy, rel=1e-15)
        if r >= params_50.r0:
            assert theta == 0.0
            assert v_r2 == pytest.approx(-params_50.mu_over_nu * W1 * W1, rel=1e-13)


#################################################################################################
# FAST EIGENFUNCTION
#################################################################################################
def test_eigenfunction_mirror_symmetry(params_50):
    y = 0.8
    assert fast_eigenfunction(params_50, y, [0.3, 0.2, 0.1]) == pytest.approx(
        fast_eigenfunction(params_50, y, [0.3, 0.2, -0.1]), rel=1e-15
    )


def test_eigenfunction_far_decay(params_50):
    y = 0.8
    k = math.sqrt(-fast_eigenvalue(params_50, y) * params_50.nu)
    distance = math.hypot(100.0, 0.5 * y)
    expected = 2.0 * math.exp(-k * distance) / distance
    assert fast_eigenfunction(params_50, y, [100.0, 0.0, 0.0]) == pytest.approx(expected, rel=1e-12)


def test_eigenfunction_singular_part(params_50):
    y = 0.8
    delta = 1e-8
    value = fast_eigenfunction(params_50, y, [0.0, 0.0, 0.5 * y + delta])
    assert value * delta == pytest.approx(1.0, rel=1e-6)
    with pytest.raises(SingularPoint):
        fast_eigenfunction(params_50, y, [0.0, 0.0, 0.5 * y])


def test_eigenfunction_on_arrays(params_50):
    points = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 2.0]])
    values = fast_eigenfunction(params_50, 0.5, points)
    assert values.shape == (3,)
    assert values[0] == pytest.approx(values[1], rel=1e-15)
