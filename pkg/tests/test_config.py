import json

import pytest

import ext.service.config as config
from ext.service.config import (BUILTIN_DEFAULTS, Command, OutputFormat,
                                RunConfig, Tolerances, Units, build_config,
                                load_defaults, read_ratios)
from ext.service.errors import ConfigError
from ext.service.fast import ProfileKind
from ext.service.slow import MIN_ROOT_TOL


def _write(path, document):
    path.write_text(json.dumps(document))
    return str(path)


#################################################################################################
# LOADING
#################################################################################################
def test_missing_default_file_falls_back_to_builtins(tmp_path, monkeypatch):
    monkeypatch.setattr(config, "DEFAULT_CONFIG", tmp_path / "absent.json")
    assert load_defaults() == BUILTIN_DEFAULTS


def test_missing_named_file_is_an_error(tmp_path):
    with pytest.raises(ConfigError):
        load_defaults(str(tmp_path / "absent.json"))


def test_bad_config_files(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text("{ not json")
    with pytest.raises(ConfigError):
        load_defaults(str(broken))
    with pytest.raises(ConfigError):
        load_defaults(_write(tmp_path / "list.json", [1, 2]))
    with pytest.raises(ConfigError) as err:
        load_defaults(_write(tmp_path / "typo.json", {"n_level": 3}))
    assert "n_level" in str(err.value)


def test_partial_tolerances_are_merged(tmp_path):
    values = load_defaults(_write(tmp_path / "c.json", {"tolerances": {"root": 1e-10}}))
    assert values["tolerances"] == {"root": 1e-10, "ode": 1e-11}
    assert values["n_levels"] == BUILTIN_DEFAULTS["n_levels"]


def test_flags_override_file_override_builtins(tmp_path):
    path = _write(tmp_path / "c.json", {"n_levels": 7, "output": "json", "tolerances": {"root": 1e-10}})
    from_file = build_config("spectrum", {"mass_ratio": 50.0}, path)
    assert from_file.n_levels == 7
    assert from_file.output is OutputFormat.JSON
    assert from_file.tolerances == Tolerances(root=1e-10, ode=1e-11)
    assert from_file.units is Units.REDUCED

    flagged = build_config("spectrum", {"mass_ratio": 50.0, "n_levels": 3, "tol": 1e-9, "output": "csv"}, path)
    assert flagged.n_levels == 3
    assert flagged.output is OutputFormat.CSV
    assert flagged.tolerances.root == 1e-9


def test_read_ratios_skips_comments(tmp_path):
    path = tmp_path / "ratios.csv"
    path.write_text("# mass ratios\n2.0,light\n\n  # indented comment\n50,heavy\n133.0\n")
    assert read_ratios(str(path)) == (2.0, 50.0, 133.0)


def test_read_ratios_errors(tmp_path):
    path = tmp_path / "ratios.csv"
    path.write_text("2.0\nfifty\n")
    with pytest.raises(ConfigError):
        read_ratios(str(path))
    with pytest.raises(ConfigError):
        read_ratios(str(tmp_path / "absent.csv"))


def test_scan_ratios_from_file(tmp_path):
    path = tmp_path / "ratios.csv"
    path.write_text("#\n10\n50\n")
    scan = build_config("scan", {"ratios_file": str(path)}, _write(tmp_path / "c.json", {}))
    assert scan.command is Command.SCAN
    assert scan.ratios == (10.0, 50.0)


#################################################################################################
# VALIDATION
#################################################################################################
def test_tolerance_ranges():
    with pytest.raises(ConfigError):
        Tolerances(root=0.0)
    with pytest.raises(ConfigError):
        Tolerances(root=1e-16)
    assert Tolerances(root=MIN_ROOT_TOL).root == MIN_ROOT_TOL
    with pytest.raises(ConfigError):
        Tolerances(ode=1e-15)
    with pytest.raises(ConfigError):
        Tolerances(ode=1e-3)
    assert Tolerances(root=1e-6, ode=1e-14).ode == 1e-14


def test_mass_rules():
    with pytest.raises(ConfigError):
        RunConfig(command="spectrum")
    with pytest.raises(ConfigError):
        RunConfig(command="spectrum", mass_ratio=50.0, mu=1.0, nu=1.0)
    with pytest.raises(ConfigError):
        RunConfig(command="oracle", mu=1.0)
    with pytest.raises(ConfigError):
        RunConfig(command="spectrum", mass_ratio=-2.0)
    explicit = RunConfig(command="spectrum", mu=2.0, nu=0.5).model_params()
    assert explicit.mu_over_nu == 4.0


def test_fast_potential_needs_no_masses():
    run = RunConfig(command="fast-potential", r0=2.0, profile="quintic")
    params = run.model_params()
    assert (params.mu, params.nu) == (1.0, 1.0)
    assert params.r0 == 2.0
    assert params.profile.kind is ProfileKind.QUINTIC


def test_other_rejections():
    with pytest.raises(ConfigError):
        RunConfig(command="spectrum", mass_ratio=50.0, profile="custom-table")
    with pytest.raises(ConfigError):
        RunConfig(command="scan")
    with pytest.raises(ConfigError):
        RunConfig(command="scan", ratios=(2.0, 0.0))
    with pytest.raises(ConfigError):
        RunConfig(command="spectrum", mass_ratio=50.0, n_levels=0)
    with pytest.raises(ValueError):
        RunConfig(command="levels", mass_ratio=50.0)


def test_scan_ratio_replaces_explicit_masses():
    run = RunConfig(command="scan", mu=2.0, nu=1.0, ratios=(10.0,))
    swapped = run.with_ratio(10.0)
    assert (swapped.mass_ratio, swapped.mu, swapped.nu) == (10.0, None, None)
    assert swapped.model_params().mass_ratio == 10.0
    assert swapped.ratios == run.ratios


def test_echo_holds_the_numbers_that_matter():
    echo = RunConfig(command="spectrum", mass_ratio=50.0).echo()
    assert echo["command"] == "spectrum"
    assert echo["mass_ratio"] == 50.0
    assert echo["tol_root"] == 1e-12
    json.dumps(echo)
