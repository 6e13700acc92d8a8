import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

from ext.service.errors import ConfigError
from ext.service.fast import CutoffProfile, ModelParams, ProfileKind
from ext.service.slow import MIN_ROOT_TOL

log = logging.getLogger(__name__)

DEFAULT_CONFIG = Path("ext/config/efimov.json")

BUILTIN_DEFAULTS = {
    "r0": 1.0,
    "profile": "bump",
    "n_levels": 5,
    "tolerances": {"root": 1e-12, "ode": 1e-11},
    "output": "csv",
    "units": "reduced",
    "grid": 100,
    "points": 200000,
    "jobs": 1,
}


class Command(str, Enum):
    FAST_POTENTIAL = "fast-potential"
    SPECTRUM = "spectrum"
    SCAN = "scan"
    ORACLE = "oracle"


class OutputFormat(str, Enum):
    CSV = "csv"
    JSON = "json"


class Units(str, Enum):
    REDUCED = "reduced"
    ABSOLUTE = "absolute"


@dataclass(frozen=True)
class Tolerances:
    root: float = 1e-12
    ode: float = 1e-11

    def __post_init__(self):
        if not MIN_ROOT_TOL <= self.root < 1e-3:
            raise ConfigError(f"root tolerance must lie in [{MIN_ROOT_TOL:.3g}, 1e-3), got {self.root!r}")
        if not 1e-14 <= self.ode < 1e-3:
            raise ConfigError(f"ode tolerance must lie in [1e-14, 1e-3), got {self.ode!r}")


@dataclass(frozen=True)
class RunConfig:
    command: Command
    mass_ratio: float = None
    mu: float = None
    nu: float = None
    r0: float = 1.0
    profile: ProfileKind = ProfileKind.BUMP
    n_levels: int = 5
    tolerances: Tolerances = field(default_factory=Tolerances)
    output: OutputFormat = OutputFormat.CSV
    output_path: str = None
    units: Units = Units.REDUCED
    grid: int = 100
    r_max: float = None
    points: int = 200000
    jobs: int = 1
    ratios: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "command", Command(self.command))
        object.__setattr__(self, "profile", ProfileKind(self.profile))
        object.__setattr__(self, "output", OutputFormat(self.output))
        object.__setattr__(self, "units", Units(self.units))
        explicit = self.mu is not None or self.nu is not None
        if self.command in (Command.SPECTRUM, Command.ORACLE) and self.mass_ratio is None and not explicit:
            raise ConfigError("a mass ratio (--mass-ratio) or explicit masses (--mu and --nu) is required")
        if self.mass_ratio is not None and explicit:
            raise ConfigError("give either --mass-ratio or --mu/--nu, not both")
        if explicit and (self.mu is None or self.nu is None):
            raise ConfigError("--mu and --nu must be given together")
        for name in ("mass_ratio", "mu", "nu", "r0", "r_max"):
            value = getattr(self, name)
            if value is not None and not (value > 0.0 and math.isfinite(value)):
                raise ConfigError(f"{name} must be finite and > 0, got {value!r}")
        if self.profile is ProfileKind.TABLE:
            raise ConfigError("the custom-table profile is available from the library only")
        if self.n_levels < 1:
            raise ConfigError(f"n_levels must be >= 1, got {self.n_levels}")
        if self.grid < 1:
            raise ConfigError(f"grid must be >= 1, got {self.grid}")
        if self.points < 100:
            raise ConfigError(f"points must be >= 100, got {self.points}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")
        if self.command is Command.SCAN and not self.ratios:
            raise ConfigError("scan needs --ratios or --ratios-file")
        if any(not ratio > 0.0 for ratio in self.ratios):
            raise ConfigError("every scan ratio must be > 0")

    def model_params(self):
        """ModelParams for this run"""
        profile = CutoffProfile(self.profile, self.r0)
        if self.mass_ratio is not None:
            return ModelParams.from_mass_ratio(self.mass_ratio, profile)
        if self.mu is None:
            # fast-potential without masses: mu = nu = 1, v in units of mu/nu
            return ModelParams(1.0, 1.0, profile)
        return ModelParams(self.mu, self.nu, profile)

    def echo(self):
        """Plain dict of the settings that determine the numbers, for report headers"""
        return {
            "command": self.command.value,
            "mass_ratio": self.mass_ratio,
            "mu": self.mu,
            "nu": self.nu,
            "r0": self.r0,
            "profile": self.profile.value,
            "n_levels": self.n_levels,
            "tol_root": self.tolerances.root,
            "tol_ode": self.tolerances.ode,
            "units": self.units.value,
        }

    def with_ratio(self, ratio):
        """The same run at one scan ratio, explicit masses dropped"""
        return replace(self, mass_ratio=ratio, mu=None, nu=None)


#################################################################################################
# LOADING
#################################################################################################
def load_defaults(path=None):
    """
    Settings from the JSON config file on top of the built-in defaults.
    A missing default file is not an error; a missing file named by the user is.
    :param path: file given with --config, or None for ext/config/efimov.json
    :return: dict
    """
    values = json.loads(json.dumps(BUILTIN_DEFAULTS))
    target = Path(path) if path is not None else DEFAULT_CONFIG
    try:
        with open(target, "r") as config_file:
            loaded = json.load(config_file)
    except FileNotFoundError:
        if path is not None:
            raise ConfigError(f"config file {target} not found")
        log.warning("%s not found, using built-in defaults", target)
        return values
    except json.JSONDecodeError as err:
        raise ConfigError(f"config file {target} is not valid JSON: {err}")
    if not isinstance(loaded, dict):
        raise ConfigError(f"config file {target} must hold a JSON object")
    unknown = set(loaded) - set(BUILTIN_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown keys in {target}: {', '.join(sorted(unknown))}")
    tolerances = {**values["tolerances"], **loaded.pop("tolerances", {})}
    values.update(loaded)
    values["tolerances"] = tolerances
    return values


def read_ratios(file):
    """
    Mass ratios from the first column of a CSV file. Lines starting with '#' are skipped.
    """
    ratios = []
    try:
        with open(file, "r") as csv_file:
            rows = csv.reader(line for line in csv_file if line.strip() and not line.lstrip().startswith("#"))
            for row in rows:
                try:
                    ratios.append(float(row[0]))
                except (ValueError, IndexError):
                    raise ConfigError(f"{file}: cannot read a mass ratio from {row!r}")
    except OSError as err:
        raise ConfigError(f"cannot read ratios file {file}: {err}")
    return tuple(ratios)


def build_config(command, flags, path=None):
    """
    Flags override the config file, which overrides the built-in defaults.
    :param command: subcommand name
    :param flags: dict of command-line values, None where the flag was not given
    :param path: optional config file
    :return: RunConfig
    """
    values = load_defaults(path)

    def pick(name):
        value = flags.get(name)
        return values.get(name) if value is None else value

    tolerances = Tolerances(
        root=flags.get("tol") if flags.get("tol") is not None else values["tolerances"]["root"],
        ode=flags.get("ode_tol") if flags.get("ode_tol") is not None else values["tolerances"]["ode"],
    )
    ratios = ()
    if flags.get("ratios"):
        ratios = tuple(flags["ratios"])
    elif flags.get("ratios_file"):
        ratios = read_ratios(flags["ratios_file"])
    try:
        return RunConfig(
            command=command,
            mass_ratio=flags.get("mass_ratio"),
            mu=flags.get("mu"),
            nu=flags.get("nu"),
            r0=float(pick("r0")),
            profile=pick("profile"),
            n_levels=int(pick("n_levels")),
            tolerances=tolerances,
            output=pick("output"),
            output_path=flags.get("output_path"),
            units=pick("units"),
            grid=int(pick("grid")),
            r_max=flags.get("r_max"),
            points=int(pick("points")),
            jobs=int(pick("jobs")),
            ratios=ratios,
        )
    except ValueError as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(str(err))
