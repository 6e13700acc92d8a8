import argparse
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime

from rich.console import Console
from rich.logging import RichHandler

from ext.service.config import Command, OutputFormat, Units, build_config
from ext.service.errors import ConfigError, EfimovError, NoEfimovRegime
from ext.service.fast import effective_potential, potential_table
from ext.service.oracle import (RadialGrid, bound_violations, compare,
                                fd_richardson)
from ext.service.reports import (ORACLE_COLUMNS, POTENTIAL_COLUMNS, ScanRow,
                                 SpectrumReport, emit, scan_csv, scan_json,
                                 table_json, write_csv)
from ext.service.slow import beta_param, count_levels, solve_spectrum
from ext.service.specialfn import gamma_phase

log = logging.getLogger(__name__)

console = Console(stderr=True)
DATE_TIME = "%D - %H:%M:%S: "

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_NO_EFIMOV = 2
EXIT_USAGE = 64

# Levels validated by the finite-difference oracle; deeper ones need a box growing like e^{n pi/beta}
ORACLE_LEVELS = 3
ORACLE_REACH = 25.0


class _Parser(argparse.ArgumentParser):
    """argparse with the usage exit status 64"""

    def error(self, message):
        self.print_usage(sys.stderr)
        console.print(f"[red]{self.prog}: error: {message}[/red]")
        sys.exit(EXIT_USAGE)


def _ratio_list(text):
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma separated list of numbers: {text!r}")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--mass-ratio", dest="mass_ratio", type=float, help="heavy to light mass ratio M/m")
    common.add_argument("--mu", type=float, help="reduced mass of the heavy pair")
    common.add_argument("--nu", type=float, help="reduced mass of the light particle and the pair")
    common.add_argument("--r0", type=float, help="cutoff radius")
    common.add_argument("--profile", choices=["bump", "quintic"], help="cutoff profile")
    common.add_argument("--levels", dest="n_levels", type=int, help="number of levels")
    common.add_argument("--tol", type=float, help="relative tolerance of the level momenta")
    common.add_argument("--ode-tol", dest="ode_tol", type=float, help="inner integrator tolerance")
    common.add_argument("--format", dest="output", choices=["csv", "json"], help="artifact format")
    common.add_argument("--out", dest="output_path", help="write the artifact here instead of standard output")
    common.add_argument("--units", choices=["reduced", "absolute"], help="reduced: lengths in r0, energies in 1/(mu r0^2)")
    common.add_argument("--config", dest="config_path", help="JSON config file (default ext/config/efimov.json)")
    common.add_argument("--verbose", action="store_true", help="debug logging")

    parser = _Parser(prog="efimov", description="Born-Oppenheimer Efimov spectrum")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fast = commands.add_parser(Command.FAST_POTENTIAL.value, parents=[common], help="tabulate the effective potential")
    fast.add_argument("--grid", type=int, help="number of rows on (0, 2 r0]")

    commands.add_parser(Command.SPECTRUM.value, parents=[common], help="solve the slow spectrum")

    scan = commands.add_parser(Command.SCAN.value, parents=[common], help="summary rows over mass ratios")
    source = scan.add_mutually_exclusive_group()
    source.add_argument("--ratios", type=_ratio_list, help="comma separated mass ratios")
    source.add_argument("--ratios-file", dest="ratios_file", help="CSV file, first column, '#' lines skipped")
    scan.add_argument("--jobs", type=int, help="rows computed concurrently")

    oracle = commands.add_parser(Command.ORACLE.value, parents=[common], help="compare with the finite-difference oracle")
    oracle.add_argument("--rmax", dest="r_max", type=float, help="finite-difference box length")
    oracle.add_argument("--points", type=int, help="finite-difference interior points")
    return parser


def configure_logging(verbose=False):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, show_path=False)],
        force=True,
    )


#################################################################################################
# COMMANDS
#################################################################################################
def run_fast_potential(config):
    params = config.model_params()
    pot = effective_potential(params)
    rows = potential_table(pot, config.grid)
    if config.units is Units.REDUCED:
        r0 = params.r0
        rows = [(r / r0, theta, e * params.nu * r0**2, v * r0**2, v_r2) for r, theta, e, v, v_r2 in rows]
    if config.output is OutputFormat.JSON:
        return table_json(config.echo(), POTENTIAL_COLUMNS, rows), True
    return write_csv(POTENTIAL_COLUMNS, rows), True


def _all_converged(levels, requested):
    if len(levels) < requested:
        console.print(f"[yellow]only {len(levels)} of {requested} levels are representable[/yellow]")
    unconverged = [level.n for level in levels if not level.converged]
    if unconverged:
        console.print(f"[yellow]levels not converged: {', '.join(str(n) for n in unconverged)}[/yellow]")
    return len(levels) >= requested and not unconverged


def run_spectrum(config):
    params = config.model_params()
    beta = beta_param(params)
    levels = solve_spectrum(params, config.n_levels, config.tolerances.root, config.tolerances.ode)
    complete = _all_converged(levels, config.n_levels)
    report = SpectrumReport.build(
        config.echo(), beta, gamma_phase(beta.beta), levels, params, reduced=config.units is Units.REDUCED
    )
    text = report.to_json() if config.output is OutputFormat.JSON else report.to_csv()
    return text, complete


def scan_row(config, ratio):
    """One summary row; sub-critical or failing ratios come back flagged"""
    params = config.with_ratio(ratio).model_params()
    try:
        beta = beta_param(params)
    except NoEfimovRegime as err:
        return ScanRow(mass_ratio=ratio, mu_over_nu=params.mu_over_nu, flagged=True, diagnostic=str(err))
    try:
        levels = solve_spectrum(params, config.n_levels, config.tolerances.root, config.tolerances.ode)
    except EfimovError as err:
        log.warning("scan: M/m = %g failed: %s", ratio, err)
        return ScanRow(
            mass_ratio=ratio, mu_over_nu=params.mu_over_nu, beta=beta.beta,
            e_2pi_over_beta=beta.ratio_limit, flagged=True, diagnostic=str(err),
        )
    unit = params.mu * params.r0**2 if config.units is Units.REDUCED else 1.0
    converged = [level.n for level in levels if level.converged]
    return ScanRow(
        mass_ratio=ratio,
        mu_over_nu=params.mu_over_nu,
        beta=beta.beta,
        e_2pi_over_beta=beta.ratio_limit,
        energies=tuple(level.energy * unit for level in levels[:3]),
        deepest_converged=max(converged) if converged else None,
        levels_found=count_levels(levels, 0.0),
        counting_rate=beta.beta / (2.0 * math.pi),
    )


def run_scan(config):
    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            rows = list(pool.map(lambda ratio: scan_row(config, ratio), config.ratios))
    else:
        rows = [scan_row(config, ratio) for ratio in config.ratios]
    flagged = sum(1 for row in rows if row.flagged)
    if flagged:
        console.print(f"[yellow]{flagged} of {len(rows)} rows flagged[/yellow]")
    if config.output is OutputFormat.JSON:
        return scan_json(config.echo(), rows), True
    return scan_csv(rows), True


def run_oracle(config):
    params = config.model_params()
    beta = beta_param(params)
    k = min(config.n_levels, ORACLE_LEVELS)
    levels = solve_spectrum(params, k, config.tolerances.root, config.tolerances.ode)
    complete = _all_converged(levels, k)
    pot = effective_potential(params)
    if config.r_max is not None:
        grid = RadialGrid(r_max=config.r_max, n_points=config.points)
    else:
        grid = RadialGrid.for_momentum(levels[-1].lambda_n, config.points, ORACLE_REACH)
    console.print(f"[italic]Finite differences on {grid.n_points} points, r_max = {grid.r_max:.6g} . . .[/italic]")
    oracle = fd_richardson(pot, beta, grid, k)
    for rank, n, excess, estimate in bound_violations(levels, oracle, params):
        console.print(f"[yellow]level {n} sits {excess:.3e} above the finite-difference energy (estimate {estimate:.3e})[/yellow]")
    unit = params.mu * params.r0**2 if config.units is Units.REDUCED else 1.0
    rows = [
        (rank, n, e_matched * unit, e_fd * unit, delta * unit, relative)
        for rank, n, e_matched, e_fd, delta, relative in compare(levels, oracle, params)
    ]
    if config.output is OutputFormat.JSON:
        return table_json(config.echo(), ORACLE_COLUMNS, rows), complete
    return write_csv(ORACLE_COLUMNS, rows), complete


# each runner returns the report text and whether every requested level came out
RUNNERS = {
    Command.FAST_POTENTIAL: run_fast_potential,
    Command.SPECTRUM: run_spectrum,
    Command.SCAN: run_scan,
    Command.ORACLE: run_oracle,
}


def run(config):
    """
    Execute one configured command and write its artifact. The report is written even when
    some requested levels failed; the exit status is then EXIT_FAILURE.
    :return: exit status
    """
    console.print(f"[yellow]{datetime.now().strftime(DATE_TIME)} Starting {config.command.value}...[/yellow]")
    try:
        text, complete = RUNNERS[config.command](config)
        emit(text, config.output_path)
    except NoEfimovRegime as err:
        console.print(f"[red]{err}[/red]")
        return EXIT_NO_EFIMOV
    except EfimovError as err:
        console.print(f"[red]{type(err).__name__}: {err}[/red]")
        return EXIT_FAILURE
    except OSError as err:
        console.print(f"[red]cannot write the report: {err}[/red]")
        return EXIT_FAILURE
    if not complete:
        console.print(f"[red]{datetime.now().strftime(DATE_TIME)} Report written with failed levels.[/red]")
        return EXIT_FAILURE
    console.print(f"[green]{datetime.now().strftime(DATE_TIME)} Operation completed.[/green]")
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    flags = vars(args)
    try:
        config = build_config(args.command, flags, args.config_path)
    except ConfigError as err:
        console.print(f"[red]{err}[/red]")
        return EXIT_USAGE
    return run(config)
