import csv
import io
import json
import math
import sys
from dataclasses import dataclass

SCHEMA_VERSION = 1

SPECTRUM_COLUMNS = ("rank", "n", "lambda", "energy", "eta", "ratio", "energy_homogeneous", "converged", "diagnostic")
SCAN_COLUMNS = (
    "mass_ratio", "mu_over_nu", "beta", "e_2pi_over_beta", "energy_1", "energy_2", "energy_3",
    "deepest_converged", "levels_found", "counting_rate", "flagged", "diagnostic",
)
POTENTIAL_COLUMNS = ("r", "theta", "fast_energy", "v", "v_r2")
ORACLE_COLUMNS = ("rank", "n", "energy_matched", "energy_fd", "abs_delta", "rel_delta")


def format_value(value):
    """Floats with 17 significant digits, so every value reads back bit for bit"""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    if value is None:
        return ""
    return str(value)


def _json_value(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


#################################################################################################
# SPECTRUM
#################################################################################################
@dataclass(frozen=True)
class SpectrumReport:
    config: dict
    beta: float
    theta_beta: float
    e_2pi_over_beta: float
    levels: tuple

    @classmethod
    def build(cls, config, beta, phase, levels, params, reduced=True):
        """
        Project solved levels onto report rows; reduced units give lambda r0 and E mu r0^2.
        """
        length = params.r0 if reduced else 1.0
        energy_unit = params.mu * params.r0**2 if reduced else 1.0
        rows = []
        for rank, level in enumerate(levels):
            ratio = None
            if rank + 1 < len(levels):
                ratio = level.energy / levels[rank + 1].energy
            rows.append({
                "rank": rank,
                "n": level.n,
                "lambda": level.lambda_n * length,
                "energy": level.energy * energy_unit,
                "eta": level.eta_n,
                "ratio": ratio,
                "energy_homogeneous": -(level.seed**2) / params.mu * energy_unit,
                "converged": level.converged,
                "diagnostic": level.diagnostic,
            })
        return cls(
            config=config, beta=beta.beta, theta_beta=phase.theta_beta,
            e_2pi_over_beta=beta.ratio_limit, levels=tuple(rows),
        )

    def to_csv(self):
        return write_csv(SPECTRUM_COLUMNS, ([row[c] for c in SPECTRUM_COLUMNS] for row in self.levels))

    def to_json(self):
        document = {
            "schema": SCHEMA_VERSION,
            "config": self.config,
            "beta": self.beta,
            "theta_beta": self.theta_beta,
            "e_2pi_over_beta": self.e_2pi_over_beta,
            "levels": [{key: _json_value(value) for key, value in row.items()} for row in self.levels],
        }
        return dumps(document)


#################################################################################################
# SCAN
#################################################################################################
@dataclass(frozen=True)
class ScanRow:
    mass_ratio: float
    mu_over_nu: float
    beta: float = math.nan
    e_2pi_over_beta: float = math.nan
    energies: tuple = ()
    deepest_converged: int = None
    levels_found: int = 0
    counting_rate: float = math.nan
    flagged: bool = False
    diagnostic: str = ""

    def values(self):
        energies = list(self.energies[:3]) + [math.nan] * (3 - len(self.energies[:3]))
        return [
            self.mass_ratio, self.mu_over_nu, self.beta, self.e_2pi_over_beta, *energies,
            self.deepest_converged, self.levels_found, self.counting_rate, self.flagged, self.diagnostic,
        ]


def scan_csv(rows):
    return write_csv(SCAN_COLUMNS, (row.values() for row in rows))


def scan_json(config, rows):
    document = {
        "schema": SCHEMA_VERSION,
        "config": config,
        "rows": [{key: _json_value(value) for key, value in zip(SCAN_COLUMNS, row.values())} for row in rows],
    }
    return dumps(document)


#################################################################################################
# TABLES
#################################################################################################
def table_json(config, columns, rows):
    document = {
        "schema": SCHEMA_VERSION,
        "config": config,
        "rows": [{key: _json_value(value) for key, value in zip(columns, row)} for row in rows],
    }
    return dumps(document)


def write_csv(columns, rows):
    """Header plus rows, '\\n' line endings"""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(value) for value in row])
    return buffer.getvalue()


def dumps(document):
    return json.dumps(document, sort_keys=True, indent=4, separators=(",", ": ")) + "\n"


def emit(text, output_path=None, stream=None):
    """Write an artifact to output_path, or to stream (standard output by default)"""
    if output_path is None:
        (stream or sys.stdout).write(text)
        return
    with open(output_path, "w") as out_file:
        out_file.write(text)
