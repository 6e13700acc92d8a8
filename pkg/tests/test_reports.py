import csv
import io
import json
import math

import pytest

from ext.service.reports import (SCAN_COLUMNS, SPECTRUM_COLUMNS, ScanRow,
                                 SpectrumReport, dumps, emit, format_value,
                                 scan_csv, scan_json, write_csv)
from ext.service.specialfn import gamma_phase


def test_format_value():
    assert format_value(True) == "true"
    assert format_value(False) == "false"
    assert format_value(None) == ""
    assert format_value(7) == "7"
    assert float(format_value(0.1 + 0.2)) == 0.1 + 0.2
    assert format_value(-1.0 / 3.0) == "-0.33333333333333331"


def test_write_csv_uses_plain_newlines():
    text = write_csv(("a", "b"), [(1.5, None), (True, "x,y")])
    assert text == 'a,b\n1.5,\ntrue,"x,y"\n'


def test_dumps_is_sorted_and_indented():
    text = dumps({"b": 1, "a": [1.0]})
    assert text.startswith('{\n    "a": [\n')
    assert text.endswith("}\n")


def test_emit_to_stream_and_file(tmp_path):
    stream = io.StringIO()
    emit("payload\n", stream=stream)
    assert stream.getvalue() == "payload\n"
    target = tmp_path / "out.csv"
    emit("payload\n", str(target))
    assert target.read_text() == "payload\n"


def test_scan_row_pads_energies():
    row = ScanRow(mass_ratio=50.0, mu_over_nu=25.25, beta=2.8, energies=(-3.0,), levels_found=1)
    values = row.values()
    assert len(values) == len(SCAN_COLUMNS)
    assert values[4] == -3.0
    assert math.isnan(values[5]) and math.isnan(values[6])


def test_scan_outputs_for_flagged_row():
    row = ScanRow(mass_ratio=1.0, mu_over_nu=0.75, flagged=True, diagnostic="no Efimov regime")
    [parsed] = list(csv.DictReader(io.StringIO(scan_csv([row]))))
    assert parsed["flagged"] == "true"
    assert parsed["beta"] == "nan"
    document = json.loads(scan_json({"command": "scan"}, [row]))
    assert document["schema"] == 1
    assert document["rows"][0]["beta"] is None
    assert document["rows"][0]["deepest_converged"] is None


@pytest.mark.slow
def test_spectrum_report_round_trips(spectrum_50, beta_50, params_50):
    report = SpectrumReport.build({"command": "spectrum"}, beta_50, gamma_phase(beta_50.beta), spectrum_50, params_50)
    unit = params_50.mu * params_50.r0**2

    document = json.loads(report.to_json())
    assert document["beta"] == beta_50.beta
    assert document["e_2pi_over_beta"] == beta_50.ratio_limit
    for row, level in zip(document["levels"], spectrum_50):
        assert row["energy"] == level.energy * unit
        assert row["lambda"] == level.lambda_n * params_50.r0
        assert row["converged"] is True
    assert document["levels"][-1]["ratio"] is None

    rows = list(csv.DictReader(io.StringIO(report.to_csv())))
    assert tuple(rows[0]) == SPECTRUM_COLUMNS
    for row, level in zip(rows, spectrum_50):
        assert float(row["energy"]) == level.energy * unit
        assert int(row["n"]) == level.n
    assert rows[0]["ratio"] != ""
    assert rows[-1]["ratio"] == ""


@pytest.mark.slow
def test_absolute_units(spectrum_50, beta_50, params_50):
    report = SpectrumReport.build({}, beta_50, gamma_phase(beta_50.beta), spectrum_50, params_50, reduced=False)
    assert report.levels[0]["energy"] == spectrum_50[0].energy
    assert report.levels[0]["energy_homogeneous"] == pytest.approx(-spectrum_50[0].seed**2 / params_50.mu)


def test_headers_are_frozen():
    assert write_csv(SPECTRUM_COLUMNS, []) == "rank,n,lambda,energy,eta,ratio,energy_homogeneous,converged,diagnostic\n"
    assert write_csv(SCAN_COLUMNS, []) == (
        "mass_ratio,mu_over_nu,beta,e_2pi_over_beta,energy_1,energy_2,energy_3,"
        "deepest_converged,levels_found,counting_rate,flagged,diagnostic\n"
    )
