import json

import numpy as np
import pytest

from actionnoise import cli, core
from actionnoise.acceptance import run_one
from actionnoise.config import ConfigError, parse_plan
from actionnoise.runner import COLUMNS, OUTPUT_ENV, expand_points, run_plan

SMALL_TLS = """\
[plan]
system = TLS
protocols = ARP, SP
delta0 = 150
n_steps = 100
output = small

[axis.t_f]
values = 0.02, 0.05

[axis.gamma]
values = 0, 0.01
"""


def test_presets_parse():
    names = cli.preset_names()
    assert names == ["fig1", "fig2", "fig3", "fig4"]
    for n in names:
        parse_plan(cli.preset_text(n))


def test_first_arp_peak_and_branches_expand():
    plan = parse_plan(cli.preset_text("fig3"))
    t_fs = {p.t_f for p in expand_points(plan)}
    assert len(t_fs) == 1 and t_fs.pop() == pytest.approx(np.sqrt(3) * np.pi / 150)
    pts = expand_points(parse_plan(cli.preset_text("fig4")))
    assert len(pts) == 20 and {p.branch for p in pts} == {"LowerMu", "HigherMu"}


def test_log_axis():
    plan = parse_plan(SMALL_TLS.replace("values = 0.02, 0.05",
                                        "start = 1e-3\nstop = 1e-1\nnum = 3\nspacing = log"))
    np.testing.assert_allclose(plan.axis("t_f").values, [1e-3, 1e-2, 1e-1])


@pytest.mark.parametrize("text,fieldname,line", [
    ("[plan]\nsystem = TLS\nprotocols = SP\ndelta0 = 150\n", None, None),
    (SMALL_TLS.replace("values = 0.02, 0.05", "values = 0.05, 0.02"), "axis.t_f.values", 9),
    (SMALL_TLS.replace("n_steps = 100", "n_stepz = 100"), "plan.n_stepz", 5),
    (SMALL_TLS.replace("system = TLS", "system = QFT"), "plan.system", 2),
    (SMALL_TLS.replace("delta0 = 150", "delta0 = -1"), "plan.delta0", 4),
    (SMALL_TLS + "\n[axis.knob]\nvalues = 0, 1\n", "axis.knob", 14),
    (SMALL_TLS.replace("values = 0, 0.01", "values = -1, 0"), "axis.gamma.values", 12),
])
def test_schema_errors_name_line_and_field(text, fieldname, line):
    with pytest.raises(ConfigError) as info:
        parse_plan(text)
    assert info.value.field == fieldname
    assert info.value.line == line


def test_empty_axes_message():
    with pytest.raises(ConfigError, match="no axes"):
        parse_plan("[plan]\nsystem = TLS\nprotocols = SP\ndelta0 = 150\n")


def test_run_writes_csvs_and_manifest(tmp_path):
    out = run_plan(parse_plan(SMALL_TLS), tmp_path)
    assert [f.name for f in out.files] == ["ARP.csv", "SP.csv"]
    lines = (tmp_path / "small" / "SP.csv").read_text().splitlines()
    body = [l for l in lines if not l.startswith("#")]
    assert body[0] == ",".join(COLUMNS) and len(body) == 5
    manifest = json.loads(out.manifest.read_text())
    assert manifest["config"] == SMALL_TLS
    assert manifest["failed_points"] == 0
    assert set(manifest["tolerances"]) >= {"density_rtol", "moment_rtol", "quadrature_steps"}


def test_failed_point_recorded_and_run_continues(tmp_path):
    text = SMALL_TLS.replace("ARP, SP", "SP").replace(
        "[axis.gamma]\nvalues = 0, 0.01\n", "[axis.knob]\nvalues = 0, 5\n")
    out = run_plan(parse_plan(text), tmp_path)
    assert out.n_failed == 2 and out.n_points == 4
    rows = [l for l in (tmp_path / "small" / "SP.csv").read_text().splitlines()
            if l.startswith("SP,")]
    assert sum("ProtocolError" in r for r in rows) == 2
    scan = (tmp_path / "small" / "scan.csv").read_text()
    assert "ProtocolError" in scan


def test_output_identical_across_thread_counts(tmp_path):
    cfg = tmp_path / "plan.cfg"
    cfg.write_text(SMALL_TLS)
    assert cli.main(["run", str(cfg), "--threads", "1", "--output", str(tmp_path / "a")]) == 0
    assert cli.main(["run", str(cfg), "--threads", "2", "--output", str(tmp_path / "b")]) == 0
    for name in ("ARP.csv", "SP.csv", "manifest.json"):
        assert (tmp_path / "a/small" / name).read_bytes() == (tmp_path / "b/small" / name).read_bytes()


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path))
    cfg = tmp_path / "plan.cfg"
    cfg.write_text(SMALL_TLS.replace("0.02, 0.05", "0.05").replace("0, 0.01", "0"))
    assert cli.main(["run", str(cfg), "--threads", "1"]) == 0
    assert (tmp_path / "small" / "manifest.json").exists()


def test_cli_exit_codes(tmp_path, capsys):
    assert cli.main(["list-presets"]) == 0
    assert "fig3" in capsys.readouterr().out
    assert cli.main(["run", str(tmp_path / "missing.cfg")]) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("[plan]\nsystem = TLS\nprotocols = SP\ndelta0 = 150\n")
    assert cli.main(["run", str(bad)]) == 2
    assert "no axes" in capsys.readouterr().err


def test_verify_quick_passes_and_reports(tmp_path):
    report = tmp_path / "report.json"
    assert cli.main(["verify", "--report", str(report)]) == 0
    data = json.loads(report.read_text())
    assert data["passed"] and data["level"] == "quick"
    assert [c["number"] for c in data["checks"]] == [1, 2, 3, 4, 8]


def test_flipped_dissipator_sign_fails_dephasing_check(monkeypatch):
    def wrong(h, rho, gamma):
        c = h @ rho - rho @ h
        return -1j * c + gamma * (h @ c - c @ h)
    monkeypatch.setattr(core, "master_rhs", wrong)
    assert not run_one(1).passed
