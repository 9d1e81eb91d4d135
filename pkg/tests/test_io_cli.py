import io
import json
import subprocess
import sys
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from oneshot.cli import main
from oneshot.errors import ParseError, ValidationError
from oneshot.io import (
    design_from_config,
    electric_current_path,
    format_device_csv,
    load_config,
    read_device_table,
    report_schema,
    round_sig,
)
from oneshot.model import DeviceData, TestPlan

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
EC_FAILURES = [[4, 8, 9, 8], [7, 9, 9, 9], [6, 10, 9, 10]]


@pytest.fixture(scope="module")
def ec_csv():
    return str(electric_current_path())


def _read(text):
    return read_device_table(io.StringIO(text))


def test_electric_current_table(ec):
    assert ec.plan.inspection_times.tolist() == [2.0, 5.0, 8.0]
    assert ec.plan.stress_levels.tolist() == [[55, 70], [80, 70], [55, 100], [80, 100]]
    assert np.all(ec.plan.group_sizes == 10)
    assert ec.failures.tolist() == EC_FAILURES
    assert ec.plan.total == 120


def test_canonical_round_trip(ec_csv):
    text = open(ec_csv).read()
    t = _read(text)
    assert format_device_csv(t.data, t.factor_names) == text


def test_single_cell_round_trip():
    text = "inspection_time,x1,tested,failures\n3.5,12,7,2\n"
    t = _read(text)
    assert t.data.plan.n_times == 1 and t.data.plan.n_conditions == 1
    assert format_device_csv(t.data, t.factor_names) == text


def test_rows_in_any_order_and_missing_cells():
    t = _read("inspection_time,x,tested,failures\n5,2,4,1\n1,1,3,0\n")
    assert t.data.plan.inspection_times.tolist() == [1.0, 5.0]
    assert t.data.plan.group_sizes.tolist() == [[0, 3], [4, 0]]
    out = format_device_csv(t.data, t.factor_names)
    assert out.splitlines()[1:] == ["1,1,3,0", "5,2,4,1"]


@pytest.mark.parametrize(
    "text,line",
    [
        ("", 1),
        ("time,x,tested,failures\n1,2,3,1\n", 1),
        ("inspection_time,x,tested,failures\n", 2),
        ("inspection_time,x,tested,failures\n1,2,3,1\n1,2,5,1\n", 3),
        ("inspection_time,x,tested,failures\n1,2,3,1\n2,abc,3,1\n", 3),
        ("inspection_time,x,tested,failures\n1,2,3.5,1\n", 2),
        ("inspection_time,x,tested,failures\n1,2,3\n", 2),
        ("inspection_time,x,tested,failures\n1,2,3,1\n\n2,2,3,1\n", 3),
        ("inspection_time,x,tested,failures\n1,nan,3,1\n", 2),
    ],
)
def test_parse_errors_carry_line(text, line):
    with pytest.raises(ParseError) as exc:
        _read(text)
    assert exc.value.line == line
    assert f"line {line}" in str(exc.value)


def test_failures_exceed_tested():
    with pytest.raises(ValidationError, match="line 2"):
        _read("inspection_time,x,tested,failures\n1,2,3,4\n")


def test_missing_file():
    with pytest.raises(ValidationError):
        read_device_table("/nonexistent/file.csv")


def test_format_requires_names():
    data = DeviceData(TestPlan([1.0], [[1.0, 2.0]], [[3]]), [[1]])
    assert format_device_csv(data).startswith("inspection_time,x1,x2,tested,failures\n")
    with pytest.raises(ValidationError):
        format_device_csv(data, ["a"])


def test_round_sig():
    assert round_sig({"a": 0.123456789, "b": [1.0e-9 / 3, float("inf")], "c": True, "d": 3}) == {
        "a": 0.123457, "b": [3.33333e-10, None], "c": True, "d": 3,
    }
    assert round_sig(np.float64(1 / 3), 0) == 1 / 3


def test_configs_load():
    for name in ("balanced_b0_c6", "balanced_b0_c6_contaminated", "unbalanced_wald", "custom_example"):
        d = design_from_config(load_config(CONFIGS / f"{name}.toml"))
        assert d.replicates >= 1
    with pytest.raises(ValidationError):
        design_from_config({"design": {"kind": "nope"}})
    with pytest.raises(ValidationError):
        design_from_config({})


def _run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def _valid(text):
    report = json.loads(text)
    jsonschema.validate(report, report_schema())
    return report


def test_cli_fit(ec_csv, capsys):
    code, out, _ = _run(["fit", "--data", ec_csv, "--beta", "0", "0.5"], capsys)
    assert code == 0
    rep = _valid(out)
    assert [f["beta"] for f in rep["fits"]] == [0.0, 0.5]
    assert rep["fits"][0]["eta"][2] == pytest.approx(-2.182, abs=1e-3)
    assert rep["provenance"]["seed"] == 20240601
    assert len(rep["provenance"]["input_sha256"]) == 64


def test_cli_ci_wald_gof_tune(ec_csv, capsys):
    code, out, _ = _run(["ci", "--data", ec_csv, "--x0", "25", "35", "--time", "2", "--method", "both"], capsys)
    assert code == 0
    iv = _valid(out)["intervals"]
    assert [i["method"] for i in iv] == ["plain", "logit"]
    assert iv[1]["lower"] == pytest.approx(0.516, abs=0.01)

    code, out, _ = _run(["wald", "--data", ec_csv, "--coef", "alpha1=0.02", "--row", "0,0,0,1,-1:0"], capsys)
    assert code == 0
    w = _valid(out)["wald"][0]
    assert w["dof"] == 2 and 0.0 <= w["p_value"] <= 1.0

    code, out, _ = _run(["gof", "--data", ec_csv], capsys)
    assert code == 0
    assert _valid(out)["gof"][0]["m_stat"] == pytest.approx(1.80, abs=0.02)

    code, out, _ = _run(["tune", "--data", ec_csv, "--grid", "0", "0.5", "0.9"], capsys)
    assert code == 0
    assert _valid(out)["tuning"]["chosen_beta"] == 0.5


def test_cli_raw_and_out(ec_csv, tmp_path, capsys):
    target = tmp_path / "r.json"
    assert _run(["fit", "--data", ec_csv, "--raw", "--out", str(target)], capsys)[0] == 0
    rep = _valid(target.read_text())
    assert rep["fits"][0]["eta"][0] != round(rep["fits"][0]["eta"][0], 6)


def test_cli_exit_codes(ec_csv, tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("inspection_time,x,tested,failures\n1,2,3,9\n")
    assert _run(["fit", "--data", str(bad)], capsys)[0] == 2
    assert _run(["fit", "--data", str(tmp_path / "missing.csv")], capsys)[0] == 2
    assert _run(["wald", "--data", ec_csv, "--coef", "zeta1=0"], capsys)[0] == 2
    code, _, err = _run(["fit", "--data", ec_csv, "--max-iter", "1", "--restarts", "0"], capsys)
    assert code == 3 and "converge" in err
    assert _run(["fit", "--data", ec_csv, "--beta", "0.9"], capsys)[0] in (0, 3)
    with pytest.raises(SystemExit) as exc:
        main(["fit"])
    assert exc.value.code == 64
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 64


def test_cli_singular_covariance_exit(tmp_path, capsys):
    # every device fails at the later times: eta_2 runs off to the boundary
    p = tmp_path / "d.csv"
    rows = ["inspection_time,x,tested,failures"]
    for t, n in ((1, 3), (2, 10), (3, 10)):
        for x in (1, 2, 3):
            rows.append(f"{t},{x},10,{n}")
    p.write_text("\n".join(rows) + "\n")
    code, _, err = _run(["ci", "--data", str(p), "--x0", "1"], capsys)
    assert code == 3


def test_simulate_is_byte_identical(tmp_path, capsys):
    outs = []
    for k in range(2):
        target = tmp_path / f"s{k}.json"
        plot = tmp_path / f"p{k}.csv"
        code = main(["simulate", "--config", str(CONFIGS / "balanced_b0_c6.toml"), "--replicates", "3",
                     "--restarts", "0", "--out", str(target), "--emit-plot-data", str(plot)])
        assert code == 0
        outs.append((target.read_bytes(), plot.read_bytes()))
    assert outs[0] == outs[1]
    _valid(outs[0][0].decode())
    header = outs[0][1].decode().splitlines()[0]
    assert header == "x_name,x,series,quantity,value"


def test_simulate_seed_changes_output(tmp_path):
    texts = []
    for seed in ("1", "2"):
        target = tmp_path / f"{seed}.json"
        main(["simulate", "--config", str(CONFIGS / "balanced_b0_c6.toml"), "--replicates", "3",
              "--restarts", "0", "--seed", seed, "--out", str(target)])
        texts.append(json.loads(target.read_text()))
    assert texts[0]["provenance"]["seed"] == 1
    assert texts[0]["simulation"] != texts[1]["simulation"]


def test_module_entry_point(ec_csv):
    res = subprocess.run([sys.executable, "-m", "oneshot", "gof", "--data", ec_csv],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert json.loads(res.stdout)["command"] == "gof"
