import io

import numpy as np
import pytest

from dsikit import testcase
from dsikit.cli import CSV_HEADER, cost_table, fmt, main, parse_config
from dsikit.errors import ConfigError


def config_text(name, extra=""):
    cov = testcase.covariance(testcase.CORRELATION_SETS[name])
    rows = "\n".join(f"cov.row.{i + 1} = " + ", ".join(repr(float(v)) for v in row)
                     for i, row in enumerate(cov))
    return f"# benchmark {name}\nmodel = linear\nparams = 1, 1, 1\n{rows}\n{extra}"


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(argv, out, err)
    return code, out.getvalue(), err.getvalue()


def parse_csv(text):
    lines = text.strip().splitlines()
    header = lines[0].split(",")
    return header, [dict(zip(header, line.split(","))) for line in lines[1:]]


@pytest.fixture
def write(tmp_path):
    def _write(text, name="run.cfg"):
        p = tmp_path / name
        p.write_text(text)
        return str(p)
    return _write


def test_report_c4(write):
    code, out, _ = run(["report", write(config_text("C4"))])
    assert code == 0
    header, rows = parse_csv(out)
    assert tuple(header) == CSV_HEADER
    assert len(rows) == 3
    for r in rows:
        ds, dst, sh = float(r["DS"]), float(r["DS_T"]), float(r["Sh"])
        assert abs(ds - sh) <= 1e-10 and abs(dst - sh) <= 1e-10
        assert r["S"] == "" and r["S_T"] == ""


def test_report_c7_sobol_columns(write):
    code, out, _ = run(["report", write(config_text("C7"))])
    assert code == 0
    for r in parse_csv(out)[1]:
        assert float(r["S"]) == pytest.approx(float(r["DS"]), abs=1e-12)
        assert float(r["S_T"]) == pytest.approx(float(r["DS_T"]), abs=1e-12)
        assert r["DUB_prime"] == ""


def test_report_to_file(write, tmp_path):
    out_path = tmp_path / "r.csv"
    code, out, _ = run(["report", write(config_text("C2")), "--out", str(out_path)])
    assert code == 0 and out == ""
    assert out_path.read_text().startswith("input,DS")


def test_report_mc_is_byte_identical(write):
    extra = "mode = mc\nm = 2000\nn_var = 2000\nn_inner = 50\nn_outer = 200\nseed = 7\n"
    a = run(["report", write(config_text("C8", extra + "workers = 1\n"), "a.cfg")])
    b = run(["report", write(config_text("C8", extra + "workers = 4\n"), "b.cfg")])
    assert a[0] == b[0] == 0
    assert a[1] == b[1]
    header, rows = parse_csv(a[1])
    assert all(float(r["stderr_DS"]) > 0 for r in rows)


def test_malformed_row_reports_line(write):
    lines = config_text("C4").splitlines()
    lines[4] = lines[4].rsplit(",", 1)[0]
    text = "\n".join(lines)
    code, _, err = run(["report", write(text)])
    assert code == 2
    assert "line 5" in err


@pytest.mark.parametrize("bad, line", [
    ("cov.row.1 = 2, x, 2", 4),
    ("colour = red", 7),
    ("m = many", 7),
    ("just words", 7),
])
def test_parse_errors_have_line_numbers(bad, line):
    text = config_text("C4")
    if bad.startswith("cov.row.1"):
        text = text.replace(text.splitlines()[3], bad)
    else:
        text += bad + "\n"
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == line


def test_invalid_covariance_is_config_error(write):
    text = "model = linear\nparams = 1, 1\ncov.row.1 = 1, 2\ncov.row.2 = 2, 1\n"
    code, _, err = run(["report", write(text)])
    assert code == 2 and "NotPositiveSemidefinite" in err and "line 3" in err


def test_computation_error_exit_3(write):
    text = "model = linear\nparams = 0, 0\ncov.row.1 = 1, 0\ncov.row.2 = 0, 1\n"
    code, _, err = run(["report", write(text)])
    assert code == 3 and "DegenerateVariance" in err


def test_missing_file():
    code, _, err = run(["report", "/nonexistent/x.cfg"])
    assert code == 2


def test_figure1(tmp_path):
    path = tmp_path / "fig.csv"
    code, _, _ = run(["figure1", "--out", str(path)])
    assert code == 0
    header, rows = parse_csv(path.read_text())
    assert len(rows) == 30
    for r in rows:
        ds, dst, dub = float(r["DS"]), float(r["DS_T"]), float(r["DUB"])
        assert dub >= dst - 1e-10 and dst >= ds - 1e-10 and ds >= -1e-10
        assert all(np.isfinite(float(v)) for k, v in r.items() if k not in ("set", "input") and v)
    c7 = [float(r["DS"]) for r in rows if r["set"] == "C7"]
    assert c7 == pytest.approx([1 / 9, 4 / 9, 4 / 9], abs=1e-12)
    c1 = [float(r[k]) for r in rows if r["set"] == "C1" for k in ("DS", "DS_T")]
    assert c1 == pytest.approx([1 / 3] * 6, abs=1e-10)
    dat = (tmp_path / "fig.dat").read_text()
    assert dat.count("# input") == 3


def test_figure1_stdout_deterministic():
    assert run(["figure1"])[1] == run(["figure1"])[1]


def test_costs_output():
    code, out, _ = run(["costs", "--d", "3", "--blocks", "3", "--m", "100", "--ni", "100",
                        "--no", "100", "--nv", "100", "--nperm", "10"])
    assert code == 0
    assert "C_l = 2400\n" in out
    assert "C = 120100\n" in out
    assert "C_prime = 200100\n" in out


def test_cost_table_exact():
    m = 10_000
    t = cost_table(3, [3], m, m, m, m, 500)
    assert t["C_l"] == 24 * m and t["C"] == 12 * m * m + m
    for d in range(3, 11):
        t = cost_table(d, [d], m, m, m, m, 500)
        assert t["C_l"] <= t["C"]


def test_costs_single_input():
    t = cost_table(1, [], 10, 10, 10, 10, 1)
    assert t["C"] == 10
    assert t["C_prime"] == 10
    assert t["C_l"] == 4 * 10


def test_costs_overflow():
    code, _, err = run(["costs", "--d", "40", "--m", "10", "--ni", "10", "--no", "10",
                        "--nv", "10", "--nperm", "1"])
    assert code == 3 and "smaller d" in err


def test_verify_corrupted_fixture():
    code, out, err = run(["verify", "--corrupt-fixture"])
    assert code == 1
    assert "NotPositiveSemidefinite" in out


def test_fmt():
    assert fmt(None) == ""
    assert fmt(3) == "3"
    assert fmt(0.1) == "0.10000000000000001"


def test_verify_transcript():
    code, out, err = run(["verify"])
    lines = out.strip().splitlines()
    assert len(lines) == 10
    failing = [line for line in lines if " FAIL " in line]
    # the E-factor integral diverges, so its two quadratures cannot agree
    assert [line.split()[1] for line in failing] == ["9"]
    assert code == 1 and "criterion: 9" in err
    assert run(["verify"])[1] == out
