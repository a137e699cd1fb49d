"""Command-line front end: ``dsikit report | figure1 | costs | verify``.

Config files are flat ``key = value`` text; ``#`` starts a comment. Keys:

    model = linear                  # linear | product | additive-nonlinear
    params = 1, 1, 1
    mean = 0, 0, 0                  # optional, defaults to zeros
    cov.row.1 = 2, 2, 2             # one line per covariance row, 1-based
    m = 10000                       # pick-freeze sample size
    n_inner = 10000
    n_outer = 10000
    n_var = 10000
    n_perm = 500
    seed = 0
    mode = auto                     # auto | exact | mc
    weight = poincare               # poincare | integral
    workers = 4                     # optional; DSIKIT_THREADS otherwise
    output = report.csv             # optional; stdout otherwise

Exit codes: 0 success, 1 verification failure, 2 config error, 3 computation error.
"""

import argparse
import io
import sys
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from dsikit import testcase
from dsikit.bounds import WEIGHTS
from dsikit.combinatorics import cost_dsi, cost_shapley, cost_shapley_sampled
from dsikit.errors import ConfigError, DsikitError
from dsikit.indices import full_report
from dsikit.inputs import build_input_spec, register_builtin_model
from dsikit.variance import EstimatorConfig

CSV_HEADER = ("input", "DS", "DS_T", "Sh", "S", "S_T", "DUB", "DUB_prime",
              "stderr_DS", "stderr_DST", "stderr_Sh", "n_evals")
FIGURE1_HEADER = ("set", "input", "DS", "DS_T", "DUB", "DUB_prime", "Sh")
INT_KEYS = ("m", "n_inner", "n_outer", "n_var", "n_perm", "seed", "workers")
COUNT_LIMIT = 2 ** 63 - 1
FIGURE1_LOOP_CAP = 1000  # double-loop sizes for the Shapley column under --m


def fmt(x):
    """CSV cell: empty for missing values, 17 significant digits otherwise."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


# --------------------------------------------------------------------------
# config
# --------------------------------------------------------------------------

@dataclass
class RunConfig:
    model: str
    params: list
    mean: list
    covariance: list
    estimator: dict = field(default_factory=dict)
    weight: str = "poincare"
    output: str = None
    lines: dict = field(default_factory=dict)

    def build(self):
        """``(spec, model, EstimatorConfig)``; invalid values raise ConfigError with their line."""
        try:
            cov = np.array(self.covariance, dtype=float)
            mean = np.zeros(len(cov)) if self.mean is None else np.array(self.mean, dtype=float)
            spec = build_input_spec(mean, cov)
        except DsikitError as exc:
            raise ConfigError(f"{type(exc).__name__}: {exc}", self.lines.get("cov")) from exc
        try:
            model = register_builtin_model(self.model, self.params, d=spec.d)
        except DsikitError as exc:
            raise ConfigError(f"{type(exc).__name__}: {exc}", self.lines.get("model")) from exc
        try:
            config = EstimatorConfig(**self.estimator)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return spec, model, config


def _floats(text, lineno):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}", lineno) from None


def parse_config(text):
    """Parse config text into a RunConfig."""
    values, lines, rows = {}, {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key.startswith("cov.row."):
            try:
                i = int(key[len("cov.row."):])
            except ValueError:
                raise ConfigError(f"bad covariance row key {key!r}", lineno) from None
            if i in rows:
                raise ConfigError(f"covariance row {i} given twice", lineno)
            rows[i] = (_floats(value, lineno), lineno)
            lines.setdefault("cov", lineno)
            continue
        if key in values:
            raise ConfigError(f"key {key!r} given twice", lineno)
        if key in ("model", "mode", "weight", "output"):
            values[key] = value
        elif key in ("params", "mean"):
            values[key] = _floats(value, lineno)
        elif key in INT_KEYS:
            try:
                values[key] = int(value)
            except ValueError:
                raise ConfigError(f"{key} must be an integer, got {value!r}", lineno) from None
        else:
            raise ConfigError(f"unknown key {key!r}", lineno)
        lines[key] = lineno

    for key in ("model", "params"):
        if key not in values:
            raise ConfigError(f"missing required key {key!r}")
    if not rows:
        raise ConfigError("missing covariance rows (cov.row.1, ...)")
    d = len(rows)
    if sorted(rows) != list(range(1, d + 1)):
        raise ConfigError(f"covariance rows must be numbered 1..{d}", lines["cov"])
    for i in range(1, d + 1):
        row, lineno = rows[i]
        if len(row) != d:
            raise ConfigError(f"covariance row {i} has {len(row)} entries, expected {d}", lineno)
    if "mean" in values and len(values["mean"]) != d:
        raise ConfigError(f"mean has {len(values['mean'])} entries, expected {d}", lines["mean"])
    weight = values.get("weight", "poincare")
    if weight not in WEIGHTS:
        raise ConfigError(f"weight must be one of {WEIGHTS}", lines["weight"])
    mode = values.get("mode", "auto")
    if mode not in ("auto", "exact", "mc"):
        raise ConfigError("mode must be auto, exact or mc", lines["mode"])
    estimator = {k: values[k] for k in INT_KEYS if k in values}
    estimator["mode"] = mode
    return RunConfig(
        model=values["model"], params=values["params"], mean=values.get("mean"),
        covariance=[rows[i][0] for i in range(1, d + 1)], estimator=estimator,
        weight=weight, output=values.get("output"), lines=lines,
    )


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text)


# --------------------------------------------------------------------------
# CSV producers
# --------------------------------------------------------------------------

def report_csv(report):
    out = io.StringIO()
    out.write(",".join(CSV_HEADER) + "\n")
    for r in report.rows:
        cells = (r.input + 1, r.DS, r.DS_T, r.Sh, r.S, r.S_T, r.DUB, r.DUB_prime,
                 r.stderr_DS, r.stderr_DST, r.stderr_Sh, r.n_evals)
        out.write(",".join(fmt(c) for c in cells) + "\n")
    return out.getvalue()


def figure1_rows(config=None, weight="poincare"):
    """Index and bound values for every benchmark correlation set, three rows per set."""
    config = config or EstimatorConfig(mode="exact")
    model = testcase.linear_model()
    rows = []
    for name in testcase.CORRELATION_SETS:
        report = full_report(model, testcase.input_spec(name), config, weight)
        for r in report.rows:
            rows.append((name, r.input + 1, r.DS, r.DS_T, r.DUB, r.DUB_prime, r.Sh))
    return rows


def figure1_csv(rows):
    out = io.StringIO()
    out.write(",".join(FIGURE1_HEADER) + "\n")
    for row in rows:
        out.write(",".join([row[0], str(row[1])] + [fmt(c) for c in row[2:]]) + "\n")
    return out.getvalue()


def figure1_gnuplot(rows):
    """Whitespace data, one block per input: ``set_index DS DS_T DUB``."""
    out = io.StringIO()
    out.write("# set DS DS_T DUB; blocks separated by blank lines, one per input\n")
    names = list(testcase.CORRELATION_SETS)
    for j in (1, 2, 3):
        out.write(f"# input {j}\n")
        for row in rows:
            if row[1] == j:
                out.write(f"{names.index(row[0]) + 1} {fmt(row[2])} {fmt(row[3])} {fmt(row[4])}\n")
        out.write("\n\n")
    return out.getvalue()


def cost_table(d, blocks, m, n_i, n_o, n_v, n_perm):
    """``{"C_l", "C", "C_prime", "ratio"}`` in exact integer arithmetic."""
    for name, v in (("d", d), ("m", m), ("ni", n_i), ("no", n_o), ("nv", n_v), ("nperm", n_perm)):
        if v < 1:
            raise ValueError(f"{name} must be positive")
    if sum(blocks) > d or any(b < 2 for b in blocks):
        raise ValueError("blocks must have at least 2 inputs and fit within d")
    d_max = max(blocks, default=1)
    c_l = cost_dsi(m, d_max)
    c = cost_shapley(d, n_i, n_o, n_v)
    c_prime = cost_shapley_sampled(d, n_i, n_o, n_perm, n_v)
    if max(c_l, c, c_prime) > COUNT_LIMIT:
        raise OverflowError(f"cost exceeds a 64-bit count for d = {d}; try a smaller d")
    return {"C_l": c_l, "C": c, "C_prime": c_prime, "ratio": Fraction(c_l, c)}


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def _write(text, path, stdout):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        stdout.write(text)


def cmd_report(args, stdout, stderr):
    try:
        run = load_config(args.config)
        spec, model, config = run.build()
    except ConfigError as exc:
        stderr.write(f"config error: {exc}\n")
        return 2
    try:
        report = full_report(model, spec, config, run.weight)
    except (DsikitError, ArithmeticError, ValueError) as exc:
        stderr.write(f"computation error: {type(exc).__name__}: {exc}\n")
        return 3
    _write(report_csv(report), args.out or run.output, stdout)
    return 0


def cmd_figure1(args, stdout, stderr):
    if args.m is None:
        config = EstimatorConfig(mode="exact")
    else:
        loop = min(args.m, FIGURE1_LOOP_CAP)
        config = EstimatorConfig(m=args.m, n_var=args.m, n_inner=loop, n_outer=loop,
                                 mode="mc", seed=args.seed)
    try:
        rows = figure1_rows(config, args.weight)
    except (DsikitError, ArithmeticError, ValueError) as exc:
        stderr.write(f"computation error: {type(exc).__name__}: {exc}\n")
        return 3
    _write(figure1_csv(rows), args.out, stdout)
    if args.out:
        stem = args.out[:-4] if args.out.endswith(".csv") else args.out
        _write(figure1_gnuplot(rows), stem + ".dat", stdout)
    return 0


def cmd_costs(args, stdout, stderr):
    try:
        blocks = [int(b) for b in args.blocks.split(",") if b.strip()] if args.blocks else []
        table = cost_table(args.d, blocks, args.m, args.ni, args.no, args.nv, args.nperm)
    except (ValueError, OverflowError) as exc:
        stderr.write(f"error: {exc}\n")
        return 3
    ratio = table["ratio"]
    stdout.write(f"C_l = {table['C_l']}\nC = {table['C']}\nC_prime = {table['C_prime']}\n"
                 f"C_l/C = {ratio} ({float(ratio):.6g})\n")
    return 0


def cmd_verify(args, stdout, stderr):
    from dsikit.acceptance import run_all

    results = run_all(seed=args.seed, corrupt_fixture=args.corrupt_fixture)
    for r in results:
        stdout.write(r.line() + "\n")
    failed = [r for r in results if not r.passed]
    if failed:
        stderr.write(f"first failing criterion: {failed[0].number} ({failed[0].name})\n")
        return 1
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="dsikit", description="Dependent sensitivity indices and bounds.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("report", help="all indices and bounds for a config file")
    p.add_argument("config")
    p.add_argument("--out", help="CSV path (overrides the config's output)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("figure1", help="indices and bounds over the ten benchmark correlation sets")
    p.add_argument("--out", help="CSV path; a .dat companion is written next to it")
    p.add_argument("--m", type=int, help="Monte Carlo sample size (closed forms when omitted)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--weight", choices=WEIGHTS, default="poincare")
    p.set_defaults(func=cmd_figure1)

    p = sub.add_parser("costs", help="model-run budgets of the estimators")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--blocks", default="", help="comma-separated dependent block sizes")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--ni", type=int, required=True)
    p.add_argument("--no", type=int, required=True)
    p.add_argument("--nv", type=int, required=True)
    p.add_argument("--nperm", type=int, required=True)
    p.set_defaults(func=cmd_costs)

    p = sub.add_parser("verify", help="run the acceptance checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corrupt-fixture", action="store_true",
                   help="use a covariance that is not positive semidefinite")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None, stdout=None, stderr=None):
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    args = build_parser().parse_args(argv)
    return args.func(args, stdout, stderr)


if __name__ == "__main__":
    sys.exit(main())
