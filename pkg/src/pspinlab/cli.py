"""Command-line front end.

    python -m pspinlab <command> [--config FILE] [--key value ...]

Parameters come from the command's defaults, then a key=value config file,
then command-line flags.  Config files use INI sections: ``[run]`` holds
``command``, ``master_seed``, ``threads``, ``output_path`` and ``format``;
``[params]`` holds scalar parameters and ``[grids]`` holds grid specs.  A grid
spec is either ``lo:hi:step`` (both ends included) or a comma list; ``inf``
and ``-inf`` are allowed in lists.

Every output starts with a ``# manifest_sha256=...`` comment line.  The
checksum covers the command, its parameters, the master seed, the code
version and the per-stage seeds, and nothing else, so it does not depend on
the thread count or the output location.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure (a JSON
diagnostic goes to stderr).
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import math
import os
import re
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from . import covariance as cov
from . import kac_rice as kr
from . import landscape as ls
from . import oracle
from . import rmt
from . import scalar_theory as st
from .mc import THREADS_ENV
from .scalar_theory import ModelParams

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
RUN_KEYS = ("command", "master_seed", "threads", "output_path", "format")


class ConfigError(ValueError):
    pass


class NumericalFailure(ArithmeticError):
    def __init__(self, message: str, payload: dict | None = None):
        super().__init__(message)
        self.payload = payload or {}


# ---------------------------------------------------------------------------
# config


@dataclass(frozen=True)
class Param:
    kind: str  # int, float, str, bool, grid
    default: object
    help: str = ""
    choices: tuple | None = None


def parse_grid(spec: str) -> np.ndarray:
    spec = spec.strip()
    try:
        if ":" in spec:
            lo, hi, step = (float(t) for t in spec.split(":"))
            if step <= 0 or hi < lo:
                raise ConfigError(f"bad grid {spec!r}: need lo <= hi and step > 0")
            n = int(round((hi - lo) / step))
            if not math.isclose(lo + n * step, hi, rel_tol=1e-9, abs_tol=1e-9 * step):
                raise ConfigError(f"grid {spec!r}: (hi - lo) is not a multiple of step")
            return np.linspace(lo, hi, n + 1)
        vals = np.array([float(t) for t in spec.split(",") if t.strip()])
    except ValueError as e:
        raise ConfigError(f"bad grid {spec!r}: {e}") from None
    if vals.size == 0:
        raise ConfigError(f"empty grid {spec!r}")
    return vals


def _coerce(name: str, spec: Param, value):
    if value is None:
        return None
    try:
        if spec.kind == "int":
            f = float(value)
            if f != int(f):
                raise ValueError
            out = int(f)
        elif spec.kind == "float":
            out = float(value)
        elif spec.kind == "bool":
            if isinstance(value, bool):
                out = value
            elif str(value).lower() in ("1", "true", "yes", "on"):
                out = True
            elif str(value).lower() in ("0", "false", "no", "off"):
                out = False
            else:
                raise ValueError
        elif spec.kind == "grid":
            out = str(value).strip()
            parse_grid(out)
        else:
            out = str(value)
    except ValueError:
        raise ConfigError(f"{name}: cannot read {value!r} as {spec.kind}") from None
    if spec.choices is not None and out not in spec.choices:
        raise ConfigError(f"{name}: {out!r} not in {spec.choices}")
    return out


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    params: dict = field(default_factory=dict)
    master_seed: int = 0
    threads: int | None = None
    output_path: str | None = None
    format: str = "csv"

    def to_text(self) -> str:
        lines = ["[run]", f"command = {self.command}", f"master_seed = {self.master_seed}"]
        if self.threads is not None:
            lines.append(f"threads = {self.threads}")
        if self.output_path is not None:
            lines.append(f"output_path = {self.output_path}")
        lines.append(f"format = {self.format}")
        schema = COMMANDS[self.command].params
        for section, want in (("params", False), ("grids", True)):
            keys = [k for k in self.params if (schema[k].kind == "grid") == want]
            if keys:
                lines += ["", f"[{section}]"] + [f"{k} = {_fmt_value(self.params[k])}" for k in keys]
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str, command: str | None = None) -> "ExperimentConfig":
        return build_config(command, read_config_text(text), {})

    def snapshot(self) -> dict:
        """The part of the config that determines the outputs."""
        return {"command": self.command, "master_seed": self.master_seed,
                "params": {k: self.params[k] for k in sorted(self.params)}}


def read_config_text(text: str) -> dict:
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"config file: {e}") from None
    flat = {}
    for section in cp.sections():
        if section not in ("run", "params", "grids"):
            raise ConfigError(f"unknown config section [{section}]")
        for k, v in cp.items(section):
            flat[k.replace("-", "_")] = v
    return flat


def build_config(command: str | None, file_values: dict, overrides: dict) -> ExperimentConfig:
    merged = {**file_values, **{k: v for k, v in overrides.items() if v is not None}}
    cmd = merged.pop("command", None) if command is None else command
    merged.pop("command", None)
    if cmd not in COMMANDS:
        raise ConfigError(f"unknown command {cmd!r}")
    schema = COMMANDS[cmd].params
    run = {k: merged.pop(k) for k in RUN_KEYS[1:] if k in merged}
    unknown = sorted(set(merged) - set(schema))
    if unknown:
        raise ConfigError(f"{cmd}: unknown parameters {unknown}")
    params = {k: _coerce(k, spec, merged.get(k, spec.default)) for k, spec in schema.items()}
    seed = _coerce("master_seed", Param("int", 0), run.get("master_seed", 0))
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("master_seed must be a 64-bit unsigned integer")
    threads = _coerce("threads", Param("int", None), run.get("threads"))
    if threads is not None and threads < 1:
        raise ConfigError("threads must be >= 1")
    fmt = _coerce("format", Param("str", "csv", choices=("csv", "json")), run.get("format", "csv"))
    out = run.get("output_path")
    cfg = ExperimentConfig(cmd, params, seed, threads, out, fmt)
    COMMANDS[cmd].validate(cfg.params)
    return cfg


# ---------------------------------------------------------------------------
# manifest and output


@dataclass
class RunManifest:
    config: dict
    code_version: str
    wall_time: float
    stage_seeds: dict
    output_checksums: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def checksum(self) -> str:
        payload = {"config": self.config, "code_version": self.code_version,
                   "stage_seeds": self.stage_seeds}
        return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()

    def to_json(self) -> str:
        d = asdict(self)
        d["manifest_sha256"] = self.checksum()
        return json.dumps(d, indent=2, sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def format_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


@dataclass
class Table:
    columns: list
    rows: list
    summary: dict = field(default_factory=dict)
    stage_seeds: dict = field(default_factory=dict)
    failure: str | None = None


def render(table: Table, manifest: RunManifest, fmt: str) -> str:
    head = f"# manifest_sha256={manifest.checksum()} command={manifest.config['command']}"
    if fmt == "json":
        body = {"manifest_sha256": manifest.checksum(), "columns": table.columns,
                "rows": [dict(zip(table.columns, r)) for r in table.rows],
                "summary": table.summary}
        return json.dumps(body, indent=1, default=_json_default) + "\n"
    buf = io.StringIO()
    buf.write(head + "\n")
    if table.summary:
        buf.write("# summary " + json.dumps(table.summary, sort_keys=True, default=_json_default) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for r in table.rows:
        w.writerow([format_cell(v) for v in r])
    return buf.getvalue()


def execute(cfg: ExperimentConfig, stdout=None) -> tuple[int, str, RunManifest]:
    """Run a validated config; returns (exit code, rendered output, manifest)."""
    t0 = time.perf_counter()
    table = COMMANDS[cfg.command].run(cfg)
    manifest = RunManifest(cfg.snapshot(), __version__, 0.0, table.stage_seeds,
                           summary=table.summary)
    text = render(table, manifest, cfg.format)
    manifest.output_checksums = {"output": hashlib.sha256(text.encode()).hexdigest()}
    manifest.wall_time = time.perf_counter() - t0
    if cfg.output_path:
        with open(cfg.output_path, "w") as fh:
            fh.write(text)
        with open(cfg.output_path + ".manifest.json", "w") as fh:
            fh.write(manifest.to_json() + "\n")
    elif stdout is not None:
        stdout.write(text)
    if table.failure:
        raise NumericalFailure(table.failure, table.summary)
    return EXIT_OK, text, manifest


# ---------------------------------------------------------------------------
# commands


@dataclass(frozen=True)
class Command:
    params: dict
    run: object
    validate: object
    help: str


def _model(P, p_key="p", N_key="N") -> ModelParams:
    return ModelParams(P[p_key], P.get(N_key) or 2)


def _need(cond: bool, msg: str):
    if not cond:
        raise ConfigError(msg)


def _check_model(P, min_p=2):
    _need(P["p"] >= min_p, f"p must be >= {min_p}")
    if "N" in P:
        _need(P["N"] >= 2, "N must be >= 2")


def _check_samples(P, key="samples", least=2):
    _need(P[key] >= least, f"{key} must be >= {least}")


# theta ---------------------------------------------------------------------

def _run_theta(cfg):
    P = cfg.params
    m = ModelParams(P["p"])
    us = parse_grid(P["u_grid"])
    th = np.atleast_1d(st.theta(m, us))
    rows = [(float(u), float(t), st.theta_branch(m, float(u))) for u, t in zip(us, th)]
    rep = st.e_zero(m)
    return Table(["u", "theta", "branch"], rows,
                 {"e_inf": rep.e_inf, "e_zero": rep.e_zero, "theta_tol": rep.tol})


# cov -----------------------------------------------------------------------

def _run_cov(cfg):
    P = cfg.params
    m = _model(P)
    rows = []
    for r in parse_grid(P["r_grid"]):
        r = float(r)
        pc = cov.pair_covariance(m, r, P["u1"], P["u2"])
        lp, lm = st.sigma_u_eigenvalues(m, r)
        rows.append((r, pc.sigma_u[0, 0], pc.sigma_u[0, 1], pc.sigma_z[0, 0], pc.sigma_z[0, 1],
                     pc.sigma_q[0, 0], pc.sigma_q[0, 1], pc.m1, pc.m2,
                     float(cov.g_factor(m, r)), float(cov.f_factor(m, r)),
                     float(st.h_poly(m, r, 1)), float(st.h_poly(m, r, -1)), float(lp), float(lm),
                     bool(st.g_r_concavity_check(m, r))))
    cols = ["r", "sigma_u11", "sigma_u12", "sigma_z11", "sigma_z12", "sigma_q11", "sigma_q12",
            "m1", "m2", "G", "F", "h_plus", "h_minus", "lambda_plus", "lambda_minus", "g_concave"]
    return Table(cols, rows)


def _check_cov(P):
    _check_model(P)
    rs = parse_grid(P["r_grid"])
    _need(bool(np.all(np.abs(rs) < 1)), "r_grid must lie in (-1, 1)")


# oracle-check --------------------------------------------------------------

def _run_oracle(cfg):
    P = cfg.params
    m = ModelParams(P["p"], P["n"])
    rows = oracle.compare(m, P["n"], P["r"], P["u1"], P["u2"], P["orientation"])
    worst = oracle.max_abs_diff(rows)
    summary = {"max_abs_diff": worst, "tol": P["tol"],
               "orientations": oracle.orientation_diagnostic(m, P["n"], P["r"], P["u1"], P["u2"])}
    if P["fd"]:
        summary["fd_max_abs_diff"] = oracle.fd_cross_check(m, P["n"], P["r"], P["u1"], P["u2"],
                                                           orientation=P["orientation"])
    fail = None if worst < P["tol"] else f"oracle mismatch {worst:.3e} >= {P['tol']:.1e}"
    return Table(["entry", "oracle", "engine", "abs_diff"], rows, summary, failure=fail)


def _check_oracle(P):
    _check_model(P)
    _need(P["n"] >= 3, "n must be >= 3")
    _need(abs(P["r"]) < 1, "|r| must be < 1")


# rmt -----------------------------------------------------------------------

def _run_rmt(cfg):
    P, seed = cfg.params, cfg.master_seed
    mode = P["mode"]
    stages = {"goe": [seed, 0]}
    if mode == "det":
        rows = []
        for x in parse_grid(P["x_grid"]):
            est = rmt.mc_abs_det_moment(P["n"], float(x), P["k"], P["samples"], seed,
                                        P["normalization"])
            exact = (rmt.expected_abs_det_small_n(P["n"], float(x), P["normalization"])
                     if P["n"] <= 2 and P["k"] == 1 else math.nan)
            rows.append((float(x), est.value, est.stderr, exact))
        return Table(["x", "moment", "stderr", "closed_form"], rows, stage_seeds=stages)
    if mode == "ratio":
        rows = []
        for n in parse_grid(P["n_grid"]):
            est = rmt.det_moment_ratio(int(n), P["x"], int(P["k"]), P["samples"], seed,
                                       P["normalization"])
            rows.append((int(n), est.value, est.stderr))
        ns = np.array([r[0] for r in rows], float)
        summary = {}
        if ns.size >= 2:
            summary["log_log_slope"] = float(np.polyfit(np.log(ns), [r[1] for r in rows], 1)[0])
            summary["predicted_slope"] = 2 * P["k"] ** 2 - P["k"]
        return Table(["n", "log_ratio", "stderr"], rows, summary, stages)
    if mode == "overcrowding":
        interval = (P["interval_lo"], P["interval_hi"])
        counts = rmt.eigenvalue_counts(P["n"], interval, P["samples"], seed)
        rows = []
        for t in parse_grid(P["t_grid"]):
            rep = rmt.overcrowding_probability(P["n"], interval, float(t), P["samples"], seed, counts)
            rows.append((float(t), rep.estimate.value, rep.estimate.stderr, rep.bound, rep.holds))
        viol = sum(not r[4] for r in rows)
        return Table(["t", "probability", "stderr", "bound", "holds"], rows,
                     {"violations": viol}, stages)
    if mode == "perturbation":
        checks = rmt.perturbation_instances(P["samples"], seed)
        rows = [(i, c.lhs, c.rhs, c.rank, c.holds) for i, c in enumerate(checks)]
        viol = sum(not c.holds for c in checks)
        return Table(["instance", "lhs", "rhs", "rank", "holds"], rows, {"violations": viol}, stages)
    m = ModelParams(P["p"], P["N"])
    if mode == "bnorm":
        thr = None if math.isnan(P["threshold"]) else P["threshold"]
        s = rmt.b_matrix_norm_stats(m, P["r"], P["u1"], P["u2"], P["samples"], seed, thr)
        rows = [(q, v) for q, v in s.quantiles.items()]
        summary = {"mean": s.estimate.value, "mean_stderr": s.estimate.stderr,
                   "reference": s.reference}
        if s.exceed is not None:
            summary["exceed"] = [e.value for e in s.exceed]
        return Table(["quantile", "norm"], rows, summary, {"pairs": [seed, 1]})
    if mode == "delta":
        est = rmt.delta_n_estimate(m, P["r"], P["u1"], P["u2"], P["samples"], seed, P["method"])
        return Table(["r", "u1", "u2", "delta", "stderr"],
                     [(P["r"], P["u1"], P["u2"], est.value, est.stderr)],
                     stage_seeds={"pairs": [seed, 1], "denominators": [[seed, 2], [seed, 3]]})
    raise ConfigError(mode)


def _check_rmt(P):
    _check_samples(P)
    _need(P["n"] >= 1, "n must be >= 1")
    _need(P["k"] > 0, "k must be positive")
    if P["mode"] == "ratio":
        _need(bool(np.all(parse_grid(P["n_grid"]) >= 1)), "n_grid entries must be >= 1")
    if P["mode"] == "overcrowding":
        _need(P["interval_lo"] < P["interval_hi"], "interval_lo must be < interval_hi")
        _need(bool(np.all(parse_grid(P["t_grid"]) >= 1)), "t_grid entries must be >= 1")
    if P["mode"] in ("bnorm", "delta"):
        _check_model(P, 3)
        _need(abs(P["r"]) < 1, "|r| must be < 1")


# first / second moment, ratio, decompose ------------------------------------

def _window(u: float) -> kr.EnergyWindow:
    return kr.REAL_LINE if u == math.inf else kr.EnergyWindow.below(u)


def _run_first(cfg):
    P, seed = cfg.params, cfg.master_seed
    m = _model(P)
    us = parse_grid(P["u_grid"])
    fin = us[np.isfinite(us)]
    ext = (-math.inf, float(fin.max()) * math.sqrt(m.N)) if fin.size else None
    model = kr.first_moment_model(m, P["method"], P["samples"], seed, extend_to=ext)
    rows = []
    for u in us:
        est = kr.first_moment(m, _window(float(u)), model=model)
        ref = float(st.theta(ModelParams(m.p), float(u))) if math.isfinite(u) else math.nan
        rows.append((float(u), est.value, est.stderr, est.value / m.N, ref))
    return Table(["u", "log_moment", "rel_stderr", "log_moment_per_n", "theta"], rows,
                 {"method": model.method}, {"goe": [seed, 0]})


def _run_second(cfg):
    P, seed = cfg.params, cfg.master_seed
    m = _model(P)
    sc = kr.SecondMomentConfig(n_samples=P["samples"], seed=seed, r_max=P["r_max"], order=P["order"],
                                u_strata=P["strata"])
    res = kr.second_moment(m, _window(P["u"]), kr.OverlapWindow(P["r_lo"], P["r_hi"]), sc)
    rows = [tuple(float(v) for v in row) for row in res.nodes]
    summary = {"log_value": res.estimate.value, "rel_stderr": res.estimate.stderr,
               "tail_bound": res.tail_bound, "quad_error": res.quad_error}
    return Table(["r", "weight", "log_integrand", "rel_stderr"], rows, summary, {"pairs": [seed, 7]})


def _run_ratio(cfg):
    P, seed = cfg.params, cfg.master_seed
    m = _model(P)
    sc = kr.SecondMomentConfig(n_samples=P["samples"], seed=seed, u_strata=P["strata"])
    rep = kr.moment_ratio(m, P["u"], sc, P["first_samples"])
    row = (P["u"], rep.ratio, rep.ratio_stderr, rep.log_first_moment, rep.log_second_moment)
    return Table(["u", "ratio", "ratio_stderr", "log_first_moment", "log_second_moment"], [row],
                 {"quadrature": rep.quadrature, "error_budget": rep.error_budget, "flags": rep.flags},
                 {"pairs": [seed, 7], "goe": [seed + 1, 0]})


def _run_decompose(cfg):
    P, seed = cfg.params, cfg.master_seed
    m = _model(P)
    sc = kr.SecondMomentConfig(n_samples=P["samples"], seed=seed, u_strata=P["strata"])
    d = kr.overlap_decomposition(m, P["u"], P["C"], P["rho"], sc, P["first_samples"])
    rows = [(b.name, b.lo, b.hi, b.log_value, b.rel_stderr, b.share) for b in d.bands]
    return Table(["band", "lo", "hi", "log_value", "rel_stderr", "share"], rows,
                 {"log_total": d.log_total}, {"pairs": [seed, 7], "goe": [seed + 1, 0]})


def _check_moment(P, min_p=2):
    _check_model(P, min_p)
    _check_samples(P)
    if "strata" in P:
        _need(P["strata"] >= 1, "strata must be >= 1")
    if "r_lo" in P:
        _need(-1 <= P["r_lo"] < P["r_hi"] <= 1, "need -1 <= r_lo < r_hi <= 1")
        _need(0 < P["r_max"] < 1, "r_max must lie in (0, 1)")
    if "C" in P:
        _need(P["C"] > 0 and 0 < P["rho"] < 1, "need C > 0 and 0 < rho < 1")


# landscape, concentrate ----------------------------------------------------

def _run_landscape(cfg):
    P, seed = cfg.params, cfg.master_seed
    m = _model(P)
    cs = ls.census_batch(m, P["trials"], seed, P["method"], threads=cfg.threads)
    w = _window(P["u"])
    if P["detail"] == "points":
        cols = ["trial", "energy", "index", "grad_norm", "min_abs_eig"] + [f"s{i}" for i in range(m.N)]
        rows = [(k, r.energy, r.index, r.grad_norm, r.min_abs_eig, *map(float, r.sigma))
                for k, c in enumerate(cs) for r in c.points]
    else:
        cols = ["trial", "n_points", "count_window", "morse_sum", "complete", "certificate"]
        rows = [(k, len(c.points), ls.count_crt(c, w), c.morse_sum, c.complete, c.certificate)
                for k, c in enumerate(cs)]
    counts = np.array([ls.count_crt(c, w) for c in cs], float)
    summary = {"mean_count": float(counts.mean()), "incomplete": int(sum(not c.complete for c in cs)),
               "euler_characteristic": ls.euler_characteristic(m.N)}
    return Table(cols, rows, summary, {"couplings": [seed, "trial", 0]})


def _run_concentrate(cfg):
    P, seed = cfg.params, cfg.master_seed
    rows = []
    for N in parse_grid(P["N_grid"]):
        m = ModelParams(P["p"], int(N))
        res = ls.empirical_concentration(m, P["u"], P["trials"], seed, P["method"],
                                         n_boot=P["bootstrap"])
        rows.append((int(N), res.mean, res.mean_stderr, res.ratio, res.ratio_ci[0], res.ratio_ci[1],
                     res.n_incomplete))
    ratios = [r[3] for r in rows]
    inversions = sum(b > a for a, b in zip(ratios, ratios[1:]))
    return Table(["N", "mean", "mean_stderr", "ratio", "ratio_ci_lo", "ratio_ci_hi", "incomplete"],
                 rows, {"inversions": inversions}, {"couplings": [seed, "trial", 0]})


def _check_landscape(P):
    _check_model(P)
    _need(P["trials"] >= 1, "trials must be >= 1")
    if "N_grid" in P:
        _need(bool(np.all(parse_grid(P["N_grid"]) >= 2)), "N_grid entries must be >= 2")
        _need(P["trials"] >= 2, "trials must be >= 2")
    else:
        _need(P["method"] != "angle" or P["N"] == 2, "method=angle needs N = 2")


_P = Param
_METHODS = ("auto", "angle", "homotopy", "multistart")
COMMANDS = {
    "theta": Command({"p": _P("int", 3), "u_grid": _P("grid", "-2:1:0.01")},
                     _run_theta, lambda P: _check_model(P), "complexity curve and thresholds"),
    "cov": Command({"p": _P("int", 3), "N": _P("int", 2), "u1": _P("float", 0.0),
                    "u2": _P("float", 0.0), "r_grid": _P("grid", "-0.95:0.95:0.05")},
                   _run_cov, _check_cov, "pair covariance tables over an r grid"),
    "oracle-check": Command({"p": _P("int", 5), "r": _P("float", 0.3), "n": _P("int", 6),
                             "u1": _P("float", 0.0), "u2": _P("float", 0.0),
                             "orientation": _P("str", "rotation", choices=("rotation", "facing")),
                             "tol": _P("float", 1e-6), "fd": _P("bool", False)},
                            _run_oracle, _check_oracle, "brute-force conditional Hessian comparison"),
    "rmt": Command({"mode": _P("str", "det", choices=("det", "ratio", "overcrowding", "perturbation",
                                                      "bnorm", "delta")),
                    "n": _P("int", 2), "k": _P("float", 1.0), "x": _P("float", 0.0),
                    "x_grid": _P("grid", "-2:2:0.5"), "n_grid": _P("grid", "10,20,40"),
                    "t_grid": _P("grid", "1:4:1"), "interval_lo": _P("float", -0.1),
                    "interval_hi": _P("float", 0.1), "samples": _P("int", 100000),
                    "normalization": _P("str", "paper_1overN", choices=rmt.NORMALIZATIONS),
                    "p": _P("int", 32), "N": _P("int", 30), "r": _P("float", 1e-3),
                    "u1": _P("float", -1.0), "u2": _P("float", -1.0),
                    "threshold": _P("float", math.nan),
                    "method": _P("str", "independent", choices=("independent", "coupled"))},
                   _run_rmt, _check_rmt, "random matrix experiments"),
    "first-moment": Command({"p": _P("int", 3), "N": _P("int", 3), "u_grid": _P("grid", "inf"),
                             "method": _P("str", "auto", choices=("auto", "exact", "mc")),
                             "samples": _P("int", 4000)},
                            _run_first, lambda P: _check_moment(P), "first moment of the count"),
    "second-moment": Command({"p": _P("int", 3), "N": _P("int", 3), "u": _P("float", math.inf),
                              "r_lo": _P("float", -1.0), "r_hi": _P("float", 1.0),
                              "r_max": _P("float", 0.999), "order": _P("int", 8),
                              "samples": _P("int", 2000), "strata": _P("int", 8)},
                             _run_second, lambda P: _check_moment(P, 3), "second moment over an overlap window"),
    "ratio": Command({"p": _P("int", 3), "N": _P("int", 3), "u": _P("float", math.inf),
                      "samples": _P("int", 2000), "strata": _P("int", 8), "first_samples": _P("int", 4000)},
                     _run_ratio, lambda P: _check_moment(P, 3), "second-to-squared-first moment ratio"),
    "decompose": Command({"p": _P("int", 3), "N": _P("int", 10), "u": _P("float", math.inf),
                          "C": _P("float", 2.0), "rho": _P("float", 0.5),
                          "samples": _P("int", 2000), "strata": _P("int", 8), "first_samples": _P("int", 4000)},
                         _run_decompose, lambda P: _check_moment(P, 3), "overlap band decomposition"),
    "landscape": Command({"p": _P("int", 3), "N": _P("int", 3), "trials": _P("int", 10),
                          "method": _P("str", "auto", choices=_METHODS), "u": _P("float", math.inf),
                          "detail": _P("str", "counts", choices=("counts", "points"))},
                         _run_landscape, _check_landscape, "critical point census"),
    "concentrate": Command({"p": _P("int", 3), "N_grid": _P("grid", "3:5:1"), "trials": _P("int", 1000),
                            "method": _P("str", "auto", choices=_METHODS), "u": _P("float", math.inf),
                            "bootstrap": _P("int", 2000)},
                           _run_concentrate, _check_landscape, "empirical concentration ratio"),
}


# ---------------------------------------------------------------------------
# entry point


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pspinlab", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, cmd in COMMANDS.items():
        sp = sub.add_parser(name, help=cmd.help)
        sp.add_argument("--config", help="key=value config file")
        sp.add_argument("--seed", dest="master_seed", type=int, help="master seed (default 0)")
        sp.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")
        sp.add_argument("--output", dest="output_path", help="output file (default stdout)")
        sp.add_argument("--format", choices=("csv", "json"))
        for key, spec in cmd.params.items():
            flag = "--" + key.replace("_", "-")
            extra = {"choices": spec.choices} if spec.choices else {}
            sp.add_argument(flag, dest=key, default=None, help=f"{spec.kind}, default {spec.default}",
                            **extra)
    return ap


_NEGATIVE = re.compile(r"^-(\d|\.\d|inf)")


def _join_negative_values(argv: list) -> list:
    # argparse reads "-2:1:0.01" as an option; attach such values to their flag
    out = []
    for tok in argv:
        if out and out[-1].startswith("--") and "=" not in out[-1] and _NEGATIVE.match(tok):
            out[-1] = out[-1] + "=" + tok
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = make_parser().parse_args(_join_negative_values(argv))
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    ns = vars(args)
    command = ns.pop("command")
    path = ns.pop("config")
    try:
        file_values = {}
        if path:
            try:
                with open(path) as fh:
                    file_values = read_config_text(fh.read())
            except OSError as e:
                raise ConfigError(f"cannot read config: {e}") from None
            if file_values.get("command", command) != command:
                raise ConfigError(f"config file is for {file_values['command']!r}, not {command!r}")
        cfg = build_config(command, file_values, ns)
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.threads is not None:
        # modules read the thread count from the environment
        os.environ[THREADS_ENV] = str(cfg.threads)
    try:
        code, _, _ = execute(cfg, sys.stdout)
        return code
    except (ArithmeticError, np.linalg.LinAlgError) as e:
        payload = {"error": type(e).__name__, "message": str(e), "config": cfg.snapshot()}
        payload.update(getattr(e, "payload", {}))
        print(json.dumps(payload, default=_json_default), file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
