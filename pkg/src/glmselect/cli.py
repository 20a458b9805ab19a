"""Command-line front end: data ingestion, configuration, report emission.

Commands: select, greedy, eigen, penalty-table, packing, risk-sim, rate-curve.
Each takes a JSON config file; reports embed the resolved config so a run can
be reproduced byte-for-byte.  Exit codes: 0 success, 2 configuration/input
error, 3 numerical/convergence failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .design import DesignMatrix, read_csv_matrix, sparse_spectrum
from .families import DegenerateFamilyError, FeasibilityError, NaturalFamily, curvature_bounds, make_family
from .fitter import ModelSpec
from .penalties import PenaltyRule, implied_weights, weights_certificate
from .selector import (
    EnumerationBudgetError,
    ModelFamily,
    SelectionFailedError,
    greedy_select,
    select_model,
)
from . import risk_lab

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

NUMERICAL_ERRORS = (
    SelectionFailedError,
    risk_lab.ReplicateFailureError,
    risk_lab.DegenerateParametersError,
    DegenerateFamilyError,
    FeasibilityError,
    np.linalg.LinAlgError,
)


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


def fmt17(x) -> str:
    """Serialize a number with 17 significant digits (round-trippable)."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")  # RFC 4180 line endings
        writer.writerow(header)
        for row in rows:
            writer.writerow([c if isinstance(c, str) else fmt17(c) for c in row])


def write_json(path: Path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------

def _require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"missing config key {key!r}")
    return cfg[key]


def parse_family(cfg) -> NaturalFamily:
    if not isinstance(cfg, dict) or "name" not in cfg:
        raise ConfigError("family config must be an object with a 'name'")
    name = cfg["name"]
    try:
        if name == "gaussian":
            return make_family("gaussian", sigma2=cfg.get("sigma2", 1.0))
        if name == "bernoulli":
            return make_family("bernoulli", c0=_require(cfg, "c0"))
        if name == "poisson":
            return make_family("poisson", theta=tuple(_require(cfg, "theta")))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    raise ConfigError(f"unknown family {name!r}")


def family_doc(fam: NaturalFamily) -> dict:
    doc = {"name": fam.name, "a": fam.a, "theta_lo": fam.theta_lo, "theta_hi": fam.theta_hi}
    return {k: (str(v) if isinstance(v, float) and not math.isfinite(v) else v)
            for k, v in doc.items()}


def parse_penalty(cfg, fam: NaturalFamily) -> tuple[str, PenaltyRule]:
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise ConfigError("penalty config must be an object with a 'kind'")
    kind = cfg["kind"].upper()
    ratio = cfg.get("curvature_ratio", "auto")
    if ratio == "auto":
        ratio = curvature_bounds(fam).ratio
    name = cfg.get("name", kind)
    try:
        if kind == "AIC":
            rule = PenaltyRule.aic()
        elif kind == "BIC":
            rule = PenaltyRule.bic()
        elif kind == "EBIC":
            rule = PenaltyRule.ebic(gamma=cfg.get("gamma", 0.5))
        elif kind == "RIC":
            rule = PenaltyRule.ric(C=cfg.get("C", 17.0), curvature_ratio=ratio,
                                   practical=cfg.get("practical", False))
        elif kind == "KLOGPK":
            rule = PenaltyRule.klogpk(C=cfg.get("C", 17.0), curvature_ratio=ratio,
                                      practical=cfg.get("practical", False))
        elif kind == "STRUCTURAL":
            m_table = cfg.get("m_table")
            rule = PenaltyRule.structural(C=cfg.get("C", 17.0), curvature_ratio=ratio,
                                          m_table=tuple(m_table) if m_table else None,
                                          practical=cfg.get("practical", False))
        elif kind == "CUSTOM":
            rule = PenaltyRule.custom(L=_require(cfg, "L"), A=_require(cfg, "A"),
                                      curvature_ratio=ratio,
                                      multiplier=cfg.get("multiplier", 1.0))
        elif kind == "NONE":
            rule = PenaltyRule.none()
        else:
            raise ConfigError(f"unknown penalty kind {kind!r}")
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return name, rule


def penalty_doc(name: str, rule: PenaltyRule) -> dict:
    doc = {"name": name, "kind": rule.kind, "curvature_ratio": rule.curvature_ratio}
    if rule.kind in ("RIC", "KLOGPK", "STRUCTURAL"):
        doc["C"] = rule.C
        doc["practical"] = rule.practical
    if rule.kind == "EBIC":
        doc["gamma"] = rule.gamma
    if rule.kind == "CUSTOM":
        doc.update({"L": list(rule.L), "A": rule.A, "multiplier": rule.multiplier})
    return doc


def parse_constraint(cfg, p: int, r: int) -> ModelFamily:
    cfg = cfg or {"kind": "complete"}
    kind = cfg.get("kind", "complete")
    max_size = int(cfg.get("max_size", min(p, r)))
    try:
        if kind == "complete":
            return ModelFamily.complete(p, max_size)
        if kind == "ordered":
            return ModelFamily.ordered(p, max_size)
        if kind == "grouped":
            groups = [[int(i) - 1 for i in g] for g in _require(cfg, "groups")]
            return ModelFamily.grouped(groups, max_size)
        if kind == "hierarchical":
            parents = [None if v is None else int(v) - 1 for v in _require(cfg, "parents")]
            return ModelFamily.hierarchical(parents, max_size)
        if kind == "custom":
            models = [[int(i) - 1 for i in m] for m in _require(cfg, "models")]
            return ModelFamily.custom(models, p, max_size)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    raise ConfigError(f"unknown constraint kind {kind!r}")


def load_design_response(cfg) -> tuple[DesignMatrix, np.ndarray]:
    """Design and response from one CSV (named/indexed response column) or two files."""
    path = _require(cfg, "design_csv")
    has_header = bool(cfg.get("has_header", False))
    try:
        data, header = read_csv_matrix(path, has_header=has_header)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read design: {exc}") from None
    col = cfg.get("response_column")
    if col is not None:
        if isinstance(col, str):
            if header is None or col not in header:
                raise ConfigError(f"response column {col!r} not found in header")
            j = header.index(col)
        else:
            j = int(col) - 1  # 1-based in configs, matching report indexing
            if not 0 <= j < data.shape[1]:
                raise ConfigError(f"response column {col} out of range")
        Y = data[:, j]
        X = np.delete(data, j, axis=1)
    elif "response_csv" in cfg:
        try:
            resp, _ = read_csv_matrix(cfg["response_csv"], has_header=has_header)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read response: {exc}") from None
        if resp.shape[1] != 1:
            raise ConfigError("response CSV must have exactly one column")
        Y = resp[:, 0]
        X = data
    else:
        raise ConfigError("config needs 'response_csv' or 'response_column'")
    if Y.shape[0] != X.shape[0]:
        raise ConfigError("design and response lengths differ")
    try:
        return DesignMatrix.from_array(X), Y
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_design_spec(cfg) -> DesignMatrix:
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise ConfigError("design config must be an object with a 'kind'")
    kind = cfg["kind"]
    try:
        if kind == "csv":
            return DesignMatrix.from_csv(_require(cfg, "path"),
                                         has_header=bool(cfg.get("has_header", False)))
        return risk_lab.generate_design(
            kind, n=int(_require(cfg, "n")), p=cfg.get("p"),
            seed=int(cfg.get("seed", 0)),
            column_scale=cfg.get("column_scale", "sqrt_n"),
        )
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def run_select(config: dict, out: Path, threads: int, greedy: bool) -> None:
    fam = parse_family(_require(config, "family"))
    X, Y = load_design_response(config)
    models = parse_constraint(config.get("constraint"), X.p, X.r)
    pen_name, rule = parse_penalty(_require(config, "penalty"), fam)
    select = greedy_select if greedy else select_model
    kwargs = {"keep_trace": bool(config.get("trace", False)), "n_threads": threads}
    if not greedy:
        kwargs["guard"] = int(config.get("guard", 10_000_000))
    try:
        result = select(fam, X, Y, models, rule, **kwargs)
    except EnumerationBudgetError as exc:
        raise ConfigError(str(exc)) from None
    report = {
        "command": "greedy" if greedy else "select",
        "model_indices": [i + 1 for i in result.model.indices],
        "beta": result.fit.beta.tolist(),
        "objective": result.objective,
        "loglik": result.fit.loglik,
        "models_evaluated": result.models_evaluated,
        "fit_failures": result.fit_failures,
        "penalty": penalty_doc(pen_name, rule),
        "family": family_doc(fam),
        "design": {"n": X.n, "p": X.p, "r": X.r},
        "config": config,
    }
    if result.trace is not None:
        report["trace"] = [{"model": [i + 1 for i in m], "objective": o} for m, o in result.trace]
    write_json(out, report)


def _resolve_rules(config: dict, fam: NaturalFamily):
    rules_cfg = config.get("rules")
    if rules_cfg is None:
        rules_cfg = [_require(config, "penalty")]
    parsed = [parse_penalty(c, fam) for c in rules_cfg]
    names = [n for n, _ in parsed]
    if len(set(names)) != len(names):
        raise ConfigError("rule names must be unique")
    return tuple(parsed)


def _report_rows(report: risk_lab.RiskReport):
    return [
        (row.rule, row.p0, row.mean_kl, row.stderr, row.mean_model_size,
         row.rate_ratio, row.replicates, row.failures)
        for row in report.rows
    ]


RISK_HEADER = ["rule", "p0", "mean_kl", "stderr", "mean_model_size",
               "rate_ratio", "replicates", "failures"]


def run_risk_sim(config: dict, out: Path, threads: int, rate: bool) -> None:
    fam = parse_family(_require(config, "family"))
    X = parse_design_spec(_require(config, "design"))
    models = parse_constraint(config.get("constraint"), X.p, X.r)
    rules = _resolve_rules(config, fam)
    replicates = int(_require(config, "replicates"))
    seed = int(_require(config, "seed"))
    search = config.get("search", "exhaustive")
    guard = int(config.get("guard", 10_000_000))
    try:
        if rate:
            report = risk_lab.rate_curve(
                fam, X, models, rules,
                p0_grid=[int(v) for v in _require(config, "p0_grid")],
                amplitude=float(_require(config, "amplitude")),
                replicates=replicates, seed=seed, search=search,
                guard=guard, n_threads=threads,
            )
        else:
            spec = risk_lab.ExperimentSpec(
                family=fam, design=X,
                beta_true=np.asarray(_require(config, "beta_true"), dtype=float),
                models=models, rules=rules, replicates=replicates, seed=seed,
                search=search, guard=guard, n_threads=threads,
            )
            report = risk_lab.mc_kl_risk(spec)
    except (EnumerationBudgetError, ValueError) as exc:
        if isinstance(exc, NUMERICAL_ERRORS):
            raise
        raise ConfigError(str(exc)) from None
    base = out.with_suffix("") if out.suffix in (".csv", ".json") else out
    write_csv(base.with_suffix(".csv"), RISK_HEADER, _report_rows(report))
    write_json(base.with_suffix(".json"), {
        "command": "rate-curve" if rate else "risk-sim",
        "rows": [dict(zip(RISK_HEADER, row)) for row in _report_rows(report)],
        "family": family_doc(fam),
        "design": {"n": X.n, "p": X.p, "r": X.r},
        "config": config,
    })


def run_eigen(config: dict, out: Path) -> None:
    if "design" in config:
        X = parse_design_spec(config["design"])
    else:
        try:
            X = DesignMatrix.from_csv(_require(config, "design_csv"),
                                      has_header=bool(config.get("has_header", False)))
        except (OSError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
    ks = [int(k) for k in config.get("k_values", range(1, X.r + 1))]
    budget = int(config.get("budget", 1_000_000))
    seed = int(config.get("seed", 0))
    rows = []
    for k in ks:
        try:
            spec = sparse_spectrum(X, k, budget=budget, seed=seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        rows.append((spec.k, spec.phi_min, spec.phi_max, spec.tau,
                     "true" if spec.exhaustive else "false"))
    write_csv(out, ["k", "phi_min", "phi_max", "tau", "exhaustive"], rows)


def run_penalty_table(config: dict, out: Path) -> None:
    fam = parse_family(_require(config, "family"))
    rules = _resolve_rules(config, fam)
    p = int(_require(config, "p"))
    r = int(_require(config, "r"))
    n = int(config.get("n", p))
    m_table = config.get("m_table")
    m_table = tuple(int(v) for v in m_table) if m_table else None
    from .penalties import pen_value

    rows = []
    for name, rule in rules:
        for k in range(1, r + 1):
            m = m_table[k - 1] if (m_table and k <= len(m_table)) else None
            try:
                pen = pen_value(rule, k, p=p, r=r, n=n, m=m)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            rows.append((name, k, pen))
    base = out.with_suffix("") if out.suffix in (".csv", ".json") else out
    write_csv(base.with_suffix(".csv"), ["rule", "k", "pen"], rows)

    certs = []
    weights_cfg = config.get("weights")
    for name, rule in rules:
        L = A = None
        if weights_cfg is not None:
            A = float(_require(weights_cfg, "A"))
            raw = _require(weights_cfg, "L")
            if raw == "ln_p":
                L = [math.log(p)] * r
            elif isinstance(raw, (int, float)):
                L = [float(raw)] * r
            else:
                L = [float(v) for v in raw]
        elif rule.kind == "CUSTOM":
            L, A = list(rule.L), rule.A
        elif rule.kind in ("RIC", "KLOGPK") and not rule.practical:
            L, A = implied_weights(rule, p, r)
        if L is None:
            continue
        try:
            cert = weights_certificate(L, A, rule, p=p, r=r, n=n, m_table=m_table)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        certs.append({"rule": name, "S": cert.S, "penalty_ok": cert.penalty_ok, "A": cert.A})
    write_json(base.with_suffix(".json"), {
        "command": "penalty-table",
        "certificates": certs,
        "config": config,
    })


def run_packing(config: dict, out: Path) -> None:
    fam = parse_family(_require(config, "family"))
    case = _require(config, "case")
    p0 = int(_require(config, "p0"))
    phi_max = float(_require(config, "phi_max"))
    p = config.get("p")
    p = int(p) if p is not None else None
    try:
        if case == "vg":
            ps = risk_lab.vg_packing(p0, fam, phi_max, p=p)
        elif case == "sparse":
            ps = risk_lab.sparse_packing(
                p0, int(_require(config, "p")), fam, phi_max,
                ctilde=float(config.get("ctilde", 1.0)),
                attempts=int(config.get("attempts", 8)),
                seed=int(config.get("seed", 0)),
            )
        elif case == "two-point":
            ps = risk_lab.two_point_packing(p0, fam, phi_max, p=p)
        else:
            raise ConfigError(f"unknown packing case {case!r}")
    except ValueError as exc:
        if isinstance(exc, NUMERICAL_ERRORS):
            raise
        raise ConfigError(str(exc)) from None
    base = out.with_suffix("") if out.suffix in (".csv", ".json") else out
    write_csv(base.with_suffix(".csv"),
              [f"b{j + 1}" for j in range(ps.vectors.shape[1])],
              [tuple(row) for row in ps.vectors])
    cert = {
        "command": "packing",
        "case": ps.case,
        "cardinality": ps.cardinality,
        "min_hamming": ps.min_hamming,
        "target_distance": ps.target_distance,
        "amplitude": ps.amplitude,
        "achieved_ctilde": ps.achieved_ctilde,
        "log_card_exponent": ps.log_card_exponent,
        "config": config,
    }
    write_json(base.with_suffix(".json"), cert)


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

COMMANDS = ("select", "greedy", "eigen", "penalty-table", "packing", "risk-sim", "rate-curve")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glmselect",
                                     description="Penalized model selection for GLMs")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in COMMANDS:
        sp = sub.add_parser(cmd)
        sp.add_argument("--config", required=True)
        sp.add_argument("--out", default=None)
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--format", choices=("json", "csv"), default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("GLMSELECT_THREADS", "1"))
    try:
        with open(args.config) as fh:
            config = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"glmselect: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or config.get("out")
    if out is None:
        print("glmselect: no output path (--out or config 'out')", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(out)
    try:
        if args.command in ("select", "greedy"):
            run_select(config, out, threads, greedy=args.command == "greedy")
        elif args.command == "eigen":
            run_eigen(config, out)
        elif args.command == "penalty-table":
            run_penalty_table(config, out)
        elif args.command == "packing":
            run_packing(config, out)
        else:
            run_risk_sim(config, out, threads, rate=args.command == "rate-curve")
    except ConfigError as exc:
        print(f"glmselect: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        print(f"glmselect: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def entry_point() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry_point()
