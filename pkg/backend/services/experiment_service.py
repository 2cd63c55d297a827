# backend/services/experiment_service.py

"""
The three standard experiments.

verify         soundness sweep: ln|perm| against every applicable theorem bound
               over seeded ensembles (n <= 12, both fields).
concentration  empirical tails of ||AX||_1 and the real-field lemma events
               against their closed-form bounds.
tightness      delta * I probe: ln perm = n ln delta against -n(1 - delta) and
               against each theorem bound.

Every run is reproducible from its serialized ExperimentConfig, which is written
next to the reports.
"""

import json
import logging
import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel, Field as ModelField, ValidationError
from tqdm import tqdm

import config
from errors import NonConvergenceError, ParameterError, PermBoundError
from services.bound_service import (
    CLAMPS, bound_complex_i, bound_complex_ii, bound_real, bound_report, bound_trivial,
    tail_bound_complex, tail_bounds_real,
)
from services.glynn_service import (
    ConcentrationReport, lemma_frequencies, partition_rows, sample_l1,
)
from services.linalg_service import EnsembleKind, Field, gen_ensemble, op_norm, row_stats
from services.permanent_service import perm_exact

log = logging.getLogger(__name__)

# samples below this are recorded but never asserted
MIN_ASSERT_SAMPLES = 10_000


class Command(str, Enum):
    PERM = "perm"
    ESTIMATE = "estimate"
    BOUNDS = "bounds"
    VERIFY = "verify"
    CONCENTRATION = "concentration"
    TIGHTNESS = "tightness"


class TableFormat(str, Enum):
    JSON = "json"
    CSV = "csv"


class EnsembleSpec(BaseModel):
    kind: EnsembleKind
    n: Optional[int] = None
    params: Dict[str, Any] = ModelField(default_factory=dict)
    count: int = 1


class ExperimentConfig(BaseModel):
    command: Command
    input: Optional[str] = None
    ensembles: List[EnsembleSpec] = ModelField(default_factory=list)
    seed: int = 0
    samples: int = 100_000
    n_min: int = 2
    n_max: int = 12
    output: str = config.OUTPUT_DIR
    format: TableFormat = TableFormat.CSV
    workers: int = config.WORKERS
    progress: bool = False
    thresholds: List[float] = ModelField(default_factory=lambda: [0.4, 0.5, 0.6])
    lam: Optional[float] = 0.05
    deltas: List[float] = ModelField(default_factory=lambda: [0.5, 0.9, 0.99])
    n_grid: List[int] = ModelField(default_factory=lambda: [10, 100, 1000])
    tail_slack: float = 0.005
    sign_slack: float = 0.002


class Violation(BaseModel):
    matrix_id: str
    bound: str
    log_perm: float
    log_value: float


class SlackStat(BaseModel):
    kind: str
    field: str
    count: int
    min_slack: Optional[float]
    median_slack: Optional[float]


class VerifyReport(BaseModel):
    matrices_tested: int
    skipped: List[str]
    violations: List[Violation]
    slack_stats: List[SlackStat]
    clamp_count: int
    clamp_max_excess: float

    @property
    def passed(self):
        return not self.violations


class ConcentrationRun(BaseModel):
    reports: Dict[str, ConcentrationReport]
    rows: List[Dict[str, Any]]

    @property
    def failures(self):
        return [r for r in self.rows if r["asserted"] and not r["passed"]]


# ------------------ configs ------------------

_VERIFY_KINDS = [
    (EnsembleKind.EXTREMAL_P, Field.REAL), (EnsembleKind.EXTREMAL_P, Field.COMPLEX),
    (EnsembleKind.HAAR_ORTHOGONAL, Field.REAL), (EnsembleKind.HAAR_UNITARY, Field.COMPLEX),
    (EnsembleKind.SCALED_IDENTITY, Field.REAL), (EnsembleKind.SCALED_IDENTITY, Field.COMPLEX),
    (EnsembleKind.CIRCULANT, Field.REAL), (EnsembleKind.CIRCULANT, Field.COMPLEX),
    (EnsembleKind.PERTURBED_PERMUTATION, Field.REAL), (EnsembleKind.PERTURBED_PERMUTATION, Field.COMPLEX),
    (EnsembleKind.ROW_NORMALIZED_RANDOM, Field.REAL), (EnsembleKind.ROW_NORMALIZED_RANDOM, Field.COMPLEX),
]


def default_config(command) -> ExperimentConfig:
    command = Command(command)
    cfg = ExperimentConfig(command=command)
    if command is Command.VERIFY:
        cfg.ensembles = [EnsembleSpec(kind=k, params={"field": f.value}, count=84)
                         for k, f in _VERIFY_KINDS]
    elif command is Command.CONCENTRATION:
        cfg.ensembles = [
            EnsembleSpec(kind=EnsembleKind.SCALED_IDENTITY, n=50, params={"field": "real"}),
            EnsembleSpec(kind=EnsembleKind.SCALED_IDENTITY, n=50, params={"field": "complex"}),
            EnsembleSpec(kind=EnsembleKind.HAAR_UNITARY, n=200, params={"normalize": True}),
            EnsembleSpec(kind=EnsembleKind.PERTURBED_PERMUTATION, n=20,
                         params={"field": "real", "weight": 0.02, "permute": False, "normalize": True}),
        ]
        cfg.lam = 0.06
    return cfg


def load_config(path, command) -> ExperimentConfig:
    base = default_config(command).model_dump(mode="json")
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ParameterError(f"cannot load config {path}: {e}")
        if not isinstance(data, dict):
            raise ParameterError(f"config {path} must hold a JSON object")
        base.update(data)
        base["command"] = Command(command).value
    try:
        return ExperimentConfig.model_validate(base)
    except ValidationError as e:
        raise ParameterError(f"invalid config {path}: {e}")


def _write_table(df, out_dir, name, fmt):
    path = out_dir / f"{name}.{TableFormat(fmt).value}"
    if TableFormat(fmt) is TableFormat.CSV:
        df.to_csv(path, index=False)
    else:
        path.write_text(df.to_json(orient="records", indent=2) + "\n")
    log.info("wrote %s", path)
    return path


def _write_json(text, out_dir, name):
    path = out_dir / name
    path.write_text(text + "\n")
    log.info("wrote %s", path)
    return path


def _prepare_output(cfg):
    out_dir = Path(cfg.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(cfg.model_dump_json(indent=2), out_dir, f"{cfg.command.value}_config.json")
    return out_dir


# ------------------ verify ------------------

_WEIGHTS = [0.05, 0.2, 0.5]


def _verify_jobs(cfg):
    jobs = []
    span = cfg.n_max - cfg.n_min + 1
    i = 0
    for spec in cfg.ensembles:
        for j in range(spec.count):
            params = dict(spec.params)
            if spec.kind is EnsembleKind.SCALED_IDENTITY:
                params.setdefault("delta", cfg.deltas[j % len(cfg.deltas)])
            if spec.kind is EnsembleKind.PERTURBED_PERMUTATION:
                params.setdefault("weight", _WEIGHTS[j % len(_WEIGHTS)])
            if spec.kind in (EnsembleKind.CIRCULANT, EnsembleKind.PERTURBED_PERMUTATION,
                             EnsembleKind.ROW_NORMALIZED_RANDOM):
                params.setdefault("normalize", j % 2 == 0)
            n = spec.n or cfg.n_min + j % span
            field = params.get("field", "default")
            jobs.append({
                "matrix_id": f"{spec.kind.value}/{field}/{j}",
                "kind": spec.kind.value, "field": field,
                "n": n, "params": params, "seed": cfg.seed + i,
            })
            i += 1
    return jobs


def _verify_one(job):
    row = {k: job[k] for k in ("matrix_id", "kind", "field", "n", "seed")}
    try:
        A = gen_ensemble(job["kind"], job["n"], job["params"], job["seed"])
        report = bound_report(A, exact_cap=max(job["n"], 1))
    except NonConvergenceError as e:
        log.warning("skipping %s: %s", job["matrix_id"], e)
        row["skipped"] = True
        return row, []

    row.update(skipped=False, field=report.field, log_perm=report.log_perm_exact,
               best=report.best, slack=report.slack)
    violations = []
    for b in report.bounds:
        row[f"log_{b.name}"] = b.log_value
        if b.applicable and report.log_perm_exact is not None and \
                report.log_perm_exact > b.log_value + 1e-7 * report.n:
            violations.append(Violation(matrix_id=job["matrix_id"], bound=b.name,
                                        log_perm=report.log_perm_exact, log_value=b.log_value))
    return row, violations


def run_verify(cfg: ExperimentConfig, write: bool = True):
    """Returns (VerifyReport, per-matrix DataFrame)."""
    if cfg.n_max > config.RYSER_MAX_N or cfg.n_min < 1 or cfg.n_min > cfg.n_max:
        raise ParameterError(f"bad n range [{cfg.n_min}, {cfg.n_max}]")
    jobs = _verify_jobs(cfg)
    log.info("verify: %d matrices, n in [%d, %d]", len(jobs), cfg.n_min, cfg.n_max)
    CLAMPS.reset()

    results = Parallel(n_jobs=cfg.workers)(
        delayed(_verify_one)(job)
        for job in tqdm(jobs, desc="verify", disable=not cfg.progress)
    )
    rows = [r for r, _ in results]
    violations = [v for _, vs in results for v in vs]
    df = pd.DataFrame(rows)

    tested = df[~df["skipped"]]
    stats = []
    for (kind, field), group in tested.groupby(["kind", "field"], sort=True):
        slack = group["slack"].dropna()
        stats.append(SlackStat(
            kind=kind, field=field, count=len(group),
            min_slack=float(slack.min()) if len(slack) else None,
            median_slack=float(slack.median()) if len(slack) else None,
        ))

    report = VerifyReport(
        matrices_tested=len(tested),
        skipped=df.loc[df["skipped"], "matrix_id"].tolist(),
        violations=violations,
        slack_stats=stats,
        clamp_count=CLAMPS.count,
        clamp_max_excess=CLAMPS.max_excess,
    )
    if violations:
        log.warning("verify: %d violations", len(violations))
    log.info("verify: %d tested, %d skipped, %d violations",
             report.matrices_tested, len(report.skipped), len(violations))

    if write:
        out_dir = _prepare_output(cfg)
        _write_json(report.model_dump_json(indent=2), out_dir, "verify_report.json")
        _write_table(df, out_dir, "verify_matrices", cfg.format)
    return report, df


# ------------------ concentration ------------------

def _row(matrix_id, field, n, statistic, t, empirical, bound, slack, asserted):
    passed = True
    if asserted:
        passed = bool(empirical <= bound + slack)
    return {"matrix_id": matrix_id, "field": field, "n": n, "statistic": statistic,
            "t": t, "empirical": empirical, "bound": bound, "asserted": bool(asserted),
            "passed": passed}


def _pick_lambda(n, t, fallback):
    if t > 0:
        lam = 64 / math.sqrt(n * t)
        if lam < 0.1:
            return lam
    return fallback


def _concentration_one(cfg, spec, index):
    seed = cfg.seed + index
    A = gen_ensemble(spec.kind, spec.n or cfg.n_max, spec.params, seed)
    n = A.n
    matrix_id = f"{spec.kind.value}/{A.field.value}/{index}"
    enough = cfg.samples >= MIN_ASSERT_SAMPLES
    normalized = op_norm(A).op_norm <= 1 + 1e-8
    rows = []

    part = None
    lam = None
    t_param = 1.0 - row_stats(A).hinf
    if A.is_real and normalized:
        lam = _pick_lambda(n, t_param, cfg.lam)
        if lam is not None:
            try:
                part = partition_rows(A, lam)
            except PermBoundError as e:
                log.warning("%s: no partition at lambda=%.4g (%s)", matrix_id, lam, e)

    report = sample_l1(A, cfg.samples, seed, cfg.thresholds, partition=part, workers=cfg.workers)

    for t in cfg.thresholds:
        empirical = report.tail_freqs[float(t)]
        if A.is_real:
            # the exp(-nt^2/pi^3) tail is proved for unit-circle X; recorded, not asserted
            rows.append(_row(matrix_id, "real", n, "l1_tail", t, empirical, None, 0.0, False))
            continue
        bound = tail_bound_complex(n, t)
        rows.append(_row(matrix_id, "complex", n, "l1_tail", t, empirical, bound,
                         cfg.tail_slack, enough and normalized and bound < 1))

    if part is not None:
        sign_bound = n * math.exp(-1 / (5 * lam))
        rows.append(_row(matrix_id, "real", n, "sign_disagreement", t_param,
                         report.sign_disagreement_freq, sign_bound, cfg.sign_slack,
                         enough and sign_bound < 1))
        if t_param > 0:
            eps = t_param / 10
            tails = tail_bounds_real(n, t_param, eps, lam)
            freqs = lemma_frequencies(part, eps, cfg.samples, seed, workers=cfg.workers)
            rows.append(_row(matrix_id, "real", n, "lx_deviation", t_param, freqs.lx_deviation,
                             tails.lx_deviation, cfg.sign_slack,
                             enough and tails.cond_i and tails.cond_ii and tails.lx_deviation < 1))
            rows.append(_row(matrix_id, "real", n, "quadratic_form", t_param, freqs.quadratic_form,
                             tails.quadratic_form, cfg.sign_slack,
                             enough and tails.cond_iii and tails.quadratic_form < 1))
    return matrix_id, report, rows


def run_concentration(cfg: ExperimentConfig, write: bool = True) -> ConcentrationRun:
    if cfg.samples < 1:
        raise ParameterError(f"samples must be >= 1, got {cfg.samples}")
    if cfg.samples < MIN_ASSERT_SAMPLES:
        log.warning("concentration: %d samples is below %d, nothing is asserted",
                    cfg.samples, MIN_ASSERT_SAMPLES)
    reports = {}
    rows = []
    index = 0
    for spec in cfg.ensembles:
        for _ in range(spec.count):
            matrix_id, report, matrix_rows = _concentration_one(cfg, spec, index)
            reports[matrix_id] = report
            rows.extend(matrix_rows)
            index += 1
    run = ConcentrationRun(reports=reports, rows=rows)
    for r in run.failures:
        log.warning("concentration: %s %s at t=%s: %.5g > %.5g", r["matrix_id"], r["statistic"],
                    r["t"], r["empirical"], r["bound"])

    if write:
        out_dir = _prepare_output(cfg)
        _write_json(json.dumps({k: v.model_dump(mode="json") for k, v in reports.items()}, indent=2),
                    out_dir, "concentration_reports.json")
        _write_table(pd.DataFrame(rows), out_dir, "concentration", cfg.format)
    return run


# ------------------ tightness ------------------

def run_tightness(cfg: ExperimentConfig, write: bool = True) -> pd.DataFrame:
    """
    One row per (n, delta). Bounds are taken at T = 1, the normalization under which
    the conjectured decay exp(-n(1 - hinf)) is stated. Only the Taylor envelope
    n ln delta in [-n(1-delta)(2-delta), -n(1-delta)] is asserted, for delta >= 0.5.
    """
    if not cfg.deltas or any(not 0 < d <= 1 for d in cfg.deltas):
        raise ParameterError(f"deltas must lie in (0, 1], got {cfg.deltas}")
    if not cfg.n_grid or any(n < 1 for n in cfg.n_grid):
        raise ParameterError(f"n grid must hold positive sizes, got {cfg.n_grid}")

    rows = []
    for n in sorted(cfg.n_grid):
        for delta in sorted(cfg.deltas):
            A = gen_ensemble(EnsembleKind.SCALED_IDENTITY, n, {"delta": delta}, cfg.seed)
            stats = row_stats(A)
            ln_perm = perm_exact(A).log_abs
            linear = -n * (1 - delta)
            lower = linear * (1 + (1 - delta))
            row = {
                "n": n, "delta": delta, "ln_perm": ln_perm, "conjectured": linear,
                "envelope_lower": lower, "envelope_upper": linear,
                "asserted": delta >= 0.5,
                "envelope_ok": bool(lower - 1e-12 * n <= ln_perm <= linear + 1e-12 * n),
            }
            for b in (bound_trivial(n, 1.0),
                      bound_complex_i(n, 1.0, stats.h2, stats.hinf),
                      bound_complex_ii(n, 1.0, stats.hinf),
                      bound_real(n, 1.0, stats.hinf)):
                row[f"log_{b.name}"] = b.log_value
                row[f"gap_{b.name}"] = b.log_value - ln_perm
            rows.append(row)
    df = pd.DataFrame(rows)
    bad = df[df["asserted"] & ~df["envelope_ok"]]
    if len(bad):
        log.warning("tightness: envelope fails at %s", bad[["n", "delta"]].values.tolist())
    if write:
        out_dir = _prepare_output(cfg)
        _write_table(df, out_dir, "tightness", cfg.format)
    return df
