# backend/services/bound_service.py

"""
Upper bounds on |perm(A)|, every one carried as a natural logarithm (T^n overflows
a double once n ln T > 709).

    trivial      n ln T                                         any field
    complex_i    ln 2 + n ln T - 3n s^2 / 100,
                 s = 1 - Lc h2/T - (1 - Lc) hinf/T             any field
    complex_ii   ln 2 + n ln T - n (1 - hinf/T)^2 / 1e5         any field
    real         n ln T + ln(n + 6) - sqrt(n t) / 400,
                 t = 1 - hinf/T                                 real only

Lr = sqrt(2/pi) and Lc = sqrt(pi)/2 are the Rademacher / Steinhaus constants
bounding E|sum a_i X_i| by L ||a||_2 + (1 - L) ||a||_inf.
"""

import logging
import math
import threading
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field as ModelField
from scipy.special import logsumexp

import config
from errors import ParameterError
from services.linalg_service import Field, Matrix, RowStats, op_norm, row_stats
from services.permanent_service import perm_exact, perm_structured

log = logging.getLogger(__name__)

LAMBDA_R = math.sqrt(2 / math.pi)
LAMBDA_C = math.sqrt(math.pi) / 2
PI_CUBED = math.pi ** 3
LN2 = math.log(2)

# relative slack on hinf, h2 <= T
NORM_SLACK = 1e-8


class LogBound(BaseModel):
    name: str
    log_value: float
    applicable: bool = True
    conditions: Dict[str, bool] = ModelField(default_factory=dict)
    params: Dict[str, float] = ModelField(default_factory=dict)


class BoundReport(BaseModel):
    n: int
    field: str
    op_norm: float
    T: float
    h2: float
    hinf: float
    bounds: List[LogBound]
    best: Optional[str] = None
    perm_is_zero: bool = False
    log_perm_exact: Optional[float] = None
    slack: Optional[float] = None

    def bound(self, name):
        return next(b for b in self.bounds if b.name == name)


class RealTailBounds(BaseModel):
    lx_deviation: float
    sign_disagreement: float
    quadratic_form: float
    cond_i: bool
    cond_ii: bool
    cond_iii: bool


class ClampMonitor:
    """Counts how often a bound expression had to be clamped, and by how much."""

    def __init__(self):
        self._lock = threading.Lock()
        self.reset()

    def reset(self):
        with self._lock:
            self.count = 0
            self.max_excess = 0.0

    def clamp(self, value, lo, hi, what):
        if lo <= value <= hi:
            return value
        excess = lo - value if value < lo else value - hi
        with self._lock:
            self.count += 1
            self.max_excess = max(self.max_excess, excess)
        if excess > 1e-12:
            log.warning("%s clamped by %.3e", what, excess)
        return min(max(value, lo), hi)


CLAMPS = ClampMonitor()


def _require(ok, message):
    if not ok:
        raise ParameterError(message)


def _check_T(T):
    _require(T > 0 and math.isfinite(T), f"T must be positive and finite, got {T}")


def _check_h(h, T, name):
    _require(0 <= h <= T * (1 + NORM_SLACK), f"{name} must lie in [0, T], got {h} with T = {T}")


# ------------------ theorem bounds ------------------

def bound_trivial(n: int, T: float) -> LogBound:
    _check_T(T)
    return LogBound(name="trivial", log_value=n * math.log(T), params={"n": n, "T": T})


def bound_complex_i(n: int, T: float, h2: float, hinf: float) -> LogBound:
    _check_T(T)
    _check_h(h2, T, "h2")
    _check_h(hinf, T, "hinf")
    _require(hinf <= h2 * (1 + NORM_SLACK), f"hinf = {hinf} exceeds h2 = {h2}")
    s = 1 - LAMBDA_C * h2 / T - (1 - LAMBDA_C) * hinf / T
    s = CLAMPS.clamp(s, 0.0, 1.0, "complex_i exponent")
    return LogBound(
        name="complex_i",
        log_value=LN2 + n * math.log(T) - 3 * n * s * s / 100,
        params={"n": n, "T": T, "h2": h2, "hinf": hinf, "s": s},
    )


def bound_complex_ii(n: int, T: float, hinf: float) -> LogBound:
    _check_T(T)
    _check_h(hinf, T, "hinf")
    u = CLAMPS.clamp(1 - hinf / T, 0.0, 1.0, "complex_ii exponent")
    return LogBound(
        name="complex_ii",
        log_value=LN2 + n * math.log(T) - n * u * u / 1e5,
        params={"n": n, "T": T, "hinf": hinf, "t": u},
    )


def bound_real(n: int, T: float, hinf: float, real: bool = True) -> LogBound:
    _check_T(T)
    _check_h(hinf, T, "hinf")
    t = CLAMPS.clamp(1 - hinf / T, 0.0, 1.0, "real exponent")
    return LogBound(
        name="real",
        log_value=n * math.log(T) + math.log(n + 6) - math.sqrt(n * t) / 400,
        applicable=real,
        conditions={"real_field": real},
        params={"n": n, "T": T, "hinf": hinf, "t": t},
    )


# ------------------ mean and moment ------------------

def mean_upper(stats: RowStats, field) -> float:
    """Upper bound on E[||AX||_1 / n]: L h2 + (1 - L) hinf, L picked by field."""
    lam = LAMBDA_R if Field(field) is Field.REAL else LAMBDA_C
    return lam * stats.h2 + (1 - lam) * stats.hinf


def moment_bound(n: int, mu: float) -> LogBound:
    """log of 2 exp[-3n(1 - mu)^2 / 100], bounding E[(||AX||_1/n)^n] when ||A||_2 <= 1."""
    _require(0 <= mu <= 1, f"mu must lie in [0, 1], got {mu}")
    return LogBound(name="moment", log_value=LN2 - 3 * n * (1 - mu) ** 2 / 100,
                    params={"n": n, "mu": mu})


# ------------------ tail formulas ------------------

def tail_bound_complex(n: int, t: float) -> float:
    """P(||AX||_1 > E||AX||_1 + tn) <= exp(-n t^2 / pi^3) for ||A||_2 <= 1."""
    _require(t >= 0 and n >= 1, f"need t >= 0 and n >= 1, got t = {t}, n = {n}")
    return math.exp(-n * t * t / PI_CUBED)


def tail_bounds_real(n: int, t: float, eps: float, lam: float) -> RealTailBounds:
    _require(n >= 1 and t > 0 and eps > 0 and lam > 0,
             f"n, t, epsilon and lambda must be positive, got {n}, {t}, {eps}, {lam}")
    root = math.sqrt(n * t)
    return RealTailBounds(
        lx_deviation=4 * math.exp(-eps * eps * n * lam / (32 * t)),
        sign_disagreement=n * math.exp(-1 / (5 * lam)),
        quadratic_form=math.exp(-eps * n / (2 * math.e * root)),
        cond_i=eps * n >= 16 * math.sqrt(n * t * math.log(n) / lam),
        cond_ii=lam < 0.1,
        cond_iii=eps * n >= 4 * math.e * root,
    )


def lx_tail_small_rows(n: int, l: int, eps: float):
    """
    (4 exp[-eps^2 n^2 / (32 l)], valid) for P(||LX||_1 >= mu~_L + eps n),
    valid when eps n >= 16 sqrt(l log n).
    """
    _require(n >= 1 and l >= 0 and eps > 0, f"bad arguments n = {n}, l = {l}, epsilon = {eps}")
    if l == 0:
        return 0.0, True
    return 4 * math.exp(-eps * eps * n * n / (32 * l)), eps * n >= 16 * math.sqrt(l * math.log(n))


def mu_tilde(part):
    """
    (mu~_B, mu~_L): sums over big / small rows of 1 - (1 - Lr)(1 - ||r_i||_inf).
    Their sum divided by n equals 1 - (1 - Lr) t.
    """
    def total(block):
        if block.shape[0] == 0:
            return 0.0
        linf = np.abs(block).max(axis=1)
        return float(np.sum(1 - (1 - LAMBDA_R) * (1 - linf)))

    return total(part.B), total(part.L)


def composite_real_bound(n: int, t: float) -> LogBound:
    """
    Final chain for real matrices with eps = t/10, lambda = 64/sqrt(nt):
        exp[-nt(1 - Lr - 0.2)] + 4 exp[-sqrt(nt)/50] + n exp[-sqrt(nt)/320]
            + exp[-sqrt(nt)/(20e)]  <=  (n + 6) exp[-sqrt(nt)/400],
    the last step needing sqrt(nt) > 640 and sqrt(nt) >= 400 log n.
    """
    _require(0 < t <= 1 and n >= 1, f"need t in (0, 1] and n >= 1, got t = {t}, n = {n}")
    root = math.sqrt(n * t)
    eps = t / 10
    lam = 64 / root

    four_terms = float(logsumexp([
        -n * t * (1 - LAMBDA_R - 0.2),
        math.log(4) - root / 50,
        math.log(n) - root / 320,
        -root / (20 * math.e),
    ]))
    base = 1 + 2 * eps - (1 - LAMBDA_R) * t
    template = float(logsumexp([
        n * math.log(base),
        math.log(4) - eps * eps * n * lam / (32 * t),
        math.log(n) - 1 / (5 * lam),
        -eps * n / (2 * math.e * root),
    ]))
    theorem = math.log(n + 6) - root / 400
    conditions = {
        "sqrt_nt_gt_640": root > 640,
        "sqrt_nt_ge_400_log_n": root >= 400 * math.log(n),
        "dominated": four_terms <= theorem,
    }
    return LogBound(
        name="composite_real", log_value=four_terms,
        applicable=conditions["sqrt_nt_gt_640"] and conditions["sqrt_nt_ge_400_log_n"],
        conditions=conditions,
        params={"n": n, "t": t, "epsilon": eps, "lambda": lam,
                "theorem_log_value": theorem, "template_log_value": template},
    )


# ------------------ stability corollary ------------------

def stability_check(A: Matrix, alpha: float, beta: float, T: float = None) -> dict:
    """
    If |perm(A)| >= 2 T^n exp[-n alpha^2 beta^2 / 1e5], then all but at most
    alpha n rows hold an entry of modulus >= T(1 - beta). Reports the premise,
    the row count and whether the implication holds for this matrix.
    """
    _require(alpha >= 0 and beta >= 0, f"alpha and beta must be non-negative, got {alpha}, {beta}")
    norm = op_norm(A).op_norm
    T = norm if T is None else T
    _check_T(T)
    n = A.n
    mod = np.abs(A.entries)
    rows_without = int(np.count_nonzero(mod.max(axis=1) < T * (1 - beta)))
    perm = perm_exact(A)
    threshold = LN2 + n * math.log(T) - n * alpha * alpha * beta * beta / 1e5
    premise = perm.log_abs >= threshold
    conclusion = rows_without <= alpha * n
    return {
        "premise": bool(premise),
        "rows_without_large_entry": rows_without,
        "allowed": alpha * n,
        "holds": bool(conclusion or not premise),
        "log_perm": perm.log_abs,
        "log_threshold": threshold,
    }


# ------------------ aggregate report ------------------

def bound_report(A: Matrix, T: float = None,
                 exact_cap: int = config.BOUNDS_EXACT_MAX_N) -> BoundReport:
    """
    All theorem bounds for A at T (default: the computed operator norm), the
    applicable minimum, and ln|perm| with its slack when n <= exact_cap or the
    matrix has a single-product permanent.
    """
    norm = op_norm(A).op_norm
    stats = row_stats(A)
    n = A.n

    if A.is_zero:
        # perm = 0; no T > 0 is tight, so the bounds are reported but not applied
        placeholder = 1.0 if T is None else T
        bounds = [
            bound_trivial(n, placeholder),
            bound_complex_i(n, placeholder, 0.0, 0.0),
            bound_complex_ii(n, placeholder, 0.0),
            bound_real(n, placeholder, 0.0, A.is_real),
        ]
        for b in bounds:
            b.applicable = False
        return BoundReport(n=n, field=A.field.value, op_norm=0.0, T=placeholder,
                           h2=0.0, hinf=0.0, bounds=bounds, perm_is_zero=True)

    if T is None:
        T = norm
    _check_T(T)
    if T < norm * (1 - NORM_SLACK):
        raise ParameterError(f"T = {T} is below the operator norm {norm}")

    h2, hinf = stats.h2, stats.hinf
    bounds = [
        bound_trivial(n, T),
        bound_complex_i(n, T, h2, hinf),
        bound_complex_ii(n, T, hinf),
        bound_real(n, T, hinf, A.is_real),
    ]
    applicable = [b for b in bounds if b.applicable]
    best = min(applicable, key=lambda b: b.log_value)

    report = BoundReport(n=n, field=A.field.value, op_norm=norm, T=T,
                         h2=stats.h2, hinf=stats.hinf, bounds=bounds, best=best.name)

    if n <= exact_cap or perm_structured(A) is not None:
        perm = perm_exact(A, cap=exact_cap)
        if perm.value == 0:
            report.perm_is_zero = True
        else:
            report.log_perm_exact = perm.log_abs
            report.slack = best.log_value - perm.log_abs
    return report
