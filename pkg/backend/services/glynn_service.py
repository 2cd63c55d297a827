# backend/services/glynn_service.py

"""
Randomized Glynn estimator and the sampling diagnostics built on it.

For x with independent unit-modulus coordinates and y = Ax,
    Gly_x(A) = prod(conj(x_i)) * prod(y_i),   E[Gly_X(A)] = perm(A),
and |Gly_x(A)| <= (||Ax||_1 / n)^n <= ||A||_2^n for every x.

All sampling goes through rng_service blocks, so results are bitwise identical
for a fixed (seed, samples) whatever the worker count.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel
from scipy.special import logsumexp

import config
from errors import DimensionError, FieldError, ParameterError, SizeError, StructuralError
from services.bound_service import mu_tilde
from services.linalg_service import Field, Matrix, op_norm, row_stats
from services.rng_service import block_generator, block_ranges, check_seed, unit_vectors

log = logging.getLogger(__name__)

# relative slack per factor when comparing |Gly| against T^n and (||AX||_1/n)^n
SAMPLE_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class SampleVector:
    field: Field
    coords: np.ndarray

    def __post_init__(self):
        field = Field(self.field)
        coords = np.array(self.coords, dtype=np.float64 if field is Field.REAL else np.complex128)
        if coords.ndim != 1:
            raise DimensionError("sample vector must be one-dimensional")
        if np.any(np.abs(np.abs(coords) - 1.0) > 1e-15):
            raise ParameterError("sample vector coordinates must have modulus 1")
        coords.setflags(write=False)
        object.__setattr__(self, "field", field)
        object.__setattr__(self, "coords", coords)


class EstimateReport(BaseModel):
    mean_re: float
    mean_im: float
    stderr: float
    stderr_re: float
    stderr_im: float
    samples: int
    seed: int
    T: float
    max_abs_gly: float
    exceeded_Tn: int
    exceeded_l1: int

    @property
    def mean(self):
        return complex(self.mean_re, self.mean_im)


class ConcentrationReport(BaseModel):
    field: str
    n: int
    mean_l1_over_n: float
    stderr_l1_over_n: float
    max_l1_over_n: float
    log_nth_moment: float
    tail_freqs: Dict[float, float]
    sign_disagreement_freq: Optional[float] = None
    samples: int
    seed: int


@dataclass(frozen=True, eq=False)
class PartitionResult:
    lam: float
    n: int
    b: int
    l: int
    B: np.ndarray
    L: np.ndarray
    row_perm: np.ndarray
    col_perm: np.ndarray
    sign_diag: np.ndarray
    t_param: float


@dataclass(frozen=True)
class LemmaFrequencies:
    lx_deviation: float
    sign_disagreement: float
    quadratic_form: float
    samples: int


# ------------------ single values ------------------

def glynn_value(A: Matrix, x: SampleVector):
    coords = x.coords
    if coords.shape[0] != A.n:
        raise DimensionError(f"sample vector has length {coords.shape[0]}, matrix has n = {A.n}")
    value = np.prod(np.conj(coords)) * np.prod(A.entries @ coords)
    if A.is_real and x.field is Field.REAL:
        return float(value)
    return complex(value)


def _glynn_batch(a, X):
    Y = X @ a.T
    gly = np.prod(np.conj(X), axis=1) * np.prod(Y, axis=1)
    l1 = np.abs(Y).sum(axis=1)
    return gly, l1


def _standard_error(values):
    if values.shape[0] < 2:
        return 0.0
    return float(values.std(ddof=1) / math.sqrt(values.shape[0]))


# ------------------ Monte Carlo estimate ------------------

def _estimate_block(a, field, seed, block, count):
    X = unit_vectors(block_generator(seed, block), field, count, a.shape[0])
    return _glynn_batch(a, X)


def estimate_perm(A: Matrix, T: float = None, samples: int = 10000, seed: int = 0,
                  workers: int = config.WORKERS) -> EstimateReport:
    if samples < 1:
        raise ParameterError(f"samples must be >= 1, got {samples}")
    check_seed(seed)
    norm = op_norm(A).op_norm
    if T is None:
        T = norm
    if T < 0 or T < norm * (1 - 1e-8):
        raise ParameterError(f"T = {T} is below the operator norm {norm}")

    parts = Parallel(n_jobs=workers)(
        delayed(_estimate_block)(A.entries, A.field, seed, b, count)
        for b, count in block_ranges(samples)
    )
    gly = np.concatenate([p[0] for p in parts])
    l1 = np.concatenate([p[1] for p in parts])

    n = A.n
    slack = n * math.log1p(SAMPLE_SLACK)
    log_T = math.log(T) if T > 0 else -math.inf
    with np.errstate(divide="ignore"):
        log_gly = np.log(np.abs(gly))
        log_l1 = n * np.log(l1 / n)
    exceeded_Tn = int(np.count_nonzero(log_gly > n * log_T + slack))
    exceeded_l1 = int(np.count_nonzero(log_gly > log_l1 + slack))
    if exceeded_Tn or exceeded_l1:
        log.warning("per-sample bound exceeded: %d above T^n, %d above (|AX|_1/n)^n",
                    exceeded_Tn, exceeded_l1)

    mean = complex(gly.mean())
    se_re = _standard_error(np.real(gly))
    se_im = _standard_error(np.imag(gly))
    return EstimateReport(
        mean_re=mean.real, mean_im=mean.imag,
        stderr=math.hypot(se_re, se_im), stderr_re=se_re, stderr_im=se_im,
        samples=samples, seed=seed, T=T,
        max_abs_gly=float(np.abs(gly).max()),
        exceeded_Tn=exceeded_Tn, exceeded_l1=exceeded_l1,
    )


# ------------------ concentration of ||AX||_1 ------------------

def _l1_block(a, field, seed, block, count, B):
    X = unit_vectors(block_generator(seed, block), field, count, a.shape[0])
    l1 = np.abs(X @ a.T).sum(axis=1)
    disagree = None
    if B is not None:
        disagree = _sign_disagreement(X, B)
    return l1, disagree


def _sign_disagreement(X, B):
    b = B.shape[0]
    if b == 0:
        return np.zeros(X.shape[0], dtype=bool)
    return np.any(X[:, :b] * (X @ B.T) < 0, axis=1)


def sample_l1(A: Matrix, samples: int, seed: int, t_thresholds=(),
              partition: PartitionResult = None,
              workers: int = config.WORKERS) -> ConcentrationReport:
    """
    Empirical law of ||AX||_1 / n with X drawn in A's field. Tail frequencies are
    measured against the empirical mean. With a partition of A, the same draws
    also give the frequency of ||BX||_1 != <X, B~X>.
    """
    if samples < 1:
        raise ParameterError(f"samples must be >= 1, got {samples}")
    check_seed(seed)
    if any(t < 0 for t in t_thresholds):
        raise ParameterError("tail thresholds must be non-negative")
    B = None
    if partition is not None:
        if not A.is_real:
            raise FieldError("the big-row partition is defined for real matrices only")
        B = partition.B

    parts = Parallel(n_jobs=workers)(
        delayed(_l1_block)(A.entries, A.field, seed, b, count, B)
        for b, count in block_ranges(samples)
    )
    n = A.n
    x = np.concatenate([p[0] for p in parts]) / n
    mean = float(x.mean())
    with np.errstate(divide="ignore"):
        log_moment = float(logsumexp(n * np.log(x)) - math.log(samples))

    disagreement = None
    if B is not None:
        disagreement = float(np.concatenate([p[1] for p in parts]).mean())

    return ConcentrationReport(
        field=A.field.value, n=n,
        mean_l1_over_n=mean, stderr_l1_over_n=_standard_error(x),
        max_l1_over_n=float(x.max()), log_nth_moment=log_moment,
        tail_freqs={float(t): float(np.mean(x > mean + t)) for t in t_thresholds},
        sign_disagreement_freq=disagreement,
        samples=samples, seed=seed,
    )


# ------------------ big / small rows ------------------

def partition_rows(A: Matrix, lam: float) -> PartitionResult:
    """
    Split a real matrix with ||A||_2 <= 1 into big rows (an entry of modulus
    >= 1 - lam) and small rows. Rows and columns are permuted and big rows are
    sign-flipped so the big entries sit positive on the diagonal of the top block.
    """
    if not A.is_real:
        raise FieldError("partition_rows needs a real matrix")
    if not 0 < lam < 0.1:
        raise ParameterError(f"lambda must lie in (0, 0.1), got {lam}")
    norm = op_norm(A).op_norm
    if norm > 1 + 1e-8:
        raise ParameterError(f"partition_rows needs ||A||_2 <= 1, got {norm}")

    a = A.entries
    n = A.n
    big = np.abs(a) >= 1 - lam
    big_rows = np.flatnonzero(big.any(axis=1))
    if np.any(big[big_rows].sum(axis=1) > 1) or np.any(big.sum(axis=0) > 1):
        raise StructuralError("large entries share a row or column")
    big_cols = np.argmax(big[big_rows], axis=1)

    small_rows = np.setdiff1d(np.arange(n), big_rows)
    other_cols = np.setdiff1d(np.arange(n), big_cols)
    row_perm = np.concatenate([big_rows, small_rows]).astype(np.intp)
    col_perm = np.concatenate([big_cols, other_cols]).astype(np.intp)

    m = a[row_perm][:, col_perm]
    b = big_rows.shape[0]
    signs = np.ones(n)
    signs[:b] = np.sign(np.diag(m)[:b])
    m = signs[:, None] * m

    for arr in (m, row_perm, col_perm, signs):
        arr.setflags(write=False)
    log.debug("partition n=%d lambda=%.4g: %d big rows, %d small rows", n, lam, b, n - b)
    return PartitionResult(
        lam=lam, n=n, b=b, l=n - b, B=m[:b], L=m[b:],
        row_perm=row_perm, col_perm=col_perm, sign_diag=signs,
        t_param=1.0 - row_stats(A).hinf,
    )


def _disagreement_block(B, n, seed, block, count):
    X = unit_vectors(block_generator(seed, block), Field.REAL, count, n)
    return _sign_disagreement(X, B)


def quadratic_form_diag(part: PartitionResult, samples: int, seed: int,
                        workers: int = config.WORKERS) -> float:
    """Empirical frequency of ||BX||_1 != <X, B~X> over uniform sign vectors."""
    if samples < 1:
        raise ParameterError(f"samples must be >= 1, got {samples}")
    check_seed(seed)
    if part.b == 0:
        return 0.0
    parts = Parallel(n_jobs=workers)(
        delayed(_disagreement_block)(part.B, part.n, seed, b, count)
        for b, count in block_ranges(samples)
    )
    return float(np.concatenate(parts).mean())


def _lemma_block(B, L, n, threshold_l, threshold_b, seed, block, count):
    X = unit_vectors(block_generator(seed, block), Field.REAL, count, n)
    b = B.shape[0]
    lx = np.abs(X @ L.T).sum(axis=1) >= threshold_l
    if b == 0:
        none = np.zeros(count, dtype=bool)
        return lx, none, np.zeros(count) >= threshold_b
    BX = X @ B.T
    quad = (X[:, :b] * BX).sum(axis=1)
    return lx, np.any(X[:, :b] * BX < 0, axis=1), quad >= threshold_b


def lemma_frequencies(part: PartitionResult, eps: float, samples: int, seed: int,
                      workers: int = config.WORKERS) -> LemmaFrequencies:
    """
    Empirical frequencies of the three events bounded for real matrices:
    ||LX||_1 >= mu~_L + eps n, ||BX||_1 != <X, B~X>, and <X, B~X> >= mu~_B + eps n.
    """
    if not eps > 0:
        raise ParameterError(f"epsilon must be positive, got {eps}")
    if samples < 1:
        raise ParameterError(f"samples must be >= 1, got {samples}")
    check_seed(seed)
    mu_b, mu_l = mu_tilde(part)
    n = part.n
    parts = Parallel(n_jobs=workers)(
        delayed(_lemma_block)(part.B, part.L, n, mu_l + eps * n, mu_b + eps * n, seed, b, count)
        for b, count in block_ranges(samples)
    )
    return LemmaFrequencies(
        lx_deviation=float(np.concatenate([p[0] for p in parts]).mean()),
        sign_disagreement=float(np.concatenate([p[1] for p in parts]).mean()),
        quadratic_form=float(np.concatenate([p[2] for p in parts]).mean()),
        samples=samples,
    )


# ------------------ full enumeration ------------------

def all_sign_vectors(n: int) -> np.ndarray:
    if n > config.ENUM_MAX_N:
        raise SizeError(f"full enumeration supports n <= {config.ENUM_MAX_N}, got n = {n}")
    bits = (np.arange(1 << n)[:, None] >> np.arange(n)) & 1
    return 1.0 - 2.0 * bits


def enumerate_glynn(A: Matrix):
    """Mean of Gly_x(A) over every x in {-1, 1}^n."""
    gly, _ = _glynn_batch(A.entries, all_sign_vectors(A.n))
    mean = gly.mean()
    return float(mean.real) if A.is_real else complex(mean)


def enumerate_l1(A: Matrix):
    """Exact (E[||AX||_1 / n], log E[(||AX||_1 / n)^n]) for uniform sign vectors X."""
    if not A.is_real:
        raise FieldError("sign-vector enumeration is the real-field law of X")
    n = A.n
    _, l1 = _glynn_batch(A.entries, all_sign_vectors(n))
    x = l1 / n
    with np.errstate(divide="ignore"):
        log_moment = float(logsumexp(n * np.log(x)) - n * math.log(2))
    return float(x.mean()), log_moment
