# backend/services/permanent_service.py

"""
Exact permanents: the n! definition, Ryser's inclusion-exclusion formula and the
exact Glynn average over all sign vectors. All three agree to ~1e-9 relative on
normalized inputs and serve as oracles for the bound and estimator code.

Ryser and Glynn share one enumeration scheme: the first `RYSER_LOW_BITS` columns
are expanded into a table of all subset sums in reflected Gray order, and the
remaining columns are walked one Gray step at a time, so each step costs one
vector update plus one vectorized product over the table.
"""

import cmath
import logging
import math
from dataclasses import dataclass
from itertools import islice, permutations

import numpy as np
from joblib import Parallel, delayed

import config
from errors import ConsistencyError, SizeError
from services.linalg_service import Matrix

log = logging.getLogger(__name__)

_NAIVE_CHUNK = 40320
_LOG_MAX = float(np.log(np.finfo(np.float64).max))


@dataclass(frozen=True)
class PermValue:
    value: complex
    log_abs: float   # -inf when value == 0
    phase: complex   # value / |value|, 0 when value == 0

    @classmethod
    def from_value(cls, value):
        mod = abs(value)
        if mod == 0:
            return cls(value=value, log_abs=-math.inf, phase=0.0)
        return cls(value=value, log_abs=math.log(mod), phase=value / mod)


def _scalar(A, total):
    return float(total.real) if A.is_real else complex(total)


def _check_cap(A, cap, name):
    if A.n > cap:
        raise SizeError(f"{name} supports n <= {cap}, got n = {A.n}")


# ------------------ definition ------------------

def perm_naive(A: Matrix, cap: int = config.NAIVE_MAX_N):
    _check_cap(A, cap, "perm_naive")
    a = A.entries
    n = A.n
    rows = np.arange(n)
    total = a.dtype.type(0)
    perms = permutations(range(n))
    while True:
        chunk = list(islice(perms, _NAIVE_CHUNK))
        if not chunk:
            break
        sigma = np.array(chunk, dtype=np.intp)
        total = total + a[rows, sigma].prod(axis=1).sum()
    return _scalar(A, total)


# ------------------ Gray-code machinery ------------------

def _gray_table(cols):
    """
    Subset sums of the columns of `cols` (shape n x m) in reflected Gray order.
    Entry k holds the sum over the subset gray(k) = k ^ (k >> 1); its size has
    the parity of k.
    """
    table = np.zeros((cols.shape[0], 1), dtype=cols.dtype)
    for j in range(cols.shape[1]):
        table = np.concatenate([table, table[:, ::-1] + cols[:, j:j + 1]], axis=1)
    return table


def _low_signs(m):
    signs = np.ones(1 << m)
    signs[1::2] = -1.0
    return signs


def _gray_walk(base, low_table, low_signs, high_cols, start, stop):
    """
    Signed sum over Gray steps start..stop-1 of the high columns of
    prod_i(base_i + high_sum_i + low_table_i,k) * (-1)^(|low| + |high|).
    """
    g0 = start ^ (start >> 1)
    idx = [j for j in range(high_cols.shape[1]) if g0 >> j & 1]
    high = base + high_cols[:, idx].sum(axis=1)
    total = low_table.dtype.type(0)
    for k in range(start, stop):
        if k > start:
            j = (k & -k).bit_length() - 1
            if (k ^ (k >> 1)) >> j & 1:
                high = high + high_cols[:, j]
            else:
                high = high - high_cols[:, j]
        prods = (high[:, None] + low_table).prod(axis=0)
        block = (low_signs * prods).sum()
        total = total + (-block if k & 1 else block)
    return total


def _enumerate(base, cols, partitions):
    m = min(cols.shape[1], config.RYSER_LOW_BITS)
    low_table = _gray_table(cols[:, :m])
    low_signs = _low_signs(m)
    high_cols = cols[:, m:]
    steps = 1 << high_cols.shape[1]
    partitions = max(1, min(partitions, steps))
    bounds = [steps * p // partitions for p in range(partitions + 1)]
    if partitions == 1:
        return _gray_walk(base, low_table, low_signs, high_cols, 0, steps)
    parts = Parallel(n_jobs=partitions)(
        delayed(_gray_walk)(base, low_table, low_signs, high_cols, bounds[p], bounds[p + 1])
        for p in range(partitions)
    )
    total = low_table.dtype.type(0)
    for part in parts:
        total = total + part
    return total


# ------------------ Ryser ------------------

def perm_ryser(A: Matrix, partitions: int = 1, cap: int = config.RYSER_MAX_N):
    """
    perm(A) = (-1)^n sum_{S subset [n]} (-1)^|S| prod_i sum_{j in S} a_ij,
    the plain 2^n form.
    """
    _check_cap(A, cap, "perm_ryser")
    a = A.entries
    base = np.zeros(A.n, dtype=a.dtype)
    total = _enumerate(base, a, partitions)
    if A.n & 1:
        total = -total
    return _scalar(A, total)


# ------------------ Glynn (exact) ------------------

def perm_glynn_exact(A: Matrix, partitions: int = 1, cap: int = config.GLYNN_MAX_N):
    """
    Exact mean of Gly_x(A) = prod(x) * prod(Ax) over x in {-1, 1}^n.
    Gly_x = Gly_-x, so x_1 = 1 is fixed and the other 2^(n-1) vectors are walked;
    flipping the coordinates in F gives y = A.1 - 2 sum_{j in F} A[:, j].
    """
    _check_cap(A, cap, "perm_glynn_exact")
    a = A.entries
    base = a.sum(axis=1)
    total = _enumerate(base, -2.0 * a[:, 1:], partitions)
    return _scalar(A, total / float(1 << (A.n - 1)))


# ------------------ structured shortcuts and dispatch ------------------

def perm_structured(A: Matrix):
    """
    PermValue for matrices whose permanent is a single product: triangular
    matrices (diagonal included) and generalized permutation matrices.
    None when neither shape applies.
    """
    a = A.entries
    if not np.any(np.tril(a, -1)) or not np.any(np.triu(a, 1)):
        vals = np.diag(a)
    else:
        nz = a != 0
        if not (np.all(nz.sum(axis=1) == 1) and np.all(nz.sum(axis=0) == 1)):
            return None
        vals = a[nz.nonzero()]
    # log form keeps delta^n representable at large n
    if np.any(vals == 0):
        return PermValue.from_value(0.0 if A.is_real else 0j)
    log_abs = float(np.log(np.abs(vals)).sum())
    value = complex(np.prod(vals))
    if value == 0 or not cmath.isfinite(value):
        # the plain product under- or overflows; rebuild it from the log form
        phase = complex(np.prod(vals / np.abs(vals)))
        if log_abs < _LOG_MAX:
            value = math.exp(log_abs) * phase
    else:
        phase = value / abs(value)
    if A.is_real:
        return PermValue(value=value.real, log_abs=log_abs, phase=phase.real)
    return PermValue(value=value, log_abs=log_abs, phase=phase)


def perm_exact(A: Matrix, cap: int = config.RYSER_MAX_N, cross_check: bool = False):
    """
    Exact permanent as a PermValue: the structured shortcut when it applies,
    otherwise Ryser. With cross_check, Ryser is compared against the exact
    Glynn average whenever n <= GLYNN_MAX_N, and a structured value against
    Ryser whenever n <= cap.
    """
    structured = perm_structured(A)
    if structured is not None:
        if cross_check and A.n <= cap:
            _check_agreement("the single product", structured.value, "Ryser", perm_ryser(A, cap=cap), A.n)
        return structured
    value = perm_ryser(A, cap=cap)
    if cross_check and A.n <= config.GLYNN_MAX_N:
        _check_agreement("Ryser", value, "exact Glynn", perm_glynn_exact(A), A.n)
    return PermValue.from_value(value)


def _check_agreement(name, value, other_name, other, n):
    if not values_agree(value, other):
        raise ConsistencyError(f"{name} gives {value!r} but {other_name} gives {other!r}")
    log.debug("%s and %s agree at n=%d", name, other_name, n)


def values_agree(x, y, rel: float = 1e-9, abs_floor: float = 1e-3, abs_tol: float = 1e-12):
    """Relative agreement, or absolute agreement when both values are below abs_floor."""
    scale = max(abs(x), abs(y))
    if scale < abs_floor:
        return abs(x - y) <= abs_tol
    return abs(x - y) <= rel * scale
