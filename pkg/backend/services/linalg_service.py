# backend/services/linalg_service.py

"""
Dense square matrices over R or C, their row norms / h-parameters, the operator
2-norm by power iteration, membership in the extremal set (permutation times
unitary diagonal) and the seeded matrix ensembles used by every experiment.
"""

import logging
import numbers
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.linalg import circulant, qr

import config
from errors import NonConvergenceError, ParameterError

log = logging.getLogger(__name__)


class Field(str, Enum):
    REAL = "real"
    COMPLEX = "complex"


@dataclass(frozen=True, eq=False)
class Matrix:
    field: Field
    entries: np.ndarray

    def __post_init__(self):
        field = Field(self.field)
        raw = np.asarray(self.entries)
        if raw.ndim != 2 or raw.shape[0] != raw.shape[1] or raw.shape[0] < 1:
            raise ParameterError(f"matrix must be square with n >= 1, got shape {raw.shape}")
        if field is Field.REAL:
            if np.iscomplexobj(raw):
                if np.any(raw.imag != 0):
                    raise ParameterError("real-field matrix has non-zero imaginary parts")
                raw = raw.real
            arr = np.array(raw, dtype=np.float64)
        else:
            arr = np.array(raw, dtype=np.complex128)
        if not np.all(np.isfinite(arr)):
            raise ParameterError("matrix entries must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "field", field)
        object.__setattr__(self, "entries", arr)

    @classmethod
    def from_array(cls, arr, field=None):
        if field is None:
            field = Field.COMPLEX if np.iscomplexobj(arr) else Field.REAL
        return cls(Field(field), arr)

    @property
    def n(self):
        return self.entries.shape[0]

    @property
    def is_real(self):
        return self.field is Field.REAL

    @property
    def is_zero(self):
        return not np.any(self.entries)

    def scaled(self, alpha):
        field = self.field
        if isinstance(alpha, complex) and alpha.imag != 0:
            field = Field.COMPLEX
        return Matrix(field, self.entries * alpha)

    def __eq__(self, other):
        if not isinstance(other, Matrix):
            return NotImplemented
        return self.field is other.field and np.array_equal(self.entries, other.entries)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class RowStats:
    row_l2: np.ndarray
    row_linf: np.ndarray
    h2: float
    hinf: float


@dataclass(frozen=True)
class SpectralInfo:
    op_norm: float
    iterations: int
    residual: float


# ------------------ norms ------------------

def row_stats(A: Matrix) -> RowStats:
    mod = np.abs(A.entries)
    row_l2 = np.linalg.norm(mod, axis=1)
    row_linf = mod.max(axis=1)
    row_l2.setflags(write=False)
    row_linf.setflags(write=False)
    return RowStats(row_l2=row_l2, row_linf=row_linf,
                    h2=float(row_l2.mean()), hinf=float(row_linf.mean()))


# increments of rho below this share of rho are rounding noise
_ROUNDING = 16 * np.finfo(np.float64).eps


def _power_iterate(a, v, tol, max_iter):
    """
    Power iteration on the Gram form a^H a, tracking the Rayleigh quotient rho_k.
    Its increments d_k shrink by a ratio q = d_k / d_{k-1} that approaches the
    squared ratio of the top two singular values, so d_k q / (1 - q) estimates the
    distance left to the top eigenvalue. Returns (sigma, iterations, estimated
    relative error of rho).
    """
    norm = np.linalg.norm(v)
    if norm == 0:
        return 0.0, 0, 0.0
    v = v / norm
    ah = a.conj().T
    rho = None
    prev_step = None
    residual = np.inf
    for it in range(1, max_iter + 1):
        w = ah @ (a @ v)
        new_rho = float(np.vdot(v, w).real)
        w_norm = np.linalg.norm(w)
        if w_norm == 0.0:
            # start vector fell into the null space
            return 0.0, it, 0.0
        v = w / w_norm
        if rho is not None:
            step = new_rho - rho
            if abs(step) <= _ROUNDING * new_rho:
                return float(np.sqrt(new_rho)), it, abs(step) / new_rho
            if prev_step is not None and 0 < step < prev_step:
                q = step / prev_step
                residual = step * q / (1 - q) / new_rho
                if residual < tol:
                    return float(np.sqrt(new_rho)), it, residual
            prev_step = step
        rho = new_rho
    return float(np.sqrt(max(rho, 0.0))), max_iter, residual


def op_norm(A: Matrix, tol: float = config.OP_NORM_TOL,
            max_iter: int = config.OP_NORM_MAX_ITER) -> SpectralInfo:
    """
    Largest singular value of A. Runs power iteration from the all-ones vector and
    from one seeded random start, and reports the larger result.
    """
    if not tol > 0:
        raise ParameterError(f"tol must be positive, got {tol}")
    if max_iter < 1:
        raise ParameterError(f"max_iter must be >= 1, got {max_iter}")
    if A.is_zero:
        return SpectralInfo(op_norm=0.0, iterations=0, residual=0.0)

    a = A.entries
    rng = np.random.default_rng(config.OP_NORM_RESTART_SEED)
    restart = rng.standard_normal(A.n)
    if not A.is_real:
        restart = restart + 1j * rng.standard_normal(A.n)
    starts = [np.ones(A.n, dtype=a.dtype), restart]

    results = [_power_iterate(a, v, tol, max_iter) for v in starts]
    sigma, iterations, residual = max(results, key=lambda r: r[0])
    if residual >= tol:
        raise NonConvergenceError(sigma, residual, iterations)
    log.debug("op_norm n=%d -> %.12g after %d iterations", A.n, sigma, iterations)
    return SpectralInfo(op_norm=sigma, iterations=iterations, residual=residual)


def is_in_p(A: Matrix, tol: float = 1e-9) -> bool:
    """True iff A has exactly one unit-modulus entry per row and column and zeros elsewhere."""
    if tol < 0:
        raise ParameterError(f"tol must be >= 0, got {tol}")
    mod = np.abs(A.entries)
    unit = np.abs(mod - 1.0) <= tol
    if not np.all(unit.sum(axis=1) == 1) or not np.all(unit.sum(axis=0) == 1):
        return False
    return bool(np.all(mod[~unit] <= tol))


# ------------------ ensembles ------------------

class EnsembleKind(str, Enum):
    EXTREMAL_P = "extremal_p"
    HAAR_ORTHOGONAL = "haar_orthogonal"
    HAAR_UNITARY = "haar_unitary"
    SCALED_IDENTITY = "scaled_identity"
    CIRCULANT = "circulant"
    PERTURBED_PERMUTATION = "perturbed_permutation"
    ROW_NORMALIZED_RANDOM = "row_normalized_random"


_COMMON_PARAMS = {"field", "normalize", "scale"}
_KIND_PARAMS = {
    EnsembleKind.EXTREMAL_P: set(),
    EnsembleKind.HAAR_ORTHOGONAL: set(),
    EnsembleKind.HAAR_UNITARY: set(),
    EnsembleKind.SCALED_IDENTITY: {"delta"},
    EnsembleKind.CIRCULANT: set(),
    EnsembleKind.PERTURBED_PERMUTATION: {"weight", "permute"},
    EnsembleKind.ROW_NORMALIZED_RANDOM: set(),
}
_FIXED_FIELD = {
    EnsembleKind.HAAR_ORTHOGONAL: Field.REAL,
    EnsembleKind.HAAR_UNITARY: Field.COMPLEX,
}


def _gaussian(rng, n, field):
    g = rng.standard_normal((n, n))
    if field is Field.COMPLEX:
        g = (g + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    return g


def _unit_phases(rng, n, field):
    if field is Field.REAL:
        return rng.choice([-1.0, 1.0], size=n)
    return np.exp(2j * np.pi * rng.random(n))


def _extremal(rng, n, field):
    perm = rng.permutation(n)
    p = np.zeros((n, n), dtype=np.complex128 if field is Field.COMPLEX else np.float64)
    p[np.arange(n), perm] = _unit_phases(rng, n, field)
    return p


def _haar(rng, n, field):
    # QR of a Ginibre sample; fixing the phases of diag(R) makes Q Haar-distributed
    q, r = qr(_gaussian(rng, n, field))
    d = np.diag(r)
    return q * (d / np.abs(d))


def _number(params, key, default, real=True):
    value = params.get(key, default)
    kinds = numbers.Real if real else numbers.Number
    if isinstance(value, bool) or not isinstance(value, kinds):
        raise ParameterError(f"{key} must be a number, got {value!r}")
    return value


def gen_ensemble(kind, n: int, params: dict = None, seed: int = 0) -> Matrix:
    try:
        kind = EnsembleKind(kind)
    except ValueError:
        raise ParameterError(f"unknown ensemble kind {kind!r}")
    params = dict(params or {})
    unknown = set(params) - _COMMON_PARAMS - _KIND_PARAMS[kind]
    if unknown:
        raise ParameterError(f"unknown parameters for {kind.value}: {sorted(unknown)}")
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    if seed < 0:
        raise ParameterError(f"seed must be non-negative, got {seed}")

    default_field = _FIXED_FIELD.get(kind, Field.REAL)
    try:
        field = Field(params.get("field", default_field))
    except ValueError:
        raise ParameterError(f"unknown field {params.get('field')!r}")
    if kind in _FIXED_FIELD and field is not _FIXED_FIELD[kind]:
        raise ParameterError(f"{kind.value} is only defined over the {default_field.value} field")

    rng = np.random.default_rng(seed)

    if kind is EnsembleKind.EXTREMAL_P:
        a = _extremal(rng, n, field)
    elif kind in (EnsembleKind.HAAR_ORTHOGONAL, EnsembleKind.HAAR_UNITARY):
        a = _haar(rng, n, field)
    elif kind is EnsembleKind.SCALED_IDENTITY:
        delta = _number(params, "delta", 1.0)
        if not 0 < delta <= 1:
            raise ParameterError(f"delta must lie in (0, 1], got {delta}")
        a = delta * np.eye(n)
    elif kind is EnsembleKind.CIRCULANT:
        a = circulant(_gaussian(rng, n, field)[0] / np.sqrt(n))
    elif kind is EnsembleKind.PERTURBED_PERMUTATION:
        w = _number(params, "weight", 0.1)
        if not 0 <= w <= 1:
            raise ParameterError(f"weight must lie in [0, 1], got {w}")
        base = _extremal(rng, n, field) if params.get("permute", True) else np.eye(n)
        a = (1 - w) * base + w * _gaussian(rng, n, field) / np.sqrt(n)
    else:
        g = _gaussian(rng, n, field)
        a = g / np.linalg.norm(g, axis=1, keepdims=True)

    A = Matrix(field, a)
    if params.get("normalize", False):
        T = op_norm(A).op_norm
        if T > 0:
            A = Matrix(field, A.entries / T)
    scale = _number(params, "scale", 1.0, real=False)
    if scale != 1.0:
        if not np.isfinite(scale) or scale == 0:
            raise ParameterError(f"scale must be finite and non-zero, got {scale}")
        A = A.scaled(scale)
    return A
