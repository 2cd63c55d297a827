# backend/routes/permanent.py

"""
POST /api/perm       {"matrix": <payload>}
POST /api/estimate   {"matrix": <payload>, "samples": N, "seed": S, "T": optional}
"""

import math

from flask import Blueprint, jsonify, request

from routes import _log, error_response, optional_float, optional_int, read_body
from services.glynn_service import estimate_perm
from services.permanent_service import perm_exact

permanent_bp = Blueprint("permanent", __name__)


def _number(value):
    if isinstance(value, complex):
        return [value.real, value.imag]
    return value


@permanent_bp.route("/perm", methods=["POST"])
def perm():
    try:
        _, A = read_body(request)
        _log("perm: %s matrix n=%d", A.field.value, A.n)
        result = perm_exact(A)
        return jsonify({
            "value": _number(result.value),
            "log_abs": result.log_abs if math.isfinite(result.log_abs) else None,
            "phase": _number(result.phase),
        }), 200
    except Exception as e:
        return error_response(e)


@permanent_bp.route("/estimate", methods=["POST"])
def estimate():
    try:
        data, A = read_body(request)
        samples = optional_int(data, "samples", 10000)
        seed = optional_int(data, "seed", 0)
        _log("estimate: n=%d samples=%d seed=%d", A.n, samples, seed)
        report = estimate_perm(A, T=optional_float(data, "T"), samples=samples, seed=seed)
        return jsonify(report.model_dump(mode="json")), 200
    except Exception as e:
        return error_response(e)
