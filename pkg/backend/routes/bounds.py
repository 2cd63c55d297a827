# backend/routes/bounds.py

from flask import Blueprint, jsonify, request

from routes import _log, error_response, optional_float, read_body
from services.bound_service import bound_report

bounds_bp = Blueprint("bounds", __name__)


@bounds_bp.route("/bounds", methods=["POST"])
def bounds():
    try:
        data, A = read_body(request)
        _log("bounds: %s matrix n=%d", A.field.value, A.n)
        report = bound_report(A, T=optional_float(data, "T"))
        return jsonify(report.model_dump(mode="json")), 200
    except Exception as e:
        return error_response(e)


@bounds_bp.route("/health", methods=["GET"])
def health():
    return jsonify({"ok": True})
