# backend/routes/__init__.py

from flask import current_app, jsonify

from errors import MatrixParseError, NonConvergenceError, ParameterError, StructuralError
from services.matrix_io import matrix_from_payload


def _log(msg, *args):
    try:
        current_app.logger.info(msg % args if args else msg)
    except Exception:
        print(msg % args if args else msg)


def error_response(e):
    if isinstance(e, (ParameterError, MatrixParseError)):
        status = 400
    elif isinstance(e, (StructuralError, NonConvergenceError)):
        status = 422
    else:
        status = 500
        _log("Unhandled error: %s", e)
    return jsonify({"error": str(e)}), status


def read_body(request):
    """(body, matrix) from a JSON request carrying {"matrix": <payload>, ...}."""
    data = request.get_json(silent=True)
    if not isinstance(data, dict):
        raise MatrixParseError("request body must be a JSON object")
    if "matrix" not in data:
        raise MatrixParseError("'matrix' is required")
    return data, matrix_from_payload(data["matrix"])


def optional_float(data, key):
    value = data.get(key)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParameterError(f"'{key}' must be a number")
    return float(value)


def optional_int(data, key, default):
    value = data.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParameterError(f"'{key}' must be an integer")
    return value
