import json

import pytest


@pytest.fixture
def write_json(tmp_path):
    def _write(obj, name="matrix.json"):
        path = tmp_path / name
        path.write_text(json.dumps(obj))
        return path
    return _write
