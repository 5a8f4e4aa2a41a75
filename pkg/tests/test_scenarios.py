import json

import numpy as np
import pytest

from icbf.errors import ConfigError
from icbf.scenarios import (BUILTIN, LAMBDA_S, builtin_document, config_from_document, digest, load_config,
                            load_document, set_path, validate)
from icbf.sim import check_initial_state


@pytest.mark.parametrize("name", sorted(BUILTIN))
def test_builtins_load_and_start_safe(name):
    cfg = config_from_document(builtin_document(name))
    assert cfg.name == name and cfg.dt == 1e-3 and cfg.t_final == 10.0
    assert cfg.barrier.lambda_s == LAMBDA_S[cfg.model]
    check_initial_state(cfg)


def test_unknown_builtin():
    with pytest.raises(ConfigError) as err:
        builtin_document("lidar-localize-analytic")
    assert err.value.field == "name"


def test_file_roundtrip(tmp_path):
    doc = builtin_document("range-avoid-analytic")
    path = tmp_path / "s.json"
    path.write_text(json.dumps(doc, indent=2))
    cfg = load_config(path)
    np.testing.assert_array_equal(cfg.x0.as_vector(), doc["x0"])
    assert load_document(path)[0] == doc
    assert load_document("range-avoid-analytic")[0] == doc


def test_error_reports_field_and_line(tmp_path):
    doc = set_path(builtin_document("bearing-avoid-analytic"), "filter.c", -3.0)
    path = tmp_path / "bad.json"
    text = json.dumps(doc, indent=2)
    path.write_text(text)
    with pytest.raises(ConfigError) as err:
        load_config(path)
    assert err.value.field == "filter.c"
    lines = text.splitlines()
    assert '"c"' in lines[err.value.line - 1]
    assert f"line {err.value.line}" in str(err.value)


@pytest.mark.parametrize("key,value,field", [("dt", 0.0, "dt"), ("model", "sonar", "model"),
                                             ("barrier.kappa", "big", "barrier.kappa"),
                                             ("x0", [0.0, 1.0], "x0"), ("surprise", 1, "surprise")])
def test_schema_rejections(key, value, field):
    with pytest.raises(ConfigError) as err:
        validate(set_path(builtin_document("range-localize-analytic"), key, value))
    assert err.value.field == field


def test_missing_required_field():
    doc = builtin_document("range-localize-analytic")
    del doc["beacons"]
    with pytest.raises(ConfigError) as err:
        validate(doc)
    assert err.value.field == "beacons"


def test_invalid_json_line(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "name": "x",\n  "model": \n}\n')
    with pytest.raises(ConfigError) as err:
        load_document(path)
    assert err.value.line == 4


def test_missing_file():
    with pytest.raises(ConfigError):
        load_document("/nonexistent/scenario.json")


def test_semantic_errors_become_config_errors():
    doc = set_path(builtin_document("range-localize-analytic"), "beacons", [[0.0, 0.0], [0.0, 0.0]])
    with pytest.raises(ConfigError):
        config_from_document(doc)


def test_digest_stable():
    doc = builtin_document("bearing-localize-anticrossing")
    shuffled = json.loads(json.dumps(dict(reversed(list(doc.items())))))
    assert digest(doc) == digest(shuffled)
    assert digest(doc) != digest(set_path(doc, "filter.c", 2.0))
    assert len(digest(doc)) == 64


def test_set_path_copies():
    doc = builtin_document("range-localize-analytic")
    new = set_path(doc, "nls.max_iters", 7)
    assert new["nls"]["max_iters"] == 7 and doc.get("nls", {}).get("max_iters") != 7
    with pytest.raises(ConfigError):
        set_path(doc, "dt.inner", 1)
