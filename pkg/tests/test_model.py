import json

import numpy as np
import pytest

from kpls.cg import fit_cg, predict
from kpls.errors import ConfigError
from kpls.model import KplsModel, load_model, save_model

from conftest import random_dataset


def _model(rng):
    ds, spec = random_dataset(rng, 25)
    tr = fit_cg(ds, spec, m_max=3)
    m = KplsModel(spec, np.array(ds.X), np.array(tr.g.coeffs), ds.y_mean, ds.y_scale, tr.steps,
                  {"name": "fixed", "m": 3})
    return m, ds, spec, tr


def test_predict_matches_in_memory(rng):
    m, ds, spec, tr = _model(rng)
    Xn = rng.uniform(-1, 1, size=(7, 2))
    np.testing.assert_array_equal(m.predict(Xn), predict(ds, spec, tr.g, Xn))


def test_round_trip_is_exact(rng, tmp_path):
    m, ds, spec, tr = _model(rng)
    path = tmp_path / "m.json"
    save_model(m, path)
    back = load_model(path)
    Xn = rng.uniform(-1, 1, size=(11, 2))
    np.testing.assert_array_equal(back.predict(Xn), m.predict(Xn))
    assert back.spec == m.spec and back.chosen_m == m.chosen_m and back.rule == m.rule


def test_schema_and_digest_checks(rng, tmp_path):
    m, *_ = _model(rng)
    d = m.to_dict()
    assert d["schema_version"] == 1
    bad = dict(d, schema_version=2)
    with pytest.raises(ConfigError):
        KplsModel.from_dict(bad)
    tampered = json.loads(json.dumps(d))
    tampered["X_train"][0][0] += 1.0
    with pytest.raises(ConfigError):
        KplsModel.from_dict(tampered)
    with pytest.raises(ConfigError):
        KplsModel.from_dict({"schema_version": 1})
    p = tmp_path / "broken.json"
    p.write_text("not json")
    with pytest.raises(ConfigError):
        load_model(p)
