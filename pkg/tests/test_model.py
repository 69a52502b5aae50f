"""Model schema, weight tables and structural assumption checks."""

import json
from fractions import Fraction

import pytest

from parkflux.model import (
    CatalyticPolynomial,
    WeightFunction,
    bundled_model_names,
    load_model,
    planar_map_model,
    unit_spot_model,
)


def test_bundled_models_load():
    for name in bundled_model_names():
        wf = load_model(name)
        assert wf.validate_assumptions().ok


def test_planar_map_basics(planar):
    assert planar.K == 2
    assert planar.max_arity() >= 1
    # weights are positive rationals
    for c, spots, w in planar.entries():
        assert w > 0
        assert all(s >= 0 for s in spots)


def test_weight_function_roundtrip(tmp_path, planar):
    path = tmp_path / "m.json"
    planar.save(path)
    again = WeightFunction.load(path)
    assert sorted(again.entries()) == sorted(planar.entries())
    assert again.K == planar.K


def test_entries_exchangeable(planar, unit):
    """Every spot arrangement of a multiset carries the same weight."""
    for wf in (planar, unit):
        by_multiset = {}
        for c, spots, w in wf.entries():
            by_multiset.setdefault((c, tuple(sorted(spots))), set()).add(w)
        for key, weights in by_multiset.items():
            assert len(weights) == 1, key


def test_polynomial_view_roundtrip(planar):
    poly = planar.to_polynomial()
    again = WeightFunction.from_polynomial(planar.name, poly)
    assert again.to_polynomial() == poly


def test_validate_flags_unbounded():
    wf = planar_map_model()
    report = wf.validate_assumptions()
    assert report.ok
    assert report.to_dict()["bounded"]


def test_load_model_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"not": "a model"}))
    with pytest.raises(Exception):
        load_model(str(bad))
