import json

import pytest
from hypothesis import given, settings, strategies as st

from avpark.errors import InvalidConfigError
from avpark.formats import (assignment_from_text, assignment_to_text, config_from_text,
                            config_to_text, instance_from_text, instance_to_text)
from avpark.instance import GeneratorConfig, generate_instance
from avpark.model import Assignment, export_lp

from helpers import build


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), mode=st.sampled_from(["random", "charging"]))
def test_instance_round_trip(seed, mode):
    inst = generate_instance(GeneratorConfig(n_avs=5, n_facilities=2, D=15, seed=seed,
                                             beta_mode=mode))
    text = instance_to_text(inst)
    back = instance_from_text(text)
    assert instance_to_text(back) == text
    assert export_lp(back) == export_lp(inst)


def test_explicit_distance_instance_round_trip():
    inst = build(5, [{"t_start": 1, "t_end": 7, "km": 2.5, "d_max": 4.0}], [([0] * 5, 1)])
    assert instance_to_text(instance_from_text(instance_to_text(inst))) == instance_to_text(inst)


def test_assignment_round_trip():
    a = Assignment((0, None, 1), ((1, 2), (), (4,)))
    text = assignment_to_text(a, {"solver": "exact"})
    assert assignment_from_text(text) == a
    assert json.loads(text)["solver"] == "exact"


def test_config_round_trip_and_unknown_keys():
    cfg = GeneratorConfig(n_avs=3, n_facilities=1, seed=1)
    assert config_from_text(config_to_text(cfg)) == cfg
    doc = json.loads(config_to_text(cfg))
    doc["colour"] = "red"
    with pytest.raises(InvalidConfigError):
        config_from_text(json.dumps(doc))


@pytest.mark.parametrize("text", ["", "{", "[]", '{"format": "avpark-assignment", "version": 1}',
                                  '{"format": "something-else", "version": 1}'])
def test_malformed_documents_rejected(text):
    with pytest.raises(InvalidConfigError):
        instance_from_text(text)
