import dataclasses
import json
import warnings

import numpy as np
import pytest

from stress_sched import instance
from stress_sched.instance import Instance, InstanceFormatError, generate, named_spec, validate
from stress_sched.simulator import build_stream


def test_desk_instance_is_valid(desk):
    assert (desk.m, desk.n_categories, desk.horizon_days) == (20, 2, 7)
    assert validate(desk) == []


def test_generator_is_deterministic():
    a, b = generate(named_spec("desk")), generate(named_spec("desk"))
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())


def test_seed_changes_arrivals_not_structure():
    spec = named_spec("desk")
    a = generate(spec)
    spec["seed"] = 99
    b = generate(spec)
    assert (a.m, a.n_categories, a.horizon_days) == (b.m, b.n_categories, b.horizon_days)
    assert not np.array_equal(a.arrival_rates, b.arrival_rates)


def test_bank_scale_arrival_calibration():
    spec = named_spec("bank1")
    spec["D"] = 30
    ins = generate(spec)
    assert (ins.m, ins.n_categories) == (327, 6)
    stream = build_stream(ins, seed=3)
    counts = np.zeros((2, 24 * 30))
    slot_type = np.array([k % 2 for k in range(ins.n_types)])
    np.add.at(counts, (slot_type[stream.type], stream.slot), 1)
    hours = counts.reshape(2, 30, 24)[:, :, 8:20]
    for l, target in enumerate((1535.0, 620.0)):
        assert abs(hours[l].mean() / target - 1) < 0.05


@pytest.mark.parametrize("field,value,needle", [
    ("cancel_weight", 1.0, "cancel_weight must exceed 1"),
    ("daily_cap", 30.0, "daily_cap"),
])
def test_validate_flags_globals(desk, field, value, needle):
    bad = dataclasses.replace(desk, globals=dataclasses.replace(desk.globals, **{field: value}))
    assert any(needle in p for p in validate(bad))


def test_validate_names_negative_rate(desk):
    rates = desk.arrival_rates.copy()
    rates[1, 0, 9, 3] = -1.0
    problems = validate(dataclasses.replace(desk, arrival_rates=rates))
    assert any("arrival_rates[1][0][9][3]" in p for p in problems)


def test_invalid_document_is_rejected(desk):
    d = desk.to_dict()
    d["globals"]["cancel_weight"] = 0.5
    with pytest.raises(InstanceFormatError, match="cancel_weight"):
        instance.from_dict(d)


def test_save_load_roundtrip(tmp_path, desk):
    path = tmp_path / "desk.json"
    instance.save(desk, path)
    assert instance.load(path) == desk


def test_truncated_file_is_a_parse_error(tmp_path, desk):
    path = tmp_path / "bad.json"
    instance.save(desk, path)
    path.write_text(path.read_text()[:500])
    with pytest.raises(InstanceFormatError, match="parse error"):
        instance.load(path)


def test_unknown_field_warns_and_is_ignored(tmp_path, desk):
    d = desk.to_dict()
    d["colour"] = "blue"
    path = tmp_path / "extra.json"
    path.write_text(json.dumps(d))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        ins = instance.load(path)
    assert any("colour" in str(w.message) for w in caught)
    assert ins == desk


def test_infeasible_spec_rejected():
    spec = named_spec("desk")
    spec["D"] = 0
    with pytest.raises(ValueError, match="D"):
        generate(spec)


def test_type_codes_roundtrip(desk):
    assert isinstance(desk, Instance)
    for code in range(desk.n_types):
        jt = instance.JobType.from_code(code)
        assert jt.code == code
    assert desk.rates_by_type().shape == (desk.n_types, desk.horizon_days, 24)
