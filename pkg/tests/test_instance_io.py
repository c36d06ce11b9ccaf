import pytest

from stochbal.dist import DiscreteDist
from stochbal.instance import (
    Assignment,
    Instance,
    Job,
    gen_adaptivity_gap,
    gen_budgeted_gap,
    gen_random,
    gen_surrogate_gap,
)
from stochbal.io import (
    FormatError,
    instance_from_dict,
    instance_to_dict,
    read_assignment,
    read_instance,
    write_assignment,
    write_instance,
)


def test_instance_validation():
    d = DiscreteDist.point(1.0)
    with pytest.raises(ValueError):
        Instance(2, (Job("a", {0: d}), Job("a", {1: d})))
    with pytest.raises(ValueError):
        Instance(2, (Job("a", {2: d}),))
    with pytest.raises(ValueError):
        Job("a", {})


def test_default_target_is_total_reward():
    d = DiscreteDist.point(1.0)
    inst = Instance(1, (Job("a", {0: d}, 2.0), Job("b", {0: d}, 3.0)))
    assert inst.target == 5.0


def test_assignment_validation():
    inst = Instance(2, (Job("a", {0: DiscreteDist.point(1.0)}),))
    Assignment({"a": 0}).validate(inst)
    with pytest.raises(ValueError, match="forbidden"):
        Assignment({"a": 1}).validate(inst)
    with pytest.raises(ValueError, match="unassigned"):
        Assignment({}).validate(inst)
    Assignment({}).validate(inst, partial=True)


def test_surrogate_gap_shape():
    inst = gen_surrogate_gap(16)
    assert inst.n == 20
    assert len(inst.allowed_pairs()) == 4 + 16 * 16
    with pytest.raises(ValueError):
        gen_surrogate_gap(8)


def test_adaptivity_gap_shape():
    inst = gen_adaptivity_gap(3)
    assert inst.n == 9 and len(inst.allowed_pairs()) == 27


def test_budgeted_gap_fixture():
    f = gen_budgeted_gap(3)
    assert f.m == 2
    assert f.target == pytest.approx(5 + f.eps)
    assert sum(f.rewards[j] for _, j in f.cheap_matching()) < f.target
    assert sum(f.rewards[j] for _, j in f.costly_matching()) >= f.target


def test_random_is_reproducible():
    a = gen_random(3, 6, 7, family="two-point", rewards=True)
    b = gen_random(3, 6, 7, family="two-point", rewards=True)
    assert instance_to_dict(a) == instance_to_dict(b)
    assert instance_to_dict(a) != instance_to_dict(gen_random(3, 6, 8, family="two-point", rewards=True))
    assert a.reward_target is not None


def test_roundtrip(tmp_path):
    inst = gen_random(2, 4, 1, family="uniform-grid", rewards=True)
    path = tmp_path / "inst.json"
    write_instance(inst, path)
    back = read_instance(path)
    assert instance_to_dict(back) == instance_to_dict(inst)
    a = Assignment({"j0": 1})
    write_assignment(a, tmp_path / "a.json")
    assert read_assignment(tmp_path / "a.json") == a


@pytest.mark.parametrize(
    "doc, fragment",
    [
        ({"machines": 0, "jobs": []}, "machines"),
        ({"machines": 1, "jobs": [], "extra": 1}, "unknown field"),
        ({"machines": 1, "jobs": [{"id": "a", "dists": {"x": [[1, 1]]}}]}, "jobs[0]"),
        ({"machines": 1, "jobs": [{"id": "a", "dists": {"0": [[1, 0.5]]}}]}, "sum"),
        ({"machines": 1}, "jobs"),
    ],
)
def test_format_errors(doc, fragment):
    with pytest.raises(FormatError, match=None) as info:
        instance_from_dict(doc)
    assert fragment in str(info.value)


def test_json_syntax_error_has_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"machines": 1,\n "jobs": [}')
    with pytest.raises(FormatError, match="line 2"):
        read_instance(path)
