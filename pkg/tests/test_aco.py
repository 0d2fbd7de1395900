import itertools
import random

import pytest

from acokit import routing
from acokit.aco import (
    BoxSequence,
    boxes_from_ultrametric,
    box_members,
    certify_aco,
    equivalence_census,
    search_box_sequence,
    search_ultrametric,
    ultrametric_from_boxes,
    verify_box_sequence,
)
from acokit.errors import MalformedBoxError, PreconditionError, SizeLimitError
from acokit.iteration import DecomposedOperator
from acokit.ultrametric import (
    Ball,
    ball_members,
    check_axioms,
    classify_contraction,
)

DOM22 = ((0, 1), (0, 1))
STATES22 = list(itertools.product((0, 1), (0, 1)))


def op_from_map(mapping):
    return DecomposedOperator.from_table(DOM22, mapping)


def constant_op(target=(0, 0)):
    return op_from_map({s: target for s in STATES22})


def identity_op():
    return op_from_map({s: s for s in STATES22})


def swap_op():
    return op_from_map({(a, b): (b, a) for a, b in STATES22})


def test_verify_accepts_constant_certificate():
    seq = BoxSequence(
        (((0,), (0,)), ((0, 1), (0, 1))), (0, 0))
    assert verify_box_sequence(constant_op(), seq).ok


def test_verify_rejects_identity_with_constant_boxes():
    seq = BoxSequence(
        (((0,), (0,)), ((0, 1), (0, 1))), (0, 0))
    report = verify_box_sequence(identity_op(), seq)
    assert not report.ok
    assert report.violated == "condition-4"


def test_verify_rejects_wrong_outer_box():
    seq = BoxSequence((((0,), (0,)), ((0, 1), (0,))), (0, 0))
    report = verify_box_sequence(constant_op(), seq)
    assert report.violated == "condition-2"


def test_verify_rejects_non_nested_boxes():
    seq = BoxSequence(
        (((0,), (0,)), ((1,), (0, 1)), ((0, 1), (0, 1))), (0, 0))
    report = verify_box_sequence(constant_op(), seq)
    assert report.violated == "condition-3"


def test_malformed_box_detected():
    with pytest.raises(MalformedBoxError):
        BoxSequence((((0,), ()),), (0, 0))
    seq = BoxSequence((((0,), (7,)), ((0, 1), (0, 1))), (0, 7))
    with pytest.raises(MalformedBoxError):
        verify_box_sequence(constant_op(), seq)


def test_search_finds_constant_chain():
    seq = search_box_sequence(constant_op())
    assert seq is not None
    assert seq.fixed_point == (0, 0)
    assert seq.boxes[0] == ((0,), (0,))
    assert seq.boxes[-1] == ((0, 1), (0, 1))
    assert verify_box_sequence(constant_op(), seq).ok


def test_search_refuses_swap_and_identity():
    assert search_box_sequence(swap_op()) is None
    assert search_box_sequence(identity_op()) is None


def test_search_size_limit():
    wide = DecomposedOperator.from_global(
        (tuple(range(7)),) * 5, lambda s: s)
    with pytest.raises(SizeLimitError):
        search_box_sequence(wide, max_boxes=100)


def test_search_ultrametric_examples():
    found = search_ultrametric(constant_op())
    assert found is not None
    assert classify_contraction(found, constant_op().apply).qualifies()
    assert search_ultrametric(swap_op()) is None
    # multiple fixed points disqualify regardless of metric
    assert search_ultrametric(identity_op()) is None


def test_boxes_from_ultrametric_requires_qualifying_map(ring3):
    space = routing.state_space(ring3, routing.PER_NODE)
    op = routing.decompose(ring3, routing.PER_NODE)
    swapped = swap_op()
    with pytest.raises(PreconditionError):
        boxes_from_ultrametric(space, swapped)
    seq = boxes_from_ultrametric(space, op)
    assert verify_box_sequence(op, seq).ok
    # one box per distinct ball radius about the fixed point
    fixed = seq.fixed_point
    distinct = {frozenset(
        e for e in space.elements
        if space.distance_index(fixed, e) <= r)
        for r in range(len(space.scale))}
    assert len(seq.boxes) == len(distinct)


def test_ultrametric_from_boxes_distances():
    seq = BoxSequence(((("a",),), (("a", "b"),)), ("a",))
    space = ultrametric_from_boxes(seq)
    assert space.distance(("a",), ("b",)) == 1
    assert space.distance(("a",), ("a",)) == 0
    assert check_axioms(space).ok


def test_ultrametric_from_boxes_rejects_non_nested():
    seq = BoxSequence.__new__(BoxSequence)  # bypass normalization on purpose
    object.__setattr__(seq, "boxes", ((("a",),), (("b",),)))
    object.__setattr__(seq, "fixed_point", ("a",))
    with pytest.raises(PreconditionError):
        ultrametric_from_boxes(seq)


def _census_certified_ops():
    ops = []
    for images in itertools.product(STATES22, repeat=4):
        table = dict(zip(STATES22, images))
        op = op_from_map(table)
        seq = search_box_sequence(op)
        if seq is not None:
            ops.append((op, seq))
    return ops


def test_round_trip_on_census_certified():
    ops = _census_certified_ops()
    assert ops, "the census must certify someone"
    for op, seq in ops:
        space = ultrametric_from_boxes(seq)
        # balls about the fixed point reproduce the boxes exactly
        balls = []
        seen = set()
        for r in space.scale.values:
            members = ball_members(Ball(space, seq.fixed_point, r))
            if members not in seen:
                seen.add(members)
                balls.append(members)
        expected = [frozenset(box_members(b)) for b in seq.boxes]
        assert balls == expected
        again = boxes_from_ultrametric(space, op)
        assert again.boxes == seq.boxes
        assert again.fixed_point == seq.fixed_point
        assert verify_box_sequence(op, again).ok


def test_seeded_product_operator_roundtrip():
    rng = random.Random(13)
    # a random strictly contracting operator: send everything one box inward
    chain = [((0,), (0,)), ((0, 1), (0,)), ((0, 1), (0, 1))]
    mapping = {}
    for state in STATES22:
        depth = min(i for i, box in enumerate(chain)
                    if all(v in c for v, c in zip(state, box)))
        target_box = chain[max(depth - 1, 0)]
        mapping[state] = tuple(rng.choice(c) for c in target_box)
    op = op_from_map(mapping)
    seq = search_box_sequence(op)
    assert seq is not None
    assert verify_box_sequence(op, seq).ok


def test_certify_ring3_operator(ring3):
    op = routing.decompose(ring3, routing.PER_NODE)
    cert = certify_aco(op, schedules=10, horizon=64)
    assert cert.certified
    assert cert.sampling["converged"] == cert.sampling["runs"]
    fixed = routing.components_to_state(cert.box_sequence.fixed_point)
    assert fixed == frozenset({("d",), ("1", "d"), ("2", "d")})


def test_certify_refutes_identity():
    cert = certify_aco(identity_op(), schedules=2, horizon=16)
    assert not cert.certified
    assert len(cert.refutation["fixed_points"]) == 4


def test_certify_refutes_oscillator(disagree_repaired):
    op = routing.decompose(disagree_repaired, routing.PER_NODE)
    cert = certify_aco(op, schedules=2, horizon=16, max_boxes=12000)
    assert not cert.certified


def test_census_agreement():
    census = equivalence_census()
    assert census.total == 256
    assert census.agreements == 256
    assert not census.mismatches
    assert census.aco_count > 0


def test_sampling_necessity_every_start_hundred_seeds(single_arc):
    # certified operators must converge from every start under every
    # sampled schedule; run the full campaign on two cheap operators
    for op in (constant_op(), routing.decompose(single_arc,
                                                routing.PER_NODE)):
        cert = certify_aco(op, schedules=100, horizon=64)
        assert cert.certified
        assert cert.sampling["runs"] == 100 * op.size()
        assert cert.sampling["converged"] == cert.sampling["runs"]


def test_certificate_json_shape():
    cert = certify_aco(constant_op(), schedules=2, horizon=16)
    doc = cert.to_json_dict()
    assert doc["verdict"] == "certified"
    assert doc["certificate"]["fixed_point"] == [0, 0]
    assert doc["sampling"]["converged"] == doc["sampling"]["runs"]
