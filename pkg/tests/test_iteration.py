import pytest
from hypothesis import given
from hypothesis import strategies as st

from acokit.errors import PreconditionError, ScheduleRejectedError
from acokit.iteration import (
    DecomposedOperator,
    Schedule,
    check_admissible_prefix,
    load_operator,
    load_schedule,
    make_synchronous_schedule,
    run_async,
    run_sync,
    sample_schedule,
)
from acokit import routing


def constant_op():
    dom = ((0, 1), (0, 1))
    return DecomposedOperator.from_table(
        dom, {s: (0, 0) for s in [(0, 0), (0, 1), (1, 0), (1, 1)]})


def swap_op():
    dom = ((0, 1),) * 2
    return DecomposedOperator.from_table(
        dom, {(a, b): (b, a) for a in (0, 1) for b in (0, 1)})


def identity_op(k=2):
    dom = ((0, 1),) * k
    return DecomposedOperator.from_global(dom, lambda s: s)


def test_from_table_validates_totality():
    with pytest.raises(PreconditionError):
        DecomposedOperator.from_table(((0, 1),), {(0,): (0,)})
    with pytest.raises(PreconditionError):
        DecomposedOperator.from_table(((0, 1),), {(0,): (2,), (1,): (0,)})


def test_synchronous_schedule_shape():
    sched = make_synchronous_schedule(1, 3)
    assert sched.activations == (frozenset({0}),) * 3
    assert [sched.delays[t - 1][0][0] for t in (1, 2, 3)] == [0, 1, 2]
    sched2 = make_synchronous_schedule(2, 2)
    assert all(a == frozenset({0, 1}) for a in sched2.activations)
    assert check_admissible_prefix(sched2).ok


def test_sample_schedule_deterministic_and_admissible():
    a = sample_schedule(2, 50, 7, max_staleness=5, fairness_window=8)
    b = sample_schedule(2, 50, 7, max_staleness=5, fairness_window=8)
    assert a == b
    assert check_admissible_prefix(a).ok


def test_sample_schedule_degenerate_parameters_are_synchronous():
    sampled = sample_schedule(3, 10, 123, activation_prob=1.0,
                              max_staleness=1, fairness_window=1)
    reference = make_synchronous_schedule(3, 10)
    assert sampled.activations == reference.activations
    assert sampled.delays == reference.delays


@given(st.integers(min_value=0, max_value=10_000),
       st.integers(min_value=1, max_value=4),
       st.integers(min_value=1, max_value=6))
def test_sampled_schedules_always_admissible(seed, k, staleness):
    sched = sample_schedule(k, 40, seed, max_staleness=staleness,
                            fairness_window=8)
    assert check_admissible_prefix(sched).ok


def test_sample_schedule_rejects_bad_parameters():
    with pytest.raises(ScheduleRejectedError):
        sample_schedule(2, 10, 0, activation_prob=0.0)
    with pytest.raises(ScheduleRejectedError):
        sample_schedule(2, 10, 0, activation_prob=0.1, fairness_window=3)
    with pytest.raises(ScheduleRejectedError):
        sample_schedule(2, 10, 0, max_staleness=0)


def _tweak(schedule, **changes):
    fields = dict(
        processors=schedule.processors, horizon=schedule.horizon,
        activations=schedule.activations, delays=schedule.delays,
        staleness_bound=schedule.staleness_bound,
        fairness_window=schedule.fairness_window)
    fields.update(changes)
    return Schedule(**fields)


def test_checker_flags_causality_violation():
    sched = make_synchronous_schedule(2, 4)
    delays = [list(list(r) for r in row) for row in sched.delays]
    delays[2][0][1] = 3  # beta(3, 0, 1) = 3, not in the past
    bad = _tweak(sched, delays=tuple(tuple(tuple(r) for r in row)
                                     for row in delays))
    report = check_admissible_prefix(bad)
    assert not report.ok
    assert report.violation[0] == "causality"
    assert report.violation[1:4] == (3, 0, 1)


def test_checker_flags_staleness_violation():
    sched = make_synchronous_schedule(2, 10)
    delays = [list(list(r) for r in row) for row in sched.delays]
    delays[7][1][0] = 2  # age 6 exceeds the claimed bound below
    bad = _tweak(sched, delays=tuple(tuple(tuple(r) for r in row)
                                     for row in delays),
                 staleness_bound=3)
    report = check_admissible_prefix(bad)
    assert not report.ok
    assert report.violation[0] == "staleness"


def test_checker_flags_fairness_violation():
    sched = make_synchronous_schedule(2, 8)
    acts = [frozenset({0}) if t > 0 else frozenset({0, 1})
            for t in range(8)]
    bad = _tweak(sched, activations=tuple(acts), fairness_window=3)
    report = check_admissible_prefix(bad)
    assert not report.ok
    kind, window, proc = report.violation
    assert kind == "fairness" and proc == 1 and window == (2, 4)


def test_run_sync_fixed_point_start():
    traj = run_sync(constant_op(), (0, 0), 10)
    assert traj.status == "converged"
    assert traj.converged_at == 0


def test_run_sync_detects_two_cycle():
    traj = run_sync(swap_op(), (0, 1), 10)
    assert traj.status == "cycle"
    assert traj.cycle_length == 2
    assert traj.converged_at is None


def test_run_sync_ring3_reaches_fixed_point(ring3):
    op = routing.decompose(ring3, routing.PER_NODE)
    start = routing.state_to_components(ring3, routing.PER_NODE, frozenset())
    traj = run_sync(op, start, 20)
    assert traj.status == "converged"
    assert traj.converged_at <= 3
    assert routing.components_to_state(traj.final) == \
        frozenset({("d",), ("1", "d"), ("2", "d")})


def test_run_async_identity_constant_trajectory():
    sched = sample_schedule(2, 30, 5)
    traj = run_async(identity_op(), (1, 0), sched)
    assert set(traj.states) == {(1, 0)}
    assert traj.status == "converged"
    assert traj.converged_at == 0


def test_run_async_under_synchronous_schedule_equals_run_sync(ring3):
    op = routing.decompose(ring3, routing.PER_NODE)
    start = routing.state_to_components(ring3, routing.PER_NODE, frozenset())
    sync_traj = run_sync(op, start, 30)
    sched = make_synchronous_schedule(op.processors, 30)
    async_traj = run_async(op, start, sched)
    n = len(sync_traj.states)
    assert async_traj.states[:n] == sync_traj.states
    assert async_traj.converged_at == sync_traj.converged_at


def test_run_async_ring3_seed7_matches_sync_fixed_point(ring3):
    op = routing.decompose(ring3, routing.PER_NODE)
    start = routing.state_to_components(ring3, routing.PER_NODE, frozenset())
    sync_fp = run_sync(op, start, 30).final
    sched = sample_schedule(op.processors, 200, 7, max_staleness=5,
                            fairness_window=8)
    traj = run_async(op, start, sched)
    assert traj.status == "converged"
    assert traj.final == sync_fp


def test_run_async_requires_admissible_schedule():
    sched = make_synchronous_schedule(2, 4)
    delays = [list(list(r) for r in row) for row in sched.delays]
    delays[0][0][0] = 0
    delays[1][0][0] = 3
    bad = _tweak(sched, delays=tuple(tuple(tuple(r) for r in row)
                                     for row in delays))
    with pytest.raises(PreconditionError):
        run_async(identity_op(), (0, 0), bad)


def test_frozen_processor_keeps_value():
    # processor 1 never activates after tick 1; its value must stay put
    op = DecomposedOperator.from_global(
        ((0, 1), (0, 1)), lambda s: (1, 1 - s[1]))
    acts = (frozenset({0, 1}),) + tuple(frozenset({0}) for _ in range(9))
    delays = tuple(
        tuple(tuple(t - 1 for _ in range(2)) for _ in range(2))
        for t in range(1, 11))
    sched = Schedule(2, 10, acts, delays, staleness_bound=1,
                     fairness_window=10)
    traj = run_async(op, (0, 0), sched)
    values = traj.history(1)
    assert len(set(values[1:])) == 1


def test_run_async_determinism(ring3):
    op = routing.decompose(ring3, routing.PER_PATH)
    start = routing.state_to_components(ring3, routing.PER_PATH, frozenset())
    sched = sample_schedule(op.processors, 120, 99)
    t1 = run_async(op, start, sched)
    t2 = run_async(op, start, sched)
    assert t1 == t2


def test_horizon_exhausted_when_quiet_window_missing():
    op = constant_op()
    sched = sample_schedule(2, 3, 11, max_staleness=5, fairness_window=8)
    traj = run_async(op, (1, 1), sched)
    assert traj.status == "horizon-exhausted"
    assert traj.converged_at is None


def test_load_schedule_defaults_and_roundtrip(tmp_path):
    doc = {
        "horizon": 3,
        "processors": 2,
        "activations": [[0, 1], [0], [0, 1]],
        "delays": [[2, 0, 1, 0]],
    }
    sched = load_schedule(doc)
    assert sched.horizon == 3
    assert sched.delays[1][0][1] == 0   # the sparse entry
    assert sched.delays[2][1][0] == 2   # defaulted to t-1
    assert check_admissible_prefix(sched).ok


def test_load_operator_roundtrip(tmp_path):
    doc = {
        "domains": [["x", "y"]],
        "map": [[["x"], ["y"]], [["y"], ["y"]]],
        "start": ["x"],
    }
    op, start = load_operator(doc)
    assert start == ("x",)
    assert op.apply(("x",)) == ("y",)
    traj = run_sync(op, start, 5)
    assert traj.status == "converged"
    assert traj.final == ("y",)
