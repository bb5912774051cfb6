import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from envaug.characterizer import characterize
from envaug.controller import ACTION_COMPLETE, ExecutionError
from envaug.design_library import ActionSpec, Behavior
from envaug.elevation_map import apply_patch, segment_traversable
from envaug.planner import (
    FEATURE_AVAILABLE,
    AugmentationDecision,
    Goal,
    SensedEnv,
    SynthesisError,
    TaskSpec,
    candidate_structures,
    decide_augmentation,
    execute_step,
    load_task,
    synthesize,
)
from envaug.simulator import initial_world, load_scenario
from envaug.structures import NO_MATCHING_FEATURE, Infeasible, Inventory


@pytest.fixture(scope="module")
def drawer(scenario_dir):
    return load_scenario(scenario_dir / "drawer.scn")


@pytest.fixture(scope="module")
def bridge(scenario_dir):
    return load_scenario(scenario_dir / "bridge-gap.scn")


def names(ctrl):
    return [s.action.name for s in ctrl.states]


def test_single_drive_goal(design_library):
    ctrl = synthesize(TaskSpec([Goal(ActionSpec("drive", "flat"), "somewhere")]), design_library)
    assert names(ctrl) == ["drive", "done"]
    assert ctrl.step(0, {ACTION_COMPLETE: True}) == 1
    assert ctrl.step(0, {ACTION_COMPLETE: False}) == 0


def test_drawer_controller_has_augmentation_branch(drawer):
    ctrl = synthesize(drawer.task, drawer.design_library, drawer.structures, tuple(drawer.targets))
    ns = names(ctrl)
    for required in ("explore", "drive", "push", "characterize", "selectStructure", "pickUp", "place", "climb"):
        assert required in ns
    assert ns.count("reportInfeasible") == 1
    assert ns.count("done") == 1
    sel = ctrl.find("selectStructure")[0]
    assert sel.action.options == ("ramp-h2",)
    assert ctrl.find("characterize")[0].action.options == ("ledge-h2",)


def test_climbing_behavior_removes_augmentation(drawer):
    lib = drawer.design_library.with_behavior(
        Behavior("driver-tall-step", "driver", "climb", "ledge", (("max_ledge_height", 0.16),))
    )
    ctrl = synthesize(drawer.task, lib, drawer.structures, tuple(drawer.targets))
    ns = names(ctrl)
    assert "characterize" not in ns and "selectStructure" not in ns and "reportInfeasible" not in ns
    assert ns.count("climb") == 1


def test_no_candidate_structures_still_reports_infeasible(drawer):
    ctrl = synthesize(drawer.task, drawer.design_library, (), tuple(drawer.targets))
    sel = ctrl.find("selectStructure")[0]
    assert [ctrl.state(t.target).action.name for t in ctrl.outgoing(sel.id)] == ["reportInfeasible"]
    # goals after the dead end cannot be reached and are dropped
    assert "inspect" not in names(ctrl) and "done" not in names(ctrl)


def test_bridge_controller_structure(bridge):
    ctrl = synthesize(bridge.task, bridge.design_library, bridge.structures, tuple(bridge.targets))
    ns = names(ctrl)
    assert ns[0] == "explore"
    # one spliced plan per candidate bridge
    assert ctrl.find("selectStructure")[0].action.options == ("bridge-240", "bridge-480")
    assert ns.count("transport") == ns.count("placeBridge") == ns.count("cross") == 2


def test_undeclared_target(drawer):
    with pytest.raises(SynthesisError):
        synthesize(drawer.task, drawer.design_library, drawer.structures, ("drawer1",))


def test_unknown_guard():
    with pytest.raises(SynthesisError):
        Goal(ActionSpec("drive", "flat"), "t", ("raining",))


def test_load_task():
    spec = load_task(
        '{"goals": [{"verb": "cross", "environment_class": "flat", '
        '"required_limits": {"max_gap_width": 0.16}, "target": "a", "guards": ["visible:b"]}]}'
    )
    (g,) = spec.goals
    assert g.action.requirement("max_gap_width") == 0.16
    assert spec.targets() == {"a", "b"}
    with pytest.raises(SynthesisError):
        load_task('{"goals": []}')


def test_candidate_structures(structures):
    ledge = candidate_structures(ActionSpec("climb", "ledge", {"max_ledge_height": 0.16}), structures)
    assert [s.name for s in ledge] == ["ramp-h2"]
    gap = candidate_structures(ActionSpec("cross", "flat", {"max_gap_width": 0.16}), structures)
    assert [s.name for s in gap] == ["bridge-240", "bridge-480"]
    wide = candidate_structures(ActionSpec("cross", "flat", {"max_gap_width": 0.60}), structures)
    assert wide == ()


# -- execution -----------------------------------------------------------------


def test_done_is_absorbing(design_library):
    ctrl = synthesize(TaskSpec([Goal(ActionSpec("drive", "flat"), "x")]), design_library)
    done = ctrl.find("done")[0].id
    for v in (True, False):
        assert execute_step(ctrl, done, {ACTION_COMPLETE: v})[0] == done
    assert execute_step(ctrl, done, {})[1].name == "done"


def test_characterize_then_select(drawer):
    ctrl = synthesize(drawer.task, drawer.design_library, drawer.structures, tuple(drawer.targets))
    ch = ctrl.find("characterize")[0].id
    nxt, action = execute_step(ctrl, ch, SensedEnv({FEATURE_AVAILABLE: True}))
    assert action.name == "selectStructure"
    nxt, action = execute_step(ctrl, ch, SensedEnv({FEATURE_AVAILABLE: False}))
    assert action.name == "reportInfeasible"


def test_missing_proposition_is_named(drawer):
    ctrl = synthesize(drawer.task, drawer.design_library, drawer.structures, tuple(drawer.targets))
    ch = ctrl.find("characterize")[0].id
    with pytest.raises(ExecutionError, match=FEATURE_AVAILABLE):
        execute_step(ctrl, ch, {})


@pytest.mark.parametrize("which", ["drawer", "bridge"])
def test_shipped_controllers_deterministic_and_absorbing(which, drawer, bridge):
    scn = drawer if which == "drawer" else bridge
    ctrl = synthesize(scn.task, scn.design_library, scn.structures, tuple(scn.targets))
    assert len(ctrl.states) <= 40
    for s in ctrl.states:
        props = ctrl.propositions(s.id)
        for values in itertools.product((False, True), repeat=len(props)):
            enabled = [t for t in ctrl.outgoing(s.id) if t.enabled(dict(zip(props, values)))]
            assert len(enabled) == 1
            if s.action.is_terminal:
                assert enabled[0].target == s.id


goal_specs = st.sampled_from(
    [
        ActionSpec("drive", "flat"),
        ActionSpec("push", "object"),
        ActionSpec("inspect", "object"),
        ActionSpec("climb", "ledge", {"max_ledge_height": 0.16}),
        ActionSpec("climb", "ledge", {"max_ledge_height": 0.08}),
        ActionSpec("cross", "flat", {"max_gap_width": 0.16}),
        ActionSpec("cross", "flat", {"max_gap_width": 0.36}),
        ActionSpec("cross", "flat", {"max_gap_width": 0.9}),
    ]
)
guards = st.lists(st.sampled_from(["visible:a", "open:b", "reachable:c"]), max_size=2, unique=True)


@given(st.lists(st.tuples(goal_specs, guards), min_size=1, max_size=4))
def test_synthesized_controllers_are_valid(design_library, structures, goals):
    spec = TaskSpec([Goal(a, f"t{i}", g) for i, (a, g) in enumerate(goals)])
    ctrl = synthesize(spec, design_library, structures)
    assert ctrl.nondeterminism() == []
    for s in ctrl.states:
        if s.action.is_terminal:
            assert all(t.target == s.id for t in ctrl.outgoing(s.id))
    assert len(ctrl.find("done")) + len(ctrl.find("reportInfeasible")) >= 1
    assert len(ctrl.find("done")) <= 1 and len(ctrl.find("reportInfeasible")) <= 1
    assert ctrl.reachable() == set(range(len(ctrl.states)))


# -- augmentation decisions ----------------------------------------------------


def _env(scn, emap):
    seg = segment_traversable(emap, scn.segmentation_params)
    result = characterize(emap, seg, list(scn.templates.values()), scn.alpha)
    return SensedEnv({FEATURE_AVAILABLE: bool(result.features)}, result), seg


def test_decide_bridge(bridge):
    env, seg = _env(bridge, bridge.map)
    world = initial_world(bridge)
    goal = bridge.targets["far_table"]
    d = decide_augmentation(
        env, bridge.inventory, world.robot, (goal.x, goal.y), bridge.structures,
        elevation_map=bridge.map, segmentation=seg,
    )
    assert isinstance(d, AugmentationDecision)
    assert d.structure.name == "bridge-240"
    assert d.selection.geometry.gap == pytest.approx(0.16)
    assert [s.action.name for s in d.controller.states][-3:] == ["transport", "placeBridge", "done"]
    r1, r2 = d.region_pair
    patched = segment_traversable(apply_patch(bridge.map, d.selection.placement.patch), bridge.segmentation_params)
    a = patched.cell_to_region(*next(iter(seg.regions[r1].cells)))
    assert a is not None and a == patched.cell_to_region(*next(iter(seg.regions[r2].cells)))


def test_decide_ramp_after_opening_drawer(drawer):
    opened = apply_patch(drawer.map, drawer.targets["drawer1"].open_patch)
    env, seg = _env(drawer, opened)
    world = initial_world(drawer)
    goal = drawer.targets["drawer1_top"]
    d = decide_augmentation(
        env, drawer.inventory, world.robot, (goal.x, goal.y), drawer.structures,
        elevation_map=opened, segmentation=seg,
    )
    assert isinstance(d, AugmentationDecision)
    assert d.structure.name == "ramp-h2"
    assert d.selection.geometry.rise == pytest.approx(0.16)


def test_decide_nothing_available(drawer):
    env = SensedEnv({FEATURE_AVAILABLE: False}, None)
    d = decide_augmentation(
        env, Inventory(), None, (0.0, 0.0), drawer.structures,
        elevation_map=drawer.map, segmentation=segment_traversable(drawer.map),
    )
    assert d == Infeasible(NO_MATCHING_FEATURE)
