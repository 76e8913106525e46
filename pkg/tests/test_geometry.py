import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import contains, fk_complex, near_contact, sample_box, sampled_intersect
from planfolio.env_gen import Problem, generate_arm_problem, generate_nav_problem, make_rng
from planfolio.geometry import (ArmSpec, BlockRobot, CollisionChecker, InvalidConfigurationError,
                                OrientedBox, Workspace, boxes_intersect, config_collides,
                                end_effector, forward_kinematics, interpolate, motion_valid,
                                normalize_angle, separation_margin)

coord = st.floats(-2, 2, allow_nan=False)
extent = st.floats(0.01, 1.0, allow_nan=False)
angle = st.floats(-math.pi, math.pi, allow_nan=False)
boxes = st.builds(lambda cx, cy, hx, hy, a: OrientedBox((cx, cy), (hx, hy), a),
                  coord, coord, extent, extent, angle)


def random_box(rng, spread=1.0):
    return OrientedBox(tuple(rng.uniform(-spread, spread, 2)), tuple(rng.uniform(0.05, 0.6, 2)),
                       rng.uniform(-math.pi, math.pi))


def empty_nav(start=(0.2, 0.0, 0.0), goal=(0.7, 0.9, 1.0), obstacles=()):
    return Problem("t", BlockRobot(), tuple(obstacles), tuple(start), tuple(goal), Workspace(), 0)


# --- normalize_angle -----------------------------------------------------

@pytest.mark.parametrize("a,expected", [(0.0, 0.0), (math.pi, math.pi), (-math.pi, math.pi),
                                        (3 * math.pi, math.pi), (2 * math.pi, 0.0)])
def test_normalize_angle_fixed_points(a, expected):
    assert normalize_angle(a) == pytest.approx(expected, abs=1e-12)


@given(st.floats(-1e3, 1e3, allow_nan=False))
def test_normalize_angle_range_and_equivalence(a):
    r = normalize_angle(a)
    assert -math.pi < r <= math.pi
    assert math.cos(r) == pytest.approx(math.cos(a), abs=1e-9)
    assert math.sin(r) == pytest.approx(math.sin(a), abs=1e-9)


# --- OrientedBox ---------------------------------------------------------

def test_box_rejects_nonpositive_extents():
    with pytest.raises(ValueError):
        OrientedBox((0, 0), (0.0, 1.0))
    with pytest.raises(ValueError):
        OrientedBox((0, 0), (1.0, -1.0))


def test_box_angle_is_normalized():
    assert OrientedBox((0, 0), (1, 1), 3 * math.pi).angle == pytest.approx(math.pi)


# --- boxes_intersect -----------------------------------------------------

def test_far_apart_boxes_do_not_intersect():
    a = OrientedBox((0, 0), (0.5, 0.5))
    b = OrientedBox((10, 10), (0.5, 0.5))
    assert not boxes_intersect(a, b)


@given(boxes)
def test_box_intersects_itself(a):
    assert boxes_intersect(a, a)


def test_rotated_overlap_matches_sampling_oracle():
    a = OrientedBox((0, 0), (1, 0.2), 0.0)
    b = OrientedBox((0.9, 0), (1, 0.2), math.pi / 4)
    # frozen from sampled_intersect(a, b) with 10^6 points of b
    assert sampled_intersect(a, b) is True
    assert boxes_intersect(a, b) is True


def test_touching_edges_count_as_collision():
    a = OrientedBox((0, 0), (0.5, 0.5))
    b = OrientedBox((1.0, 0), (0.5, 0.5))
    assert boxes_intersect(a, b)
    assert not boxes_intersect(a, OrientedBox((1.0 + 1e-9, 0), (0.5, 0.5)))


@given(boxes, boxes)
def test_intersection_is_symmetric(a, b):
    assert boxes_intersect(a, b) == boxes_intersect(b, a)


@given(boxes, boxes, coord, coord, angle)
def test_intersection_invariant_under_rigid_motion(a, b, tx, ty, rot):
    if abs(separation_margin(a, b)) < 1e-9:
        return  # rounding can flip exact contact
    c, s = math.cos(rot), math.sin(rot)

    def move(box):
        x, y = box.center
        return OrientedBox((c * x - s * y + tx, s * x + c * y + ty), box.half_extents,
                           box.angle + rot)

    assert boxes_intersect(move(a), move(b)) == boxes_intersect(a, b)


@given(boxes, boxes)
def test_separation_margin_sign_agrees(a, b):
    m = separation_margin(a, b)
    if abs(m) > 1e-12:
        assert boxes_intersect(a, b) == (m < 0)


def test_sat_agrees_with_sampling_on_random_pairs():
    rng = make_rng(2024, 1)
    checked = 0
    while checked < 40:
        a, b = random_box(rng), random_box(rng)
        if near_contact(a, b):
            continue
        assert boxes_intersect(a, b) == sampled_intersect(a, b, 200_000), (a, b)
        checked += 1


# --- forward kinematics ----------------------------------------------------

SPEC3 = ArmSpec((0.45, 0.45), (0.15, 0.12, 0.1), (0.03, 0.03, 0.03))


def test_fk_zero_pose_is_collinear():
    links = forward_kinematics(SPEC3, [0, 0, 0])
    prior = 0.0
    for box, length in zip(links, SPEC3.link_lengths):
        assert box.center == pytest.approx((0.45 + prior + length / 2, 0.45))
        assert box.angle == pytest.approx(0.0)
        assert box.half_extents == pytest.approx((length / 2, 0.015))
        prior += length


def test_fk_single_link_quarter_turn():
    spec = ArmSpec((0.0, 0.0), (2.0,), (0.2,))
    (box,) = forward_kinematics(spec, [math.pi / 2])
    assert box.angle == pytest.approx(math.pi / 2)
    assert box.center == pytest.approx((0.0, 1.0), abs=1e-12)


@given(st.lists(angle, min_size=3, max_size=3))
def test_end_effector_matches_complex_rotation(q):
    assert end_effector(SPEC3, q) == pytest.approx(fk_complex(SPEC3.base, SPEC3.link_lengths, q),
                                                   abs=1e-12)
    tip_box = forward_kinematics(SPEC3, q)[-1]
    c = math.cos(tip_box.angle)
    s = math.sin(tip_box.angle)
    far = (tip_box.center[0] + c * tip_box.half_extents[0],
           tip_box.center[1] + s * tip_box.half_extents[0])
    assert far == pytest.approx(end_effector(SPEC3, q), abs=1e-12)


def test_fk_dimension_mismatch():
    with pytest.raises(InvalidConfigurationError):
        forward_kinematics(SPEC3, [0, 0])


# --- config_collides -------------------------------------------------------

def test_empty_workspace_never_collides():
    rng = make_rng(3)
    p = empty_nav()
    for _ in range(50):
        q = (rng.uniform(0, 0.9), rng.uniform(0, 0.9), rng.uniform(-math.pi, math.pi))
        assert not config_collides(p, q)


def test_block_over_smaller_obstacle_collides():
    p = empty_nav(obstacles=[OrientedBox((0.5, 0.5), (0.01, 0.01))])
    assert config_collides(p, (0.5, 0.5, 0.3))


def test_block_center_outside_bounds_collides():
    p = empty_nav()
    assert config_collides(p, (0.95, 0.5, 0.0))
    assert not config_collides(p, (0.9, 0.0, 0.0))


def test_dimension_mismatch_raises():
    with pytest.raises(InvalidConfigurationError):
        config_collides(empty_nav(), (0.1, 0.1))


def test_arm_adjacent_links_are_exempt_but_folded_arm_collides():
    p = Problem("a", SPEC3, (), (0, 0, 0), (0, 0, 0), Workspace(), 0)
    assert not config_collides(p, (0.0, 0.0, 0.0))
    # fold link 3 back over link 1
    assert config_collides(p, (0.0, math.pi - 0.05, math.pi - 0.05))


def _oracle_collides(problem, q, n=1_000_000):
    """Point-sampling reference for config_collides."""
    checker = CollisionChecker.for_problem(problem)
    bodies = checker.robot_boxes(q)
    lo, hi = np.array(problem.workspace.lo), np.array(problem.workspace.hi)
    if problem.kind == "nav2d":
        if not (np.all(np.array(q[:2]) >= lo) and np.all(np.array(q[:2]) <= hi)):
            return True
    else:
        corners = np.vstack([b.corners() for b in bodies])
        if np.any(corners < lo - 1e-12) or np.any(corners > hi + 1e-12):
            return True
    per = max(n // max(len(bodies), 1), 4)
    for i, body in enumerate(bodies):
        pts = sample_box(body, per)
        for obs in problem.obstacles:
            if contains(obs, pts).any():
                return True
        for j in range(i + 2, len(bodies)):
            if contains(bodies[j], pts).any():
                return True
    return False


def _margin_case(problem, q):
    checker = CollisionChecker.for_problem(problem)
    bodies = checker.robot_boxes(q)
    pairs = [(b, o) for b in bodies for o in problem.obstacles]
    pairs += [(bodies[i], bodies[j]) for i in range(len(bodies)) for j in range(i + 2, len(bodies))]
    if any(near_contact(a, b) for a, b in pairs):
        return True
    if problem.kind == "arm":
        corners = np.vstack([b.corners() for b in bodies])
        lo, hi = np.array(problem.workspace.lo), np.array(problem.workspace.hi)
        return bool(np.min(np.abs(np.concatenate([corners - lo, hi - corners]))) < 1e-4)
    return False


@pytest.mark.parametrize("kind", ["nav2d", "arm"])
def test_config_collides_matches_sampling_oracle(kind):
    rng = make_rng(77, 0 if kind == "nav2d" else 1)
    done, i = 0, 0
    while done < 25:
        i += 1
        if kind == "nav2d":
            p = generate_nav_problem(int(rng.integers(2**32)))
            q = (rng.uniform(0, 0.9), rng.uniform(0, 0.9), rng.uniform(-math.pi, math.pi))
        else:
            p = generate_arm_problem(int(rng.integers(2**32)))
            q = tuple(rng.uniform(-math.pi, math.pi, 3))
        if _margin_case(p, q):
            continue
        assert config_collides(p, q) == _oracle_collides(p, q, 200_000), (p.id, q)
        done += 1


# --- motion validation -----------------------------------------------------

def test_zero_length_motion_is_valid():
    p = empty_nav()
    assert motion_valid(p, (0.3, 0.3, 0.1), (0.3, 0.3, 0.1))


def test_motion_through_solid_barrier_is_invalid():
    wall = OrientedBox((0.45, 0.45), (0.45, 0.02))
    p = empty_nav(obstacles=[wall])
    assert not motion_valid(p, (0.45, 0.1, 0.0), (0.45, 0.8, 0.0))


def test_interpolate_takes_shortest_arc():
    q = interpolate((0, 0, 3.0), (0, 0, -3.0), 0.5, [False, False, True])
    assert abs(q[2]) == pytest.approx(math.pi, abs=1e-9)
    q = interpolate((0, 0, 0.0), (0, 0, math.pi), 0.5, [False, False, True])
    assert q[2] == pytest.approx(math.pi / 2)   # pi tie goes the positive way


@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_motion_validity_is_monotone_in_resolution(seed, halvings):
    rng = make_rng(seed)
    p = generate_nav_problem(seed)
    checker = CollisionChecker.for_problem(p)
    q0 = np.array([rng.uniform(0, 0.9), rng.uniform(0, 0.9), rng.uniform(-3, 3)])
    q1 = np.array([rng.uniform(0, 0.9), rng.uniform(0, 0.9), rng.uniform(-3, 3)])
    r = 0.05
    coarse = checker.motion(q0, q1, r)[0]
    fine = checker.motion(q0, q1, r / 2 ** halvings)[0]
    if not coarse:
        assert not fine


def test_narrow_gap_refinement_disagreements_are_one_sided():
    rng = make_rng(5150)
    agree = total = 0
    for i in range(60):
        p = generate_nav_problem(int(rng.integers(2**32)))
        checker = CollisionChecker.for_problem(p)
        # crossings through the first barrier gap region
        q0 = np.array([rng.uniform(0, 0.9), 0.0, rng.uniform(-3, 3)])
        q1 = np.array([rng.uniform(0, 0.9), 0.9, rng.uniform(-3, 3)])
        if not (checker.is_valid(q0) and checker.is_valid(q1)):
            continue
        a = checker.motion(q0, q1, 0.01)[0]
        b = checker.motion(q0, q1, 0.0001)[0]
        total += 1
        agree += a == b
        assert not (b and not a), "fine resolution accepted what coarse rejected"
    assert total > 20
    print(f"agreement {agree}/{total}")
