import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from acokit.errors import InvalidHeightError, MalformedSpaceError
from acokit.ultrametric import (
    Ball,
    FiniteUltrametricSpace,
    ProductSpace,
    RadiusScale,
    ball_members,
    check_axioms,
    check_ball_is_box,
    check_isosceles,
    check_spherical_completeness,
    classify_contraction,
    height_distance,
    height_space,
    load_space,
    product_distance,
    string_distance,
    string_space,
    CONTRACTION,
    NOT_CONTRACTION,
    STRICT_CONTRACTION,
    STRICT_ON_ORBITS,
)


def brute_force_axioms(elements, dist):
    """Reference checker: direct loops over the definition."""
    for m in elements:
        for n in elements:
            if (dist(m, n) == 0) != (m == n):
                return False
            if dist(m, n) != dist(n, m):
                return False
    for l in elements:
        for m in elements:
            for n in elements:
                if dist(l, n) > max(dist(l, m), dist(m, n)):
                    return False
    return True


def space_from_table(table, scale_values):
    elements = tuple(sorted({m for m, _ in table}))
    scale = RadiusScale(tuple(scale_values))
    return FiniteUltrametricSpace(elements, scale, table)


def test_scale_orders_labels():
    scale = RadiusScale((0, "low", "high"))
    assert scale.zero == 0
    assert scale.less(0, "low") and scale.less("low", "high")
    assert scale.leq("high", "high")
    with pytest.raises(MalformedSpaceError):
        scale.index("absent")


def test_scale_rejects_duplicates():
    with pytest.raises(MalformedSpaceError):
        RadiusScale((0, 1, 1))


def test_single_element_space_passes():
    space = space_from_table({("a", "a"): 0}, (0,))
    assert check_axioms(space).ok


def test_zero_distance_between_distinct_points_violates_identity():
    table = {("a", "a"): 0, ("b", "b"): 0, ("a", "b"): 0, ("b", "a"): 0}
    report = check_axioms(space_from_table(table, (0, 1)))
    assert not report.ok
    assert any(v.axiom == "identity" and set(v.witness) == {"a", "b"}
               for v in report.violations)


def test_ordinary_triangle_is_not_ultra():
    # 1, 1, 2 satisfies the ordinary triangle inequality but 2 > max(1, 1)
    table = {}
    for x in "abc":
        table[(x, x)] = 0
    for x, y, d in [("a", "b", 1), ("b", "c", 1), ("a", "c", 2)]:
        table[(x, y)] = d
        table[(y, x)] = d
    report = check_axioms(space_from_table(table, (0, 1, 2)))
    assert not report.ok
    triangles = [v for v in report.violations if v.axiom == "strong-triangle"]
    assert triangles and set(triangles[0].witness) == {"a", "b", "c"}
    assert not check_isosceles(space_from_table(table, (0, 1, 2))).ok


def test_asymmetric_table_detected():
    table = {("a", "a"): 0, ("b", "b"): 0, ("a", "b"): 1, ("b", "a"): 2}
    report = check_axioms(space_from_table(table, (0, 1, 2)))
    assert any(v.axiom == "symmetry" for v in report.violations)


def test_missing_entry_is_malformed():
    with pytest.raises(MalformedSpaceError):
        space_from_table({("a", "a"): 0, ("b", "b"): 0, ("a", "b"): 1},
                         (0, 1))


def test_string_distance_examples():
    assert string_distance("abc", "abc") == 0
    assert string_distance("abc", "abd") == Fraction(1, 4)
    assert string_distance("x", "yx") == 1
    # prefixes differ at the first absent index
    assert string_distance("ab", "abc") == Fraction(1, 4)


@given(st.lists(st.text(alphabet="abc", max_size=4),
                min_size=3, max_size=3, unique=True))
def test_string_distance_is_ultrametric(strings):
    x, y, z = strings
    assert string_distance(x, z) <= max(string_distance(x, y),
                                        string_distance(y, z))


def test_height_distance_examples():
    h = {"a": 3, "b": 5}
    assert height_distance(h, "a", "a") == 0
    assert height_distance(h, "a", "b") == 5


def test_height_distance_rejects_zero_height():
    with pytest.raises(InvalidHeightError):
        height_distance({"a": 0, "b": 1}, "a", "b")


def test_height_space_passes_axioms():
    space = height_space(("a", "b", "c"), {"a": 3, "b": 5, "c": 5})
    assert check_axioms(space).ok
    assert space.distance("b", "c") == 5


@given(st.lists(st.integers(min_value=1, max_value=6),
                min_size=1, max_size=6))
def test_random_height_spaces_pass_axioms(heights):
    elements = tuple(range(len(heights)))
    table = dict(zip(elements, heights))
    space = height_space(elements, table)
    assert check_axioms(space).ok
    assert check_isosceles(space).ok
    assert brute_force_axioms(elements, space.distance)


def _random_height_space(rng, size, name):
    elements = tuple(f"{name}{i}" for i in range(size))
    heights = {e: rng.randint(1, 4) for e in elements}
    scale = RadiusScale((0, 1, 2, 3, 4))
    return height_space(elements, heights, scale)


def test_ball_members_and_recentering():
    space = height_space(("a", "b", "c"), {"a": 3, "b": 5, "c": 5})
    assert ball_members(Ball(space, "a", 0)) == {"a"}
    top = space.scale.top
    assert ball_members(Ball(space, "a", top)) == set(space.elements)
    for center in space.elements:
        for radius in space.scale.values:
            members = ball_members(Ball(space, center, radius))
            for other in members:
                assert ball_members(Ball(space, other, radius)) == members


def test_balls_nest_or_are_disjoint():
    rng = random.Random(7)
    space = _random_height_space(rng, 8, "e")
    balls = {ball_members(Ball(space, c, r))
             for c in space.elements for r in space.scale.values}
    for a, b in itertools.combinations(balls, 2):
        assert not (a & b) or a <= b or b <= a


def test_spherical_completeness_small_cases():
    one = space_from_table({("a", "a"): 0}, (0,))
    assert check_spherical_completeness(one).ok
    two = space_from_table(
        {("a", "a"): 0, ("b", "b"): 0, ("a", "b"): 1, ("b", "a"): 1}, (0, 1))
    assert check_spherical_completeness(two).ok
    dh = height_space(("a", "b", "c"), {"a": 3, "b": 5, "c": 5})
    assert check_spherical_completeness(dh).ok


def test_product_distance_examples():
    scale = RadiusScale((0, 1, 2, 3))
    left = height_space(("a", "a'"), {"a": 1, "a'": 1}, scale)
    right = height_space(("b", "b'"), {"b": 3, "b'": 2}, scale)
    product = ProductSpace((left, right))
    assert product.dimension == 2
    assert product_distance(product, ("a", "b"), ("a", "b")) == 0
    assert product_distance(product, ("a", "b"), ("a'", "b")) == 1
    assert product_distance(product, ("a", "b"), ("a'", "b'")) == 3
    with pytest.raises(MalformedSpaceError):
        product_distance(product, ("a",), ("a", "b"))
    assert check_axioms(product).ok
    assert check_isosceles(product).ok


def test_product_scale_must_match():
    a = height_space(("x",), {"x": 1})
    b = height_space(("y",), {"y": 2})
    with pytest.raises(MalformedSpaceError):
        ProductSpace((a, b))


def test_every_product_ball_is_box():
    rng = random.Random(20240803)
    for trial in range(10):
        comps = tuple(
            _random_height_space(rng, rng.randint(2, 3), f"c{trial}_{i}_")
            for i in range(rng.randint(2, 3)))
        product = ProductSpace(comps)
        for _ in range(5):
            center = rng.choice(product.elements)
            radius = rng.choice(product.scale.values)
            assert check_ball_is_box(product, Ball(product, center, radius))


def test_classify_identity_is_strict_on_orbits():
    space = height_space(("a", "b"), {"a": 1, "b": 1})
    report = classify_contraction(space, lambda m: m)
    assert report.classification == STRICT_ON_ORBITS
    assert report.witness is not None  # pair witnessing non-strictness


def test_classify_constant_map_is_strict():
    space = height_space(("a", "b", "c"), {"a": 1, "b": 2, "c": 2})
    report = classify_contraction(space, lambda m: "a")
    assert report.classification == STRICT_CONTRACTION
    assert report.witness is None


def test_classify_swap_is_contraction_only():
    space = height_space(("a", "b"), {"a": 1, "b": 1})
    swap = {"a": "b", "b": "a"}
    report = classify_contraction(space, swap)
    assert report.classification == CONTRACTION
    assert report.witness == ("a",)


def test_classify_expansion_is_not_contraction():
    table = {}
    for x in "abc":
        table[(x, x)] = 0
    for x, y, d in [("a", "b", 1), ("b", "c", 2), ("a", "c", 2)]:
        table[(x, y)] = d
        table[(y, x)] = d
    space = space_from_table(table, (0, 1, 2))
    sigma = {"a": "a", "b": "c", "c": "c"}  # moves the close pair apart
    report = classify_contraction(space, sigma)
    assert report.classification == NOT_CONTRACTION
    assert report.witness == ("a", "b")


def test_string_space_samples_pass_axioms():
    space = string_space(("", "a", "ab", "abc", "b", "ba"))
    assert check_axioms(space).ok
    assert check_isosceles(space).ok


def test_load_space_defaults_and_validation(tmp_path):
    doc = {"elements": ["a", "b"], "scale": ["0", "1"],
           "dist": [["a", "b", "1"]]}
    space = load_space(doc)
    assert space.distance("b", "a") == "1"  # defaulted from the other order
    assert space.distance("a", "a") == "0"  # diagonal defaulted
    with pytest.raises(MalformedSpaceError):
        load_space({"elements": ["a"], "scale": ["1", "0"], "dist": []})
    with pytest.raises(MalformedSpaceError):
        load_space({"elements": ["a"], "scale": ["0"],
                    "dist": [["a", "z", "0"]]})
