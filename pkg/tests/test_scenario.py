from __future__ import annotations

import pytest

from graspsim.scenario import ParseError, ValidationError, load_scenario
from graspsim.simworld import Steering

MINIMAL = """
seed = 42

[object]
id = cup
center = 300 0 0
radius = 25
"""


def test_minimal_file_defaults():
    scn = load_scenario(MINIMAL)
    assert scn.seed == 42
    assert scn.duration_ms == 10_000
    assert scn.hand_pos == (0.0, 0.0, 0.0)
    assert len(scn.objects) == 1
    assert scn.objects[0].label == "cup"  # defaults to the id
    world = scn.build_world()
    assert world.hand_pos == [0.0, 0.0, 0.0]
    assert world.t_ms == 0


def test_full_file_round_trip():
    scn = load_scenario(
        """
seed = 9
duration_ms = 4000
max_speed_mm_s = 300
d_attach_mm = 80

[hand]
position = 10 20 30
yaw = 15
pitch = -5
roll = 2

[object]
id = a
label = bottle
class_id = 2
center = 400 0 0
radius = 30

[steering]
t_ms = 0
velocity = 100 0 0
tilt_target_deg = 0

[steering]
t_ms = 2000
velocity = 0 0 0
tilt_target_deg = 70
tilt_slew_deg_per_s = 90

[expect]
grasps = 1
"""
    )
    assert scn.d_attach_mm == 80
    assert scn.hand_yaw_deg == 15
    assert scn.objects[0].class_id == 2
    assert scn.timeline[1][1].tilt_slew_deg_per_s == 90
    assert scn.expect == {"grasps": "1"}


def test_steering_at_is_piecewise_constant():
    scn = load_scenario(
        MINIMAL
        + """
[steering]
t_ms = 1000
velocity = 10 0 0
"""
    )
    assert scn.steering_at(0) == Steering()
    assert scn.steering_at(999) == Steering()
    assert scn.steering_at(1000).velocity == (10.0, 0.0, 0.0)
    assert scn.steering_at(5000).velocity == (10.0, 0.0, 0.0)


def test_unknown_key_is_parse_error_with_line():
    bad = MINIMAL + "\nwarp_factor = 9\n"
    with pytest.raises(ParseError) as err:
        load_scenario(bad)
    assert "warp_factor" in str(err.value)
    assert "line" in str(err.value)


def test_unknown_key_in_section_named():
    with pytest.raises(ParseError) as err:
        load_scenario(MINIMAL + "\n[object]\nid = x\ncenter = 0 0 0\nradius = 5\ncolor = red\n")
    assert "color" in str(err.value) and "[object]" in str(err.value)


def test_unknown_section_rejected():
    with pytest.raises(ParseError) as err:
        load_scenario(MINIMAL + "\n[weather]\n")
    assert "weather" in str(err.value)


def test_unsorted_timeline_is_validation_error():
    bad = (
        MINIMAL
        + """
[steering]
t_ms = 2000

[steering]
t_ms = 1000
"""
    )
    with pytest.raises(ValidationError):
        load_scenario(bad)


def test_overspeed_steering_rejected():
    bad = (
        MINIMAL
        + """
[steering]
t_ms = 0
velocity = 600 0 0
"""
    )
    with pytest.raises(ValidationError):
        load_scenario(bad)


def test_missing_seed_rejected():
    with pytest.raises(ValidationError):
        load_scenario("duration_ms = 1000\n")


def test_missing_object_fields_rejected():
    with pytest.raises(ValidationError):
        load_scenario("seed = 1\n\n[object]\nid = a\n")


def test_duplicate_object_id_rejected():
    with pytest.raises(ValidationError):
        load_scenario(
            "seed=1\n[object]\nid=a\ncenter=1 2 3\nradius=5\n[object]\nid=a\ncenter=0 0 0\nradius=5\n"
        )


def test_non_numeric_value_rejected():
    with pytest.raises(ParseError) as err:
        load_scenario("seed = 1\n\n[object]\nid = a\ncenter = x y z\nradius = 5\n")
    assert "center" in str(err.value)


def test_comments_and_blank_lines_ignored():
    scn = load_scenario("# header\nseed = 1  # trailing\n\n# done\n")
    assert scn.seed == 1 and scn.objects == []


def test_build_world_seed_override_and_isolation():
    scn = load_scenario(MINIMAL)
    w1, w2 = scn.build_world(seed=5), scn.build_world(seed=5)
    assert w1.rng.random() == w2.rng.random()
    w1.objects[0].center[0] = 999.0
    assert scn.objects[0].center[0] == 300.0  # scenario state untouched
