"""Smoke test for the rcmtrack extension module.

Build and install first, e.g. `maturin develop -m crates/python/Cargo.toml`,
then run `python python/smoke_test.py`.
"""

import math

import rcmtrack


def check_kinematics():
    x, y, z = rcmtrack.forward_kinematics(5.0, -3.0, 80.0)
    assert abs(math.sqrt(x * x + y * y + z * z) - 80.0) < 1e-9
    phi1, phi2, _ = rcmtrack.joint_angles(x, y, z)
    assert abs(phi1 - 5.0) < 1e-9 and abs(phi2 + 3.0) < 1e-9
    q = rcmtrack.JointState(5.0, -3.0, 20.0, 80.0)
    assert q.tip() == (x, y, z)


def check_round_trip():
    cal = rcmtrack.Calibration(depth_at_zero=60.0)
    q = rcmtrack.JointState(4.2, -7.9, 33.3, 61.23, 0.0)
    (back,) = rcmtrack.decode([rcmtrack.encode(q, cal)], cal)
    assert abs(back.phi1 - q.phi1) <= 0.17578125
    assert abs(back.phi2 - q.phi2) <= 0.17578125
    assert abs(back.phi3 - q.phi3) <= 0.0439453125
    assert abs(back.d - q.d) <= 0.0275
    assert rcmtrack.Calibration.from_json(cal.to_json()).depth_at_zero == 60.0


def check_session():
    truth = rcmtrack.simulate_peg_transfer(duration=60.0, hand="right", seed=3)
    assert len(truth) == 6001
    assert max(q.cone_angle() for q in truth) <= 13.0
    cal = rcmtrack.calibration_for(truth)
    decoded = rcmtrack.decode(rcmtrack.corrupt_and_encode(truth, cal), cal)

    a = rcmtrack.compute_metrics(truth)
    b = rcmtrack.compute_metrics(decoded)
    assert a["time_total_s"] == b["time_total_s"] == 60.0
    assert abs(b["path_length_mm"] / a["path_length_mm"] - 1.0) < 0.02
    assert abs(b["depth_workspace_mm"] - a["depth_workspace_mm"]) < 0.11

    groups = rcmtrack.subcategories(decoded)
    assert set(groups) == {"execution_rapidity", "gesture_control", "navigation_3d"}

    mse = rcmtrack.compare_joints(decoded, truth)
    assert mse["phi1"] < 0.0175 and mse["translation"] < 0.001


def check_boundary():
    scan = rcmtrack.simulate_cone_scan(duration=20.0)
    boundary = rcmtrack.workspace_boundary(scan)
    assert not boundary["violation"]
    assert abs(boundary["ellipse"]["semi_major"] - 13.0) < 0.1
    assert rcmtrack.channel_mse([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0


def check_errors():
    try:
        rcmtrack.simulate_peg_transfer(duration=5.0)
    except ValueError as err:
        assert "30" in str(err)
    else:
        raise AssertionError("short session accepted")


if __name__ == "__main__":
    for check in (check_kinematics, check_round_trip, check_session, check_boundary, check_errors):
        check()
        print(f"ok  {check.__name__}")
