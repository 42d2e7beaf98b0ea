import itertools
import json

import numpy as np
import pytest

from superradiance.emitters import (
    EmitterArray,
    LatticeSpec,
    apply_filling_fraction,
    apply_orientation_jitter,
    apply_position_jitter,
    build_square_lattice,
    filling_count,
    in_plane_dipoles,
    orientation_grid,
    position_grid,
)


def test_three_by_three_centre():
    arr = build_square_lattice(LatticeSpec(3, 400.0, 65.2, 104.0))
    assert arr.n == 9
    assert np.allclose(arr.positions[4], [65.2, 0.0, 104.0], atol=1e-12)
    assert np.all(arr.dipole_dirs == [0.0, 1.0, 0.0])


def test_single_emitter_lattice():
    arr = build_square_lattice(LatticeSpec(1, 400.0, 65.2, 104.0))
    assert arr.positions.tolist() == [[65.2, 0.0, 104.0]]


def test_two_by_two_separations():
    arr = build_square_lattice(LatticeSpec(2, 100.0, 0.0, 104.0))
    seps = set()
    for a, b in itertools.combinations(arr.positions, 2):
        dx, dy = abs(a[0] - b[0]), abs(a[1] - b[1])
        seps.update(v for v in (dx, dy) if v > 0)
    assert seps == {100.0}


@pytest.mark.parametrize("bad", [dict(n_side=0), dict(lattice_const_d=float("nan")),
                                 dict(offset_x0=float("inf")), dict(lattice_const_d=-1.0)])
def test_lattice_spec_rejects(bad):
    with pytest.raises(ValueError):
        LatticeSpec(**bad)


def test_coincident_needs_flag():
    with pytest.raises(ValueError, match="coincident"):
        build_square_lattice(LatticeSpec(3, 0.0))
    arr = build_square_lattice(LatticeSpec(3, 0.0), coincident=True)
    assert np.ptp(arr.positions, axis=0).max() == 0


def test_dipoles_must_be_unit():
    with pytest.raises(ValueError):
        EmitterArray([[0, 0, 0]], [[0, 2, 0]])


def test_json_round_trip(tmp_path):
    arr = build_square_lattice(LatticeSpec(2, 250.0))
    path = tmp_path / "arr.json"
    arr.to_json(path)
    doc = json.loads(path.read_text())
    assert list(doc) == ["lambda0_nm", "emitters"]
    assert list(doc["emitters"][0]) == ["pos_nm", "dip"]
    back = EmitterArray.from_json(path)
    assert np.array_equal(back.positions, arr.positions)
    assert np.array_equal(back.dipole_dirs, arr.dipole_dirs)
    assert back.lambda0_nm == arr.lambda0_nm


def test_arrays_are_immutable():
    arr = build_square_lattice(LatticeSpec(2))
    with pytest.raises(ValueError):
        arr.positions[0, 0] = 1.0


# -- filling fraction -------------------------------------------------------------

def test_full_filling_is_identity():
    arr = build_square_lattice(LatticeSpec(5))
    out = apply_filling_fraction(arr, 1.0, np.random.default_rng(0))
    assert np.array_equal(out.positions, arr.positions)


def test_filling_counts():
    arr = build_square_lattice(LatticeSpec(5))
    assert apply_filling_fraction(arr, 0.8, np.random.default_rng(1)).n == 20
    assert filling_count(121, 0.2) == 24
    assert filling_count(10, 0.25) == 3  # 2.5 rounds up


def test_filling_subset_and_deterministic():
    arr = build_square_lattice(LatticeSpec(11))
    a = apply_filling_fraction(arr, 0.5, np.random.default_rng(42))
    b = apply_filling_fraction(arr, 0.5, np.random.default_rng(42))
    assert np.array_equal(a.positions, b.positions)
    rows = {tuple(p) for p in arr.positions}
    assert all(tuple(p) in rows for p in a.positions)


# -- position jitter ---------------------------------------------------------------

def test_position_grid_spacing():
    assert np.diff(position_grid(10.0, 100)) == pytest.approx(0.4)
    assert np.diff(position_grid(20.0, 100)) == pytest.approx(0.8)
    g = position_grid(10.0, 100)
    assert g[0] == -10.0 and g[-1] == 10.0


def test_zero_position_jitter():
    arr = build_square_lattice(LatticeSpec(3))
    assert apply_position_jitter(arr, 0.0, 100, np.random.default_rng(0)) is arr


def test_position_jitter_within_disc():
    arr = build_square_lattice(LatticeSpec(3))
    rng = np.random.default_rng(3)
    for _ in range(150):  # 1350 emitter draws
        out = apply_position_jitter(arr, 30.0, 100, rng)
        shift = out.positions - arr.positions
        assert np.all(np.hypot(shift[:, 0], shift[:, 1]) <= 30.0 * (1 + 1e-12))
        assert np.array_equal(shift[:, 2], np.zeros(9))
        assert np.array_equal(out.dipole_dirs, arr.dipole_dirs)


def test_position_jitter_reproducible():
    arr = build_square_lattice(LatticeSpec(3))
    a = apply_position_jitter(arr, 20.0, 100, np.random.default_rng(9))
    b = apply_position_jitter(arr, 20.0, 100, np.random.default_rng(9))
    assert np.array_equal(a.positions, b.positions)


# -- orientation jitter --------------------------------------------------------------

def test_orientation_grid_spacing():
    assert np.diff(orientation_grid(30.0, 100)) == pytest.approx(0.6)
    assert np.diff(orientation_grid(60.0, 100)) == pytest.approx(1.2)
    assert np.diff(orientation_grid(90.0, 100)) == pytest.approx(1.8)


def test_zero_orientation_jitter_gives_y():
    arr = build_square_lattice(LatticeSpec(3))
    out = apply_orientation_jitter(arr, 0.0, 100, np.random.default_rng(0))
    assert np.all(out.dipole_dirs == [0.0, 1.0, 0.0])


def test_quarter_turn_dipole():
    assert np.allclose(in_plane_dipoles([90.0])[0], [-1.0, 0.0, 0.0], atol=1e-15)


def test_orientation_jitter_invariants():
    arr = build_square_lattice(LatticeSpec(3))
    rng = np.random.default_rng(5)
    for _ in range(50):
        out = apply_orientation_jitter(arr, 60.0, 100, rng)
        assert out.n == arr.n
        assert np.array_equal(out.positions, arr.positions)
        assert np.all(np.abs(np.linalg.norm(out.dipole_dirs, axis=1) - 1) <= 1e-12)
        angle = np.degrees(np.arctan2(-out.dipole_dirs[:, 0], out.dipole_dirs[:, 1]))
        assert np.all(np.abs(angle) <= 60.0 + 1e-9)
