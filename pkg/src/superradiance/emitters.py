"""Emitter arrays: square-lattice construction, disorder transforms and JSON I/O.

Lengths are in nanometres throughout. Dipole directions are unit vectors;
the dipole magnitude only matters for SI conversions and defaults to 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

DEFAULT_LATTICE_CONST_NM = 400.0
DEFAULT_OFFSET_X0_NM = 0.163 * DEFAULT_LATTICE_CONST_NM
DEFAULT_HEIGHT_NM = 104.0
DEFAULT_LAMBDA0_NM = 708.9
Y_AXIS = (0.0, 1.0, 0.0)


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class EmitterArray:
    """N identical two-level emitters.

    Parameters
    ----------
    positions : (N, 3) array_like
        Emitter positions in nm.
    dipole_dirs : (N, 3) array_like
        Unit dipole orientations.
    lambda0_nm : float
        Transition wavelength in nm.
    dipole_magnitude : float
        Dipole moment in C m (reduced units by default).
    coincident : bool
        Allow several emitters at one point (Dicke idealization).
    """

    positions: np.ndarray
    dipole_dirs: np.ndarray
    lambda0_nm: float = DEFAULT_LAMBDA0_NM
    dipole_magnitude: float = 1.0
    coincident: bool = False

    def __post_init__(self):
        pos = _frozen(self.positions).reshape(-1, 3)
        dip = _frozen(self.dipole_dirs).reshape(-1, 3)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "dipole_dirs", dip)
        if len(pos) < 1:
            raise ValueError("an emitter array needs at least one emitter")
        if len(pos) != len(dip):
            raise ValueError(
                f"{len(pos)} positions but {len(dip)} dipole directions"
            )
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(dip))):
            raise ValueError("positions and dipoles must be finite")
        if not (math.isfinite(self.lambda0_nm) and self.lambda0_nm > 0):
            raise ValueError("lambda0_nm must be positive")
        norms = np.linalg.norm(dip, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("dipole directions must be unit vectors")
        if not self.coincident and len(pos) > 1:
            sep = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
            np.fill_diagonal(sep, np.inf)
            if np.any(sep <= 0.0):
                raise ValueError(
                    "coincident emitters; pass coincident=True for a "
                    "point-like Dicke array"
                )

    def __len__(self):
        return len(self.positions)

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def omega0(self) -> float:
        """Angular transition frequency in rad/s."""
        return 2.0 * math.pi * SPEED_OF_LIGHT / (self.lambda0_nm * 1e-9)

    def subset(self, indices) -> "EmitterArray":
        idx = np.asarray(indices, dtype=int)
        return EmitterArray(
            self.positions[idx],
            self.dipole_dirs[idx],
            self.lambda0_nm,
            self.dipole_magnitude,
            self.coincident,
        )

    def replace(self, positions=None, dipole_dirs=None) -> "EmitterArray":
        return EmitterArray(
            self.positions if positions is None else positions,
            self.dipole_dirs if dipole_dirs is None else dipole_dirs,
            self.lambda0_nm,
            self.dipole_magnitude,
            self.coincident,
        )

    def to_dict(self) -> dict:
        return {
            "lambda0_nm": float(self.lambda0_nm),
            "emitters": [
                {"pos_nm": [float(v) for v in p], "dip": [float(v) for v in u]}
                for p, u in zip(self.positions, self.dipole_dirs)
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict, coincident: bool = False) -> "EmitterArray":
        try:
            ems = doc["emitters"]
            pos = [e["pos_nm"] for e in ems]
            dip = [e["dip"] for e in ems]
            lam = float(doc["lambda0_nm"])
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed emitter document: {exc}") from exc
        return cls(pos, dip, lam, coincident=coincident)

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=1)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_json(cls, source, coincident: bool = False) -> "EmitterArray":
        """Load from a JSON string or a path to a JSON file."""
        if isinstance(source, Path) or (
            isinstance(source, str) and not source.lstrip().startswith("{")
        ):
            source = Path(source).read_text()
        return cls.from_dict(json.loads(source), coincident=coincident)


@dataclass(frozen=True)
class LatticeSpec:
    """Square emitter lattice in the optimal BIC-coupling configuration."""

    n_side: int = 3
    lattice_const_d: float = DEFAULT_LATTICE_CONST_NM
    offset_x0: float = DEFAULT_OFFSET_X0_NM
    height_z: float = DEFAULT_HEIGHT_NM
    dipole_axis: tuple = field(default=Y_AXIS)

    def __post_init__(self):
        if int(self.n_side) != self.n_side or self.n_side < 1:
            raise ValueError("n_side must be a positive integer")
        for name in ("lattice_const_d", "offset_x0", "height_z"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.lattice_const_d < 0:
            raise ValueError("lattice_const_d must be non-negative")
        axis = np.asarray(self.dipole_axis, dtype=float)
        if axis.shape != (3,) or abs(np.linalg.norm(axis) - 1.0) > 1e-12:
            raise ValueError("dipole_axis must be a unit 3-vector")
        object.__setattr__(self, "dipole_axis", tuple(float(v) for v in axis))

    @property
    def n_total(self) -> int:
        return self.n_side**2

    def to_dict(self) -> dict:
        return {
            "n_side": int(self.n_side),
            "lattice_const_d": float(self.lattice_const_d),
            "offset_x0": float(self.offset_x0),
            "height_z": float(self.height_z),
            "dipole_axis": list(self.dipole_axis),
        }


def build_square_lattice(spec: LatticeSpec, lambda0_nm: float = DEFAULT_LAMBDA0_NM,
                         coincident: bool = False) -> EmitterArray:
    """Emitters at ``[x0 + d(i - c), d(j - c), z]`` with ``c = (n_side - 1)/2``.

    Emitter ``mu = i * n_side + j``; ``i`` runs along x. For odd ``n_side``
    the central emitter sits at ``[x0, 0, z]``. A zero lattice constant puts
    every emitter on one point and needs ``coincident=True``.
    """
    n = int(spec.n_side)
    c = (n - 1) / 2.0
    idx = np.arange(n) - c
    ii, jj = np.meshgrid(idx, idx, indexing="ij")
    d = spec.lattice_const_d
    pos = np.column_stack([
        spec.offset_x0 + d * ii.ravel(),
        d * jj.ravel(),
        np.full(n * n, spec.height_z),
    ])
    dip = np.tile(np.asarray(spec.dipole_axis, dtype=float), (n * n, 1))
    return EmitterArray(pos, dip, lambda0_nm, coincident=coincident)


def filling_count(n: int, eta: float) -> int:
    """Number of retained emitters, ``eta * n`` rounded half-up."""
    return int(math.floor(eta * n + 0.5))


def filling_indices(n: int, eta: float, rng: np.random.Generator) -> np.ndarray:
    """Sorted indices of a uniformly random subset of ``round(eta * n)`` sites."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError("filling fraction must lie in [0, 1]")
    k = filling_count(n, eta)
    if k == n:
        return np.arange(n)
    return np.sort(rng.choice(n, size=k, replace=False))


def apply_filling_fraction(array: EmitterArray, eta: float,
                           rng: np.random.Generator) -> EmitterArray:
    return array.subset(filling_indices(array.n, eta, rng))


def position_grid(delta_r: float, steps: int = 100) -> np.ndarray:
    """Allowed per-axis offsets: ``steps // 2 + 1`` values spanning ``[-dr, dr]``.

    The default gives a spacing of ``2 dr / 50`` (0.4 nm at 10 nm).
    """
    if delta_r < 0:
        raise ValueError("delta_r must be non-negative")
    if steps < 1:
        raise ValueError("steps must be positive")
    return np.linspace(-delta_r, delta_r, steps // 2 + 1)


def orientation_grid(delta_theta: float, steps: int = 100) -> np.ndarray:
    """Allowed angular offsets in degrees: ``steps + 1`` values spanning ``[-dt, dt]``."""
    if not 0.0 <= delta_theta <= 180.0:
        raise ValueError("delta_theta must lie in [0, 180] degrees")
    if steps < 1:
        raise ValueError("steps must be positive")
    return np.linspace(-delta_theta, delta_theta, steps + 1)


def draw_position_offsets(n: int, delta_r: float, steps: int,
                          rng: np.random.Generator) -> np.ndarray:
    """Grid indices ``(n, 2)`` of in-plane offsets inside the disc of radius ``delta_r``.

    Each emitter draws both coordinates from the grid and redraws until the
    offset lies inside the disc.
    """
    grid = position_grid(delta_r, steps)
    m = len(grid)
    out = np.empty((n, 2), dtype=np.int64)
    limit = delta_r * delta_r * (1.0 + 1e-12)
    for mu in range(n):
        while True:
            ix, iy = rng.integers(0, m, size=2)
            if grid[ix] ** 2 + grid[iy] ** 2 <= limit:
                out[mu] = ix, iy
                break
    return out


def apply_position_jitter(array: EmitterArray, delta_r: float, steps: int = 100,
                          rng: np.random.Generator | None = None) -> EmitterArray:
    if delta_r == 0:
        return array
    if rng is None:
        raise ValueError("position jitter needs an explicit random generator")
    grid = position_grid(delta_r, steps)
    idx = draw_position_offsets(array.n, delta_r, steps, rng)
    pos = array.positions.copy()
    pos[:, 0] += grid[idx[:, 0]]
    pos[:, 1] += grid[idx[:, 1]]
    return array.replace(positions=pos)


def in_plane_dipoles(theta_deg) -> np.ndarray:
    """Unit dipoles at angle ``90 deg + theta`` from the x-axis, in the x-y plane."""
    # cos(90 + t) = -sin t, sin(90 + t) = cos t; exact y-hat at t = 0
    t = np.radians(np.asarray(theta_deg, dtype=float))
    return np.column_stack([-np.sin(t), np.cos(t), np.zeros_like(t)])


def draw_orientation_offsets(n: int, delta_theta: float, steps: int,
                             rng: np.random.Generator) -> np.ndarray:
    grid = orientation_grid(delta_theta, steps)
    return rng.integers(0, len(grid), size=n)


def apply_orientation_jitter(array: EmitterArray, delta_theta: float,
                             steps: int = 100,
                             rng: np.random.Generator | None = None) -> EmitterArray:
    grid = orientation_grid(delta_theta, steps)
    if delta_theta == 0:
        return array.replace(dipole_dirs=in_plane_dipoles(np.zeros(array.n)))
    if rng is None:
        raise ValueError("orientation jitter needs an explicit random generator")
    idx = draw_orientation_offsets(array.n, delta_theta, steps, rng)
    return array.replace(dipole_dirs=in_plane_dipoles(grid[idx]))
