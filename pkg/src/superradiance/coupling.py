"""Decay matrices, coherent couplings and the environment models that build them.

Rates are stored in units of a reference single-emitter rate ``gamma0``
(default 1). The free-space kernels use the standard closed form of the
dyadic Green's function for unit dipoles.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
import scipy.constants as const

from .emitters import EmitterArray

SYMMETRY_RTOL = 1e-12
CAUCHY_SCHWARZ_RTOL = 1e-9
PSD_TRACE_TOL = 1e-9
NEAR_FIELD_SERIES_X = 1e-2


@dataclass(frozen=True)
class PhysicalConstants:
    mu0: float = const.mu_0
    epsilon0: float = const.epsilon_0
    hbar: float = const.hbar
    c: float = const.c

    def free_space_rate(self, omega0: float, dipole: float) -> float:
        """Single-emitter vacuum rate ``w^3 d^2 / (3 pi eps0 hbar c^3)`` in 1/s."""
        return omega0**3 * dipole**2 / (3.0 * math.pi * self.epsilon0 * self.hbar * self.c**3)


CONSTANTS = PhysicalConstants()


class MatrixFormatError(ValueError):
    """A decay-matrix file could not be parsed."""


class UnphysicalMatrixError(ValueError):
    """A decay matrix violates one or more physicality invariants."""

    def __init__(self, report: "ValidationReport"):
        super().__init__("unphysical decay matrix:\n" + report.format())
        self.report = report


@dataclass(frozen=True)
class DecayMatrix:
    """Real symmetric dissipative-rate matrix ``gamma_{mu nu}``.

    Construction only checks the shape; call :func:`validate_physical`
    (or :meth:`validated`) for the physicality invariants.
    """

    rates: np.ndarray
    labels: tuple | None = None
    units: str = "gamma0"

    def __post_init__(self):
        r = np.array(self.rates, dtype=float)
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise MatrixFormatError(f"decay matrix must be square, got shape {r.shape}")
        if not np.all(np.isfinite(r)):
            raise MatrixFormatError("decay matrix contains non-finite entries")
        r.setflags(write=False)
        object.__setattr__(self, "rates", r)
        if self.labels is not None:
            labels = tuple(int(v) for v in self.labels)
            if len(labels) != r.shape[0]:
                raise MatrixFormatError("labels must match the matrix dimension")
            object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.rates.shape[0]

    @property
    def diag(self) -> np.ndarray:
        return np.diag(self.rates).copy()

    def validated(self) -> "DecayMatrix":
        report = validate_physical(self)
        if not report.ok:
            raise UnphysicalMatrixError(report)
        return self

    def subsample(self, indices) -> "DecayMatrix":
        idx = np.asarray(indices, dtype=int)
        labels = None if self.labels is None else tuple(self.labels[i] for i in idx)
        return DecayMatrix(self.rates[np.ix_(idx, idx)], labels, self.units)

    def scaled(self, c: float) -> "DecayMatrix":
        return DecayMatrix(self.rates * c, self.labels, self.units)


@dataclass(frozen=True)
class CouplingMatrix:
    """Coherent dipole-dipole shifts ``Delta_{mu nu}``; the diagonal is unused."""

    shifts: np.ndarray

    def __post_init__(self):
        s = np.array(self.shifts, dtype=float)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise MatrixFormatError(f"coupling matrix must be square, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise MatrixFormatError("coupling matrix contains non-finite entries")
        np.fill_diagonal(s, 0.0)
        scale = np.max(np.abs(s)) if s.size else 0.0
        if np.max(np.abs(s - s.T), initial=0.0) > SYMMETRY_RTOL * scale:
            raise MatrixFormatError("coupling matrix must be symmetric")
        s.setflags(write=False)
        object.__setattr__(self, "shifts", s)

    @property
    def n(self) -> int:
        return self.shifts.shape[0]

    @classmethod
    def zeros(cls, n: int) -> "CouplingMatrix":
        return cls(np.zeros((n, n)))

    def subsample(self, indices) -> "CouplingMatrix":
        idx = np.asarray(indices, dtype=int)
        return CouplingMatrix(self.shifts[np.ix_(idx, idx)])


# -- environment models ------------------------------------------------------

def _check_gamma(gamma):
    if not (math.isfinite(gamma) and gamma > 0):
        raise ValueError("gamma must be positive")


@dataclass(frozen=True)
class FreeSpace:
    name = "freespace"

    def to_dict(self):
        return {"env": self.name}


@dataclass(frozen=True)
class SingleModeBIC:
    """All cross-coupling through one delocalised mode with efficiency ``beta``.

    With ``mode_axis=None`` the model ignores geometry: ``gamma`` on the
    diagonal and ``beta * gamma`` elsewhere. Given a polarisation axis ``e``
    the mode channel is projected on each dipole,
    ``gamma_{mu nu} = gamma [(1 - beta) delta_{mu nu} + beta (u_mu.e)(u_nu.e)]``,
    which reduces to the geometry-free form for dipoles along ``e``.
    """

    gamma: float = 1.0
    beta: float = 0.8179
    mode_axis: tuple | None = None
    name = "bic"

    def __post_init__(self):
        _check_gamma(self.gamma)
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        if self.mode_axis is not None:
            axis = np.asarray(self.mode_axis, dtype=float)
            if axis.shape != (3,) or abs(np.linalg.norm(axis) - 1.0) > 1e-12:
                raise ValueError("mode_axis must be a unit 3-vector")
            object.__setattr__(self, "mode_axis", tuple(float(v) for v in axis))

    def to_dict(self):
        d = {"env": self.name, "gamma": self.gamma, "beta": self.beta}
        if self.mode_axis is not None:
            d["mode_axis"] = list(self.mode_axis)
        return d


@dataclass(frozen=True)
class IdealDicke:
    gamma: float = 1.0
    name = "dicke"

    def __post_init__(self):
        _check_gamma(self.gamma)

    def to_dict(self):
        return {"env": self.name, "gamma": self.gamma}


@dataclass(frozen=True)
class Independent:
    gamma: float = 1.0
    name = "independent"

    def __post_init__(self):
        _check_gamma(self.gamma)

    def to_dict(self):
        return {"env": self.name, "gamma": self.gamma}


@dataclass(frozen=True)
class Tabulated:
    decay: DecayMatrix
    coupling: CouplingMatrix | None = None
    source: str | None = field(default=None, compare=False)
    name = "tabulated"

    def __post_init__(self):
        if self.coupling is not None and self.coupling.n != self.decay.n:
            raise MatrixFormatError("coupling and decay matrices differ in size")

    def to_dict(self):
        return {"env": self.name, "source": self.source, "n": self.decay.n}


EnvironmentModel = Union[FreeSpace, SingleModeBIC, IdealDicke, Independent, Tabulated]


# -- free space ----------------------------------------------------------------

def _radial_kernels(x):
    """Radial factors of Im G and Re G for ``x = k r > 0``.

    Returns ``(sin x/x, cos x/x^2 - sin x/x^3, cos x/x, sin x/x^2 + cos x/x^3)``.
    The second factor uses its Taylor series below ``NEAR_FIELD_SERIES_X``
    to avoid cancellation.
    """
    x = np.asarray(x, dtype=float)
    s, c = np.sin(x), np.cos(x)
    f_far = s / x
    small = x < NEAR_FIELD_SERIES_X
    with np.errstate(divide="ignore", invalid="ignore"):
        f_near = np.where(small, 0.0, c / x**2 - s / x**3)
    x2 = x * x
    f_near = np.where(small, -1.0 / 3.0 + x2 / 30.0 - x2 * x2 / 840.0, f_near)
    return f_far, f_near, c / x, s / x**2 + c / x**3


def free_space_pair_rate(pos_a, dip_a, pos_b, dip_b, lambda0):
    """Dissipative and coherent free-space coupling of two unit dipoles.

    Parameters
    ----------
    pos_a, pos_b : array_like
        Positions in nm.
    dip_a, dip_b : array_like
        Unit dipole directions.
    lambda0 : float
        Transition wavelength in nm.

    Returns
    -------
    gamma_ab, delta_ab : float
        Rates in units of the single-emitter vacuum rate. A dipole paired
        with itself gives ``(1, 0)``.
    """
    if not lambda0 > 0:
        raise ValueError("lambda0 must be positive")
    ua = np.asarray(dip_a, dtype=float)
    ub = np.asarray(dip_b, dtype=float)
    r = np.asarray(pos_b, dtype=float) - np.asarray(pos_a, dtype=float)
    dist = float(np.linalg.norm(r))
    if dist == 0.0:
        if np.array_equal(ua, ub):
            return 1.0, 0.0
        raise ValueError("coincident emitters with different dipoles")
    rhat = r / dist
    x = 2.0 * math.pi * dist / lambda0
    uu = float(ua @ ub)
    ar, br = float(ua @ rhat), float(ub @ rhat)
    transverse = uu - ar * br
    longitudinal = uu - 3.0 * ar * br
    f_far, f_near, g_far, g_near = (float(v) for v in _radial_kernels(x))
    gamma = 1.5 * (transverse * f_far + longitudinal * f_near)
    delta = 0.75 * (-transverse * g_far + longitudinal * g_near)
    return gamma, delta


def free_space_matrices(array: EmitterArray):
    """Vectorised free-space ``(gamma, Delta)`` for every emitter pair."""
    pos, dip = array.positions, array.dipole_dirs
    n = array.n
    r = pos[None, :, :] - pos[:, None, :]
    dist = np.linalg.norm(r, axis=-1)
    coincident = dist == 0.0
    off = ~np.eye(n, dtype=bool)
    if np.any(coincident & off):
        uu_same = np.all(dip[:, None, :] == dip[None, :, :], axis=-1)
        if np.any(coincident & off & ~uu_same):
            raise ValueError("coincident emitters with different dipoles")
    safe = np.where(coincident, 1.0, dist)
    rhat = r / safe[..., None]
    x = 2.0 * math.pi * safe / array.lambda0_nm
    uu = dip @ dip.T
    ar = np.einsum("ik,ijk->ij", dip, rhat)
    br = np.einsum("jk,ijk->ij", dip, rhat)
    transverse = uu - ar * br
    longitudinal = uu - 3.0 * ar * br
    f_far, f_near, g_far, g_near = _radial_kernels(x)
    gamma = 1.5 * (transverse * f_far + longitudinal * f_near)
    delta = 0.75 * (-transverse * g_far + longitudinal * g_near)
    gamma = np.where(coincident, 1.0, gamma)
    delta = np.where(coincident, 0.0, delta)
    gamma = 0.5 * (gamma + gamma.T)
    delta = 0.5 * (delta + delta.T)
    return gamma, delta


# -- builders -------------------------------------------------------------------

def build_matrices(array: EmitterArray, model: EnvironmentModel):
    """Decay and coherent-coupling matrices of ``array`` in environment ``model``."""
    n = array.n
    if isinstance(model, FreeSpace):
        gamma, delta = free_space_matrices(array)
        return DecayMatrix(gamma), CouplingMatrix(delta)
    if isinstance(model, SingleModeBIC):
        if model.mode_axis is None:
            proj = np.ones(n)
        else:
            proj = array.dipole_dirs @ np.asarray(model.mode_axis)
        rates = model.beta * np.outer(proj, proj)
        if model.mode_axis is None:
            np.fill_diagonal(rates, 1.0)
        else:
            rates += (1.0 - model.beta) * np.eye(n)
        return DecayMatrix(model.gamma * rates), CouplingMatrix.zeros(n)
    if isinstance(model, IdealDicke):
        return DecayMatrix(np.full((n, n), model.gamma)), CouplingMatrix.zeros(n)
    if isinstance(model, Independent):
        return DecayMatrix(model.gamma * np.eye(n)), CouplingMatrix.zeros(n)
    if isinstance(model, Tabulated):
        if model.decay.n != n:
            raise MatrixFormatError(
                f"tabulated matrix is {model.decay.n}x{model.decay.n} "
                f"but the array has {n} emitters"
            )
        model.decay.validated()
        coupling = model.coupling if model.coupling is not None else CouplingMatrix.zeros(n)
        return model.decay, coupling
    raise TypeError(f"unknown environment model {model!r}")


def purcell_to_rate(P: float, P0: float, gamma0: float = 1.0) -> float:
    """Rate ``(P / P0) * gamma0`` from dissipated and free-space powers."""
    if P0 == 0:
        raise ZeroDivisionError("free-space power P0 must be non-zero")
    if P < 0 or P0 < 0 or gamma0 <= 0:
        raise ValueError("need P >= 0, P0 > 0 and gamma0 > 0")
    return P / P0 * gamma0


# -- validation -----------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    kind: str
    indices: tuple
    magnitude: float

    def format(self) -> str:
        return f"{self.kind} at {self.indices}: {self.magnitude:.6g}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def kinds(self) -> set:
        return {v.kind for v in self.violations}

    def format(self) -> str:
        return "\n".join(v.format() for v in self.violations)

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "violations": [
                {"kind": v.kind, "indices": list(v.indices), "magnitude": v.magnitude}
                for v in self.violations
            ],
        }


def validate_physical(m) -> ValidationReport:
    """List every violated decay-matrix invariant.

    Checks symmetry, a strictly positive diagonal, the Cauchy-Schwarz bound
    on cross rates, and positive semidefiniteness. An empty report means the
    matrix is physical.
    """
    g = m.rates if isinstance(m, DecayMatrix) else np.asarray(m, dtype=float)
    n = g.shape[0]
    out = []
    scale = float(np.max(np.abs(g))) if g.size else 0.0
    asym = np.abs(g - g.T)
    for i, j in zip(*np.nonzero(np.triu(asym > SYMMETRY_RTOL * scale, 1))):
        out.append(Violation("asymmetry", (int(i), int(j)), float(asym[i, j])))
    d = np.diag(g)
    for i in np.nonzero(d <= 0)[0]:
        out.append(Violation("nonpositive_diagonal", (int(i),), float(d[i])))
    bound = np.sqrt(np.clip(np.outer(d, d), 0.0, None)) * (1.0 + CAUCHY_SCHWARZ_RTOL)
    excess = np.abs(g) - bound
    for i, j in zip(*np.nonzero(np.triu(excess > 0, 1))):
        out.append(Violation("cauchy_schwarz", (int(i), int(j)), float(g[i, j])))
    eig = np.linalg.eigvalsh(0.5 * (g + g.T))
    floor = -PSD_TRACE_TOL * abs(float(np.trace(g)))
    for k in np.nonzero(eig < floor)[0]:
        out.append(Violation("negative_eigenvalue", (int(k),), float(eig[k])))
    return ValidationReport(tuple(out))


# -- ingestion ------------------------------------------------------------------

def _read_text(source) -> tuple[str, str | None]:
    if isinstance(source, (bytes, bytearray)):
        return source.decode(), None
    if hasattr(source, "read"):
        data = source.read()
        return (data.decode() if isinstance(data, bytes) else data), None
    path = Path(source)
    return path.read_text(), path.suffix.lower()


def _parse_csv(text: str) -> np.ndarray:
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise MatrixFormatError("empty matrix file")
    try:
        data = [[float(c) for c in r] for r in rows]
    except ValueError as exc:
        raise MatrixFormatError(f"non-numeric entry: {exc}") from exc
    widths = {len(r) for r in data}
    if len(widths) != 1:
        raise MatrixFormatError("ragged rows in matrix file")
    arr = np.array(data)
    if arr.shape[0] != arr.shape[1]:
        raise MatrixFormatError(f"non-square matrix: {arr.shape[0]} rows, {arr.shape[1]} columns")
    return arr


def _square(values, what: str) -> np.ndarray:
    try:
        arr = np.array(values, dtype=float)
    except (TypeError, ValueError) as exc:
        raise MatrixFormatError(f"malformed {what}: {exc}") from exc
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise MatrixFormatError(f"non-square {what}: shape {arr.shape}")
    return arr


def import_decay_matrix(source, delta_source=None, validate: bool = True):
    """Read a decay matrix (and optional coherent shifts) from CSV or JSON.

    ``source`` is a path, bytes or a text/binary stream. JSON is detected by
    a ``.json`` suffix or a leading ``{``. A CSV decay matrix may come with a
    companion CSV of shifts via ``delta_source``.

    Raises
    ------
    MatrixFormatError
        Unparseable or non-square data.
    UnphysicalMatrixError
        The decay matrix fails :func:`validate_physical`.
    """
    text, suffix = _read_text(source)
    units = "gamma0"
    coupling = None
    if suffix == ".json" or text.lstrip().startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise MatrixFormatError(f"invalid JSON: {exc}") from exc
        if "gamma" not in doc:
            raise MatrixFormatError("JSON matrix file lacks a 'gamma' field")
        rates = _square(doc["gamma"], "gamma matrix")
        if "n" in doc and int(doc["n"]) != rates.shape[0]:
            raise MatrixFormatError(f"declared n={doc['n']} but gamma is {rates.shape[0]}x{rates.shape[0]}")
        units = doc.get("units", "gamma0")
        if units not in ("gamma0", "per_second"):
            raise MatrixFormatError(f"unknown units {units!r}")
        if doc.get("delta") is not None:
            coupling = CouplingMatrix(_square(doc["delta"], "delta matrix"))
    else:
        rates = _parse_csv(text)
    if delta_source is not None:
        dtext, _ = _read_text(delta_source)
        coupling = CouplingMatrix(_parse_csv(dtext))
    if coupling is not None and coupling.n != rates.shape[0]:
        raise MatrixFormatError("delta and gamma matrices differ in size")
    m = DecayMatrix(rates, units=units)
    if validate:
        m.validated()
    return m, coupling


def format_float(x: float) -> str:
    """Round-trip-safe decimal rendering with 17 significant digits."""
    return f"{float(x):.17g}"


def write_decay_csv(m, path) -> None:
    rates = m.rates if isinstance(m, DecayMatrix) else np.asarray(m)
    lines = [",".join(format_float(v) for v in row) for row in rates]
    Path(path).write_text("\n".join(lines) + "\n")
