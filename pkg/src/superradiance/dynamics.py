"""Emission-rate traces R(t) for a fully inverted array.

Four routes, from exact to approximate:

* ``lindblad_rate_trace`` integrates the full master equation;
* ``ladder_rate_trace`` integrates the excitation-manifold birth-death chain;
* ``meanfield_rate_trace`` integrates the mean-field logistic ODE;
* ``closed_form_rate`` evaluates the sech^2 solution of that ODE.

Times are in units of ``1/gamma`` and rates in units of ``gamma`` when the
decay matrix is expressed in units of ``gamma``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np
from scipy.integrate import simpson, solve_ivp

from .coupling import CouplingMatrix, DecayMatrix, UnphysicalMatrixError, validate_physical

RTOL = 1e-8
ATOL = 1e-10
BETA_MIN = 1e-6
MAX_EMITTERS = 12
POPULATION_TOL = 100 * ATOL  # tolerated integrator undershoot
# the mean-field excitation stays positive, so pure relative control keeps
# the exponentially small tail accurate pointwise
MEANFIELD_ATOL = 1e-300


class IntegrationError(RuntimeError):
    """The ODE integrator failed or left the physical state space."""


@dataclass
class RateTrace:
    times: np.ndarray
    rate: np.ndarray
    excitation: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.rate = np.asarray(self.rate, dtype=float)
        if self.excitation is not None:
            self.excitation = np.asarray(self.excitation, dtype=float)
        if self.times.shape != self.rate.shape:
            raise ValueError("times and rate differ in length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def peak_index(self) -> int:
        return int(np.argmax(self.rate))

    @property
    def peak_rate(self) -> float:
        return float(self.rate[self.peak_index])

    @property
    def peak_time(self) -> float:
        return float(self.times[self.peak_index])

    def to_csv(self, path=None) -> str:
        cols = [self.times, self.rate]
        header = "t,rate"
        if self.excitation is not None:
            cols.append(self.excitation)
            header += ",n"
        lines = [header] + [",".join(f"{v:.17g}" for v in row) for row in zip(*cols)]
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "RateTrace":
        text = Path(source).read_text() if not str(source).startswith("t,") else str(source)
        rows = [ln.split(",") for ln in text.strip().splitlines()]
        data = np.array(rows[1:], dtype=float)
        exc = data[:, 2] if data.shape[1] > 2 else None
        return cls(data[:, 0], data[:, 1], exc)


def time_grid(t_end: float, n_steps: int) -> np.ndarray:
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    if n_steps < 1:
        raise ValueError("n_steps must be positive")
    return np.linspace(0.0, t_end, n_steps + 1)


def integrated_emission(trace: RateTrace) -> float:
    """Total emitted photons: Simpson's rule on the grid plus an exponential tail."""
    t, r = trace.times, trace.rate
    total = float(simpson(r, x=t))
    if len(t) >= 2 and r[-1] > 0 and r[-2] > r[-1]:
        kappa = math.log(r[-2] / r[-1]) / (t[-1] - t[-2])
        total += r[-1] / kappa
    return total


def _solve(rhs, y0, times, what, atol=ATOL):
    sol = solve_ivp(rhs, (times[0], times[-1]), y0, method="RK45", t_eval=times,
                    rtol=RTOL, atol=atol)
    if not sol.success:
        raise IntegrationError(f"{what} integration failed: {sol.message}")
    return sol.y


# -- full master equation ------------------------------------------------------

@dataclass(frozen=True)
class _Block:
    states: np.ndarray  # bitmasks with exactly n excitations
    lower: np.ndarray | None  # lower[t, mu]: index in block n of state t | bit mu, or pad


def _excitation_blocks(n_emitters: int):
    blocks = []
    index = {}
    for n in range(n_emitters + 1):
        states = np.array(
            sorted(sum(1 << b for b in c) for c in combinations(range(n_emitters), n)),
            dtype=np.int64,
        )
        index[n] = {int(s): k for k, s in enumerate(states)}
        blocks.append(states)
    out = []
    for n, states in enumerate(blocks):
        if n == n_emitters:
            out.append(_Block(states, None))
            continue
        upper = index[n + 1]
        pad = len(blocks[n + 1])
        up = np.full((len(states), n_emitters), pad, dtype=np.int64)
        for k, s in enumerate(states):
            for mu in range(n_emitters):
                if not (s >> mu) & 1:
                    up[k, mu] = upper[int(s) | (1 << mu)]
        out.append(_Block(states, up))
    return out


def _block_operator(states, weights):
    """Matrix of ``sum_{mu nu} w_{mu nu} s+_mu s-_nu`` within one excitation block."""
    d = len(states)
    n = weights.shape[0]
    pos = {int(s): k for k, s in enumerate(states)}
    op = np.zeros((d, d))
    for k, s in enumerate(states):
        s = int(s)
        for nu in range(n):
            if not (s >> nu) & 1:
                continue
            lowered = s & ~(1 << nu)
            for mu in range(n):
                if (lowered >> mu) & 1:
                    continue
                op[pos[lowered | (1 << mu)], k] += weights[mu, nu]
    return op


@dataclass
class DensityState:
    """Block-diagonal density matrix in the excitation-number basis.

    ``blocks[n]`` is the density matrix restricted to states with ``n``
    excitations; coherences between different ``n`` are never generated from
    the fully inverted initial state.
    """

    blocks: list
    n_emitters: int

    def matrix(self) -> np.ndarray:
        """Full ``2^N x 2^N`` density matrix in the computational basis."""
        dim = 2**self.n_emitters
        rho = np.zeros((dim, dim), dtype=complex)
        for states, b in zip(_excitation_states(self.n_emitters), self.blocks):
            rho[np.ix_(states, states)] = b
        return rho

    def trace(self) -> complex:
        return sum(np.trace(b) for b in self.blocks)

    def populations(self) -> np.ndarray:
        return np.array([np.trace(b).real for b in self.blocks])


def _excitation_states(n_emitters):
    return [
        np.array(sorted(sum(1 << b for b in c) for c in combinations(range(n_emitters), n)),
                 dtype=np.int64)
        for n in range(n_emitters + 1)
    ]


class _MasterEquation:
    """Right-hand side ``-i(H_eff rho - rho H_eff^+) + sum gamma s-_mu rho s+_nu``."""

    def __init__(self, gamma: np.ndarray, delta: np.ndarray):
        self.n = gamma.shape[0]
        self.gamma = gamma
        self.blocks = _excitation_blocks(self.n)
        self.sizes = [len(b.states) for b in self.blocks]
        self.offsets = np.concatenate([[0], np.cumsum([s * s for s in self.sizes])])
        self.h_eff = []
        self.decay_op = []
        for b in self.blocks:
            k = _block_operator(b.states, gamma)
            h = _block_operator(b.states, delta)
            self.decay_op.append(k)
            self.h_eff.append(h - 0.5j * k)

    def unpack(self, y):
        return [y[o:o + s * s].reshape(s, s) for o, s in zip(self.offsets, self.sizes)]

    def pack(self, blocks):
        return np.concatenate([b.ravel() for b in blocks])

    def initial(self):
        blocks = [np.zeros((s, s), dtype=complex) for s in self.sizes]
        blocks[-1][0, 0] = 1.0
        return self.pack(blocks)

    def __call__(self, t, y):
        rho = self.unpack(y)
        out = []
        for n, (r, h) in enumerate(zip(rho, self.h_eff)):
            hr = h @ r
            dr = -1j * (hr - hr.conj().T)
            if n < self.n:
                dr += self._feed(n, rho[n + 1])
            out.append(dr)
        return self.pack(out)

    def _feed(self, n, upper):
        """Jump contribution from block ``n + 1`` into block ``n``."""
        up = self.blocks[n].lower
        d_up = upper.shape[0]
        padded = np.zeros((d_up + 1, d_up + 1), dtype=complex)
        padded[:d_up, :d_up] = upper
        rows = padded[up.T]  # rows[mu, t, :] = upper[t | mu, :], zero if mu in t
        mixed = np.einsum("mn,mab->nab", self.gamma, rows)
        cols = np.take_along_axis(mixed, up.T[:, None, :], axis=2)
        return cols.sum(axis=0)

    def rate(self, rho_blocks) -> float:
        return float(sum(np.einsum("ij,ji->", k, r).real
                         for k, r in zip(self.decay_op, rho_blocks)))


def _as_array(m):
    if m is None:
        return None
    if isinstance(m, DecayMatrix):
        return np.array(m.rates)
    if isinstance(m, CouplingMatrix):
        return np.array(m.shifts)
    return np.asarray(m, dtype=float)


def lindblad_evolve(decay, coupling=None, times=None, max_emitters: int = MAX_EMITTERS):
    """Integrate the master equation from the fully inverted state.

    Returns the solver's block density states at ``times`` along with the
    emission rate at each of them.
    """
    gamma = _as_array(decay)
    n = gamma.shape[0]
    if n > max_emitters:
        raise ValueError(f"{n} emitters exceeds the Lindblad cap of {max_emitters}")
    report = validate_physical(gamma)
    if not report.ok:
        raise UnphysicalMatrixError(report)
    delta = _as_array(coupling)
    if delta is None:
        delta = np.zeros_like(gamma)
    delta = np.array(delta, dtype=float)
    np.fill_diagonal(delta, 0.0)
    if delta.shape != gamma.shape:
        raise ValueError("coupling and decay matrices differ in size")
    eq = _MasterEquation(gamma, delta)
    ys = _solve(eq, eq.initial(), np.asarray(times, dtype=float), "master-equation")
    states, rates = [], []
    for y in ys.T:
        blocks = eq.unpack(y)
        states.append(DensityState(blocks, n))
        rates.append(eq.rate(blocks))
    return states, np.array(rates)


def lindblad_rate_trace(decay, coupling=None, t_end: float = 5.0, n_steps: int = 500,
                        max_emitters: int = MAX_EMITTERS) -> RateTrace:
    """``R(t) = sum gamma_{mu nu} <s+_mu s-_nu>`` from the full master equation.

    The bare ``omega0`` term is dropped (rotating frame). Coherent exchange
    enters as ``H = sum_{mu != nu} Delta_{mu nu} s+_mu s-_nu``.
    """
    times = time_grid(t_end, n_steps)
    states, rates = lindblad_evolve(decay, coupling, times, max_emitters)
    exc = np.array([s.populations() @ np.arange(s.n_emitters + 1) for s in states])
    trace = RateTrace(times, rates, exc, {"method": "lindblad"})
    # each coherence may undershoot by the integrator tolerance
    if np.any(trace.rate < -POPULATION_TOL * np.abs(_as_array(decay)).sum()):
        raise IntegrationError("negative emission rate from the master equation")
    return trace


# -- birth-death ladder ---------------------------------------------------------

def _check_ladder_args(n, gamma, beta):
    if int(n) != n or n < 1:
        raise ValueError("need at least one emitter")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")


def ladder_generator(n: int, gamma: float, beta: float) -> np.ndarray:
    """Rate matrix ``Q`` with ``dP/dt = Q P`` for populations ``P_0..P_N``."""
    _check_ladder_args(n, gamma, beta)
    k = np.arange(n + 1)
    down = gamma * beta * k * (n - k + 1) + gamma * (1.0 - beta) * k
    q = np.diag(-down)
    q[k[:-1], k[1:]] = down[1:]
    return q


def ladder_rate_trace(n: int, gamma: float = 1.0, beta: float = 1.0, t_end: float = 5.0,
                      n_steps: int = 500) -> RateTrace:
    """Integrate the excitation-manifold chain from ``P_N = 1``.

    ``R`` is the total downward flux
    ``gamma beta sum n (N - n + 1) P_n + gamma (1 - beta) sum n P_n``.
    """
    q = ladder_generator(n, gamma, beta)
    k = np.arange(n + 1)
    down = -np.diag(q)
    p0 = np.zeros(n + 1)
    p0[n] = 1.0
    times = time_grid(t_end, n_steps)
    p = _solve(lambda t, y: q @ y, p0, times, "ladder")
    if np.any(p < -POPULATION_TOL) or np.any(p > 1 + POPULATION_TOL):
        raise IntegrationError("ladder populations left [0, 1]")
    if np.any(np.abs(p.sum(axis=0) - 1.0) > 1e-9):
        raise IntegrationError("ladder populations lost normalisation")
    return RateTrace(times, down @ p, k @ p, {"method": "ladder", "populations": p})


# -- mean field -------------------------------------------------------------------

def meanfield_rate_trace(n: int, gamma: float = 1.0, beta: float = 1.0, t_end: float = 5.0,
                         n_steps: int = 500) -> RateTrace:
    """Integrate ``dn/dt = -gamma(1 + beta N) n + gamma beta n^2`` from ``n = N``."""
    _check_ladder_args(n, gamma, beta)
    a = gamma * (1.0 + beta * n)
    b = gamma * beta

    def rhs(t, y):
        return -a * y + b * y * y

    times = time_grid(t_end, n_steps)
    x = _solve(rhs, np.array([float(n)]), times, "mean-field", atol=MEANFIELD_ATOL)[0]
    return RateTrace(times, -rhs(None, x), x, {"method": "meanfield"})


def _sech2(x):
    e = np.exp(-2.0 * np.abs(x))
    return 4.0 * e / (1.0 + e) ** 2


@dataclass(frozen=True)
class PeakTimes:
    exact: float  # peak of the sech^2 solution, ln(beta N)/(gamma(1 + beta N))
    prime: float  # ln(beta N)/(gamma (1 + beta) N)
    quasi_dicke: float  # ln(beta N)/(gamma beta N)


def peak_times(n: int, gamma: float, beta: float) -> PeakTimes:
    if beta <= 0:
        return PeakTimes(-math.inf, -math.inf, -math.inf)
    log_bn = math.log(beta * n)
    return PeakTimes(
        log_bn / (gamma * (1.0 + beta * n)),
        log_bn / (gamma * (1.0 + beta) * n),
        log_bn / (gamma * beta * n),
    )


def closed_form_rate(n: int, gamma: float, beta: float, t):
    """Mean-field emission rate and its peak time.

    Above ``BETA_MIN`` returns
    ``gamma (1 + beta N)^2 / (4 beta) sech^2[gamma (1 + beta N)(t - t0) / 2]``
    where ``t0`` is the exact peak of that solution; at or below it the
    independent decay ``gamma N exp(-gamma t)`` with peak at 0.

    Returns
    -------
    rate : ndarray or float
    t_peak : float
        Time of the maximum on ``t >= 0``.
    peaks : PeakTimes
        The exact, primed and quasi-Dicke peak-time expressions.
    """
    _check_ladder_args(n, gamma, beta)
    t_arr = np.asarray(t, dtype=float)
    peaks = peak_times(n, gamma, beta)
    if beta <= BETA_MIN:
        rate = gamma * n * np.exp(-gamma * t_arr)
        t_peak = 0.0
    else:
        a = gamma * (1.0 + beta * n)
        rate = a * a / (4.0 * gamma * beta) * _sech2(0.5 * a * (t_arr - peaks.exact))
        t_peak = max(0.0, peaks.exact)
    if np.ndim(rate) == 0:
        rate = float(rate)
    return rate, t_peak, peaks


def closed_form_trace(n: int, gamma: float = 1.0, beta: float = 1.0, t_end: float = 5.0,
                      n_steps: int = 500) -> RateTrace:
    times = time_grid(t_end, n_steps)
    rate, t_peak, peaks = closed_form_rate(n, gamma, beta, times)
    meta = {"method": "closed", "t_peak": t_peak, "t0_exact": peaks.exact,
            "t0_prime": peaks.prime, "t0_quasi_dicke": peaks.quasi_dicke}
    return RateTrace(times, rate, None, meta)
