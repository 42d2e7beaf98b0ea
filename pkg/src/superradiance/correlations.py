"""Zero-delay second-order correlation of a fully inverted emitter array.

``g2_direct`` evaluates the four-index Kronecker-delta sum as written and is
kept as the oracle for ``g2_spectral``, which needs one symmetric
eigendecomposition of the decay matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coupling import DecayMatrix, UnphysicalMatrixError, validate_physical

BOUND_SLACK = 1e-9


@dataclass(frozen=True)
class G2Result:
    value: float
    method: str
    n_emitters: int

    def __float__(self):
        return float(self.value)


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenpairs of a decay matrix; ``eigenvectors[:, i]`` pairs with ``eigenvalues[i]``."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T


def _rates(m, validate: bool) -> np.ndarray:
    g = m.rates if isinstance(m, DecayMatrix) else np.asarray(m, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError(f"decay matrix must be square, got shape {g.shape}")
    if g.shape[0] < 2:
        raise ValueError("G2(0,0) needs at least two emitters")
    if validate:
        report = validate_physical(g)
        if not report.ok:
            raise UnphysicalMatrixError(report)
    return g


def spectral_decomposition(m) -> SpectralDecomposition:
    g = m.rates if isinstance(m, DecayMatrix) else np.asarray(m, dtype=float)
    w, v = np.linalg.eigh(0.5 * (g + g.T))
    return SpectralDecomposition(w, v)


def g2_direct(m, validate: bool = True) -> G2Result:
    """Literal O(N^4) evaluation of the Kronecker-delta sum.

    For every outer index ``mu`` the weight tensor
    ``(1 - d_{mu nu})(d_{mu eps} d_{gam nu} + d_{mu gam} d_{nu eps})``
    is materialised over ``(nu, gam, eps)`` and contracted with
    ``gamma_{eps mu} gamma_{gam nu}``.
    """
    g = _rates(m, validate)
    n = g.shape[0]
    eye = np.eye(n)
    gT = g.T  # gT[nu, gam] = gamma_{gam nu}
    partial = np.empty(n)
    for mu in range(n):
        e = eye[mu]
        weight = (
            e[None, None, :] * eye[:, :, None]  # d_{mu eps} d_{gam nu}
            + e[None, :, None] * eye[:, None, :]  # d_{mu gam} d_{nu eps}
        ) * (1.0 - e)[:, None, None]
        terms = g[None, None, :, mu] * gT[:, :, None] * weight
        partial[mu] = terms.sum()
    denom = np.trace(g) ** 2
    return G2Result(float(partial.sum() / denom), "direct", n)


def g2_spectral(m, validate: bool = True) -> G2Result:
    """G2(0,0) from the eigenvalues ``Gamma_i`` and eigenvectors ``alpha_i``.

    ``1 + sum_i Gamma_i^2 / S^2 - 2 sum_mu (sum_i Gamma_i alpha_{i,mu}^2)^2 / S^2``
    with ``S = sum_i Gamma_i``; ``i`` labels eigenpairs and ``mu`` emitters.
    """
    g = _rates(m, validate)
    dec = spectral_decomposition(g)
    w, v = dec.eigenvalues, dec.eigenvectors
    total = w.sum()
    weighted = (v**2) @ w  # sum_i Gamma_i |alpha_{i,mu}|^2, per emitter
    value = 1.0 + (w @ w) / total**2 - 2.0 * (weighted @ weighted) / total**2
    return G2Result(float(value), "spectral", g.shape[0])


def _diag(diag) -> np.ndarray:
    d = np.asarray(diag, dtype=float).ravel()
    if d.size < 2:
        raise ValueError("need at least two single-emitter rates")
    if np.any(d <= 0):
        raise ValueError("single-emitter rates must be positive")
    return d


def g2_independent_limit(diag) -> float:
    """``1 - sum(g^2) / sum(g)^2`` for uncoupled emitters with rates ``diag``."""
    d = _diag(diag)
    return float(1.0 - (d @ d) / d.sum() ** 2)


def g2_dicke_limit(diag) -> float:
    """Maximal-coupling value, twice the independent limit."""
    return 2.0 * g2_independent_limit(diag)


def g2_bic_analytic(n: int, beta: float) -> float:
    """``(1 + beta^2)(n - 1)/n`` for the uniform single-mode model."""
    if int(n) != n or n < 2:
        raise ValueError("need at least two emitters")
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    return (1.0 + beta * beta) * (n - 1) / n


@dataclass(frozen=True)
class BoundsReport:
    lower: float
    value: float
    upper: float

    @property
    def ok(self) -> bool:
        return (self.lower - BOUND_SLACK <= self.value <= self.upper + BOUND_SLACK)


def check_bounds(m) -> BoundsReport:
    """Independent and Dicke limits around the spectral G2 of ``m``."""
    g = _rates(m, validate=False)
    d = np.diag(g)
    return BoundsReport(g2_independent_limit(d), g2_spectral(g, validate=False).value,
                        g2_dicke_limit(d))
