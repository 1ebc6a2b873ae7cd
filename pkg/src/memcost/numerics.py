"""Numerical kernel: bracketed bisection, Chebyshev-Gauss quadrature, dense
symmetric eigendecomposition and thin SVD contracts.

Everything here is a pure function of its inputs (no shared mutable state),
so all operations are safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import BracketError, ConvergenceError, DomainError

__all__ = [
    "Interval",
    "QuadratureRule",
    "ToleranceSpec",
    "bisect",
    "chebyshev_gauss_rule",
    "sym_eig",
    "sym_eigvals",
    "svd_thin",
]


@dataclass(frozen=True)
class Interval:
    """A finite open-ended search or integration domain [lo, hi], lo < hi."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise DomainError(f"interval endpoints must be finite, got [{self.lo}, {self.hi}]")
        if not self.lo < self.hi:
            raise DomainError(f"interval requires lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights on (-1, 1), nodes strictly increasing."""

    node_count: int
    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.node_count < 1:
            raise DomainError("node_count must be a positive integer")
        if len(self.nodes) != self.node_count or len(self.weights) != self.node_count:
            raise DomainError("nodes and weights must both have node_count entries")
        if np.any(np.diff(self.nodes) <= 0):
            raise DomainError("nodes must be strictly increasing")
        if np.any(self.weights <= 0):
            raise DomainError("weights must be positive")


@dataclass(frozen=True)
class ToleranceSpec:
    """Stopping tolerances for iterative solvers.

    A solve stops when the residual drops to ``abs_tol`` or the bracket
    shrinks to ``rel_tol * |x| + abs_tol``; at least one tolerance must be
    positive.
    """

    abs_tol: float = 1e-12
    rel_tol: float = 4e-16
    max_iter: int = 200

    def __post_init__(self):
        if self.abs_tol < 0 or self.rel_tol < 0:
            raise DomainError("tolerances must be nonnegative")
        if self.abs_tol + self.rel_tol <= 0:
            raise DomainError("abs_tol + rel_tol must be positive")
        if self.max_iter < 1:
            raise DomainError("max_iter must be a positive integer")


def bisect(f: Callable[[float], float], bracket: Interval, tol: ToleranceSpec) -> float:
    """Find a root of a continuous monotone function by pure bisection.

    Parameters
    ----------
    f : callable
        Scalar function, continuous and monotone on the bracket, with
        f(lo) and f(hi) of opposite sign (or one of them zero).
    bracket : Interval
        Initial enclosure of the root.
    tol : ToleranceSpec
        Stop when |f(mid)| <= abs_tol or the bracket width falls below
        rel_tol * |mid| + abs_tol.

    Returns
    -------
    float
        The approximate root. Deterministic: identical inputs yield
        bit-identical outputs.

    Raises
    ------
    BracketError
        If f does not change sign over the bracket.
    ConvergenceError
        If max_iter bisection steps do not reach either tolerance; the
        exception carries the last bracket.
    """
    lo, hi = bracket.lo, bracket.hi
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise BracketError(
            f"no sign change over [{lo}, {hi}]: f(lo)={flo}, f(hi)={fhi}",
            lo=lo, hi=hi, flo=flo, fhi=fhi,
        )
    for _ in range(tol.max_iter):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            # bracket exhausted at float resolution
            return mid
        fmid = f(mid)
        if abs(fmid) <= tol.abs_tol:
            return mid
        if np.sign(fmid) == np.sign(flo):
            lo, flo = mid, fmid
        else:
            hi, fhi = mid, fmid
        if hi - lo <= tol.rel_tol * abs(mid) + tol.abs_tol:
            return 0.5 * (lo + hi)
    raise ConvergenceError(
        f"bisection did not converge in {tol.max_iter} iterations", last=(lo, hi)
    )


@lru_cache(maxsize=64)
def _cheb_nodes_weights(k: int) -> tuple[np.ndarray, np.ndarray]:
    i = np.arange(1, k + 1, dtype=np.float64)
    nodes = np.cos((2.0 * i - 1.0) * np.pi / (2.0 * k))[::-1].copy()
    weights = np.full(k, np.pi / k)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def chebyshev_gauss_rule(k: int) -> QuadratureRule:
    """Chebyshev-Gauss rule of the first kind with k nodes.

    Nodes are cos((2i-1)pi/(2k)) (returned in increasing order) and every
    weight equals pi/k.  The rule integrates g(x)/sqrt(1-x^2) exactly for
    polynomial g of degree <= 2k-1; multiplying the integrand by (1-x^2)
    ("weight transfer") turns it into a rule for the sqrt(1-x^2) weight,
    which absorbs the inverse-square-root endpoint behavior of spectral
    edge densities exactly.
    """
    if k < 1:
        raise DomainError("chebyshev_gauss_rule requires k >= 1")
    nodes, weights = _cheb_nodes_weights(int(k))
    return QuadratureRule(node_count=int(k), nodes=nodes, weights=weights)


def sym_eig(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a dense symmetric matrix.

    Returns (eigenvalues ascending, orthonormal eigenbasis as columns).
    The input must be symmetric to within 1e-12 relative; asymmetric input
    is a contract violation.
    """
    M = np.asarray(M, dtype=np.float64)
    _check_symmetric(M)
    vals, vecs = np.linalg.eigh(M)
    return vals, vecs


def sym_eigvals(M: np.ndarray) -> np.ndarray:
    """Eigenvalues (ascending) of a dense symmetric matrix, no vectors."""
    M = np.asarray(M, dtype=np.float64)
    _check_symmetric(M)
    return np.linalg.eigvalsh(M)


def _check_symmetric(M: np.ndarray) -> None:
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {M.shape}")
    scale = np.linalg.norm(M)
    if scale == 0.0:
        return
    if np.linalg.norm(M - M.T) > 1e-12 * scale:
        raise DomainError("matrix is not symmetric to within 1e-12 relative")


def svd_thin(M: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin singular value decomposition of a wide matrix (n <= d).

    Returns (singular values descending, U with orthonormal columns,
    V with orthonormal columns) such that M = U @ diag(s) @ V.T.  Rank
    deficiency is reported through zero singular values, not an error.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise DomainError(f"expected a matrix, got ndim={M.ndim}")
    n, d = M.shape
    if n > d:
        raise DomainError(f"svd_thin requires n <= d, got shape {M.shape}")
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    return s, U, Vt.T
