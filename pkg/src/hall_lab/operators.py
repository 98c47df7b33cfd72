"""Bulk and edge Hamiltonians on finite windows.

Uniform-flux nearest-neighbor hopping in the gauge with trivial phases along
the x1 direction and phase exp(i*phi*x1) per upward hop, plus an optional
i.i.d. Cauchy on-site potential drawn from a counter-based per-site hash so
that disorder fields agree between boxes on shared sites.  The half-plane
restriction uses hard-wall (Dirichlet) truncation and exposes the boundary
defect as an explicit matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .lattice import Box, DiagonalOperator

__all__ = [
    "LatticeOperator",
    "DisorderConfig",
    "EdgeGeometry",
    "harper_hamiltonian",
    "harper_sparse",
    "cauchy_potential",
    "derive_seed",
    "restrict_half_plane",
    "commutator_switch",
    "short_range_constant",
    "boundary_defect_norm",
    "plaquette_products",
    "conjugate_by_diagonal",
    "distance_matrix",
]

_HERMITICITY_TOL = 1e-12


@dataclass(frozen=True)
class LatticeOperator:
    """Dense operator on the sites of a box, tagged with a hermiticity flag."""

    box: Box
    matrix: np.ndarray
    hermitian: bool = False

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        n = self.box.n_sites
        if m.shape != (n, n):
            raise ValueError(f"matrix shape {m.shape} does not match {n} sites")
        if self.hermitian:
            scale = max(1.0, float(np.max(np.abs(m))))
            defect = float(np.max(np.abs(m - m.conj().T)))
            if defect > _HERMITICITY_TOL * scale:
                raise ValueError(f"hermitian flag set but max|M - M*| = {defect:.3e}")
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True)
class DisorderConfig:
    """Coupling and seed of the i.i.d. Cauchy on-site potential."""

    alpha: float
    seed: int
    distribution: str = "Cauchy"

    def __post_init__(self):
        if self.distribution != "Cauchy":
            raise ValueError(f"unsupported distribution {self.distribution!r}")


@dataclass(frozen=True)
class EdgeGeometry:
    """Half-plane restriction x2 >= -a with a hard-wall boundary."""

    a: int
    boundary: str = "dirichlet"

    def __post_init__(self):
        if self.a < 0:
            raise ValueError("edge height a must be nonnegative")
        if self.boundary != "dirichlet":
            raise ValueError(f"unsupported boundary condition {self.boundary!r}")


# counter-based per-site generator: splitmix64 finalizer folded over
# (seed, x1, x2), so the value at a site is independent of the box
_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_C1 = np.uint64(0x9E3779B97F4A7C15)
_C2 = np.uint64(0xBF58476D1CE4E5B9)
_C3 = np.uint64(0x94D049BB133111EB)


def _mix(x: np.ndarray) -> np.ndarray:
    x = (x + _C1) & _M64
    x = ((x ^ (x >> np.uint64(30))) * _C2) & _M64
    x = ((x ^ (x >> np.uint64(27))) * _C3) & _M64
    return x ^ (x >> np.uint64(31))


def _site_uniforms(seed: int, X1: np.ndarray, X2: np.ndarray) -> np.ndarray:
    """Uniform (0,1) variate per site, keyed by (seed, x1, x2)."""
    h = _mix(np.full(X1.shape, np.uint64(seed & 0xFFFFFFFFFFFFFFFF), dtype=np.uint64))
    h = _mix(h ^ X1.astype(np.int64).astype(np.uint64))
    h = _mix(h ^ X2.astype(np.int64).astype(np.uint64))
    # top 53 bits, centered so u is never 0 or 1
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def derive_seed(master: int, index: int) -> int:
    """Per-sample seed for ensemble runs, keyed by (master, index)."""
    h = _mix(np.uint64(master & 0xFFFFFFFFFFFFFFFF) ^ _mix(np.uint64(index & 0xFFFFFFFFFFFFFFFF)))
    return int(h)


def cauchy_potential(box: Box, cfg: DisorderConfig) -> DiagonalOperator:
    """alpha * V(x) with V i.i.d. standard Cauchy via the inverse CDF."""
    if cfg.alpha == 0.0:
        return DiagonalOperator(box, np.zeros(box.n_sites))
    u = _site_uniforms(cfg.seed, *box.coords())
    return DiagonalOperator(box, cfg.alpha * np.tan(np.pi * (u - 0.5)))


def _hop_lists(box: Box, phi: float):
    """Row, column and value arrays of the upper-triangle hops."""
    X1, X2 = box.coords()
    n1 = box.n1
    h = np.nonzero(X1 < box.x1_max)[0]
    v = np.nonzero(X2 < box.x2_max)[0]
    rows = np.concatenate([h + 1, v + n1])
    cols = np.concatenate([h, v])
    vals = np.concatenate([np.ones(h.size, complex), np.exp(1j * phi * X1[v])])
    return rows, cols, vals


def harper_hamiltonian(box: Box, phi: float) -> LatticeOperator:
    """Uniform-flux hopping matrix with open boundaries.

    Hops along x1 carry amplitude 1; an upward hop at column x1 carries
    exp(i*phi*x1), so the product of amplitudes counterclockwise around any
    plaquette is exactly exp(i*phi).  Hermiticity holds entrywise.
    """
    n = box.n_sites
    H = np.zeros((n, n), dtype=complex)
    rows, cols, vals = _hop_lists(box, phi)
    H[rows, cols] = vals
    H[cols, rows] = np.conj(vals)
    return LatticeOperator(box, H, hermitian=True)


def harper_sparse(box: Box, phi: float, diagonal: np.ndarray | None = None) -> sp.csc_matrix:
    """Sparse (CSC) variant of :func:`harper_hamiltonian` for solver work."""
    rows, cols, vals = _hop_lists(box, phi)
    r = np.concatenate([rows, cols])
    c = np.concatenate([cols, rows])
    v = np.concatenate([vals, np.conj(vals)])
    if diagonal is not None:
        d = np.arange(box.n_sites)
        r = np.concatenate([r, d])
        c = np.concatenate([c, d])
        v = np.concatenate([v, np.asarray(diagonal, dtype=complex)])
    n = box.n_sites
    return sp.coo_matrix((v, (r, c)), shape=(n, n)).tocsc()


def plaquette_products(H: LatticeOperator) -> np.ndarray:
    """Counterclockwise product of hop amplitudes around every plaquette."""
    box = H.box
    out = []
    M = H.matrix
    for x2 in range(box.x2_min, box.x2_max):
        for x1 in range(box.x1_min, box.x1_max):
            i1 = box.index(x1, x2)
            i2 = box.index(x1 + 1, x2)
            i3 = box.index(x1 + 1, x2 + 1)
            i4 = box.index(x1, x2 + 1)
            out.append(M[i1, i4] * M[i4, i3] * M[i3, i2] * M[i2, i1])
    return np.asarray(out)


def conjugate_by_diagonal(H: LatticeOperator, phases: np.ndarray) -> LatticeOperator:
    """W H W* for the diagonal unitary W = diag(phases); a gauge change."""
    w = np.asarray(phases, dtype=complex)
    if np.max(np.abs(np.abs(w) - 1.0)) > 1e-12:
        raise ValueError("gauge phases must have unit modulus")
    M = (w[:, None] * H.matrix) * np.conj(w)[None, :]
    if H.hermitian:
        M = 0.5 * (M + M.conj().T)
    return LatticeOperator(H.box, M, hermitian=H.hermitian)


def restrict_half_plane(H_B: LatticeOperator, geom: EdgeGeometry):
    """Hard-wall restriction to the rows x2 >= -a of the box.

    Returns (H_a, E_a): H_a is the submatrix on the strip, in the strip's own
    row-major ordering, and E_a is the boundary defect realized on the bulk
    box, with entries -H_B(x, x') on rows x2 < -a and columns x2' >= -a and
    zero elsewhere.  When the cut falls below the box nothing is removed.
    """
    box = H_B.box
    edge_row = -geom.a
    if edge_row > box.x2_max:
        raise ValueError(f"edge row {edge_row} lies above the box {box}")
    X1, X2 = box.coords()
    if edge_row <= box.x2_min:
        zero = LatticeOperator(box, np.zeros((box.n_sites, box.n_sites)))
        return H_B, zero
    strip = Box(box.x1_min, box.x1_max, edge_row, box.x2_max)
    keep = np.nonzero(X2 >= edge_row)[0]
    H_a = LatticeOperator(strip, H_B.matrix[np.ix_(keep, keep)], hermitian=H_B.hermitian)
    E = np.zeros_like(H_B.matrix)
    below = X2 < edge_row
    E[np.ix_(below, ~below)] = -H_B.matrix[np.ix_(below, ~below)]
    return H_a, LatticeOperator(box, E)


def commutator_switch(H: LatticeOperator, lam: DiagonalOperator) -> LatticeOperator:
    """[H, Lambda] for a diagonal Lambda; antihermitian when H is hermitian."""
    if H.box != lam.box:
        raise ValueError("operator and switch live on different boxes")
    v = lam.values
    return LatticeOperator(H.box, H.matrix * (v[None, :] - v[:, None]))


def distance_matrix(box: Box) -> np.ndarray:
    """Pairwise 1-norm distances |x - x'| in dense-index order."""
    X1, X2 = box.coords()
    return (
        np.abs(X1[:, None] - X1[None, :]) + np.abs(X2[:, None] - X2[None, :])
    ).astype(float)


def short_range_constant(H: LatticeOperator, mu: float) -> float:
    """Hopping-decay constant sup_x sum_x' |H(x,x')| (exp(mu |x-x'|) - 1).

    For the uniform-flux model with four unit-modulus neighbors the interior
    value is 4 (e^mu - 1); on-site terms never contribute.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    w = np.expm1(mu * distance_matrix(H.box))
    return float(np.max(np.sum(np.abs(H.matrix) * w, axis=1)))


def boundary_defect_norm(E_a: LatticeOperator, mu: float, a: int) -> float:
    """Weighted row-sum norm of the boundary defect.

    Evaluates sup_x sum_x' |E_a(x,x')| exp(mu (|x2 + a| + |x1 - x1'|)); the
    weight anchors decay to the edge row rather than to the diagonal.
    """
    X1, X2 = E_a.box.coords()
    w = np.exp(mu * (np.abs(X2 + a)[:, None] + np.abs(X1[:, None] - X1[None, :])))
    return float(np.max(np.sum(np.abs(E_a.matrix) * w, axis=1)))
