"""Real-space topological invariants.

A diagonal flux unitary twists a Fermi projection around a plaquette center;
the windowed trace of the cubed difference is the local index, an integer up
to window tails.  The same integer is reached by the sight-angle lattice sum
(which rebuilds 2 pi times a triangle area from plaquette contributions) and
by the trace-per-unit-volume form of the double-commutator conductance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import Box, SitePoint
from .operators import LatticeOperator
from .conductance import TraceWindow, _check_projection

__all__ = [
    "FluxUnitary",
    "flux_unitary",
    "IndexPairResult",
    "index_pair",
    "connes_area_sum",
    "trace_per_unit_volume_marker",
]


@dataclass(frozen=True)
class FluxUnitary:
    """Diagonal unitary exp(i arg(x - p)) for a plaquette center p."""

    box: Box
    p: SitePoint
    values: np.ndarray


def flux_unitary(box: Box, p) -> FluxUnitary:
    """Phase field of the sight angle from p; p must be a plaquette center.

    The branch of arg is (-pi, pi]; because p has half-integer coordinates
    the branch cut never meets a lattice site.
    """
    p = SitePoint.of(p)
    if not p.is_center:
        raise ValueError("flux insertion point must be a plaquette center")
    X1, X2 = box.coords()
    theta = np.arctan2(X2 - p.x2, X1 - p.x1)
    return FluxUnitary(box, p, np.exp(1j * theta))


@dataclass
class IndexPairResult:
    windowed: float
    full_trace: float


def index_pair(P: LatticeOperator, U: FluxUnitary, window: TraceWindow) -> IndexPairResult:
    """Windowed trace of (U P U* - P)^3.

    In infinite volume this trace is the integer index of the pair of
    projections (U P U*, P); on a finite box the full trace vanishes exactly
    (it is returned as a diagnostic), and the windowed sum approaches the
    integer as long as the window clears the box boundary.
    """
    _check_projection(P)
    if U.box != P.box:
        raise ValueError("flux unitary lives on a different box")
    u = U.values
    T = (u[:, None] * P.matrix) * np.conj(u)[None, :] - P.matrix
    diag = np.einsum("ij,jk,ki->i", T, T, T, optimize=True)
    m = window.mask(P.box)
    return IndexPairResult(float(np.sum(diag[m]).real), float(np.sum(diag).real))


def connes_area_sum(u1, u2, u3, R: int) -> float:
    """Truncated sight-angle sum recovering 2 pi times the triangle area.

    Sums sin of the three directed sight angles of the triangle edges over
    all plaquette centers p with |p| <= R in the 1-norm.  The sine of each
    angle is cross/(|a||b|), which vanishes automatically in the collinear
    configurations, matching the convention that an aligned viewpoint
    contributes nothing.
    """
    if R < 1:
        raise ValueError("truncation radius must be at least 1")
    pts = [SitePoint.of(u) for u in (u1, u2, u3)]
    half = np.arange(-R, R + 1) + 0.5
    P1, P2 = np.meshgrid(half, half, indexing="ij")
    P1, P2 = P1.ravel(), P2.ravel()
    keep = (np.abs(P1) + np.abs(P2)) <= R
    P1, P2 = P1[keep], P2[keep]
    total = 0.0
    for a, b in ((pts[0], pts[1]), (pts[1], pts[2]), (pts[2], pts[0])):
        a1, a2 = a.x1 - P1, a.x2 - P2
        b1, b2 = b.x1 - P1, b.x2 - P2
        cross = a1 * b2 - a2 * b1
        norms = np.hypot(a1, a2) * np.hypot(b1, b2)
        total += float(np.sum(cross / norms))
    return total


def trace_per_unit_volume_marker(
    P: LatticeOperator, L_inner: int, bond_cutoff: int = 12
) -> float:
    """Averaged triple-product conductance marker on the inner square window.

    Evaluates -2i / (2L+1)^2 times the sum over x in the centered square of
    half width L of P(x,y) P(y,z) P(z,x) Area(x,y,z), with y and z running
    over the 1-norm ball of the given cutoff around x.  The cutoff trades
    the exponentially small far-bond contributions of a localized projection
    for a quadratic-in-neighborhood cost.
    """
    _check_projection(P)
    box = P.box
    if (
        box.x1_min > -L_inner - bond_cutoff
        or box.x1_max < L_inner + bond_cutoff
        or box.x2_min > -L_inner - bond_cutoff
        or box.x2_max < L_inner + bond_cutoff
    ):
        raise ValueError("inner window plus bond cutoff halo exceeds the box")
    X1, X2 = box.coords()
    M = P.matrix
    centers = np.nonzero((np.abs(X1) <= L_inner) & (np.abs(X2) <= L_inner))[0]
    total = 0.0 + 0.0j
    for x in centers:
        near = np.nonzero((np.abs(X1 - X1[x]) + np.abs(X2 - X2[x])) <= bond_cutoff)[0]
        a1 = (X1[x] - X1[near]).astype(float)
        a2 = (X2[x] - X2[near]).astype(float)
        b1 = X1[near][:, None] - X1[near][None, :]
        b2 = X2[near][:, None] - X2[near][None, :]
        area = 0.5 * (a1[:, None] * b2 - a2[:, None] * b1)
        total += M[x, near] @ (M[np.ix_(near, near)] * area) @ M[near, x]
    return float((-2j * total).real) / (2 * L_inner + 1) ** 2
