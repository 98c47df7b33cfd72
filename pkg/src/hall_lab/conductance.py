"""Bulk and edge conductance functionals.

The bulk side is the double-commutator trace of a Fermi projection with two
switch functions, evaluated on a finite trace window: the full finite-box
trace vanishes identically by cyclicity, so the physical number lives in
windowed diagonal sums concentrated near the switch crossing.  The edge side
is the current across a switch line weighted by the derivative of a smoothed
Fermi step, with three regularizations: a hard spatial cutoff, the cutoff
plus a bound-state counterterm, and a Heisenberg time average of the cutoff.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lattice import Box, DiagonalOperator, SitePoint, switch_crossing, switch_function
from .operators import LatticeOperator
from .spectral import SmoothStep, Spectrum, gap_midpoint, spectral_projection, EnergySet

__all__ = [
    "TraceWindow",
    "ConductanceReport",
    "kubo_streda",
    "sigma_b_set",
    "SigmaBDecomposition",
    "sigma_b_decomposition",
    "edge_conductance_gap",
    "windowed_edge_current",
    "bound_state_correction",
    "sigma_e1",
    "sigma_e2",
    "InstantaneousCheck",
    "instantaneous_identity_check",
]

IDEMPOTENCY_TOL = 1e-8


@dataclass(frozen=True)
class TraceWindow:
    """Diagonal summation window: a 1-norm ball about a point, or the full box."""

    center: SitePoint | None
    radius: int | None

    @classmethod
    def full(cls) -> "TraceWindow":
        return cls(None, None)

    @classmethod
    def ball(cls, center, radius: int) -> "TraceWindow":
        if radius < 0:
            raise ValueError("window radius must be nonnegative")
        return cls(SitePoint.of(center), int(radius))

    @property
    def is_full(self) -> bool:
        return self.radius is None

    def mask(self, box: Box) -> np.ndarray:
        if self.is_full:
            return np.ones(box.n_sites, dtype=bool)
        c1, c2 = self.center.x1, self.center.x2
        lo1, hi1 = int(np.ceil(c1 - self.radius)), int(np.floor(c1 + self.radius))
        lo2, hi2 = int(np.ceil(c2 - self.radius)), int(np.floor(c2 + self.radius))
        if lo1 < box.x1_min or hi1 > box.x1_max or lo2 < box.x2_min or hi2 > box.x2_max:
            raise ValueError(f"window of radius {self.radius} about ({c1},{c2}) exceeds {box}")
        X1, X2 = box.coords()
        m = (np.abs(X1 - c1) + np.abs(X2 - c2)) <= self.radius
        if not np.any(m):
            raise ValueError("window contains no sites")
        return m

    def grown(self, extra: int) -> "TraceWindow":
        if self.is_full:
            return self
        return TraceWindow(self.center, self.radius + extra)


@dataclass
class ConductanceReport:
    value: float
    window: TraceWindow | None
    box: Box
    params: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)


def _check_projection(P: LatticeOperator):
    defect = float(np.max(np.abs(P.matrix @ P.matrix - P.matrix)))
    if defect > IDEMPOTENCY_TOL:
        raise ValueError(f"input is not a projection: max|P^2 - P| = {defect:.3e}")


def _kubo_diag(P: np.ndarray, l1: np.ndarray, l2: np.ndarray) -> np.ndarray:
    """Diagonal of -i P [[P, L1], [P, L2]] for diagonal switches."""
    A = P * (l1[None, :] - l1[:, None])
    B = P * (l2[None, :] - l2[:, None])
    return -1j * np.einsum("ij,ji->i", P, A @ B - B @ A)


def kubo_streda(
    P: LatticeOperator,
    lam1: DiagonalOperator,
    lam2: DiagonalOperator,
    window: TraceWindow,
) -> ConductanceReport:
    """Windowed double-commutator conductance of a Fermi projection.

    The report carries the full-box trace (identically zero in exact
    arithmetic, a cyclicity identity that makes the windowing mandatory),
    the imaginary residual of the windowed sum, and the change of the value
    when the window is grown by four sites.
    """
    _check_projection(P)
    box = P.box
    if lam1.box != box or lam2.box != box:
        raise ValueError("switches live on a different box")
    diag = _kubo_diag(P.matrix, lam1.values.real, lam2.values.real)
    m = window.mask(box)
    val = complex(np.sum(diag[m]))
    diagnostics = {
        "imag_residual": abs(val.imag),
        "full_trace_residual": abs(complex(np.sum(diag))),
    }
    diagnostics["window_delta"] = _window_delta(diag, window, box, val.real)
    return ConductanceReport(val.real, window, box, diagnostics=diagnostics)


def _window_delta(diag: np.ndarray, window: TraceWindow, box: Box, value: float) -> float:
    if window.is_full:
        return 0.0
    for extra in (4, -4):
        if window.radius + extra < 0:
            continue
        try:
            m = window.grown(extra).mask(box)
        except ValueError:
            continue
        return abs(float(np.sum(diag[m]).real) - value)
    return 0.0


def sigma_b_set(
    spec: Spectrum,
    S: EnergySet,
    lam1: DiagonalOperator,
    lam2: DiagonalOperator,
    window: TraceWindow,
) -> float:
    """Windowed conductance attached to a spectral set.

    Computes the windowed trace of i (E Λ1 E' Λ2 E - E Λ2 E' Λ1 E) with
    E the spectral projection onto S and E' its complement; for a Fermi
    half-line this coincides entrywise on the diagonal with the
    double-commutator form of :func:`kubo_streda`.
    """
    E = spectral_projection(spec, S).matrix
    l1 = lam1.values.real
    l2 = lam2.values.real
    Ec = np.eye(E.shape[0]) - E
    d1 = np.einsum("ij,ji->i", (E * l1[None, :]) @ Ec, l2[:, None] * E)
    d2 = np.einsum("ij,ji->i", (E * l2[None, :]) @ Ec, l1[:, None] * E)
    diag = 1j * (d1 - d2)
    m = window.mask(spec.box)
    return float(np.sum(diag[m]).real)


@dataclass
class SigmaBDecomposition:
    """Three-block split of the windowed bulk conductance at a Fermi cut.

    term_minus and term_plus collect the spectral weight strictly below and
    above the reference interval; term_delta is the per-eigenvalue sum over
    the interval, with the individual contributions listed twice (commutator
    form and compressed form, equal as operators block by block).
    """

    term_minus: float
    term_plus: float
    term_delta: float
    per_eigenvalue: list
    per_eigenvalue_block: list
    window: TraceWindow


def _masked_window_trace(U: np.ndarray, cols: np.ndarray, Me: np.ndarray, site_mask: np.ndarray) -> complex:
    """Windowed diagonal sum of U[:, cols] Me U[:, cols]* over masked sites."""
    rows = U[np.ix_(site_mask, cols)]
    return complex(np.sum((rows @ Me) * rows.conj()))


def sigma_b_decomposition(
    spec: Spectrum,
    delta: tuple[float, float],
    lam0: float,
    lam1: DiagonalOperator,
    lam2: DiagonalOperator,
    window: TraceWindow,
) -> SigmaBDecomposition:
    """Split the windowed bulk conductance at lam0 into below/above/in-window parts.

    All three terms are windowed traces of i E [P, Λ1] Λ2 E over the spectral
    blocks E below delta, above delta, and per eigenvalue cluster inside
    delta; on the full box their sum reproduces the (vanishing) full trace
    exactly, and on a window it tracks the windowed value up to boundary
    tails.
    """
    lo, hi = delta
    if not lo < lam0 < hi:
        raise ValueError("Fermi cut must lie inside the reference interval")
    ev = spec.eigenvalues
    for cut in (lo, lam0, hi):
        d = np.abs(ev - cut)
        k = int(np.argmin(d))
        if d[k] < spec.tie_tol:
            from .spectral import AmbiguousCutError

            raise AmbiguousCutError(f"cut {cut:.12g} falls on eigenvalue {ev[k]:.12g}")

    U = spec.eigenvectors
    l1e = spec.diag_to_eigenbasis(lam1.values.real)
    l2e = spec.diag_to_eigenbasis(lam2.values.real)
    p = (ev < lam0).astype(float)
    Ke = (p[:, None] - p[None, :]) * l1e @ l2e  # [P, Λ1] Λ2 in the eigenbasis
    site_mask = window.mask(spec.box)

    def block_value(idx: np.ndarray) -> float:
        if idx.size == 0:
            return 0.0
        v = 1j * _masked_window_trace(U, idx, Ke[np.ix_(idx, idx)], site_mask)
        return float(v.real)

    below = np.nonzero(ev < lo)[0]
    above = np.nonzero(ev > hi)[0]
    term_minus = block_value(below)
    term_plus = block_value(above)

    per, per_block = [], []
    pperp = 1.0 - p
    for s in spec.clusters():
        lam = float(np.mean(ev[s]))
        if not lo < lam < hi:
            continue
        idx = np.arange(s.start, s.stop)
        per.append((lam, block_value(idx)))
        # compressed form P Λ1 P' Λ2 P - P' Λ1 P Λ2 P' on the same block
        Te = (
            (p[:, None] * l1e * pperp[None, :]) @ (l2e * p[None, :])
            - (pperp[:, None] * l1e * p[None, :]) @ (l2e * pperp[None, :])
        )
        v = 1j * _masked_window_trace(U, idx, Te[np.ix_(idx, idx)], site_mask)
        per_block.append((lam, float(v.real)))
    term_delta = float(sum(v for _, v in per))
    return SigmaBDecomposition(term_minus, term_plus, term_delta, per, per_block, window)


def _edge_frame(spec: Spectrum, lam1: DiagonalOperator, lam2: DiagonalOperator):
    """Eigenbasis blocks shared by the edge functionals."""
    l1e = spec.diag_to_eigenbasis(lam1.values.real)
    l2e = spec.diag_to_eigenbasis(lam2.values.real)
    om = spec.eigenvalues[:, None] - spec.eigenvalues[None, :]
    return om * l1e, l2e, om  # [H, Λ1] in the eigenbasis, Λ2, frequency table


def edge_conductance_gap(
    spec_a: Spectrum,
    rho: SmoothStep,
    lam1: DiagonalOperator,
    bulk_bands=None,
) -> ConductanceReport:
    """Edge conductance -i tr ρ'(H)[H, Λ1] summed over the strip half x2 < 0.

    Valid when the step interval lies in a gap of the bulk bands (checked
    when band intervals are supplied): the integrand is then concentrated at
    the strip edges, and restricting the diagonal sum to x2 < 0 isolates the
    physical edge from its counter-propagating image at the opposite side of
    the strip.  The unrestricted finite trace vanishes identically and is
    reported as a residual.
    """
    if bulk_bands is not None:
        for a, b in bulk_bands:
            if max(a, rho.lo) < min(b, rho.hi):
                raise ValueError(
                    f"step interval ({rho.lo},{rho.hi}) overlaps bulk band ({a},{b})"
                )
    l1e = spec_a.diag_to_eigenbasis(lam1.values.real)
    om = spec_a.eigenvalues[:, None] - spec_a.eigenvalues[None, :]
    Ae = om * l1e
    d = rho.rho_prime(spec_a.eigenvalues)
    Mpos = spec_a.from_eigenbasis(d[:, None] * Ae)
    diag = -1j * np.diag(Mpos)
    _, X2 = spec_a.box.coords()
    val = complex(np.sum(diag[X2 < 0]))
    return ConductanceReport(
        val.real,
        None,
        spec_a.box,
        params={"rho": (rho.lo, rho.hi, rho.shape)},
        diagnostics={
            "imag_residual": abs(val.imag),
            "full_trace_residual": abs(complex(np.sum(diag))),
        },
    )


def _symmetrized_current(d: np.ndarray, Ae: np.ndarray, L2x: np.ndarray) -> complex:
    t1 = np.einsum("j,jk,kj->", d, Ae, L2x)
    t2 = np.einsum("j,jk,kj->", d, L2x, Ae)
    return complex(-0.5j * (t1 + t2))


def windowed_edge_current(
    spec_a: Spectrum,
    rho: SmoothStep,
    lam1: DiagonalOperator,
    lam2: DiagonalOperator,
    t: float = 0.0,
    diagnostics: dict | None = None,
) -> float:
    """Current across the Λ1 line through the evolved spatial cutoff Λ2(t).

    Real part of -(i/2) tr ρ'(H) {[H, Λ1], Λ2(t)} with Λ2(t) the Heisenberg
    evolution of the cutoff; the symmetrization makes the trace real up to
    roundoff, reported through the optional diagnostics dict.
    """
    Ae, l2e, om = _edge_frame(spec_a, lam1, lam2)
    d = rho.rho_prime(spec_a.eigenvalues)
    L2t = np.exp(1j * float(t) * om) * l2e
    v = _symmetrized_current(d, Ae, L2t)
    if diagnostics is not None:
        diagnostics["imag_residual"] = abs(v.imag)
    return v.real


def bound_state_correction(
    spec_B: Spectrum,
    rho: SmoothStep,
    delta: tuple[float, float],
    lam1: DiagonalOperator,
    lam2: DiagonalOperator,
    t: float = 0.0,
) -> float:
    """Persistent-current counterterm of the localized states in the window.

    Sums -ρ'(λ) Im tr E_λ [H, Λ1] Λ2(t) E_λ over the eigenvalue clusters in
    delta, on the bulk operator.  At t = 0 each summand reduces to
    +ρ'(λ) Im tr E_λ Λ1 H Λ2 E_λ, the circulating current of a bound state
    around the switch crossing.
    """
    lo, hi = delta
    Ae, l2e, om = _edge_frame(spec_B, lam1, lam2)
    L2t = np.exp(1j * float(t) * om) * l2e
    per_state = np.einsum("jk,kj->j", Ae, L2t)
    total = 0.0
    for s in spec_B.clusters():
        lam = float(np.mean(spec_B.eigenvalues[s]))
        if lo < lam < hi:
            total -= float(rho.rho_prime(lam)) * float(np.sum(per_state[s]).imag)
    return total


def sigma_e1(
    spec_a: Spectrum,
    spec_B: Spectrum,
    rho: SmoothStep,
    delta: tuple[float, float],
    offset1: float = 0.0,
    offset2: float = 0.0,
) -> ConductanceReport:
    """Cutoff edge current plus the bound-state counterterm.

    The current runs on the strip spectrum, the counterterm on the matching
    bulk spectrum; switch functions are rebuilt per box from the offsets.
    """
    l1a = switch_function(spec_a.box, 1, offset1)
    l2a = switch_function(spec_a.box, 2, offset2)
    l1b = switch_function(spec_B.box, 1, offset1)
    l2b = switch_function(spec_B.box, 2, offset2)
    dg: dict = {}
    current = windowed_edge_current(spec_a, rho, l1a, l2a, 0.0, diagnostics=dg)
    correction = bound_state_correction(spec_B, rho, delta, l1b, l2b, 0.0)
    return ConductanceReport(
        current + correction,
        None,
        spec_a.box,
        params={"rho": (rho.lo, rho.hi, rho.shape), "delta": delta},
        diagnostics={"current": current, "correction": correction, **dg},
    )


def sigma_e2(
    spec_a: Spectrum,
    rho: SmoothStep,
    lam1: DiagonalOperator,
    lam2: DiagonalOperator,
    T: float,
) -> ConductanceReport:
    """Edge current with the spatial cutoff replaced by its time average.

    Uses the closed-form averaging kernel; as T grows the cutoff approaches
    the commutant of the strip Hamiltonian and the persistent currents of
    localized states average out.
    """
    if T <= 0:
        raise ValueError("averaging time T must be positive")
    from .spectral import _average_kernel

    Ae, l2e, _ = _edge_frame(spec_a, lam1, lam2)
    d = rho.rho_prime(spec_a.eigenvalues)
    v = _symmetrized_current(d, Ae, _average_kernel(spec_a, T) * l2e)
    return ConductanceReport(
        v.real,
        None,
        spec_a.box,
        params={"rho": (rho.lo, rho.hi, rho.shape), "T": T},
        diagnostics={"imag_residual": abs(v.imag)},
    )


@dataclass
class InstantaneousCheck:
    lhs: float
    rhs: float
    gap: float
    sigma_b: float
    correction: float  # bulk-state term entering the right-hand side


def instantaneous_identity_check(
    spec_a: Spectrum,
    spec_B: Spectrum,
    rho: SmoothStep,
    delta: tuple[float, float],
    t: float,
    offset1: float = 0.0,
    offset2: float = 0.0,
    window: TraceWindow | None = None,
) -> InstantaneousCheck:
    """Compare the evolved-cutoff edge current against bulk plus bulk-state term.

    lhs is the strip current with evolved cutoff at time t; rhs is the
    windowed bulk conductance at a Fermi cut inside delta plus the sum of
    ρ'(λ) Im tr E_λ [H, Λ1] Λ2(t) E_λ over localized bulk states, which at
    t = 0 is exactly minus the bound-state counterterm.
    """
    l1a = switch_function(spec_a.box, 1, offset1)
    l2a = switch_function(spec_a.box, 2, offset2)
    l1b = switch_function(spec_B.box, 1, offset1)
    l2b = switch_function(spec_B.box, 2, offset2)
    lhs = windowed_edge_current(spec_a, rho, l1a, l2a, t)

    if window is None:
        box = spec_B.box
        reach = min(-box.x1_min, box.x1_max, -box.x2_min, box.x2_max)
        window = TraceWindow.ball(switch_crossing(offset1, offset2), max(2, reach // 4))
    lam0 = gap_midpoint(spec_B, delta[0], delta[1])
    P = spectral_projection(spec_B, EnergySet.below(lam0))
    sig_b = kubo_streda(P, l1b, l2b, window).value
    correction = -bound_state_correction(spec_B, rho, delta, l1b, l2b, t)
    rhs = sig_b + correction
    return InstantaneousCheck(lhs, rhs, abs(lhs - rhs), sig_b, correction)
