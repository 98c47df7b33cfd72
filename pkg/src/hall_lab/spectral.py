"""Exact finite-volume functional calculus.

Everything spectral runs through one dense Hermitian eigendecomposition per
operator: spectral projections, functions of the Hamiltonian, Heisenberg
evolution and its closed-form time average, plus the localization
diagnostics (weighted kernel sums, deflated eigenbasis construction,
half-plane mass minima, propagation-speed and resolvent-decay checks).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .lattice import Box, DiagonalOperator, _check_lipschitz
from .operators import LatticeOperator, short_range_constant

__all__ = [
    "AmbiguousCutError",
    "EnergySet",
    "SmoothStep",
    "Spectrum",
    "eigendecompose",
    "spectral_projection",
    "apply_function",
    "evolve",
    "time_average",
    "gap_midpoint",
    "dynamical_localization_bound",
    "localized_basis",
    "localization_minima",
    "PropagationSpeedCheck",
    "propagation_speed_check",
    "CombesThomasCheck",
    "combes_thomas_check",
]

DEGENERACY_RTOL = 1e-8
TIE_RTOL = 1e-9


class AmbiguousCutError(ValueError):
    """A spectral cut fell on (or too close to) an eigenvalue."""


@dataclass(frozen=True)
class EnergySet:
    """Finite union of disjoint open intervals of the energy axis."""

    intervals: tuple[tuple[float, float], ...]

    def __post_init__(self):
        ivs = sorted((float(a), float(b)) for a, b in self.intervals)
        merged: list[tuple[float, float]] = []
        for a, b in ivs:
            if a >= b:
                raise ValueError(f"degenerate interval ({a}, {b})")
            if merged and a <= merged[-1][1]:
                merged[-1] = (merged[-1][0], max(merged[-1][1], b))
            else:
                merged.append((a, b))
        object.__setattr__(self, "intervals", tuple(merged))

    @classmethod
    def below(cls, cut: float) -> "EnergySet":
        return cls(((-np.inf, float(cut)),))

    @classmethod
    def above(cls, cut: float) -> "EnergySet":
        return cls(((float(cut), np.inf),))

    @classmethod
    def interval(cls, lo: float, hi: float) -> "EnergySet":
        return cls(((lo, hi),))

    def complement(self) -> "EnergySet":
        cuts = [-np.inf]
        for a, b in self.intervals:
            cuts += [a, b]
        cuts.append(np.inf)
        out = []
        for a, b in zip(cuts[::2], cuts[1::2]):
            if a < b:
                out.append((a, b))
        return EnergySet(tuple(out))

    def union(self, other: "EnergySet") -> "EnergySet":
        return EnergySet(self.intervals + other.intervals)

    def indicator(self, values: np.ndarray) -> np.ndarray:
        v = np.asarray(values)
        out = np.zeros(v.shape, dtype=bool)
        for a, b in self.intervals:
            out |= (v > a) & (v < b)
        return out

    def finite_boundaries(self) -> list[float]:
        return [c for iv in self.intervals for c in iv if np.isfinite(c)]


_BUMP_MASS, _ = quad(lambda s: np.exp(-1.0 / (1.0 - s * s)), -1.0, 1.0, limit=200)


class SmoothStep:
    """Smoothed step that is 1 below and 0 above a transition interval.

    shape "bump" uses the standard compactly supported smooth bump for the
    derivative; "poly" uses the quartic (1 - s^2)^2, which has an elementary
    antiderivative; "step" is the sharp cut at the interval midpoint, kept
    for comparisons against sharp spectral projections (it has no usable
    derivative).  The derivative integrates to -1 in all smooth shapes.
    """

    def __init__(self, lo: float, hi: float, shape: str = "bump"):
        if not lo < hi:
            raise ValueError("need lo < hi")
        if shape not in ("bump", "poly", "step"):
            raise ValueError(f"unknown shape {shape!r}")
        self.lo = float(lo)
        self.hi = float(hi)
        self.shape = shape

    @property
    def interval(self) -> tuple[float, float]:
        return (self.lo, self.hi)

    def _s(self, lam):
        return 2.0 * (np.asarray(lam, dtype=float) - self.lo) / (self.hi - self.lo) - 1.0

    def rho_prime(self, lam):
        s = self._s(lam)
        scalar = s.ndim == 0
        s = np.atleast_1d(s)
        out = np.zeros_like(s)
        inside = np.abs(s) < 1.0
        si = s[inside]
        if self.shape == "bump":
            out[inside] = -np.exp(-1.0 / (1.0 - si * si)) / _BUMP_MASS
        elif self.shape == "poly":
            out[inside] = -(15.0 / 16.0) * (1.0 - si * si) ** 2
        else:
            raise ValueError("sharp step has no pointwise derivative")
        out *= 2.0 / (self.hi - self.lo)
        return out[0] if scalar else out

    def rho(self, lam):
        s = self._s(lam)
        scalar = s.ndim == 0
        s = np.atleast_1d(s)
        if self.shape == "step":
            out = (s < 0.0).astype(float)
        elif self.shape == "poly":
            si = np.clip(s, -1.0, 1.0)
            # antiderivative of (1 - u^2)^2 is u - 2u^3/3 + u^5/5, worth -8/15 at -1
            F = si - 2.0 * si**3 / 3.0 + si**5 / 5.0
            out = 1.0 - (15.0 / 16.0) * (F + 8.0 / 15.0)
        else:
            out = np.empty_like(s)
            for k, sk in enumerate(s):
                if sk <= -1.0:
                    out[k] = 1.0
                elif sk >= 1.0:
                    out[k] = 0.0
                else:
                    mass, _ = quad(lambda u: np.exp(-1.0 / (1.0 - u * u)), -1.0, sk, limit=200)
                    out[k] = 1.0 - mass / _BUMP_MASS
        return float(out[0]) if scalar else out

    def derivative_mass(self) -> float:
        """Quadrature check of the unit mass of -rho'."""
        val, _ = quad(self.rho_prime, self.lo, self.hi, limit=400)
        return float(val)


@dataclass(frozen=True)
class Spectrum:
    """Eigendecomposition H = U diag(eigenvalues) U* of a hermitian operator."""

    box: Box
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def n(self) -> int:
        return self.eigenvalues.size

    @property
    def norm(self) -> float:
        """Spectral norm of the decomposed operator (1.0 for the zero matrix)."""
        m = float(np.max(np.abs(self.eigenvalues))) if self.n else 0.0
        return m if m > 0 else 1.0

    @property
    def degeneracy_tol(self) -> float:
        return DEGENERACY_RTOL * self.norm

    @property
    def tie_tol(self) -> float:
        return TIE_RTOL * self.norm

    def clusters(self, tol: float | None = None) -> list[slice]:
        """Slices of (numerically) degenerate eigenvalue groups, in order."""
        tol = self.degeneracy_tol if tol is None else tol
        ev = self.eigenvalues
        out, start = [], 0
        for k in range(1, ev.size + 1):
            if k == ev.size or ev[k] - ev[k - 1] > tol:
                out.append(slice(start, k))
                start = k
        return out

    def to_eigenbasis(self, M: np.ndarray) -> np.ndarray:
        return self.eigenvectors.conj().T @ M @ self.eigenvectors

    def diag_to_eigenbasis(self, values: np.ndarray) -> np.ndarray:
        U = self.eigenvectors
        return U.conj().T @ (np.asarray(values)[:, None] * U)

    def from_eigenbasis(self, Me: np.ndarray) -> np.ndarray:
        U = self.eigenvectors
        return U @ Me @ U.conj().T


def eigendecompose(H: LatticeOperator) -> Spectrum:
    """Dense Hermitian eigendecomposition; the engine of all functional calculus."""
    if not H.hermitian:
        raise ValueError("eigendecomposition requires the hermitian flag")
    ev, U = np.linalg.eigh(H.matrix)
    return Spectrum(H.box, ev, U)


def spectral_projection(spec: Spectrum, S: EnergySet) -> LatticeOperator:
    """Projection onto the eigenvalues inside S.

    Raises AmbiguousCutError when an eigenvalue sits within the tie tolerance
    of a boundary of S, naming the offending eigenvalue.
    """
    ev = spec.eigenvalues
    for cut in S.finite_boundaries():
        d = np.abs(ev - cut)
        k = int(np.argmin(d))
        if d[k] < spec.tie_tol:
            raise AmbiguousCutError(
                f"cut at {cut:.12g} falls on eigenvalue {ev[k]:.12g} (index {k})"
            )
    cols = spec.eigenvectors[:, S.indicator(ev)]
    P = cols @ cols.conj().T
    P = 0.5 * (P + P.conj().T)
    return LatticeOperator(spec.box, P, hermitian=True)


def apply_function(spec: Spectrum, g) -> LatticeOperator:
    """U g(Lambda) U* for a scalar function g evaluated on the eigenvalues."""
    gv = np.asarray(g(spec.eigenvalues))
    U = spec.eigenvectors
    M = (U * gv[None, :]) @ U.conj().T
    herm = not np.iscomplexobj(gv)
    if herm:
        M = 0.5 * (M + M.conj().T)
    return LatticeOperator(spec.box, M, hermitian=herm)


def evolve(spec: Spectrum, X: LatticeOperator, t: float) -> LatticeOperator:
    """Heisenberg conjugation exp(iHt) X exp(-iHt) through the eigenbasis."""
    if X.box != spec.box:
        raise ValueError("operator lives on a different box")
    Xe = spec.to_eigenbasis(X.matrix)
    phase = np.exp(1j * t * (spec.eigenvalues[:, None] - spec.eigenvalues[None, :]))
    M = spec.from_eigenbasis(phase * Xe)
    if X.hermitian:
        M = 0.5 * (M + M.conj().T)
    return LatticeOperator(spec.box, M, hermitian=X.hermitian)


def _average_kernel(spec: Spectrum, T: float) -> np.ndarray:
    om = spec.eigenvalues[:, None] - spec.eigenvalues[None, :]
    u = om * T
    small = np.abs(om) < spec.degeneracy_tol
    safe = np.where(small, 1.0, u)
    ker = (np.exp(1j * safe) - 1.0) / (1j * safe)
    return np.where(small, 1.0 + 0.0j, ker)


def time_average(spec: Spectrum, X: LatticeOperator, T: float) -> LatticeOperator:
    """Closed-form time average (1/T) int_0^T exp(iHt) X exp(-iHt) dt.

    In the eigenbasis every entry is multiplied by (exp(i w T) - 1)/(i w T)
    with w the eigenvalue difference; entries inside a degenerate cluster
    keep weight 1.
    """
    if T <= 0:
        raise ValueError("averaging time T must be positive")
    if X.box != spec.box:
        raise ValueError("operator lives on a different box")
    Xe = spec.to_eigenbasis(X.matrix)
    M = spec.from_eigenbasis(_average_kernel(spec, T) * Xe)
    if X.hermitian:
        M = 0.5 * (M + M.conj().T)
    return LatticeOperator(spec.box, M, hermitian=X.hermitian)


def gap_midpoint(spec: Spectrum, lo: float, hi: float) -> float:
    """Midpoint of the widest spectral gap intersecting (lo, hi).

    Used to place Fermi cuts away from eigenvalues; never returns a point
    within the tie tolerance of the spectrum.
    """
    ev = spec.eigenvalues
    cuts = np.concatenate(([-np.inf], ev, [np.inf]))
    best, best_width = None, -1.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        ia, ib = max(a, lo), min(b, hi)
        if ib - ia > best_width:
            best_width = ib - ia
            if np.isinf(ia):
                best = ib - 1.0
            elif np.isinf(ib):
                best = ia + 1.0
            else:
                best = 0.5 * (ia + ib)
    if best is None or best_width <= 2 * spec.tie_tol:
        raise AmbiguousCutError(f"no usable spectral gap intersects ({lo}, {hi})")
    return float(best)


def dynamical_localization_bound(
    spec: Spectrum,
    lo: float,
    hi: float,
    mu: float,
    nu: float,
    t_samples,
    cuts=None,
) -> float:
    """Finite-sample estimate of the localization kernel constant.

    Maximizes sum_{x,x'} |g(H)(x,x')| (1 + |x|)^(-nu) exp(mu |x - x'|) over
    the sampled functions g: the evolved indicators exp(-itH) on (lo, hi)
    for each listed time, plus sharp Fermi projections at the given cuts
    (default: the widest in-window gap midpoint, when the window contains
    any spectrum).
    """
    from .operators import distance_matrix

    X1, X2 = spec.box.coords()
    poly = (1.0 + np.abs(X1) + np.abs(X2)) ** (-float(nu))
    weight = poly[:, None] * np.exp(mu * distance_matrix(spec.box))
    inside = (spec.eigenvalues > lo) & (spec.eigenvalues < hi)

    samples = []
    for t in t_samples:
        samples.append(np.where(inside, np.exp(-1j * float(t) * spec.eigenvalues), 0.0))
    if cuts is None:
        cuts = []
        if np.any(inside):
            cuts.append(gap_midpoint(spec, lo, hi))
    for c in cuts:
        samples.append((spec.eigenvalues < c).astype(complex))

    best = 0.0
    U = spec.eigenvectors
    for gv in samples:
        G = (U * gv[None, :]) @ U.conj().T
        best = max(best, float(np.sum(np.abs(G) * weight)))
    return best


def localized_basis(spec: Spectrum, lam: float, degeneracy_tol: float | None = None) -> np.ndarray:
    """Orthonormal basis of an eigenvalue cluster, peaked site by site.

    Starting from the cluster projection E, repeatedly normalize the column
    of E at the site where its diagonal is largest and deflate; the result
    spans ran E and each vector is concentrated where the remaining spectral
    weight was.  Columns are returned in construction order.
    """
    tol = spec.degeneracy_tol if degeneracy_tol is None else degeneracy_tol
    hits = [s for s in spec.clusters(tol) if np.any(np.abs(spec.eigenvalues[s] - lam) <= max(tol, 1e-12))]
    if not hits:
        raise ValueError(f"no eigenvalue cluster at {lam}")
    cols = spec.eigenvectors[:, hits[0]]
    E = cols @ cols.conj().T
    rank = cols.shape[1]
    out = np.empty((spec.n, rank), dtype=complex)
    for r in range(rank):
        diag = np.real(np.diag(E)).copy()
        x0 = int(np.argmax(diag))
        peak = diag[x0]
        if peak <= 0:
            raise ValueError("cluster projection exhausted before reaching full rank")
        psi = E[:, x0] / np.sqrt(peak)
        out[:, r] = psi
        E = E - np.outer(psi, psi.conj())
    return out


def localization_minima(
    spec: Spectrum,
    lo: float,
    hi: float,
    lam1: DiagonalOperator,
    lam2: DiagonalOperator,
) -> list[tuple[tuple[float, int], float]]:
    """Smallest of the four half-plane masses for each in-window eigenvector.

    A value near zero means the vector is essentially confined to one side
    of a switch line and so carries no circulating current around the
    crossing point.
    """
    m1 = lam1.values.real
    m2 = lam2.values.real
    out = []
    for s in spec.clusters():
        lam = float(np.mean(spec.eigenvalues[s]))
        if not (lo < lam < hi):
            continue
        basis = spec.eigenvectors[:, s]
        rank = basis.shape[1]
        vecs = localized_basis(spec, lam) if rank > 1 else basis
        for j in range(rank):
            p = np.abs(vecs[:, j]) ** 2
            four = [
                np.sqrt(np.sum(p * m1)),
                np.sqrt(np.sum(p * (1.0 - m1))),
                np.sqrt(np.sum(p * m2)),
                np.sqrt(np.sum(p * (1.0 - m2))),
            ]
            out.append(((lam, j), float(min(four))))
    return out


def _holmgren(M: np.ndarray) -> float:
    return float(
        max(np.max(np.sum(np.abs(M), axis=0)), np.max(np.sum(np.abs(M), axis=1)))
    )


@dataclass
class PropagationSpeedCheck:
    c_bound: float
    samples: list = field(default_factory=list)  # (delta, t, norm, bound)
    violations: int = 0


def propagation_speed_check(
    H: LatticeOperator, spec: Spectrum, ell_values: np.ndarray, deltas, ts
) -> PropagationSpeedCheck:
    """Verify |exp(d ell) exp(iHt) exp(-d ell)| <= exp(C |t|) on samples.

    C is half the Holmgren bound of the conjugation generator, computed per
    delta from B(x,x') = -i H(x,x') (exp(d(ell(x') - ell(x))) - exp(d(ell(x)
    - ell(x')))); the estimate holds for any 1-Lipschitz profile.
    """
    ell = np.asarray(ell_values, dtype=float)
    _check_lipschitz(H.box, ell)
    out = PropagationSpeedCheck(c_bound=0.0)
    U = spec.eigenvectors
    for delta in deltas:
        d = float(delta)
        grow = np.exp(d * ell)
        B = -1j * H.matrix * (
            np.exp(d * (ell[None, :] - ell[:, None])) - np.exp(d * (ell[:, None] - ell[None, :]))
        )
        c = 0.5 * _holmgren(B)
        out.c_bound = max(out.c_bound, c)
        for t in ts:
            phases = np.exp(1j * float(t) * spec.eigenvalues)
            A = (grow[:, None] * U) @ (phases[:, None] * (U.conj().T / grow[None, :]))
            norm = float(np.linalg.norm(A, 2))
            bound = float(np.exp(c * abs(float(t))))
            out.samples.append((d, float(t), norm, bound))
            if norm > bound * (1.0 + 1e-10):
                out.violations += 1
    return out


@dataclass
class CombesThomasCheck:
    samples: list = field(default_factory=list)  # (z, delta, c_eff, norm, bound)
    violations: int = 0


def combes_thomas_check(
    H: LatticeOperator, spec: Spectrum, ell_values: np.ndarray, zs, delta_cap: float = 2.0
) -> CombesThomasCheck:
    """Verify the weighted resolvent bound |exp(d ell) R(z) exp(-d ell)| <= 2/|Im z|.

    For each z the largest admissible delta is found by bisection from the
    requirement that the hopping-decay constant at delta stay below
    |Im z| / 2; the effective constant c with delta = c / (1 + 1/|Im z|) is
    recorded for the run manifest.
    """
    ell = np.asarray(ell_values, dtype=float)
    _check_lipschitz(H.box, ell)
    out = CombesThomasCheck()
    U = spec.eigenvectors
    for z in zs:
        z = complex(z)
        y = abs(z.imag)
        if y == 0:
            raise ValueError("test points must have nonzero imaginary part")
        lo_d, hi_d = 0.0, float(delta_cap)
        if short_range_constant(H, hi_d) > y / 2:
            for _ in range(60):
                mid = 0.5 * (lo_d + hi_d)
                if mid == 0.0 or short_range_constant(H, mid) <= y / 2:
                    lo_d = mid
                else:
                    hi_d = mid
            delta = lo_d
        else:
            delta = hi_d
        if delta == 0.0:
            raise ValueError(f"no admissible conjugation weight at z = {z}")
        grow = np.exp(delta * ell)
        res = 1.0 / (spec.eigenvalues - z)
        R = (grow[:, None] * U) @ (res[:, None] * (U.conj().T / grow[None, :]))
        norm = float(np.linalg.norm(R, 2))
        bound = 2.0 / y
        out.samples.append((z, delta, delta * (1.0 + 1.0 / y), norm, bound))
        if norm > bound * (1.0 + 1e-10):
            out.violations += 1
    return out
