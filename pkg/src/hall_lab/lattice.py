"""Square-lattice geometry shared by every other module.

Sites of a rectangular window are ordered row-major with x2 as the outer
and x1 as the inner loop; all dense matrices in the package rely on this
ordering.  Distances are 1-norm throughout: |x| = |x1| + |x2|.  Plaquette
centers carry half-integer coordinates and are stored exactly as doubled
integers so that they can never collide with a lattice site.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Box",
    "DiagonalOperator",
    "SitePoint",
    "make_box",
    "switch_function",
    "switch_crossing",
    "lipschitz_weight",
    "oriented_area",
    "sight_angle",
]


@dataclass(frozen=True)
class Box:
    """Rectangular lattice window [x1_min, x1_max] x [x2_min, x2_max]."""

    x1_min: int
    x1_max: int
    x2_min: int
    x2_max: int

    def __post_init__(self):
        if self.x1_min > self.x1_max or self.x2_min > self.x2_max:
            raise ValueError(f"empty box: {self}")

    @property
    def n1(self) -> int:
        return self.x1_max - self.x1_min + 1

    @property
    def n2(self) -> int:
        return self.x2_max - self.x2_min + 1

    @property
    def n_sites(self) -> int:
        return self.n1 * self.n2

    @classmethod
    def centered(cls, size1: int, size2: int | None = None) -> "Box":
        """Box of the given side lengths roughly centered on the origin."""
        if size2 is None:
            size2 = size1
        lo1 = -((size1 - 1) // 2)
        lo2 = -((size2 - 1) // 2)
        return cls(lo1, lo1 + size1 - 1, lo2, lo2 + size2 - 1)

    def contains(self, x1: int, x2: int) -> bool:
        return self.x1_min <= x1 <= self.x1_max and self.x2_min <= x2 <= self.x2_max

    def index(self, x1: int, x2: int) -> int:
        """Dense index of a site; row-major, x2 outer, x1 inner."""
        if not self.contains(x1, x2):
            raise ValueError(f"site ({x1},{x2}) outside {self}")
        return (x2 - self.x2_min) * self.n1 + (x1 - self.x1_min)

    def site(self, k: int) -> tuple[int, int]:
        """Inverse of :meth:`index`."""
        if not 0 <= k < self.n_sites:
            raise ValueError(f"index {k} outside box of {self.n_sites} sites")
        x2, r = divmod(k, self.n1)
        return (r + self.x1_min, x2 + self.x2_min)

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate arrays (X1, X2) aligned with the dense index."""
        x1 = np.arange(self.x1_min, self.x1_max + 1, dtype=np.int64)
        x2 = np.arange(self.x2_min, self.x2_max + 1, dtype=np.int64)
        return np.tile(x1, self.n2), np.repeat(x2, self.n1)


def make_box(x1_range: tuple[int, int], x2_range: tuple[int, int]) -> Box:
    """Build a box from inclusive coordinate ranges."""
    return Box(int(x1_range[0]), int(x1_range[1]), int(x2_range[0]), int(x2_range[1]))


@dataclass(frozen=True)
class DiagonalOperator:
    """Multiplication operator by a per-site value (switch functions, random
    potentials, exponential weights, flux phases)."""

    box: Box
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.shape != (self.box.n_sites,):
            raise ValueError(
                f"diagonal length {vals.shape} does not match {self.box.n_sites} sites"
            )
        object.__setattr__(self, "values", vals)

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.values) or float(np.max(np.abs(self.values.imag))) == 0.0

    def matrix(self) -> np.ndarray:
        return np.diag(self.values.astype(complex))


@dataclass(frozen=True)
class SitePoint:
    """Lattice site or plaquette center, stored as doubled integer coordinates.

    Sites have both doubled coordinates even; plaquette centers have both odd.
    """

    tx1: int
    tx2: int

    @classmethod
    def site(cls, x1: int, x2: int) -> "SitePoint":
        return cls(2 * int(x1), 2 * int(x2))

    @classmethod
    def center(cls, c1: float, c2: float) -> "SitePoint":
        t1, t2 = round(2 * c1), round(2 * c2)
        if not (t1 % 2 and t2 % 2) or t1 != 2 * c1 or t2 != 2 * c2:
            raise ValueError(f"({c1},{c2}) is not a plaquette center")
        return cls(t1, t2)

    @classmethod
    def of(cls, p) -> "SitePoint":
        """Coerce a SitePoint or coordinate pair (ints or half-integers)."""
        if isinstance(p, SitePoint):
            return p
        c1, c2 = p
        t1, t2 = round(2 * c1), round(2 * c2)
        if t1 != 2 * c1 or t2 != 2 * c2:
            raise ValueError(f"coordinates {p} are neither integers nor half-integers")
        return cls(t1, t2)

    @property
    def x1(self) -> float:
        return self.tx1 / 2

    @property
    def x2(self) -> float:
        return self.tx2 / 2

    @property
    def is_site(self) -> bool:
        return self.tx1 % 2 == 0 and self.tx2 % 2 == 0

    @property
    def is_center(self) -> bool:
        return self.tx1 % 2 != 0 and self.tx2 % 2 != 0


def switch_function(box: Box, axis: int, offset: float = 0.0) -> DiagonalOperator:
    """Characteristic function of the half plane x_axis < offset.

    The offset is an integer or half-integer; the default 0 switches between
    the columns (rows) -1 and 0.
    """
    if axis not in (1, 2):
        raise ValueError("axis must be 1 or 2")
    X1, X2 = box.coords()
    coord = X1 if axis == 1 else X2
    return DiagonalOperator(box, (coord < offset).astype(float))


def switch_crossing(offset1: float = 0.0, offset2: float = 0.0) -> SitePoint:
    """Plaquette center where the two switch lines cross.

    An integer offset o switches between columns o-1 and o, so its line sits
    at o - 1/2; a half-integer offset is already the line position.
    """

    def line(o: float) -> float:
        return o - 0.5 if float(o) == int(o) else float(o)

    return SitePoint.center(line(offset1), line(offset2))


def lipschitz_weight(box: Box, ell, delta: float) -> DiagonalOperator:
    """Diagonal weight exp(delta * ell(x)) for a 1-Lipschitz profile ell.

    ell is called as ell(x1, x2) and must satisfy |ell(x) - ell(y)| <= |x - y|
    in the 1-norm; the condition is checked on every nearest-neighbor pair.
    """
    X1, X2 = box.coords()
    vals = np.asarray([float(ell(int(a), int(b))) for a, b in zip(X1, X2)])
    _check_lipschitz(box, vals)
    return DiagonalOperator(box, np.exp(delta * vals))


def _check_lipschitz(box: Box, vals: np.ndarray, tol: float = 1e-12):
    X1, X2 = box.coords()
    h = np.nonzero(X1 < box.x1_max)[0]
    v = np.nonzero(X2 < box.x2_max)[0]
    worst = 0.0
    if h.size:
        worst = max(worst, float(np.max(np.abs(vals[h + 1] - vals[h]))))
    if v.size:
        worst = max(worst, float(np.max(np.abs(vals[v + box.n1] - vals[v]))))
    if worst > 1.0 + tol:
        raise ValueError(f"profile violates the Lipschitz bound: slope {worst:.6g} > 1")


def oriented_area(x, y, z) -> float:
    """Signed area of the triangle (x, y, z), positive when counterclockwise.

    Evaluates (1/2) (x - y) ^ (y - z) exactly in doubled-integer arithmetic.
    """
    x, y, z = SitePoint.of(x), SitePoint.of(y), SitePoint.of(z)
    a1, a2 = x.tx1 - y.tx1, x.tx2 - y.tx2
    b1, b2 = y.tx1 - z.tx1, y.tx2 - z.tx2
    return (a1 * b2 - a2 * b1) / 8


def sight_angle(p, u, v) -> float:
    """Signed angle in (-pi, pi) under which the segment u -> v is seen from p.

    p must be a plaquette center, so it never coincides with a lattice site.
    When p is collinear with u and v the angle is 0 by convention, also when
    p lies strictly between them.
    """
    p, u, v = SitePoint.of(p), SitePoint.of(u), SitePoint.of(v)
    if not p.is_center:
        raise ValueError("viewpoint must be a plaquette center")
    a1, a2 = u.tx1 - p.tx1, u.tx2 - p.tx2
    b1, b2 = v.tx1 - p.tx1, v.tx2 - p.tx2
    cross = a1 * b2 - a2 * b1
    if cross == 0:
        return 0.0
    return math.atan2(cross, a1 * b1 + a2 * b2)
