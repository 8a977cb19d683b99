"""Nonexpansive self-maps with known fixed points.

Every operator here is 1-Lipschitz for the Euclidean norm by
construction: rotations and reflections are isometries, projections
onto convex sets are firmly nonexpansive, affine maps are admitted only
when the matrix has spectral norm <= 1, and compositions / convex
averages of nonexpansive maps stay nonexpansive.  Nonexpansiveness in
other geometries is not guaranteed and can be probed with
:func:`certify_nonexpansive`.

``compute_instance_bound`` turns an (operator, anchor u, start x0)
instance into the rational constant M >= 2*max{|p-x0|, |p-u|} that the
rate calculators consume; M is rounded up to a multiple of 1/64 so the
calculators can run in exact arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Tuple

import numpy as np

from .geometry import Space, Vector

__all__ = [
    "NonexpansiveOp",
    "Rotation",
    "Reflection",
    "ProjectionBall",
    "ProjectionBox",
    "AffineContractive",
    "Composition",
    "Averaged",
    "InstanceBound",
    "apply",
    "certify_nonexpansive",
    "compute_instance_bound",
]

_FIXED_POINT_TOL = 1e-9


class NonexpansiveOp:
    """Base class; concrete kinds implement ``apply_raw`` on ndarrays."""

    known_fixed_point: Optional[Vector]

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def apply_raw(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _check_declared_fixed_point(self) -> None:
        p = self.known_fixed_point
        if p is None:
            return
        if p.dim != self.dim:
            raise ValueError("fixed point dimension mismatch")
        residual = float(np.linalg.norm(self.apply_raw(p.coords) - p.coords))
        if residual > _FIXED_POINT_TOL:
            raise ValueError(
                f"declared fixed point moves by {residual:.3e} > {_FIXED_POINT_TOL}"
            )


@dataclass(frozen=True)
class Rotation(NonexpansiveOp):
    """Planar rotation about the origin by ``angle`` radians."""

    angle: float
    known_fixed_point: Optional[Vector] = None

    def __post_init__(self):
        if self.known_fixed_point is None:
            object.__setattr__(self, "known_fixed_point", Vector([0.0, 0.0]))
        self._check_declared_fixed_point()

    @property
    def dim(self) -> int:
        return 2

    def apply_raw(self, x: np.ndarray) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        return np.array([c * x[0] - s * x[1], s * x[0] + c * x[1]])


@dataclass(frozen=True)
class Reflection(NonexpansiveOp):
    """Householder reflection across the hyperplane through 0 with the
    given normal."""

    normal: Vector
    known_fixed_point: Optional[Vector] = None

    def __post_init__(self):
        n = self.normal.coords
        nn = float(np.linalg.norm(n))
        if nn == 0.0:
            raise ValueError("reflection normal must be nonzero")
        if self.known_fixed_point is None:
            object.__setattr__(self, "known_fixed_point", Vector(np.zeros(self.dim)))
        self._check_declared_fixed_point()

    @property
    def dim(self) -> int:
        return self.normal.dim

    def apply_raw(self, x: np.ndarray) -> np.ndarray:
        n = self.normal.coords
        unit = n / np.linalg.norm(n)
        return x - 2.0 * np.dot(x, unit) * unit


@dataclass(frozen=True)
class ProjectionBall(NonexpansiveOp):
    """Exact Euclidean projection onto a closed ball."""

    center: Vector
    radius: float
    known_fixed_point: Optional[Vector] = None

    def __post_init__(self):
        if not (self.radius > 0):
            raise ValueError("radius must be positive")
        if self.known_fixed_point is None:
            object.__setattr__(self, "known_fixed_point", self.center)
        self._check_declared_fixed_point()

    @property
    def dim(self) -> int:
        return self.center.dim

    def apply_raw(self, x: np.ndarray) -> np.ndarray:
        offset = x - self.center.coords
        dist = float(np.linalg.norm(offset))
        if dist <= self.radius:
            return np.array(x, dtype=np.float64)
        return self.center.coords + offset * (self.radius / dist)


@dataclass(frozen=True)
class ProjectionBox(NonexpansiveOp):
    """Exact Euclidean projection onto an axis-aligned box (clipping)."""

    lows: Vector
    highs: Vector
    known_fixed_point: Optional[Vector] = None

    def __post_init__(self):
        if self.lows.dim != self.highs.dim:
            raise ValueError("box bounds dimension mismatch")
        if np.any(self.lows.coords > self.highs.coords):
            raise ValueError("box lows must not exceed highs")
        if self.known_fixed_point is None:
            mid = (self.lows.coords + self.highs.coords) / 2.0
            object.__setattr__(self, "known_fixed_point", Vector(mid))
        self._check_declared_fixed_point()

    @property
    def dim(self) -> int:
        return self.lows.dim

    def apply_raw(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lows.coords, self.highs.coords)


@dataclass(frozen=True)
class AffineContractive(NonexpansiveOp):
    """x -> Ax + b with spectral norm of A at most 1 (checked)."""

    matrix: Tuple[Tuple[float, ...], ...]
    offset: Vector
    known_fixed_point: Optional[Vector] = None

    def __init__(self, matrix, offset: Vector, known_fixed_point: Optional[Vector] = None):
        arr = np.asarray(matrix, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("matrix must be square")
        if arr.shape[0] != offset.dim:
            raise ValueError("matrix/offset dimension mismatch")
        spectral = float(np.linalg.norm(arr, 2))
        if spectral > 1.0 + 1e-12:
            raise ValueError(f"matrix operator norm {spectral:.6f} exceeds 1")
        object.__setattr__(self, "matrix", tuple(tuple(row) for row in arr))
        object.__setattr__(self, "offset", offset)
        object.__setattr__(self, "known_fixed_point", known_fixed_point)
        self._check_declared_fixed_point()

    @property
    def dim(self) -> int:
        return self.offset.dim

    def apply_raw(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.matrix) @ x + self.offset.coords


@dataclass(frozen=True)
class Composition(NonexpansiveOp):
    """Sequential composition; ``ops[0]`` is applied first."""

    ops: Tuple[NonexpansiveOp, ...]
    known_fixed_point: Optional[Vector] = None

    def __init__(self, ops: Sequence[NonexpansiveOp], known_fixed_point: Optional[Vector] = None):
        ops = tuple(ops)
        if not ops:
            raise ValueError("composition needs at least one operator")
        dims = {op.dim for op in ops}
        if len(dims) != 1:
            raise ValueError("composed operators must share a dimension")
        object.__setattr__(self, "ops", ops)
        object.__setattr__(self, "known_fixed_point", known_fixed_point)
        self._check_declared_fixed_point()

    @property
    def dim(self) -> int:
        return self.ops[0].dim

    def apply_raw(self, x: np.ndarray) -> np.ndarray:
        for op in self.ops:
            x = op.apply_raw(x)
        return x


@dataclass(frozen=True)
class Averaged(NonexpansiveOp):
    """Convex average (1-weight)*x + weight*op(x), weight in [0, 1]."""

    op: NonexpansiveOp
    weight: float
    known_fixed_point: Optional[Vector] = None

    def __post_init__(self):
        if not (0.0 <= self.weight <= 1.0):
            raise ValueError("weight must lie in [0, 1]")
        if self.known_fixed_point is None and self.op.known_fixed_point is not None:
            # averaging preserves fixed points whenever weight > 0;
            # for weight = 0 every point is fixed, so inheriting is sound too.
            object.__setattr__(self, "known_fixed_point", self.op.known_fixed_point)
        self._check_declared_fixed_point()

    @property
    def dim(self) -> int:
        return self.op.dim

    def apply_raw(self, x: np.ndarray) -> np.ndarray:
        return (1.0 - self.weight) * x + self.weight * self.op.apply_raw(x)


def apply(op: NonexpansiveOp, x: Vector) -> Vector:
    """Evaluate Sx."""
    if x.dim != op.dim:
        raise ValueError(f"operator dimension {op.dim} != vector dimension {x.dim}")
    return Vector(op.apply_raw(x.coords))


def certify_nonexpansive(
    op: NonexpansiveOp,
    space: Space,
    samples: int,
    box: float,
    seed: int = 0,
) -> bool:
    """Sampling backstop: |Sx - Sy| <= |x - y|(1 + 1e-9) on random pairs
    with coordinates in [-box, box], norms taken in ``space``."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if op.dim != space.dim:
        raise ValueError("operator/space dimension mismatch")
    rng = np.random.default_rng(seed)
    xs = rng.uniform(-box, box, size=(samples, op.dim))
    ys = rng.uniform(-box, box, size=(samples, op.dim))
    for x, y in zip(xs, ys):
        lhs = space.norm(op.apply_raw(x) - op.apply_raw(y))
        rhs = space.norm(x - y) * (1.0 + 1e-9)
        if lhs > rhs:
            return False
    return True


@dataclass(frozen=True)
class InstanceBound:
    """Rational M with M >= 2*max{|p - x0|, |p - u|} for the instance."""

    M: Fraction


def compute_instance_bound(
    op: NonexpansiveOp,
    u: Vector,
    x0: Vector,
    space: Optional[Space] = None,
) -> InstanceBound:
    """Smallest multiple of 1/64 dominating 2*max{|p-x0|, |p-u|}.

    Norms default to Euclidean; pass ``space`` for l_p instances.  When
    p = u = x0 the bound is exactly 0.
    """
    p = op.known_fixed_point
    if p is None:
        raise ValueError("unknown fixed point")
    if space is None:
        space = Space.hilbert(op.dim)
    d = 2.0 * max(space.distance(p, x0), space.distance(p, u))
    if d == 0.0:
        return InstanceBound(M=Fraction(0))
    M = Fraction(math.ceil(d * 64), 64)
    assert float(M) >= d
    return InstanceBound(M=M)
