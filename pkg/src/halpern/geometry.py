"""Finite-dimensional normed-space geometry.

Supports Hilbert (Euclidean) geometry and the l_p geometries for
1 < p < infinity.  The central object is the normalized duality map
J: X -> X*, characterised by the identities

    <x, Jx> = ||x||^2 = ||Jx||_dual^2,

which is the identity map in Hilbert space and has an explicit
coordinate formula in l_p.  On top of J the module provides two
inequality probes (the subdifferential inequality and the difference
quotient sandwich that characterises smooth norms) and an empirical
estimator for a modulus of uniform continuity of J on bounded sets.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

__all__ = [
    "Vector",
    "Space",
    "DualityValue",
    "Modulus",
    "ModulusKind",
    "duality_map",
    "pairing",
    "subdifferential_check",
    "smoothness_probe",
    "estimate_modulus",
]

REL_TOL = 1e-9


class DimensionMismatchError(ValueError):
    """Operands live in spaces of different dimension."""


@dataclass(frozen=True)
class Vector:
    """Dense point of a finite-dimensional space, stored as float64."""

    coords: np.ndarray

    def __init__(self, coords: Union[Sequence[float], np.ndarray]):
        arr = np.asarray(coords, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("coords must be a nonempty 1-d sequence")
        if not np.all(np.isfinite(arr)):
            raise ValueError("coords must be finite (no NaN/inf)")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "coords", arr)

    @property
    def dim(self) -> int:
        return int(self.coords.size)

    def __iter__(self):
        return iter(self.coords)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vector) and np.array_equal(self.coords, other.coords)


def _as_array(x: Union[Vector, Sequence[float], np.ndarray]) -> np.ndarray:
    if isinstance(x, Vector):
        return x.coords
    return np.asarray(x, dtype=np.float64)


@dataclass(frozen=True)
class Space:
    """A finite-dimensional normed space: Hilbert or l_p with 1 < p < inf.

    ``p`` is kept as a Fraction so the dual exponent q with 1/p + 1/q = 1
    is exact; norms themselves are evaluated in float64.
    """

    dim: int
    p: Optional[Fraction] = None  # None means Hilbert geometry

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.p is not None:
            p = Fraction(self.p)
            if not (p > 1):
                raise ValueError("l_p geometry requires p > 1")
            object.__setattr__(self, "p", p)

    @classmethod
    def hilbert(cls, dim: int) -> "Space":
        return cls(dim=dim, p=None)

    @classmethod
    def lp(cls, dim: int, p) -> "Space":
        return cls(dim=dim, p=Fraction(p))

    @property
    def is_hilbert(self) -> bool:
        return self.p is None

    @property
    def q(self) -> Optional[Fraction]:
        """Dual exponent, 1/p + 1/q = 1 (None for Hilbert)."""
        if self.p is None:
            return None
        return self.p / (self.p - 1)

    def check_dim(self, *vectors: Union[Vector, np.ndarray]) -> None:
        for v in vectors:
            n = v.dim if isinstance(v, Vector) else np.asarray(v).size
            if n != self.dim:
                raise DimensionMismatchError(
                    f"expected dimension {self.dim}, got {n}"
                )

    def norm(self, x: Union[Vector, np.ndarray]) -> float:
        arr = _as_array(x)
        if self.p is None:
            return float(np.linalg.norm(arr))
        return float(np.linalg.norm(arr, ord=float(self.p)))

    def dual_norm(self, f: Union[Vector, np.ndarray]) -> float:
        """Norm of a functional given by coordinates (q-norm for l_p)."""
        arr = _as_array(f)
        if self.p is None:
            return float(np.linalg.norm(arr))
        return float(np.linalg.norm(arr, ord=float(self.q)))

    def distance(self, x, y) -> float:
        return self.norm(_as_array(x) - _as_array(y))


@dataclass(frozen=True)
class DualityValue:
    """J(x) together with the two norms tied by the defining identities."""

    functional: Vector
    primal_norm: float
    dual_norm: float


def pairing(y: Union[Vector, np.ndarray], f: Union[Vector, np.ndarray]) -> float:
    """Duality pairing <y, f> in coordinates."""
    return float(np.dot(_as_array(y), _as_array(f)))


class ModulusKind:
    IDENTITY = "identity"
    USER_TABLE = "user_table"
    EMPIRICAL = "empirical"


@dataclass(frozen=True)
class Modulus:
    """Modulus of uniform continuity omega(M, eps) for the duality map J.

    Three kinds:

    * identity  — omega(M, eps) = eps (correct for Hilbert geometry);
    * user_table — finite table of (M, eps, omega) triples with exact
      rational values; evaluation at (M, eps) returns the omega of the
      tabulated entry with the same M and the largest tabulated eps' <= eps
      (sound because a modulus is monotone in eps);
    * empirical — delegates to :func:`estimate_modulus` with a fixed
      sample budget; the result is an estimate, not a certificate.
    """

    kind: str = ModulusKind.IDENTITY
    table: tuple = ()
    samples: int = 0

    def __post_init__(self):
        if self.kind not in (ModulusKind.IDENTITY, ModulusKind.USER_TABLE, ModulusKind.EMPIRICAL):
            raise ValueError(f"unknown modulus kind: {self.kind!r}")
        if self.kind == ModulusKind.USER_TABLE:
            entries = tuple(
                (Fraction(m), Fraction(e), Fraction(w)) for m, e, w in self.table
            )
            if not entries:
                raise ValueError("user_table modulus needs at least one entry")
            for m, e, w in entries:
                if m <= 0 or e <= 0 or w <= 0:
                    raise ValueError("table entries require M, eps, omega > 0")
            by_m: dict = {}
            for m, e, w in entries:
                by_m.setdefault(m, []).append((e, w))
            for rows in by_m.values():
                rows.sort()
                for (e0, w0), (e1, w1) in zip(rows, rows[1:]):
                    if e0 == e1:
                        raise ValueError("duplicate (M, eps) table entry")
                    if w1 < w0:
                        raise ValueError("omega must be nondecreasing in eps for fixed M")
            object.__setattr__(self, "table", entries)
        elif self.kind == ModulusKind.EMPIRICAL:
            if self.samples < 1:
                raise ValueError("empirical modulus needs samples >= 1")

    @classmethod
    def identity(cls) -> "Modulus":
        return cls(kind=ModulusKind.IDENTITY)

    @classmethod
    def user_table(cls, entries) -> "Modulus":
        return cls(kind=ModulusKind.USER_TABLE, table=tuple(entries))

    @classmethod
    def empirical(cls, samples: int) -> "Modulus":
        return cls(kind=ModulusKind.EMPIRICAL, samples=samples)

    def evaluate(self, M, eps, space: Optional[Space] = None) -> Fraction:
        """omega(M, eps) as an exact rational (empirical: exact value of
        the float64 estimate)."""
        M, eps = Fraction(M), Fraction(eps)
        if M <= 0 or eps <= 0:
            raise ValueError("modulus arguments require M, eps > 0")
        if self.kind == ModulusKind.IDENTITY:
            return eps
        if self.kind == ModulusKind.USER_TABLE:
            usable = [
                (e, w) for m, e, w in self.table if m == M and e <= eps
            ]
            if not usable:
                raise ValueError(
                    f"no table entry applicable to M={M}, eps={eps}"
                )
            return max(usable)[1]
        if space is None:
            raise ValueError("empirical modulus evaluation needs a space")
        est = estimate_modulus(space, float(M), float(eps), self.samples)
        if est <= 0:
            raise ValueError("empirical estimate collapsed to zero")
        return Fraction(est)


def duality_map(space: Space, x: Union[Vector, np.ndarray]) -> DualityValue:
    """Normalized duality map J(x) with <x,Jx> = ||x||^2 = ||Jx||_dual^2.

    Hilbert: J is the identity on coordinates.  l_p:
    J(x)_i = ||x||^(2-p) |x_i|^(p-1) sign(x_i).  J(0) = 0 (forced by the
    defining identities).
    """
    arr = _as_array(x)
    space.check_dim(arr)
    nrm = space.norm(arr)
    if nrm == 0.0:
        zero = Vector(np.zeros(space.dim))
        return DualityValue(functional=zero, primal_norm=0.0, dual_norm=0.0)
    if space.is_hilbert:
        return DualityValue(functional=Vector(arr), primal_norm=nrm, dual_norm=nrm)
    p = float(space.p)
    f = nrm ** (2.0 - p) * np.abs(arr) ** (p - 1.0) * np.sign(arr)
    return DualityValue(
        functional=Vector(f),
        primal_norm=nrm,
        dual_norm=space.dual_norm(f),
    )


def subdifferential_check(
    space: Space, x: Union[Vector, np.ndarray], y: Union[Vector, np.ndarray]
) -> tuple[float, float, bool]:
    """Evaluate ||x+y||^2 <= ||x||^2 + 2<y, J(x+y)>.

    Returns (lhs, rhs, holds) with ``holds`` allowing relative slack
    1e-9 for float roundoff.  The inequality holds identically in every
    normed space, so a failure beyond tolerance indicates a bug.
    """
    xa, ya = _as_array(x), _as_array(y)
    space.check_dim(xa, ya)
    s = xa + ya
    lhs = space.norm(s) ** 2
    rhs = space.norm(xa) ** 2 + 2.0 * pairing(ya, duality_map(space, s).functional)
    holds = lhs <= rhs + REL_TOL * max(1.0, rhs)
    return lhs, rhs, holds


def smoothness_probe(
    space: Space,
    x: Union[Vector, np.ndarray],
    y: Union[Vector, np.ndarray],
    lam: float,
) -> tuple[float, float, float, bool]:
    """Difference-quotient sandwich for unit vectors x, y and lambda != 0.

    Computes

        lower    = <y, J(x)> / ||x||
        quotient = (||x + lambda*y|| - ||x||) / lambda
        upper    = <y, J(x + lambda*y)> / ||x + lambda*y||

    and checks lower <= quotient <= upper for lambda > 0 (reversed chain
    for lambda < 0), each comparison with 1e-9 absolute slack.
    """
    if lam == 0.0:
        raise ValueError("lambda must be nonzero")
    xa, ya = _as_array(x), _as_array(y)
    space.check_dim(xa, ya)
    if abs(space.norm(xa) - 1.0) > 1e-12 or abs(space.norm(ya) - 1.0) > 1e-12:
        raise ValueError("x and y must be unit vectors")
    shifted = xa + lam * ya
    shifted_norm = space.norm(shifted)
    if shifted_norm == 0.0:
        raise ValueError("degenerate probe: x + lambda*y = 0")
    lower = pairing(ya, duality_map(space, xa).functional) / space.norm(xa)
    quotient = (shifted_norm - space.norm(xa)) / lam
    upper = pairing(ya, duality_map(space, shifted).functional) / shifted_norm
    slack = 1e-9
    if lam > 0:
        holds = (lower <= quotient + slack) and (quotient <= upper + slack)
    else:
        holds = (lower + slack >= quotient) and (quotient + slack >= upper)
    return lower, quotient, upper, holds


# Fixed multipliers for the estimate_modulus candidate grid; the grid is
# {eps * t} plus the trivial upper bound 2M (any pair of points in the
# M-ball is within 2M, so the constraint is vacuous at huge eps).
_GRID_MULTIPLIERS = (
    Fraction(1, 64),
    Fraction(1, 32),
    Fraction(1, 16),
    Fraction(1, 8),
    Fraction(1, 4),
    Fraction(1, 2),
    Fraction(3, 4),
    Fraction(1),
    Fraction(3, 2),
    Fraction(2),
)


def _sample_ball_pairs(space: Space, M: float, samples: int, rng) -> list[tuple[np.ndarray, np.ndarray]]:
    """Pairs in the M-ball with separations spread across scales."""
    pairs = []
    d = space.dim
    for _ in range(samples):
        x = rng.uniform(-1.0, 1.0, size=d)
        nx = space.norm(x)
        if nx > 0:
            x = x * (rng.uniform(0.0, 1.0) * M / nx)
        # log-uniform separation so small distances get exercised too
        r = M * 2.0 ** rng.uniform(-20.0, 1.0)
        direction = rng.normal(size=d)
        dn = space.norm(direction)
        if dn == 0:
            continue
        y = x + direction * (r / dn)
        ny = space.norm(y)
        if ny > M:
            y = y * (M / ny)
        pairs.append((x, y))
    return pairs


def estimate_modulus(
    space: Space,
    M: float,
    eps: float,
    samples: int,
    seed: int = 0,
) -> float:
    """Empirical delta such that ||x-y|| < delta kept ||Jx-Jy||_dual < eps.

    Scans a fixed candidate grid (multiples of eps, capped by 2M) against
    ``samples`` random pairs in the M-ball and returns the largest
    candidate that never saw a violation.  This is an estimate, not a
    certified modulus.
    """
    if M <= 0 or eps <= 0:
        raise ValueError("M and eps must be positive")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    pairs = _sample_ball_pairs(space, M, samples, rng)
    observations = []
    for x, y in pairs:
        dist = space.distance(x, y)
        jd = space.dual_norm(
            duality_map(space, x).functional.coords
            - duality_map(space, y).functional.coords
        )
        observations.append((dist, jd))
    candidates = sorted({min(float(t) * eps, 2.0 * M) for t in _GRID_MULTIPLIERS})
    best = candidates[0]
    for delta in candidates:
        if all(jd < eps for dist, jd in observations if dist < delta):
            best = delta
    return best
