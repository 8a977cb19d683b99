"""Anchored-iteration orbits and resolvent solving.

Two families of points:

* the anchored orbit  x_{n+1} = alpha_n*u + (1-alpha_n)*S x_n, recorded
  as a HalpernTrace with eagerly cached residuals |x_n - S x_n|;
* the resolvent family z_t solving z = t*u + (1-t)*S z for t = 1/m,
  m = 1..M_max, recorded as a ResolventPath.

The resolvent equation is solved by iterating the contraction
T(z) = t*u + (1-t)*S z (contraction factor q = 1-t).  The step norm
|z_{k+1} - z_k| equals the residual of z_k and shrinks by q each step,
so iteration stops as soon as it drops to tol; an a-priori cap
ceil((ln tol - ln max(1, |z_1 - z_0|)) / ln q) plus margin guards
against float stagnation.  Along the path the previous z warm-starts
the next m: cold starts would need Theta(m log(1/tol)) steps each as
q -> 1.

Traces round-trip through CSV with repr-formatted floats, so re-read
values are bit-identical and downstream checks reproduce exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from .geometry import Space, Vector
from .operators import NonexpansiveOp
from .schedules import Schedule

__all__ = [
    "HalpernTrace",
    "ResolventPath",
    "halpern_orbit",
    "resolvent",
    "resolvent_path",
    "write_trace_csv",
    "read_trace_csv",
    "write_path_csv",
    "read_path_csv",
]

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class HalpernTrace:
    """Orbit x_start .. x_{start+N} with cached residuals |x_n - S x_n|.

    ``alphas[j]`` is the exact step size used to produce points[j+1]
    (length N); ``start_index`` is the schedule's first index, so
    points[j] is the iterate with absolute index start_index + j.
    """

    points: Tuple[Vector, ...]
    residuals: Tuple[float, ...]
    alphas: Tuple[Fraction, ...]
    schedule_id: str
    u: Vector
    x0: Vector
    N: int
    start_index: int = 0

    def __post_init__(self):
        if len(self.points) != self.N + 1 or len(self.residuals) != self.N + 1:
            raise ValueError("trace length mismatch")
        if len(self.alphas) != self.N:
            raise ValueError("need exactly N step sizes")

    @property
    def dim(self) -> int:
        return self.points[0].dim


@dataclass(frozen=True)
class ResolventPath:
    """Entries (m, z_{1/m}, residual) for m = 1..M_max."""

    entries: Tuple[Tuple[int, Vector, float], ...]
    u: Vector
    tol: float

    def __post_init__(self):
        for j, (m, _z, _r) in enumerate(self.entries, start=1):
            if m != j:
                raise ValueError("entries must cover m = 1..M_max contiguously")

    @property
    def m_max(self) -> int:
        return len(self.entries)

    def points(self) -> list[Vector]:
        return [z for _m, z, _r in self.entries]


def halpern_orbit(
    op: NonexpansiveOp,
    s: Schedule,
    u: Vector,
    x0: Vector,
    N: int,
    space: Optional[Space] = None,
) -> HalpernTrace:
    """Run x_{n+1} = alpha_n*u + (1-alpha_n)*S x_n for N steps.

    Residual norms come from ``space`` (Euclidean when omitted).  Raises
    if any iterate goes non-finite (overflow, or an operator without
    fixed points drifting off to infinity).
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    if u.dim != op.dim or x0.dim != op.dim:
        raise ValueError("operator/vector dimension mismatch")
    if space is None:
        space = Space.hilbert(op.dim)
    start = s.start_index
    alphas = tuple(s.alpha(n) for n in range(start, start + N))
    u_arr = u.coords
    x = np.array(x0.coords, dtype=np.float64)
    raw_points = [x]
    residuals = []
    for a in alphas:
        sx = op.apply_raw(x)
        residuals.append(space.norm(x - sx))
        af = float(a)
        x = af * u_arr + (1.0 - af) * sx
        if not np.all(np.isfinite(x)):
            raise ArithmeticError("iterate went non-finite")
        raw_points.append(x)
    residuals.append(space.norm(x - op.apply_raw(x)))
    return HalpernTrace(
        points=tuple(Vector(p) for p in raw_points),
        residuals=tuple(residuals),
        alphas=alphas,
        schedule_id=s.label(),
        u=u,
        x0=x0,
        N=N,
        start_index=start,
    )


def resolvent(
    op: NonexpansiveOp,
    t: Union[Fraction, float],
    u: Vector,
    guess: Vector,
    tol: float = DEFAULT_TOL,
    space: Optional[Space] = None,
) -> Vector:
    """Solve z = t*u + (1-t)*S z for one t in (0, 1].

    Returns z with |z - (t*u + (1-t)*S z)| <= tol.  t = 1 degenerates to
    z = u; t = 0 is rejected (T would not contract).
    """
    t = float(t)
    if not (0.0 < t <= 1.0):
        raise ValueError("t must lie in (0, 1]")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if u.dim != op.dim or guess.dim != op.dim:
        raise ValueError("operator/vector dimension mismatch")
    if space is None:
        space = Space.hilbert(op.dim)
    if t == 1.0:
        return Vector(u.coords)
    q = 1.0 - t
    u_arr = u.coords
    z = np.array(guess.coords, dtype=np.float64)
    z_next = t * u_arr + q * op.apply_raw(z)
    step = space.norm(z_next - z)
    if step <= tol:
        return Vector(z)
    cap = math.ceil((math.log(tol) - math.log(max(1.0, step))) / math.log(q)) + 8
    for _ in range(max(cap, 1)):
        z = z_next
        z_next = t * u_arr + q * op.apply_raw(z)
        step = space.norm(z_next - z)
        if step <= tol:
            return Vector(z)
    raise RuntimeError(f"resolvent iteration cap exceeded at t={t}")


def resolvent_path(
    op: NonexpansiveOp,
    u: Vector,
    M_max: int,
    tol: float = DEFAULT_TOL,
    space: Optional[Space] = None,
) -> ResolventPath:
    """Solve z_{1/m} for m = 1..M_max, warm-starting each from the last."""
    if M_max < 1:
        raise ValueError("M_max must be at least 1")
    if space is None:
        space = Space.hilbert(op.dim)
    entries = []
    guess = u
    for m in range(1, M_max + 1):
        t = Fraction(1, m)
        z = resolvent(op, t, u, guess, tol, space)
        residual = space.norm(
            z.coords - (float(t) * u.coords + (1.0 - float(t)) * op.apply_raw(z.coords))
        )
        entries.append((m, z, residual))
        guess = z
    return ResolventPath(entries=tuple(entries), u=u, tol=tol)


def _fmt(x: float) -> str:
    return repr(float(x))


def trace_csv_text(trace: HalpernTrace) -> str:
    """CSV body with header `n,alpha,x0..x{d-1},residual`.

    A leading comment line carries the metadata needed to rebuild the
    trace object; floats use repr so a re-read is bit-identical.  The
    final row's alpha cell is empty (no step leaves the last point).
    """
    d = trace.dim
    lines = [
        "# schedule={} start={} u={} x0={}".format(
            trace.schedule_id,
            trace.start_index,
            ";".join(_fmt(c) for c in trace.u.coords),
            ";".join(_fmt(c) for c in trace.x0.coords),
        ),
        "n,alpha," + ",".join(f"x{i}" for i in range(d)) + ",residual",
    ]
    for j, (point, residual) in enumerate(zip(trace.points, trace.residuals)):
        alpha = _fmt(float(trace.alphas[j])) if j < len(trace.alphas) else ""
        cells = [str(trace.start_index + j), alpha]
        cells.extend(_fmt(c) for c in point.coords)
        cells.append(_fmt(residual))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_trace_csv(trace: HalpernTrace, path: Union[str, Path]) -> None:
    Path(path).write_text(trace_csv_text(trace))


def read_trace_csv(path: Union[str, Path]) -> HalpernTrace:
    """Rebuild a HalpernTrace written by write_trace_csv."""
    lines = Path(path).read_text().splitlines()
    if len(lines) < 3 or not lines[0].startswith("#"):
        raise ValueError(f"{path}: not a trace CSV")
    meta = dict(item.split("=", 1) for item in lines[0][1:].split())
    schedule_id = meta["schedule"]
    start = int(meta["start"])
    u = Vector([float(c) for c in meta["u"].split(";")])
    x0 = Vector([float(c) for c in meta["x0"].split(";")])
    points, residuals, alphas = [], [], []
    for line in lines[2:]:
        if not line:
            continue
        cells = line.split(",")
        if cells[1]:
            alphas.append(Fraction(float(cells[1])))
        points.append(Vector([float(c) for c in cells[2:-1]]))
        residuals.append(float(cells[-1]))
    return HalpernTrace(
        points=tuple(points),
        residuals=tuple(residuals),
        alphas=tuple(alphas),
        schedule_id=schedule_id,
        u=u,
        x0=x0,
        N=len(points) - 1,
        start_index=start,
    )


def path_csv_text(path_obj: ResolventPath) -> str:
    """CSV body with header `m,t,z0..z{d-1},residual`."""
    d = path_obj.u.dim
    lines = [
        "# u={} tol={}".format(
            ";".join(_fmt(c) for c in path_obj.u.coords), _fmt(path_obj.tol)
        ),
        "m,t," + ",".join(f"z{i}" for i in range(d)) + ",residual",
    ]
    for m, z, residual in path_obj.entries:
        cells = [str(m), _fmt(1.0 / m)]
        cells.extend(_fmt(c) for c in z.coords)
        cells.append(_fmt(residual))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_path_csv(path_obj: ResolventPath, path: Union[str, Path]) -> None:
    Path(path).write_text(path_csv_text(path_obj))


def read_path_csv(path: Union[str, Path]) -> ResolventPath:
    """Rebuild a ResolventPath written by write_path_csv."""
    lines = Path(path).read_text().splitlines()
    if len(lines) < 3 or not lines[0].startswith("#"):
        raise ValueError(f"{path}: not a resolvent-path CSV")
    meta = dict(item.split("=", 1) for item in lines[0][1:].split())
    u = Vector([float(c) for c in meta["u"].split(";")])
    tol = float(meta["tol"])
    entries = []
    for line in lines[2:]:
        if not line:
            continue
        cells = line.split(",")
        entries.append(
            (int(cells[0]), Vector([float(c) for c in cells[2:-1]]), float(cells[-1]))
        )
    return ResolventPath(entries=tuple(entries), u=u, tol=tol)
