"""Canonical operator instances used by the verification suites.

Four planar nonexpansive maps, each with fixed point 0 and the shared
anchors u = (1,0), x0 = (0,1), giving the instance bound M = 2 exactly:

* rotation by pi/3 about the origin (isometry, unique fixed point 0);
* rotation by pi/2;
* composition of projections onto two overlapping unit balls whose
  intersection contains 0;
* the halfway average of the reflection across the vertical axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Tuple

from .geometry import Space, Vector
from .operators import (
    Averaged,
    Composition,
    NonexpansiveOp,
    ProjectionBall,
    Reflection,
    Rotation,
    compute_instance_bound,
)

__all__ = ["CatalogInstance", "catalog_instances"]


@dataclass(frozen=True)
class CatalogInstance:
    name: str
    op: NonexpansiveOp
    space: Space
    u: Vector
    x0: Vector
    M: Fraction


def _instance(name: str, op: NonexpansiveOp) -> CatalogInstance:
    u = Vector([1.0, 0.0])
    x0 = Vector([0.0, 1.0])
    M = compute_instance_bound(op, u=u, x0=x0).M
    return CatalogInstance(name=name, op=op, space=Space.hilbert(2), u=u, x0=x0, M=M)


def catalog_instances() -> Tuple[CatalogInstance, ...]:
    origin = Vector([0.0, 0.0])
    ball_left = ProjectionBall(center=Vector([-0.5, 0.0]), radius=1.0)
    ball_right = ProjectionBall(center=Vector([0.5, 0.0]), radius=1.0)
    return (
        _instance("rotation-pi-3", Rotation(math.pi / 3)),
        _instance("rotation-pi-2", Rotation(math.pi / 2)),
        _instance(
            "ball-composition",
            Composition([ball_left, ball_right], known_fixed_point=origin),
        ),
        _instance(
            "averaged-reflection",
            Averaged(Reflection(normal=Vector([1.0, 0.0])), weight=0.5),
        ),
    )
