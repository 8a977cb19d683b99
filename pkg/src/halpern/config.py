"""Flat plain-text experiment configuration.

The format is deliberately dependency-free: section headers in square
brackets, one `key = value` assignment per line, `#` comments.  Vectors
are coordinates separated by spaces or commas, rationals are written
`p/q`, and operators use a self-delimiting prefix DSL (every form
announces its dimension or arity up front), e.g.

    [schedule]
    kind = natural-shifted

    [instance]
    operator = catalog rotation-pi-3

    [instance]
    name = shifted-ball
    operator = compose 2 affine 2 1 0 0 1 1 0 ball 2 1.0 0 0
    u = 1 0
    x0 = 0 1
    M = 4

    [run]
    N = 2000
    eps = 1/2 1/4
    g = const 2, affine 1 1

Unknown sections and keys are rejected by name; required keys that are
missing are reported by name.  When `[run]` omits `budget`, the
environment variable HALPERN_BUDGET (same `steps[,bits]` syntax)
supplies the default before the built-in one applies.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from halpern.catalog import CatalogInstance, catalog_instances
from halpern.counterfunction import Counterfunction, parse_counterfunction
from halpern.geometry import Space, Vector
from halpern.operators import (
    AffineContractive,
    Averaged,
    Composition,
    NonexpansiveOp,
    ProjectionBall,
    ProjectionBox,
    Reflection,
    Rotation,
    compute_instance_bound,
)
from halpern.rates import DEFAULT_BUDGET, EvalBudget
from halpern.schedules import Classic, NaturalShifted, PowerLaw, Schedule


class ConfigError(ValueError):
    """Raised for any malformed configuration text."""


def _fail(msg: str) -> None:
    raise ConfigError(msg)


def _frac(token: str, what: str) -> Fraction:
    try:
        return Fraction(token)
    except (ValueError, ZeroDivisionError):
        _fail(f"{what}: expected a rational like p/q, got {token!r}")


def _floatish(token: str, what: str) -> float:
    """Accept decimals, rationals, and pi fractions like pi/3 or -pi/4."""
    text = token.strip()
    sign = 1.0
    if text.startswith("-"):
        sign, text = -1.0, text[1:]
    if text == "pi":
        return sign * math.pi
    if text.startswith("pi/"):
        try:
            return sign * math.pi / int(text[3:])
        except ValueError:
            _fail(f"{what}: bad pi fraction {token!r}")
    try:
        return sign * float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        try:
            return sign * float(text)
        except ValueError:
            _fail(f"{what}: expected a number, got {token!r}")


# ---------------------------------------------------------------------------
# operator DSL


class _OpTokens:
    def __init__(self, tokens: Sequence[str]):
        self.tokens = list(tokens)
        self.pos = 0

    def next(self, what: str) -> str:
        if self.pos >= len(self.tokens):
            _fail(f"operator spec ended early: expected {what}")
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def next_int(self, what: str) -> int:
        tok = self.next(what)
        try:
            return int(tok)
        except ValueError:
            _fail(f"operator spec: expected integer {what}, got {tok!r}")

    def next_float(self, what: str) -> float:
        return _floatish(self.next(what), f"operator spec {what}")

    def done(self) -> bool:
        return self.pos >= len(self.tokens)


def _parse_op(toks: _OpTokens) -> NonexpansiveOp:
    head = toks.next("an operator form")
    if head == "rotation":
        return Rotation(toks.next_float("angle"))
    if head == "reflection":
        d = toks.next_int("dimension")
        normal = [toks.next_float(f"normal[{i}]") for i in range(d)]
        return Reflection(normal=Vector(normal))
    if head == "ball":
        d = toks.next_int("dimension")
        radius = toks.next_float("radius")
        center = [toks.next_float(f"center[{i}]") for i in range(d)]
        return ProjectionBall(center=Vector(center), radius=radius)
    if head == "box":
        d = toks.next_int("dimension")
        lows = [toks.next_float(f"low[{i}]") for i in range(d)]
        highs = [toks.next_float(f"high[{i}]") for i in range(d)]
        return ProjectionBox(lows=Vector(lows), highs=Vector(highs))
    if head == "affine":
        d = toks.next_int("dimension")
        matrix = np.array(
            [[toks.next_float(f"matrix[{i}][{j}]") for j in range(d)] for i in range(d)]
        )
        offset = [toks.next_float(f"offset[{i}]") for i in range(d)]
        return AffineContractive(matrix=matrix, offset=Vector(offset))
    if head == "averaged":
        weight = toks.next_float("weight")
        return Averaged(op=_parse_op(toks), weight=weight)
    if head == "compose":
        k = toks.next_int("arity")
        if k < 1:
            _fail("operator spec: compose arity must be at least 1")
        return Composition(ops=[_parse_op(toks) for _ in range(k)])
    _fail(f"operator spec: unknown form {head!r}")


def parse_operator(text: str) -> NonexpansiveOp:
    """Parse the prefix operator DSL (see module docstring)."""
    toks = _OpTokens(text.split())
    try:
        op = _parse_op(toks)
    except ConfigError:
        raise
    except ValueError as exc:  # constructor validation (norm > 1, ...)
        _fail(f"operator spec: {exc}")
    if not toks.done():
        _fail(f"operator spec: trailing tokens {' '.join(toks.tokens[toks.pos:])!r}")
    return op


# ---------------------------------------------------------------------------
# config sections


_SECTION_KEYS = {
    "space": {"kind", "dim", "p"},
    "schedule": {"kind", "a", "gamma"},
    "instance": {"name", "operator", "u", "x0", "M"},
    "run": {"N", "eps", "g", "budget", "seed", "out", "m_max"},
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything the command front end needs for one experiment."""

    space: Space
    schedule: Schedule
    instances: Tuple[CatalogInstance, ...]
    N: int
    eps: Tuple[Fraction, ...]
    gs: Tuple[Counterfunction, ...]
    budget: EvalBudget
    seed: int
    out_dir: Path
    m_max: int


def _split_sections(text: str) -> List[Tuple[str, Dict[str, str]]]:
    sections: List[Tuple[str, Dict[str, str]]] = []
    current: Optional[Tuple[str, Dict[str, str]]] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in _SECTION_KEYS:
                _fail(f"line {lineno}: unknown section [{name}]")
            if name != "instance" and any(s == name for s, _ in sections):
                _fail(f"line {lineno}: duplicate section [{name}]")
            current = (name, {})
            sections.append(current)
            continue
        if "=" not in line:
            _fail(f"line {lineno}: expected `key = value`, got {line!r}")
        if current is None:
            _fail(f"line {lineno}: assignment outside any section")
        key, value = (part.strip() for part in line.split("=", 1))
        section_name, body = current
        if key not in _SECTION_KEYS[section_name]:
            _fail(f"line {lineno}: unknown key {key!r} in section [{section_name}]")
        if key in body:
            _fail(f"line {lineno}: duplicate key {key!r} in section [{section_name}]")
        body[key] = value
    return sections


def _build_space(body: Dict[str, str]) -> Space:
    kind = body.get("kind", "hilbert")
    dim = int(body.get("dim", "2"))
    if kind == "hilbert":
        if "p" in body:
            _fail("space: key 'p' only applies to kind = lp")
        return Space.hilbert(dim)
    if kind == "lp":
        if "p" not in body:
            _fail("space: missing key 'p' for kind = lp")
        return Space.lp(dim, _frac(body["p"], "space p"))
    _fail(f"space: unknown kind {kind!r}")


def _build_schedule(body: Dict[str, str]) -> Schedule:
    if "kind" not in body:
        _fail("schedule: missing key 'kind'")
    kind = body["kind"]
    if kind == "natural-shifted":
        extra = sorted(set(body) - {"kind"})
        if extra:
            _fail(f"schedule: keys {extra} do not apply to {kind}")
        return NaturalShifted()
    if kind == "classic":
        extra = sorted(set(body) - {"kind"})
        if extra:
            _fail(f"schedule: keys {extra} do not apply to {kind}")
        return Classic()
    if kind == "power-law":
        a = _frac(body.get("a", "1"), "schedule a")
        gamma = _frac(body.get("gamma", "1"), "schedule gamma")
        return PowerLaw(a=a, gamma=gamma)
    _fail(f"schedule: unknown kind {kind!r}")


def schedule_from_spec(
    kind: str, a: Optional[str] = None, gamma: Optional[str] = None
) -> Schedule:
    """Build a schedule from string parameters (CLI flags, API specs)."""
    body = {"kind": kind}
    if a is not None:
        body["a"] = a
    if gamma is not None:
        body["gamma"] = gamma
    return _build_schedule(body)


def _vector(text: str, what: str) -> Vector:
    coords = [_floatish(tok, what) for tok in text.replace(",", " ").split()]
    if not coords:
        _fail(f"{what}: empty coordinate list")
    return Vector(coords)


def _build_instance(body: Dict[str, str], index: int, space: Space) -> CatalogInstance:
    if "operator" not in body:
        _fail(f"instance #{index}: missing key 'operator'")
    spec = body["operator"].split()
    if spec and spec[0] == "catalog":
        if len(spec) != 2:
            _fail(f"instance #{index}: usage `operator = catalog <name>`")
        available = {inst.name: inst for inst in catalog_instances()}
        if spec[1] not in available:
            _fail(
                f"instance #{index}: unknown catalog instance {spec[1]!r} "
                f"(have {sorted(available)})"
            )
        base = available[spec[1]]
        name = body.get("name", base.name)
        u = _vector(body["u"], "u") if "u" in body else base.u
        x0 = _vector(body["x0"], "x0") if "x0" in body else base.x0
        M = _frac(body["M"], "M") if "M" in body else base.M
        return CatalogInstance(name=name, op=base.op, space=space, u=u, x0=x0, M=M)
    op = parse_operator(body["operator"])
    for key in ("u", "x0"):
        if key not in body:
            _fail(f"instance #{index}: missing key {key!r}")
    u = _vector(body["u"], "u")
    x0 = _vector(body["x0"], "x0")
    name = body.get("name", f"instance-{index}")
    if "M" in body:
        M = _frac(body["M"], "M")
    else:
        if op.known_fixed_point is None:
            _fail(
                f"instance #{index}: missing key 'M' and the operator has "
                "no declared fixed point to compute it from"
            )
        M = compute_instance_bound(op, u, x0, space).M
    return CatalogInstance(name=name, op=op, space=space, u=u, x0=x0, M=M)


def parse_budget(text: str) -> EvalBudget:
    """`<steps>` or `<steps>,<bits>` (whitespace also accepted)."""
    parts = text.replace(",", " ").split()
    if not 1 <= len(parts) <= 2:
        _fail(f"budget: expected `steps[,bits]`, got {text!r}")
    try:
        steps = int(parts[0])
        bits = int(parts[1]) if len(parts) == 2 else DEFAULT_BUDGET.max_bits
    except ValueError:
        _fail(f"budget: expected integers, got {text!r}")
    if steps < 1 or bits < 1:
        _fail("budget: steps and bits must be positive")
    return EvalBudget(max_steps=steps, max_bits=bits)


def _build_run(body: Dict[str, str]) -> dict:
    out = {
        "N": 1000,
        "eps": (Fraction(1, 2), Fraction(1, 4), Fraction(1, 8)),
        "gs": None,
        "budget": DEFAULT_BUDGET,
        "seed": 0,
        "out_dir": Path("."),
        "m_max": 24,
    }
    if "N" in body:
        out["N"] = int(body["N"])
        if out["N"] < 1:
            _fail("run: N must be at least 1")
    if "eps" in body:
        toks = body["eps"].split()
        if not toks:
            _fail("run: eps list is empty")
        eps = tuple(_frac(t, "run eps") for t in toks)
        if any(e <= 0 for e in eps):
            _fail("run: eps values must be positive")
        out["eps"] = eps
    if "g" in body:
        try:
            out["gs"] = tuple(
                parse_counterfunction(part.strip())
                for part in body["g"].split(",")
                if part.strip()
            )
        except ValueError as exc:
            _fail(f"run g: {exc}")
        if not out["gs"]:
            _fail("run: g list is empty")
    if "budget" in body:
        out["budget"] = parse_budget(body["budget"])
    elif os.environ.get("HALPERN_BUDGET"):
        out["budget"] = parse_budget(os.environ["HALPERN_BUDGET"])
    if "seed" in body:
        out["seed"] = int(body["seed"])
    if "out" in body:
        out["out_dir"] = Path(body["out"])
    if "m_max" in body:
        out["m_max"] = int(body["m_max"])
        if out["m_max"] < 1:
            _fail("run: m_max must be at least 1")
    return out


def parse_config(text: str) -> ExperimentConfig:
    """Parse configuration text into validated module-level objects."""
    sections = _split_sections(text)
    by_name: Dict[str, Dict[str, str]] = {}
    instance_bodies: List[Dict[str, str]] = []
    for name, body in sections:
        if name == "instance":
            instance_bodies.append(body)
        else:
            by_name[name] = body

    if "schedule" not in by_name:
        _fail("missing section [schedule]")
    space = _build_space(by_name.get("space", {}))
    schedule = _build_schedule(by_name["schedule"])
    instances = tuple(
        _build_instance(body, i + 1, space) for i, body in enumerate(instance_bodies)
    )
    for inst in instances:
        if inst.op.dim != space.dim:
            _fail(
                f"instance {inst.name!r}: operator dimension {inst.op.dim} "
                f"does not match space dimension {space.dim}"
            )
        for label, vec in (("u", inst.u), ("x0", inst.x0)):
            if vec.dim != space.dim:
                _fail(
                    f"instance {inst.name!r}: {label} has dimension {vec.dim}, "
                    f"expected {space.dim}"
                )
    run = _build_run(by_name.get("run", {}))
    gs = run["gs"]
    if gs is None:
        gs = tuple(
            parse_counterfunction(text) for text in ("const 2", "affine 1 1")
        )
    return ExperimentConfig(
        space=space,
        schedule=schedule,
        instances=instances,
        N=run["N"],
        eps=run["eps"],
        gs=gs,
        budget=run["budget"],
        seed=run["seed"],
        out_dir=run["out_dir"],
        m_max=run["m_max"],
    )


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def default_catalog_config() -> str:
    """Configuration text selecting every catalog instance."""
    lines = ["[schedule]", "kind = natural-shifted", ""]
    for inst in catalog_instances():
        lines += ["[instance]", f"operator = catalog {inst.name}", ""]
    lines += ["[run]", "N = 1000", "eps = 1/2 1/4 1/8", ""]
    return "\n".join(lines)
