"""Radial feeder data model.

Buses are numbered ``0..N`` with bus 0 the feeder head. Every vector that is
"per bus" elsewhere in the package has length ``N`` and is indexed by
``bus_id - 1``; the feeder head is never a decision or injection point.

Voltages are handled as squared magnitudes in per-unit throughout. Conversion
to kV happens only when reporting.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from collections import deque
from dataclasses import dataclass, field, replace
from importlib import resources
from os import PathLike
from typing import Iterable, Sequence

import numpy as np

DEFAULT_Q_LIMIT = 0.1


class FeederError(ValueError):
    """Invalid feeder description."""


class TopologyError(FeederError):
    """The line set does not form a tree rooted at bus 0."""


@dataclass(frozen=True)
class Bus:
    id: int
    controllable: bool = False
    q_min: float = 0.0
    q_max: float = 0.0
    name: str = ""
    load_kw: float = 0.0
    load_kvar: float = 0.0

    def __post_init__(self):
        if not self.name:
            object.__setattr__(self, "name", str(self.id))


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    r: float
    x: float


@dataclass(frozen=True, eq=False)
class Feeder:
    """Immutable radial network.

    Lines are stored oriented parent -> child. Topology queries and the
    path-incidence matrix are computed once at construction.
    """

    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    v0: float = 1.0
    v_min: float = 0.95
    v_max: float = 1.05
    base_kv: float = 12.0
    base_mva: float = 1.0
    name: str = ""
    _parent: np.ndarray = field(init=False, repr=False)
    _line_into: np.ndarray = field(init=False, repr=False)
    _order: tuple[int, ...] = field(init=False, repr=False)
    _children: tuple[tuple[int, ...], ...] = field(init=False, repr=False)
    _path: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        buses = tuple(sorted(self.buses, key=lambda b: b.id))
        ids = [b.id for b in buses]
        if ids != list(range(len(ids))):
            raise FeederError(f"bus ids must be unique and contiguous from 0, got {ids}")
        if len(buses) < 2:
            raise FeederError("a feeder needs the head bus and at least one more bus")
        for b in buses:
            if b.controllable and not (b.q_min <= 0.0 <= b.q_max):
                raise FeederError(f"bus {b.id}: need q_min <= 0 <= q_max, got [{b.q_min}, {b.q_max}]")
        for ln in self.lines:
            if not (ln.r > 0 and ln.x > 0):
                raise FeederError(f"line {ln.from_bus}-{ln.to_bus}: impedance must be positive, got r={ln.r} x={ln.x}")
        if not (self.v_min ** 2 < self.v0 < self.v_max ** 2):
            raise FeederError(f"need v_min^2 < v0 < v_max^2, got v0={self.v0} bounds=[{self.v_min}, {self.v_max}]")
        if self.base_kv <= 0 or self.base_mva <= 0:
            raise FeederError("bases must be positive")

        lines, parent, line_into, order = _orient(len(buses), self.lines)
        object.__setattr__(self, "buses", buses)
        object.__setattr__(self, "lines", lines)
        children = [[] for _ in buses]
        for ln in lines:
            children[ln.from_bus].append(ln.to_bus)
        object.__setattr__(self, "_parent", _frozen(parent))
        object.__setattr__(self, "_line_into", _frozen(line_into))
        object.__setattr__(self, "_order", tuple(order))
        object.__setattr__(self, "_children", tuple(tuple(c) for c in children))

        n = len(buses) - 1
        path = np.zeros((n, n))
        for j in range(1, n + 1):
            k = j
            while k != 0:
                path[j - 1, line_into[k]] = 1.0
                k = parent[k]
        object.__setattr__(self, "_path", _frozen(path))

    def __eq__(self, other):
        if not isinstance(other, Feeder):
            return NotImplemented
        return (self.buses, self.lines, self.v0, self.v_min, self.v_max,
                self.base_kv, self.base_mva, self.name) == (
            other.buses, other.lines, other.v0, other.v_min, other.v_max,
            other.base_kv, other.base_mva, other.name)

    def __hash__(self):
        return hash((self.buses, self.lines, self.v0))

    @property
    def n(self) -> int:
        """Number of non-root buses."""
        return len(self.buses) - 1

    @property
    def r(self) -> np.ndarray:
        return np.array([ln.r for ln in self.lines])

    @property
    def x(self) -> np.ndarray:
        return np.array([ln.x for ln in self.lines])

    @property
    def from_bus(self) -> np.ndarray:
        return np.array([ln.from_bus for ln in self.lines])

    @property
    def to_bus(self) -> np.ndarray:
        return np.array([ln.to_bus for ln in self.lines])

    @property
    def v_lower(self) -> np.ndarray:
        return np.full(self.n, self.v_min ** 2)

    @property
    def v_upper(self) -> np.ndarray:
        return np.full(self.n, self.v_max ** 2)

    @property
    def controllable(self) -> np.ndarray:
        """Positions (``bus_id - 1``) of controllable buses, ascending."""
        return np.array([b.id - 1 for b in self.buses if b.controllable], dtype=int)

    @property
    def q_min(self) -> np.ndarray:
        return np.array([b.q_min for b in self.buses if b.controllable])

    @property
    def q_max(self) -> np.ndarray:
        return np.array([b.q_max for b in self.buses if b.controllable])

    @property
    def parent(self) -> np.ndarray:
        return self._parent

    @property
    def line_into(self) -> np.ndarray:
        """``line_into[j]`` is the index of the line feeding bus ``j`` (-1 for the head)."""
        return self._line_into

    @property
    def order(self) -> tuple[int, ...]:
        """Breadth-first bus order starting at the head."""
        return self._order

    @property
    def path_matrix(self) -> np.ndarray:
        """``N x N`` incidence: entry ``[j-1, l]`` is 1 when line ``l`` lies on the head-to-``j`` path."""
        return self._path

    def children(self, j: int) -> tuple[int, ...]:
        self._check_bus(j)
        return self._children[j]

    def load_pu(self) -> tuple[np.ndarray, np.ndarray]:
        """Nominal (p, q) load of the non-root buses in per-unit, positive = consumption."""
        scale = 1e-3 / self.base_mva
        p = np.array([b.load_kw for b in self.buses[1:]]) * scale
        q = np.array([b.load_kvar for b in self.buses[1:]]) * scale
        return p, q

    def with_q_limits(self, q_min: float, q_max: float) -> "Feeder":
        """Copy with every controllable bus given the box ``[q_min, q_max]``."""
        buses = [replace(b, q_min=q_min, q_max=q_max) if b.controllable else b for b in self.buses]
        return replace(self, buses=tuple(buses))

    def with_controllable(self, bus_ids: Iterable[int], q_min: float = -DEFAULT_Q_LIMIT,
                          q_max: float = DEFAULT_Q_LIMIT) -> "Feeder":
        ids = set(bus_ids)
        for j in ids:
            self._check_bus(j)
        if 0 in ids:
            raise FeederError("the feeder head cannot be controllable")
        buses = []
        for b in self.buses:
            if b.id in ids:
                buses.append(replace(b, controllable=True, q_min=q_min, q_max=q_max))
            else:
                buses.append(replace(b, controllable=False, q_min=0.0, q_max=0.0))
        return replace(self, buses=tuple(buses))

    def fingerprint(self) -> str:
        return hashlib.sha256(dumps_feeder(self).encode()).hexdigest()[:16]

    def _check_bus(self, j: int):
        if not (isinstance(j, (int, np.integer)) and 0 <= j <= self.n):
            raise FeederError(f"unknown bus id {j!r}")


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _orient(n_bus: int, lines: Sequence[Line]):
    """BFS from the head; returns lines oriented parent -> child plus lookup arrays."""
    if len(lines) != n_bus - 1:
        raise TopologyError(f"a tree on {n_bus} buses has {n_bus - 1} lines, got {len(lines)}")
    adj: list[list[int]] = [[] for _ in range(n_bus)]
    seen_pairs = set()
    for k, ln in enumerate(lines):
        a, b = ln.from_bus, ln.to_bus
        for j in (a, b):
            if not 0 <= j < n_bus:
                raise TopologyError(f"line {a}-{b} references unknown bus {j}")
        if a == b:
            raise TopologyError(f"line {a}-{b} is a self-loop")
        key = (min(a, b), max(a, b))
        if key in seen_pairs:
            raise TopologyError(f"line {a}-{b} is duplicated")
        seen_pairs.add(key)
        adj[a].append(k)
        adj[b].append(k)

    parent = np.full(n_bus, -1, dtype=int)
    line_into = np.full(n_bus, -1, dtype=int)
    oriented: list[Line | None] = [None] * len(lines)
    visited = [False] * n_bus
    visited[0] = True
    order = [0]
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for k in adj[i]:
            if k == line_into[i]:
                continue
            ln = lines[k]
            j = ln.to_bus if ln.from_bus == i else ln.from_bus
            if visited[j]:
                raise TopologyError(f"line {ln.from_bus}-{ln.to_bus} closes a cycle")
            visited[j] = True
            parent[j] = i
            line_into[j] = k
            oriented[k] = Line(i, j, ln.r, ln.x)
            order.append(j)
            queue.append(j)
    missing = [j for j in range(n_bus) if not visited[j]]
    if missing:
        raise TopologyError(f"buses {missing} are not connected to the feeder head")
    return tuple(oriented), parent, line_into, order


def subtree_buses(f: Feeder, j: int) -> set[int]:
    """All buses whose path to the head passes through ``j`` (``j`` included)."""
    f._check_bus(j)
    out = set()
    stack = [j]
    while stack:
        k = stack.pop()
        out.add(k)
        stack.extend(f._children[k])
    return out


def path_to_root(f: Feeder, j: int) -> list[Line]:
    """Lines from the head down to bus ``j``, in head-to-``j`` order."""
    f._check_bus(j)
    path = []
    while j != 0:
        path.append(f.lines[f.line_into[j]])
        j = int(f.parent[j])
    return path[::-1]


# --------------------------------------------------------------------------
# Text format

_LIMIT_KEYS = {"v0", "v_min", "v_max", "q_min", "q_max"}
_BASE_KEYS = {"base_kv", "base_mva"}
_SECTIONS = {"buses", "lines", "limits", "bases", "feeder"}


def _parse_bool(tok: str, where: str) -> bool:
    t = tok.lower()
    if t in ("yes", "true", "1", "y"):
        return True
    if t in ("no", "false", "0", "n"):
        return False
    raise FeederError(f"{where}: expected yes/no, got {tok!r}")


def _parse_float(tok: str, where: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise FeederError(f"{where}: expected a number, got {tok!r}") from None


def loads_feeder(text: str) -> Feeder:
    """Parse the INI-style feeder description (see ``data/ieee13.ini``)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise FeederError(f"parse error: {exc}") from None

    unknown = set(cp.sections()) - _SECTIONS
    if unknown:
        raise FeederError(f"unknown sections {sorted(unknown)}")
    for sec in ("buses", "lines"):
        if not cp.has_section(sec):
            raise FeederError(f"missing section [{sec}]")

    limits = dict(cp["limits"]) if cp.has_section("limits") else {}
    bases = dict(cp["bases"]) if cp.has_section("bases") else {}
    for sec, keys, allowed in (("limits", limits, _LIMIT_KEYS), ("bases", bases, _BASE_KEYS)):
        bad = set(keys) - allowed
        if bad:
            raise FeederError(f"[{sec}]: unknown keys {sorted(bad)}")
    lim = {k: _parse_float(v, f"[limits] {k}") for k, v in limits.items()}
    base = {k: _parse_float(v, f"[bases] {k}") for k, v in bases.items()}
    q_lo = lim.get("q_min", -DEFAULT_Q_LIMIT)
    q_hi = lim.get("q_max", DEFAULT_Q_LIMIT)

    buses = []
    for key, value in cp["buses"].items():
        where = f"[buses] {key}"
        try:
            bid = int(key)
        except ValueError:
            raise FeederError(f"{where}: bus id must be an integer") from None
        tok = value.split()
        if len(tok) not in (4, 6):
            raise FeederError(f"{where}: expected 'name controllable load_kw load_kvar [q_min q_max]'")
        ctrl = _parse_bool(tok[1], where)
        kw = _parse_float(tok[2], where)
        kvar = _parse_float(tok[3], where)
        if len(tok) == 6:
            lo, hi = _parse_float(tok[4], where), _parse_float(tok[5], where)
        else:
            lo, hi = (q_lo, q_hi) if ctrl else (0.0, 0.0)
        if bid == 0 and ctrl:
            raise FeederError(f"{where}: the feeder head cannot be controllable")
        buses.append(Bus(bid, ctrl, lo, hi, tok[0], kw, kvar))

    lines = []
    for key, value in cp["lines"].items():
        where = f"[lines] {key}"
        ends = key.split("-")
        if len(ends) != 2:
            raise FeederError(f"{where}: expected 'from-to'")
        try:
            a, b = int(ends[0]), int(ends[1])
        except ValueError:
            raise FeederError(f"{where}: bus ids must be integers") from None
        tok = value.split()
        if len(tok) != 2:
            raise FeederError(f"{where}: expected 'r x'")
        lines.append(Line(a, b, _parse_float(tok[0], where), _parse_float(tok[1], where)))

    name = cp["feeder"].get("name", "") if cp.has_section("feeder") else ""
    return Feeder(
        buses=tuple(buses), lines=tuple(lines),
        v0=lim.get("v0", 1.0), v_min=lim.get("v_min", 0.95), v_max=lim.get("v_max", 1.05),
        base_kv=base.get("base_kv", 12.0), base_mva=base.get("base_mva", 1.0), name=name,
    )


def load_feeder(path: str | PathLike) -> Feeder:
    """Read a feeder file. ``builtin:ieee13`` names the packaged fixture."""
    if str(path).startswith("builtin:"):
        return builtin_feeder(str(path).split(":", 1)[1])
    with open(path) as fh:
        return loads_feeder(fh.read())


def dumps_feeder(f: Feeder) -> str:
    out = io.StringIO()
    if f.name:
        out.write(f"[feeder]\nname = {f.name}\n\n")
    out.write(f"[bases]\nbase_kv = {f.base_kv!r}\nbase_mva = {f.base_mva!r}\n\n")
    out.write(f"[limits]\nv0 = {f.v0!r}\nv_min = {f.v_min!r}\nv_max = {f.v_max!r}\n\n")
    out.write("[buses]\n")
    for b in f.buses:
        row = f"{b.id} = {b.name} {'yes' if b.controllable else 'no'} {b.load_kw!r} {b.load_kvar!r}"
        if b.controllable:
            row += f" {b.q_min!r} {b.q_max!r}"
        out.write(row + "\n")
    out.write("\n[lines]\n")
    for ln in f.lines:
        out.write(f"{ln.from_bus}-{ln.to_bus} = {ln.r!r} {ln.x!r}\n")
    return out.getvalue()


def save_feeder(f: Feeder, path: str | PathLike):
    with open(path, "w") as fh:
        fh.write(dumps_feeder(f))


# --------------------------------------------------------------------------
# Fixtures

def builtin_feeder(name: str) -> Feeder:
    if name != "ieee13":
        raise FeederError(f"no builtin feeder named {name!r}")
    text = resources.files("saver").joinpath("data/ieee13.ini").read_text()
    f = loads_feeder(text)
    return replace(f, name="ieee13")


def ieee13() -> Feeder:
    """IEEE 13-node feeder as a balanced single-phase equivalent."""
    return builtin_feeder("ieee13")


def _uniform(pairs, r, x, controllable, q_limit, **kw) -> Feeder:
    n_bus = 1 + len(pairs)
    buses = [Bus(0)] + [
        Bus(j, j in controllable, -q_limit if j in controllable else 0.0,
            q_limit if j in controllable else 0.0)
        for j in range(1, n_bus)
    ]
    lines = [Line(a, b, r, x) for a, b in pairs]
    return Feeder(tuple(buses), tuple(lines), **kw)


def chain_feeder(n: int, r: float = 0.01, x: float = 0.01, controllable=None,
                 q_limit: float = DEFAULT_Q_LIMIT, **kw) -> Feeder:
    """Chain ``0-1-...-n`` with identical lines; all non-root buses controllable by default."""
    ctrl = set(range(1, n + 1)) if controllable is None else set(controllable)
    return _uniform([(j - 1, j) for j in range(1, n + 1)], r, x, ctrl, q_limit, **kw)


def star_feeder(n: int, r: float = 0.02, x: float = 0.02, controllable=None,
                q_limit: float = DEFAULT_Q_LIMIT, **kw) -> Feeder:
    """Head connected directly to ``n`` leaves."""
    ctrl = set(range(1, n + 1)) if controllable is None else set(controllable)
    return _uniform([(0, j) for j in range(1, n + 1)], r, x, ctrl, q_limit, **kw)


def random_feeder(n: int, rng: np.random.Generator, r_range=(0.005, 0.03), x_range=(0.005, 0.03),
                  controllable=None, q_limit: float = DEFAULT_Q_LIMIT, **kw) -> Feeder:
    """Random tree on ``n + 1`` buses: each new bus attaches to a uniformly drawn earlier bus."""
    ctrl = set(range(1, n + 1)) if controllable is None else set(controllable)
    buses = [Bus(0)] + [
        Bus(j, j in ctrl, -q_limit if j in ctrl else 0.0, q_limit if j in ctrl else 0.0)
        for j in range(1, n + 1)
    ]
    lines = [
        Line(int(rng.integers(0, j)), j, float(rng.uniform(*r_range)), float(rng.uniform(*x_range)))
        for j in range(1, n + 1)
    ]
    return Feeder(tuple(buses), tuple(lines), **kw)
