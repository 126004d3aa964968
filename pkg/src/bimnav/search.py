"""Grid search: naive A*, shared multi-heuristic A* (SMHA*), and a Dijkstra oracle.

Path costs are pure geometry (meters). Each g-value is carried as a count of
orthogonal and diagonal steps and converted to meters on demand, so equal-cost
paths produce bit-identical costs whatever order their steps come in.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .field import ScalarField
from .gridmap import SQRT2, Grid, PlanningImpossible, moves

Cell = tuple[int, int]
Heuristic = Union[np.ndarray, Callable[[Cell], float]]

UNREACHABLE = math.inf


class NoPathError(RuntimeError):
    def __init__(self, message: str, expansions: dict[str, int]):
        super().__init__(message)
        self.expansions = expansions


@dataclass(frozen=True)
class SearchConfig:
    w1: float = 2.0
    w2: float = 2.0
    apf_blend: float = 0.02
    # drop the Euclidean term from the APF heuristic (potential only)
    pure_potential: bool = False
    heuristic_set: tuple[str, ...] = ("anchor", "apf")

    def __post_init__(self):
        if self.w1 < 1 or self.w2 < 1:
            raise ValueError("w1 and w2 must both be >= 1")
        if self.apf_blend < 0:
            raise ValueError("apf_blend must be >= 0")
        if not self.heuristic_set or self.heuristic_set[0] != "anchor":
            raise ValueError("heuristic_set must start with 'anchor'")


@dataclass(frozen=True)
class PlanResult:
    path: list[Cell]
    cost: float
    expansions: dict[str, int]
    algorithm: str = ""
    config: dict = field(default_factory=dict)

    @property
    def nodes(self) -> int:
        return len(self.path)

    def to_dict(self, grid: Grid | None = None) -> dict:
        doc = {
            "algorithm": self.algorithm,
            "path": [list(c) for c in self.path],
            "cost": self.cost,
            "expansions": dict(self.expansions),
            "config": self.config,
        }
        if grid is not None:
            doc["polyline"] = [list(grid.cell_center(c)) for c in self.path]
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "PlanResult":
        return cls(
            path=[(int(c), int(r)) for c, r in doc["path"]],
            cost=float(doc["cost"]),
            expansions={k: int(v) for k, v in doc.get("expansions", {}).items()},
            algorithm=doc.get("algorithm", ""),
            config=doc.get("config", {}),
        )


def heuristic_anchor(cell: Cell, goal_cell: Cell, resolution: float = 1.0) -> float:
    """Euclidean distance in meters between cell centers."""
    return resolution * math.hypot(cell[0] - goal_cell[0], cell[1] - goal_cell[1])


def heuristic_apf(
    cell: Cell,
    goal_cell: Cell,
    smoothed_total: ScalarField,
    apf_blend: float,
    resolution: float = 1.0,
    pure_potential: bool = False,
) -> float:
    pot = apf_blend * smoothed_total[cell]
    if pure_potential:
        return pot
    return heuristic_anchor(cell, goal_cell, resolution) + pot


def anchor_table(grid: Grid, goal_cell: Cell) -> np.ndarray:
    """Anchor heuristic for every cell, flattened row-major."""
    cc, rr = np.meshgrid(np.arange(grid.cols), np.arange(grid.rows))
    return (grid.resolution * np.hypot(cc - goal_cell[0], rr - goal_cell[1])).ravel()


def apf_table(grid: Grid, goal_cell: Cell, smoothed_total: ScalarField, config: SearchConfig) -> np.ndarray:
    if smoothed_total.shape != (grid.rows, grid.cols):
        raise ValueError("potential field does not match grid")
    pot = config.apf_blend * smoothed_total.values.ravel()
    if config.pure_potential:
        return pot.copy()
    return anchor_table(grid, goal_cell) + pot


def _as_table(grid: Grid, h: Heuristic) -> np.ndarray:
    if callable(h):
        return np.array([h((i % grid.cols, i // grid.cols)) for i in range(grid.cols * grid.rows)], dtype=float)
    table = np.asarray(h, dtype=float).ravel()
    if table.size != grid.cols * grid.rows:
        raise ValueError("heuristic table does not match grid size")
    return table


def _check_endpoints(grid: Grid, start: Cell, goal: Cell) -> None:
    for label, cell in (("start", start), ("goal", goal)):
        if not grid.is_walkable(cell):
            raise PlanningImpossible(f"{label} cell {cell} is not walkable", label)


def _trace(parent: dict[int, int], end: int, cols: int) -> list[Cell]:
    out = [end]
    while out[-1] in parent:
        out.append(parent[out[-1]])
    out.reverse()
    return [(i % cols, i // cols) for i in out]


def _path_cost(path: list[Cell], resolution: float) -> float:
    orth = diag = 0
    for (c0, r0), (c1, r1) in zip(path, path[1:]):
        if c0 != c1 and r0 != r1:
            diag += 1
        else:
            orth += 1
    return resolution * (orth + SQRT2 * diag)


class _Steps:
    """g-values as (orthogonal, diagonal) step counts."""

    def __init__(self, resolution: float):
        self.res = resolution
        self.counts: dict[int, tuple[int, int]] = {}

    def meters(self, idx: int) -> float:
        c = self.counts.get(idx)
        if c is None:
            return math.inf
        return self.res * (c[0] + SQRT2 * c[1])

    @staticmethod
    def step(c: tuple[int, int], diagonal: bool) -> tuple[int, int]:
        return (c[0], c[1] + 1) if diagonal else (c[0] + 1, c[1])


def plan_naive_astar(grid: Grid, start: Cell, goal: Cell) -> PlanResult:
    """Cost-optimal A* guided by the Euclidean anchor alone."""
    _check_endpoints(grid, start, goal)
    cols = grid.cols
    h = anchor_table(grid, goal)
    s, t = start[1] * cols + start[0], goal[1] * cols + goal[0]
    g = _Steps(grid.resolution)
    g.counts[s] = (0, 0)
    parent: dict[int, int] = {}
    closed: set[int] = set()
    heap = [(h[s], -0.0, s)]
    expansions = 0
    while heap:
        key, neg_g, u = heapq.heappop(heap)
        gu = g.meters(u)
        if u in closed or -neg_g != gu:
            continue
        if u == t:
            return PlanResult(_trace(parent, t, cols), gu, {"anchor": expansions}, "naive")
        closed.add(u)
        expansions += 1
        cu = g.counts[u]
        for v, diag in moves(grid, u):
            cv = _Steps.step(cu, diag)
            gv = grid.resolution * (cv[0] + SQRT2 * cv[1])
            if gv < g.meters(v):
                g.counts[v] = cv
                parent[v] = u
                closed.discard(v)
                heapq.heappush(heap, (gv + h[v], -gv, v))
    raise NoPathError(f"no path from {start} to {goal} after {expansions} expansions", {"anchor": expansions})


class _Open:
    """Priority queue with update/remove via lazy deletion.

    Ties on key go to the larger g, then the smaller row-major index.
    """

    def __init__(self):
        self.heap: list[tuple[float, float, int]] = []
        self.keys: dict[int, float] = {}

    def put(self, idx: int, key: float, g: float) -> None:
        if self.keys.get(idx) == key:
            return
        self.keys[idx] = key
        heapq.heappush(self.heap, (key, -g, idx))

    def discard(self, idx: int) -> None:
        self.keys.pop(idx, None)

    def _prune(self) -> None:
        heap, keys = self.heap, self.keys
        while heap and keys.get(heap[0][2]) != heap[0][0]:
            heapq.heappop(heap)

    def min_key(self) -> float:
        self._prune()
        return self.heap[0][0] if self.heap else math.inf

    def top(self) -> int:
        self._prune()
        return self.heap[0][2]


def plan_smha(
    grid: Grid,
    start: Cell,
    goal: Cell,
    heuristics: Sequence[Heuristic],
    config: SearchConfig = SearchConfig(),
    algorithm: str = "smha",
) -> PlanResult:
    """Shared multi-heuristic A*.

    ``heuristics[0]`` is the consistent anchor; the rest may be inadmissible.
    All queues share one g-table and back-pointer table. Queue i>0 may expand
    only while its minimum key is within ``w2`` times the anchor's, which
    bounds the returned cost by ``w1 * w2`` times the optimum.
    """
    _check_endpoints(grid, start, goal)
    if len(heuristics) < 1:
        raise ValueError("need at least the anchor heuristic")
    cols = grid.cols
    w1, w2 = config.w1, config.w2
    tables = [_as_table(grid, h) for h in heuristics]
    names = list(config.heuristic_set[: len(tables)])
    names += [f"h{i}" for i in range(len(names), len(tables))]
    n = len(tables)

    s, t = start[1] * cols + start[0], goal[1] * cols + goal[0]
    g = _Steps(grid.resolution)
    g.counts[s] = (0, 0)
    parent: dict[int, int] = {}
    opens = [_Open() for _ in range(n)]
    closed_anchor: set[int] = set()
    closed_inad: set[int] = set()
    expansions = {name: 0 for name in names}
    for i in range(n):
        opens[i].put(s, w1 * tables[i][s], 0.0)

    def expand(u: int) -> None:
        for q in opens:
            q.discard(u)
        cu = g.counts[u]
        for v, diag in moves(grid, u):
            cv = _Steps.step(cu, diag)
            gv = grid.resolution * (cv[0] + SQRT2 * cv[1])
            if gv < g.meters(v):
                g.counts[v] = cv
                parent[v] = u
                if v in closed_anchor:
                    continue
                k0 = gv + w1 * tables[0][v]
                opens[0].put(v, k0, gv)
                if v in closed_inad:
                    continue
                for i in range(1, n):
                    ki = gv + w1 * tables[i][v]
                    if ki <= w2 * k0:
                        opens[i].put(v, ki, gv)

    def done() -> PlanResult:
        # an ancestor's g may have dropped after the goal was last reached, so
        # the traced path can be cheaper than g(goal); report what it costs
        path = _trace(parent, t, cols)
        return PlanResult(path, _path_cost(path, grid.resolution), expansions, algorithm, asdict(config))

    while opens[0].min_key() < math.inf:
        for i in range(1, max(n, 2)):
            anchor_min = opens[0].min_key()
            if anchor_min == math.inf:
                break
            if i < n and opens[i].min_key() <= w2 * anchor_min:
                if g.meters(t) <= opens[i].min_key():
                    return done()
                u = opens[i].top()
                expand(u)
                closed_inad.add(u)
                expansions[names[i]] += 1
            else:
                if g.meters(t) <= anchor_min:
                    return done()
                u = opens[0].top()
                expand(u)
                closed_anchor.add(u)
                expansions[names[0]] += 1
    if g.meters(t) < math.inf:
        return done()
    raise NoPathError(f"no path from {start} to {goal}", expansions)


def dijkstra_oracle(grid: Grid, start: Cell, goal: Cell) -> float:
    """Uniform-cost search cost from ``start`` to ``goal``; ``UNREACHABLE`` if none."""
    if not (grid.is_walkable(start) and grid.is_walkable(goal)):
        return UNREACHABLE
    cols, res = grid.cols, grid.resolution
    s, t = start[1] * cols + start[0], goal[1] * cols + goal[0]
    best: dict[int, tuple[int, int]] = {s: (0, 0)}
    done: set[int] = set()
    heap = [(0.0, s)]
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        if u == t:
            return d
        done.add(u)
        no, nd = best[u]
        for v, diag in moves(grid, u):
            cand = (no, nd + 1) if diag else (no + 1, nd)
            dv = res * (cand[0] + SQRT2 * cand[1])
            old = best.get(v)
            if old is None or dv < res * (old[0] + SQRT2 * old[1]):
                best[v] = cand
                heapq.heappush(heap, (dv, v))
    return UNREACHABLE
