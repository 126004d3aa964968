import math
import random

import numpy as np
import pytest

from bimnav.gridmap import Grid, bundled_scene
from bimnav.semantics import FixtureProvider

# PASS/FAIL lines appended by test_acceptance, echoed in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1][1:])):
            terminalreporter.write_line(line)


def random_grid(rng: random.Random, cols=20, rows=20, density=0.2, resolution=1.0) -> Grid:
    walkable = np.array([[rng.random() >= density for _ in range(cols)] for _ in range(rows)])
    return Grid.from_mask(walkable, resolution)


def random_pair(rng: random.Random, grid: Grid):
    free = [(c, r) for r in range(grid.rows) for c in range(grid.cols) if grid.walkable[r, c]]
    return rng.choice(free), rng.choice(free)


def reachable_cases(seed: int, n: int, **kw):
    """``n`` (grid, start, goal, oracle cost) tuples with finite oracle cost."""
    from bimnav.search import dijkstra_oracle

    rng = random.Random(seed)
    out = []
    while len(out) < n:
        g = random_grid(rng, **kw)
        if g.walkable.sum() < 2:
            continue
        s, t = random_pair(rng, g)
        cost = dijkstra_oracle(g, s, t)
        if math.isfinite(cost):
            out.append((g, s, t, cost))
    return out


def brute_distance(walkable: np.ndarray, resolution: float) -> np.ndarray:
    blocked = np.argwhere(~walkable)
    rows, cols = walkable.shape
    out = np.full((rows, cols), math.inf)
    for r in range(rows):
        for c in range(cols):
            if not walkable[r, c]:
                out[r, c] = 0.0
                continue
            best = math.inf
            for br, bc in blocked:
                best = min(best, math.sqrt((br - r) ** 2 + (bc - c) ** 2) * resolution)
            out[r, c] = best
    return out


def naive_convolve(values: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    rows, cols = values.shape
    kh, kw = kernel.shape
    ry, rx = kh // 2, kw // 2
    out = np.zeros_like(values, dtype=float)
    for r in range(rows):
        for c in range(cols):
            acc = 0.0
            for i in range(-ry, ry + 1):
                for j in range(-rx, rx + 1):
                    rr = min(max(r - i, 0), rows - 1)
                    cc = min(max(c - j, 0), cols - 1)
                    acc += kernel[i + ry, j + rx] * values[rr, cc]
            out[r, c] = acc
    return out


def scene_doc(obstacles=(), bounds=(0, 0, 10, 10), start=(1, 1), goal=(9, 9), resolution=0.1, name="t"):
    return {
        "schema_version": 1,
        "name": name,
        "bounds": dict(zip(("min_x", "min_y", "max_x", "max_y"), bounds)),
        "resolution": resolution,
        "start": {"x": start[0], "y": start[1]},
        "goal": {"x": goal[0], "y": goal[1]},
        "obstacles": list(obstacles),
    }


def square(iid, family, x0, y0, x1, y1, description=""):
    return {
        "instance_id": iid,
        "family": family,
        "description": description,
        "footprint": [[x0, y0], [x1, y0], [x1, y1], [x0, y1]],
    }


@pytest.fixture
def scenario1():
    return bundled_scene("scenario-1")


@pytest.fixture
def scenario2():
    return bundled_scene("scenario-2")


@pytest.fixture
def survey():
    return FixtureProvider.named("site-survey")
