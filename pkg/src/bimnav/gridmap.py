"""Floorplan scenes and their Moore-neighborhood occupancy grids."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Any, Iterable

import numpy as np
import shapely
from scipy import ndimage

from .field import ScalarField

SCHEMA_VERSION = 1
DEFAULT_RESOLUTION = 0.1
SQRT2 = math.sqrt(2.0)

# (dcol, drow) in a fixed order; diagonals last
_ORTHOGONAL = ((1, 0), (0, 1), (-1, 0), (0, -1))
_DIAGONAL = ((1, 1), (-1, 1), (-1, -1), (1, -1))


class SceneError(ValueError):
    """Malformed scene document. ``field`` names the offending entry."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class SceneValidationError(SceneError):
    """Well-formed document describing an impossible scene."""


class PlanningImpossible(ValueError):
    def __init__(self, message: str, endpoint: str):
        super().__init__(message)
        self.endpoint = endpoint


@dataclass(frozen=True)
class Bounds:
    min_x: float
    min_y: float
    max_x: float
    max_y: float

    @property
    def width(self) -> float:
        return self.max_x - self.min_x

    @property
    def height(self) -> float:
        return self.max_y - self.min_y

    def contains(self, x: float, y: float) -> bool:
        return self.min_x <= x <= self.max_x and self.min_y <= y <= self.max_y


@dataclass(frozen=True)
class ObstacleInstance:
    instance_id: str
    family: str
    description: str
    footprint: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.family:
            raise SceneValidationError(f"obstacle {self.instance_id!r}: family is empty", "family")
        if len(self.footprint) < 3:
            raise SceneValidationError(
                f"obstacle {self.instance_id!r}: footprint needs at least 3 vertices", "footprint"
            )
        poly = self.polygon
        if poly.area <= 0.0:
            raise SceneValidationError(f"obstacle {self.instance_id!r}: footprint has zero area", "footprint")
        if not poly.is_valid:
            raise SceneValidationError(f"obstacle {self.instance_id!r}: footprint is not simple", "footprint")

    @property
    def polygon(self) -> shapely.Polygon:
        return shapely.Polygon(self.footprint)

    @property
    def area(self) -> float:
        return float(self.polygon.area)


@dataclass(frozen=True)
class Scene:
    bounds: Bounds
    obstacles: tuple[ObstacleInstance, ...]
    start: tuple[float, float]
    goal: tuple[float, float]
    resolution: float = DEFAULT_RESOLUTION
    name: str = ""

    def __post_init__(self):
        b = self.bounds
        if not (b.width > 0 and b.height > 0):
            raise SceneValidationError("bounds must have positive width and height", "bounds")
        if not self.resolution > 0:
            raise SceneValidationError("resolution must be positive", "resolution")
        if b.width < 2 * self.resolution or b.height < 2 * self.resolution:
            raise SceneValidationError("bounds must span at least two cells per axis", "bounds")
        for label in ("start", "goal"):
            x, y = getattr(self, label)
            if not b.contains(x, y):
                raise SceneValidationError(f"{label} outside bounds", label)
        ids = [o.instance_id for o in self.obstacles]
        if len(set(ids)) != len(ids):
            raise SceneValidationError("duplicate obstacle instance_id", "obstacles")

    @property
    def families(self) -> list[str]:
        """Distinct family names in first-appearance order."""
        return list(dict.fromkeys(o.family for o in self.obstacles))


def _require(doc: dict, key: str, where: str) -> Any:
    if not isinstance(doc, dict) or key not in doc:
        raise SceneError(f"missing field '{where}{key}'", f"{where}{key}")
    return doc[key]


def _number(value: Any, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SceneError(f"field '{name}' must be a number", name)
    if not math.isfinite(value):
        raise SceneError(f"field '{name}' must be finite", name)
    return float(value)


def _point(doc: dict, key: str) -> tuple[float, float]:
    p = _require(doc, key, "")
    return (_number(_require(p, "x", f"{key}."), f"{key}.x"), _number(_require(p, "y", f"{key}."), f"{key}.y"))


def scene_from_dict(doc: dict) -> Scene:
    if not isinstance(doc, dict):
        raise SceneError("scene document must be an object")
    version = _require(doc, "schema_version", "")
    if version != SCHEMA_VERSION:
        raise SceneError(f"unsupported schema_version {version!r}", "schema_version")
    braw = _require(doc, "bounds", "")
    bounds = Bounds(*(_number(_require(braw, k, "bounds."), f"bounds.{k}") for k in ("min_x", "min_y", "max_x", "max_y")))
    resolution = _number(doc.get("resolution", DEFAULT_RESOLUTION), "resolution")
    obstacles_raw = doc.get("obstacles", [])
    if not isinstance(obstacles_raw, list):
        raise SceneError("field 'obstacles' must be a list", "obstacles")
    obstacles = []
    for i, o in enumerate(obstacles_raw):
        where = f"obstacles[{i}]."
        iid = _require(o, "instance_id", where)
        family = _require(o, "family", where)
        if not isinstance(iid, str) or not isinstance(family, str):
            raise SceneError(f"'{where}instance_id' and '{where}family' must be strings", where + "family")
        fp = _require(o, "footprint", where)
        try:
            footprint = tuple((float(x), float(y)) for x, y in fp)
        except (TypeError, ValueError):
            raise SceneError(f"field '{where}footprint' must be a list of [x, y] pairs", where + "footprint") from None
        obstacles.append(ObstacleInstance(iid, family, str(o.get("description", "")), footprint))
    return Scene(
        bounds=bounds,
        obstacles=tuple(obstacles),
        start=_point(doc, "start"),
        goal=_point(doc, "goal"),
        resolution=resolution,
        name=str(doc.get("name", "")),
    )


def load_scene(document: str) -> Scene:
    """Parse a JSON scene document. Unknown fields are ignored."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SceneError(f"scene is not valid JSON: {exc}") from None
    return scene_from_dict(doc)


def bundled_scenes() -> list[str]:
    """Names of the scenes shipped with the package."""
    folder = resources.files("bimnav").joinpath("data", "scenes")
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))


def bundled_scene(name: str) -> Scene:
    if name not in bundled_scenes():
        raise SceneError(f"no bundled scene named {name!r}; available: {', '.join(bundled_scenes())}")
    return load_scene(resources.files("bimnav").joinpath("data", "scenes", f"{name}.json").read_text())


def scene_to_dict(scene: Scene) -> dict:
    b = scene.bounds
    doc = {
        "schema_version": SCHEMA_VERSION,
        "bounds": {"min_x": b.min_x, "min_y": b.min_y, "max_x": b.max_x, "max_y": b.max_y},
        "resolution": scene.resolution,
        "start": {"x": scene.start[0], "y": scene.start[1]},
        "goal": {"x": scene.goal[0], "y": scene.goal[1]},
        "obstacles": [
            {
                "instance_id": o.instance_id,
                "family": o.family,
                "description": o.description,
                "footprint": [list(p) for p in o.footprint],
            }
            for o in scene.obstacles
        ],
    }
    if scene.name:
        doc["name"] = scene.name
    return doc


def dump_scene(scene: Scene) -> str:
    return json.dumps(scene_to_dict(scene), indent=2) + "\n"


@dataclass(frozen=True, eq=False)
class Grid:
    """Rasterized floorplan. Cells are addressed as ``(col, row)``.

    ``walkable`` and ``occupier`` are ``(rows, cols)`` arrays; ``occupier``
    holds an index into ``instance_ids`` or -1.
    """

    cols: int
    rows: int
    resolution: float
    origin: tuple[float, float]
    walkable: np.ndarray
    occupier: np.ndarray
    instance_ids: tuple[str, ...] = ()
    instance_families: tuple[str, ...] = ()
    start: tuple[int, int] | None = None
    goal: tuple[int, int] | None = None
    _neighbor_cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.walkable.setflags(write=False)
        self.occupier.setflags(write=False)

    @classmethod
    def from_mask(cls, walkable, resolution: float = 1.0, origin=(0.0, 0.0)) -> "Grid":
        """Grid from a boolean ``(rows, cols)`` walkability mask.

        All blocked cells are attributed to one anonymous instance ``"mask"``
        of family ``"obstacle"``.
        """
        walkable = np.array(walkable, dtype=bool)
        rows, cols = walkable.shape
        occupier = np.where(walkable, -1, 0).astype(np.int32)
        ids, fams = (("mask",), ("obstacle",)) if (~walkable).any() else ((), ())
        return cls(cols, rows, float(resolution), tuple(origin), walkable, occupier, ids, fams)

    def in_bounds(self, cell: tuple[int, int]) -> bool:
        c, r = cell
        return 0 <= c < self.cols and 0 <= r < self.rows

    def is_walkable(self, cell: tuple[int, int]) -> bool:
        return self.in_bounds(cell) and bool(self.walkable[cell[1], cell[0]])

    def occupier_of(self, cell: tuple[int, int]) -> str | None:
        idx = int(self.occupier[cell[1], cell[0]])
        return self.instance_ids[idx] if idx >= 0 else None

    def cell_center(self, cell: tuple[int, int]) -> tuple[float, float]:
        c, r = cell
        return (self.origin[0] + (c + 0.5) * self.resolution, self.origin[1] + (r + 0.5) * self.resolution)

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        c = math.floor((x - self.origin[0]) / self.resolution)
        r = math.floor((y - self.origin[1]) / self.resolution)
        # points on the max edge belong to the last cell
        return (min(max(c, 0), self.cols - 1), min(max(r, 0), self.rows - 1))

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """World x and y of every cell center, each ``(rows, cols)``."""
        xs = self.origin[0] + (np.arange(self.cols) + 0.5) * self.resolution
        ys = self.origin[1] + (np.arange(self.rows) + 0.5) * self.resolution
        return np.meshgrid(xs, ys)

    def instance_mask(self, index: int) -> np.ndarray:
        return self.occupier == index


def build_grid(scene: Scene, check_endpoints: bool = True) -> Grid:
    """Rasterize ``scene`` conservatively: any positive-area overlap blocks a cell."""
    res = scene.resolution
    b = scene.bounds
    cols = math.ceil(b.width / res)
    rows = math.ceil(b.height / res)
    ox, oy = b.min_x, b.min_y

    xs = ox + (np.arange(cols) + 0.5) * res
    ys = oy + (np.arange(rows) + 0.5) * res
    cx, cy = np.meshgrid(xs, ys)
    walkable = (cx <= b.max_x) & (cy <= b.max_y)
    occupier = np.full((rows, cols), -1, dtype=np.int32)

    ordered = sorted(scene.obstacles, key=lambda o: o.instance_id)
    min_area = 1e-9 * res * res
    for idx, obs in enumerate(ordered):
        poly = obs.polygon
        x0, y0, x1, y1 = poly.bounds
        c0 = max(math.floor((x0 - ox) / res) - 1, 0)
        c1 = min(math.floor((x1 - ox) / res) + 1, cols - 1)
        r0 = max(math.floor((y0 - oy) / res) - 1, 0)
        r1 = min(math.floor((y1 - oy) / res) + 1, rows - 1)
        if c0 > c1 or r0 > r1:
            continue
        cc, rr = np.meshgrid(np.arange(c0, c1 + 1), np.arange(r0, r1 + 1))
        boxes = shapely.box(ox + cc * res, oy + rr * res, ox + (cc + 1) * res, oy + (rr + 1) * res)
        hit = shapely.area(shapely.intersection(boxes, poly)) > min_area
        hr, hc = rr[hit], cc[hit]
        free = occupier[hr, hc] < 0
        occupier[hr[free], hc[free]] = idx
        walkable[hr, hc] = False

    grid = Grid(
        cols=cols,
        rows=rows,
        resolution=res,
        origin=(ox, oy),
        walkable=walkable,
        occupier=occupier,
        instance_ids=tuple(o.instance_id for o in ordered),
        instance_families=tuple(o.family for o in ordered),
    )
    grid = replace(grid, start=grid.world_to_cell(*scene.start), goal=grid.world_to_cell(*scene.goal))
    if check_endpoints:
        for label, cell in (("start", grid.start), ("goal", grid.goal)):
            if not grid.is_walkable(cell):
                who = grid.occupier_of(cell)
                detail = f" (occupied by {who})" if who else ""
                raise PlanningImpossible(f"{label} cell {cell} is unwalkable{detail}", label)
    return grid


def neighbors(grid: Grid, cell: tuple[int, int]) -> list[tuple[tuple[int, int], float]]:
    """Walkable Moore neighbors of ``cell`` with step costs in meters.

    A diagonal move is dropped when both orthogonal cells it passes between
    are unwalkable.
    """
    if not grid.is_walkable(cell):
        return []
    c, r = cell
    res = grid.resolution
    out = []
    for dc, dr in _ORTHOGONAL:
        n = (c + dc, r + dr)
        if grid.is_walkable(n):
            out.append((n, res))
    for dc, dr in _DIAGONAL:
        n = (c + dc, r + dr)
        if not grid.is_walkable(n):
            continue
        if not grid.is_walkable((c + dc, r)) and not grid.is_walkable((c, r + dr)):
            continue
        out.append((n, res * SQRT2))
    return out


def moves(grid: Grid, index: int) -> list[tuple[int, bool]]:
    """Flat-index successors of flat cell ``index`` as ``(index, is_diagonal)``.

    Same adjacency as :func:`neighbors`; cached per grid for the search loops.
    """
    cache = grid._neighbor_cache
    hit = cache.get(index)
    if hit is None:
        cols = grid.cols
        cell = (index % cols, index // cols)
        hit = [(n[1] * cols + n[0], cost != grid.resolution) for n, cost in neighbors(grid, cell)]
        cache[index] = hit
    return hit


def _edt_meters(blocked: np.ndarray, resolution: float) -> np.ndarray:
    # exact EDT; distances recomputed from integer offsets so ties are bit-identical
    if not blocked.any():
        return np.full(blocked.shape, np.inf)
    _, (ir, ic) = ndimage.distance_transform_edt(~blocked, return_indices=True)
    rr, cc = np.indices(blocked.shape)
    d2 = (rr - ir) ** 2 + (cc - ic) ** 2
    return np.sqrt(d2.astype(float)) * resolution


def obstacle_distance_field(grid: Grid) -> ScalarField:
    """Distance (m) from each cell center to the nearest unwalkable cell center.

    Returns +inf everywhere when the grid has no unwalkable cell.
    """
    return ScalarField(_edt_meters(~grid.walkable, grid.resolution), grid.resolution)


def instance_distance_fields(grid: Grid) -> list[np.ndarray]:
    """Per-instance distance (m) to the nearest cell occupied by that instance."""
    return [_edt_meters(grid.instance_mask(i), grid.resolution) for i in range(len(grid.instance_ids))]


def iter_cells(grid: Grid) -> Iterable[tuple[int, int]]:
    for r in range(grid.rows):
        for c in range(grid.cols):
            yield (c, r)
