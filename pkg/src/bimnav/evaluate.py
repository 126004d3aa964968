"""Path metrics, scenario runs, and comparison tables."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .field import ScalarField
from .gridmap import SQRT2, Grid, PlanningImpossible, Scene, build_grid, obstacle_distance_field
from .potential import PotentialConfig, PotentialFields, compute_fields
from .search import NoPathError, PlanResult, SearchConfig, anchor_table, apf_table, plan_naive_astar, plan_smha
from .semantics import (
    AssessmentParseError,
    FamilyCatalog,
    Provider,
    ProviderError,
    RiskAssessment,
    assess,
    uniform_coefficients,
)

log = logging.getLogger(__name__)

# name -> (uses APF queue, smoothed potential, coefficient source)
ALGORITHMS: dict[str, tuple[bool, bool, str | None]] = {
    "naive": (False, False, None),
    "mha": (True, False, None),
    "mha-smoothed": (True, True, None),
    "uniform-mha": (True, True, "uniform"),
    "gpt-mha": (True, True, "assessment"),
}
DEFAULT_ALGORITHMS = ("naive", "mha", "mha-smoothed", "gpt-mha")


def path_length(result: PlanResult, grid: Grid) -> float:
    """World length of the path polyline in meters."""
    orth = diag = 0
    for (c0, r0), (c1, r1) in zip(result.path, result.path[1:]):
        if c0 != c1 and r0 != r1:
            diag += 1
        else:
            orth += 1
    return grid.resolution * (orth + SQRT2 * diag)


def ado(result: PlanResult, distance_field: ScalarField) -> float:
    """Average distance to obstacle over every path cell, endpoints included."""
    if not result.path:
        raise ValueError("empty path")
    return float(np.mean([distance_field[c] for c in result.path]))


def mean_instance_distance(result: PlanResult, grid: Grid, instance_id: str) -> float:
    """Mean distance from the path cells to one obstacle instance's cells."""
    from .gridmap import _edt_meters

    idx = grid.instance_ids.index(instance_id)
    d = _edt_meters(grid.instance_mask(idx), grid.resolution)
    return float(np.mean([d[r, c] for c, r in result.path]))


@dataclass
class RunReport:
    algorithm: str
    scenario: str
    path_length: float = math.nan
    ado: float = math.nan
    nodes: int = 0
    cost: float = math.nan
    expansions: dict[str, int] = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    error: str | None = None
    result: PlanResult | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc.pop("result")
        return doc


@dataclass
class ScenarioRun:
    """Everything one scenario run produced, for reporting and rendering."""

    scene: Scene
    grid: Grid
    distance: ScalarField
    reports: list[RunReport]
    fields: dict[str, PotentialFields] = field(default_factory=dict)
    assessment: RiskAssessment | None = None


def _coefficients(source, scene, assessment):
    if source is None:
        return {}
    if source == "uniform":
        return uniform_coefficients(scene.families)
    if assessment is None:  # scene without obstacles
        return {}
    return assessment.coefficients_for(scene.families)


def run_scenario(
    scene: Scene,
    algorithms: Sequence[str] = DEFAULT_ALGORITHMS,
    potential: PotentialConfig = PotentialConfig(),
    search: SearchConfig = SearchConfig(),
    assessment: RiskAssessment | None = None,
    provider: Provider | None = None,
) -> ScenarioRun:
    """Plan ``scene`` with each algorithm on one shared grid.

    A failing algorithm gets a report with ``error`` set; the others still run.
    Grid-level failures (unwalkable endpoints) propagate.
    """
    unknown = [a for a in algorithms if a not in ALGORITHMS]
    if unknown:
        raise ValueError(f"unknown algorithm(s): {', '.join(unknown)}")
    grid = build_grid(scene)
    distance = obstacle_distance_field(grid)
    label = scene.name or "scene"
    run = ScenarioRun(scene, grid, distance, [], assessment=assessment)
    anchor = anchor_table(grid, grid.goal)

    for name in algorithms:
        use_apf, smoothed, source = ALGORITHMS[name]
        report = RunReport(name, label)
        try:
            if not use_apf:
                result = plan_naive_astar(grid, grid.start, grid.goal)
                report.config = {}
            else:
                if source == "assessment" and run.assessment is None:
                    if provider is None:
                        raise ProviderError("gpt-mha needs an assessment or a provider")
                    catalog = FamilyCatalog.from_scene(scene)
                    run.assessment = assess(provider, catalog) if catalog.entries else None
                pconf = replace(
                    potential,
                    family_coefficients=_coefficients(source, scene, run.assessment) if source else potential.family_coefficients,
                )
                fields = compute_fields(grid, scene.goal, pconf, distance)
                run.fields[name] = fields
                pot = fields.smoothed if smoothed else fields.total
                result = plan_smha(grid, grid.start, grid.goal, [anchor, apf_table(grid, grid.goal, pot, search)], search, name)
                report.config = {"potential": _potential_echo(pconf), "search": asdict(search), "smoothed": smoothed}
        except (NoPathError, PlanningImpossible, ProviderError, AssessmentParseError) as exc:
            log.warning("%s failed on %s: %s", name, label, exc)
            report.error = f"{type(exc).__name__}: {exc}"
            if isinstance(exc, NoPathError):
                report.expansions = exc.expansions
            run.reports.append(report)
            continue
        report.result = replace(result, algorithm=name, config=report.config)
        report.path_length = path_length(result, grid)
        report.ado = ado(result, distance)
        report.nodes = result.nodes
        report.cost = result.cost
        report.expansions = dict(result.expansions)
        run.reports.append(report)
    return run


def _potential_echo(p: PotentialConfig) -> dict:
    doc = asdict(p)
    doc["family_coefficients"] = dict(p.family_coefficients)
    doc["kernel_radius"] = p.radius
    return doc


def improvement(value: float, base: float) -> float | None:
    """Relative change ``(value - base) / base``; None when undefined."""
    if value == base:
        return 0.0
    if not (math.isfinite(value) and math.isfinite(base)) or base == 0:
        return None
    return (value - base) / base


@dataclass
class ComparisonTable:
    rows: list[RunReport]

    @property
    def baseline(self) -> RunReport:
        return self.rows[0]

    def improvements(self) -> list[float | None]:
        base = self.baseline
        return [improvement(r.ado, base.ado) if r.ok and base.ok else None for r in self.rows]

    def records(self) -> list[dict]:
        out = []
        for r, imp in zip(self.rows, self.improvements()):
            out.append({
                "algorithm": r.algorithm,
                "scenario": r.scenario,
                "path_length": r.path_length,
                "ado": r.ado,
                "nodes": r.nodes,
                "expansions": sum(r.expansions.values()),
                "ado_improvement": imp,
                "error": r.error,
            })
        return out

    def format(self) -> str:
        recs = self.records()
        width = max(len("algorithm"), *(len(r["algorithm"]) for r in recs))
        head = f"{'algorithm':<{width}}  {'length_m':>9}  {'ADO_m':>7}  {'nodes':>5}  {'ADO_vs_base':>11}"
        lines = [head, "-" * len(head)]
        for r in recs:
            if r["error"]:
                lines.append(f"{r['algorithm']:<{width}}  FAILED: {r['error']}")
                continue
            imp = "n/a" if r["ado_improvement"] is None else f"{100 * r['ado_improvement']:+.1f}%"
            lines.append(
                f"{r['algorithm']:<{width}}  {r['path_length']:>9.3f}  {r['ado']:>7.3f}  {r['nodes']:>5d}  {imp:>11}"
            )
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        recs = self.records()
        writer = csv.DictWriter(buf, fieldnames=list(recs[0]), lineterminator="\n")
        writer.writeheader()
        for r in recs:
            writer.writerow({k: ("" if v is None else v) for k, v in r.items()})
        return buf.getvalue()


def compare_report(reports: Sequence[RunReport]) -> ComparisonTable:
    """Tabulate reports against the first one, which serves as baseline."""
    if len(reports) < 2:
        raise ValueError("a comparison needs at least two reports")
    return ComparisonTable(list(reports))
