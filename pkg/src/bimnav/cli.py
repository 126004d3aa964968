"""Command-line interface: ``bimnav plan|assess|compare|render``.

Exit codes are part of the public contract:

    0  success
    1  unexpected internal error
    2  usage error (bad flags, bad config file, bad parameter values)
    3  scene could not be read, parsed, or validated
    4  no path exists, or an endpoint is not walkable
    5  risk provider failed (transport, HTTP status, missing fixture)
    6  risk provider answered but the response could not be parsed
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import fields as dc_fields
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .evaluate import ALGORITHMS, DEFAULT_ALGORITHMS, RunReport, compare_report, run_scenario
from .gridmap import (
    PlanningImpossible,
    Scene,
    SceneError,
    build_grid,
    bundled_scene,
    bundled_scenes,
    load_scene,
    obstacle_distance_field,
)
from .potential import PotentialConfig, compute_fields
from .render import ascii_render, render_figure
from .search import NoPathError, PlanResult, SearchConfig
from .semantics import (
    DEFAULT_ENDPOINT,
    DEFAULT_MODEL,
    ENV_ENDPOINT,
    ENV_MODEL,
    AssessmentParseError,
    FamilyCatalog,
    FixtureProvider,
    Provider,
    ProviderError,
    RemoteProvider,
    RiskAssessment,
    assess,
)

log = logging.getLogger("bimnav")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_SCENE = 3
EXIT_NO_PATH = 4
EXIT_PROVIDER = 5
EXIT_PARSE = 6

_ERROR_EXIT = {
    "NoPathError": EXIT_NO_PATH,
    "PlanningImpossible": EXIT_NO_PATH,
    "ProviderError": EXIT_PROVIDER,
    "AssessmentParseError": EXIT_PARSE,
}

FIELDS = ("smoothed", "total", "repulsive", "attractive", "distance", "none")


class UsageError(Exception):
    pass


# --- configuration -----------------------------------------------------------

_POTENTIAL_FLAGS = {
    "k_att": float,
    "k_rep": float,
    "global_scale": float,
    "sigma": float,
    "kernel_radius": int,
    "decay_length": float,
}
_SEARCH_FLAGS = {"w1": float, "w2": float, "apf_blend": float}


def _read_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    known = {"potential", "search", "provider", "algorithms", "algorithm"}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise UsageError(f"config file {path}: unknown section(s) {', '.join(unknown)}")
    return doc


def _section(cfg: dict, name: str, allowed: set[str]) -> dict:
    sec = cfg.get(name, {})
    if not isinstance(sec, dict):
        raise UsageError(f"config section {name!r} must be an object")
    unknown = sorted(set(sec) - allowed)
    if unknown:
        raise UsageError(f"config section {name!r}: unknown key(s) {', '.join(unknown)}")
    return dict(sec)


def build_configs(args: argparse.Namespace, cfg: dict) -> tuple[PotentialConfig, SearchConfig]:
    """Defaults, overlaid by the config file, overlaid by flags."""
    pot = _section(cfg, "potential", {f.name for f in dc_fields(PotentialConfig)})
    srch = _section(cfg, "search", {f.name for f in dc_fields(SearchConfig)})
    for name in _POTENTIAL_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            pot[name] = value
    for name in _SEARCH_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            srch[name] = value
    if getattr(args, "quadratic_attraction", False):
        pot["quadratic_attraction"] = True
    if getattr(args, "pure_potential", False):
        srch["pure_potential"] = True
    for item in getattr(args, "family_coefficient", None) or []:
        fam, sep, val = item.rpartition("=")
        if not sep or not fam:
            raise UsageError(f"--family-coefficient expects FAMILY=K, got {item!r}")
        try:
            pot.setdefault("family_coefficients", {})[fam] = float(val)
        except ValueError:
            raise UsageError(f"--family-coefficient {item!r}: {val!r} is not a number") from None
    if "heuristic_set" in srch:
        srch["heuristic_set"] = tuple(srch["heuristic_set"])
    try:
        return PotentialConfig(**pot), SearchConfig(**srch)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid parameter: {exc}") from None


def load_scene_arg(value: str) -> Scene:
    """A scene file path, or the name of a bundled scene."""
    path = Path(value)
    if path.is_file():
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise SceneError(f"cannot read scene {value}: {exc}") from None
        return load_scene(text)
    if value in bundled_scenes():
        return bundled_scene(value)
    raise SceneError(f"scene {value!r} is neither a file nor a bundled scene ({', '.join(bundled_scenes())})")


def build_provider(args: argparse.Namespace, cfg: dict) -> tuple[Provider | None, RiskAssessment | None]:
    """Resolve the provider flags (or config ``provider`` section) to a provider or a cached assessment."""
    sec = _section(cfg, "provider", {"kind", "fixture", "fixture_dir", "assessment", "endpoint", "model", "timeout"})
    kind = None
    if args.fixture:
        kind, value = "fixture", args.fixture
    elif args.fixture_dir:
        kind, value = "fixture_dir", args.fixture_dir
    elif args.assessment:
        kind, value = "assessment", args.assessment
    elif args.remote:
        kind, value = "remote", None
    elif sec:
        kind = sec.get("kind")
        if kind not in ("fixture", "fixture_dir", "assessment", "remote"):
            raise UsageError(f"config provider.kind must be fixture, fixture_dir, assessment or remote, got {kind!r}")
        value = sec.get(kind) if kind != "remote" else None
        if kind != "remote" and not value:
            raise UsageError(f"config provider.kind is {kind!r} but provider.{kind} is not set")
    if kind is None:
        return None, None
    if kind == "fixture":
        return FixtureProvider.named(value), None
    if kind == "fixture_dir":
        if not Path(value).is_dir():
            raise UsageError(f"fixture directory {value} does not exist")
        return FixtureProvider(directory=value, provider_id=f"fixture-dir:{Path(value).name}"), None
    if kind == "assessment":
        try:
            doc = json.loads(Path(value).read_text(encoding="utf-8"))
            return None, RiskAssessment.from_dict(doc)
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"cannot load assessment {value}: {exc}") from None
    endpoint = args.endpoint or os.environ.get(ENV_ENDPOINT) or sec.get("endpoint") or DEFAULT_ENDPOINT
    model = args.model or os.environ.get(ENV_MODEL) or sec.get("model") or DEFAULT_MODEL
    provider = RemoteProvider.from_env(endpoint=endpoint, model=model)
    if "timeout" in sec:
        provider.timeout = float(sec["timeout"])
    return provider, None


# --- output helpers ----------------------------------------------------------


def _write(path: Path, data: str | bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, bytes):
        path.write_bytes(data)
    else:
        path.write_text(data, encoding="utf-8", newline="\n")
    log.info("wrote %s", path)


def _json(doc: Any) -> str:
    return json.dumps(doc, indent=2, sort_keys=False, allow_nan=False, default=_jsonable) + "\n"


def _jsonable(value):
    if isinstance(value, tuple):
        return list(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _clean(doc):
    """Replace NaN and infinities with None so the JSON stays strict."""
    if isinstance(doc, dict):
        return {k: _clean(v) for k, v in doc.items()}
    if isinstance(doc, (list, tuple)):
        return [_clean(v) for v in doc]
    if isinstance(doc, float) and not math.isfinite(doc):
        return None
    return doc


def _error_exit(report: RunReport) -> int:
    return _ERROR_EXIT.get((report.error or "").split(":", 1)[0], EXIT_INTERNAL)


def _needs_provider(algorithms: Sequence[str]) -> bool:
    return any(ALGORITHMS[a][2] == "assessment" for a in algorithms)


def _check_algorithms(names: Sequence[str]) -> None:
    unknown = [a for a in names if a not in ALGORITHMS]
    if unknown:
        raise UsageError(f"unknown algorithm(s) {', '.join(unknown)}; choose from {', '.join(ALGORITHMS)}")


def _field_for(run, name: str, field_name: str):
    if field_name == "none":
        return None
    if field_name == "distance":
        return run.distance
    fields = run.fields.get(name)
    if fields is None:
        return None
    return getattr(fields, field_name)


# --- subcommands -------------------------------------------------------------


def cmd_plan(args: argparse.Namespace) -> int:
    cfg = _read_config(args.config)
    potential, search = build_configs(args, cfg)
    algorithm = args.algorithm or cfg.get("algorithm") or "gpt-mha"
    _check_algorithms([algorithm])
    provider, assessment = build_provider(args, cfg)
    if _needs_provider([algorithm]) and provider is None and assessment is None:
        raise UsageError(f"{algorithm} needs a risk source: --fixture, --fixture-dir, --assessment or --remote")
    scene = load_scene_arg(args.scene)
    algorithms = [algorithm] if algorithm == "naive" else ["naive", algorithm]
    run = run_scenario(scene, algorithms, potential, search, assessment, provider)
    report = run.reports[-1]
    out = Path(args.out)
    doc = {"scene": scene.name, "report": _clean(report.to_dict())}
    if algorithm != "naive":
        doc["baseline"] = _clean(run.reports[0].to_dict())
    _write(out / "report.json", _json(doc))
    if run.assessment is not None and provider is not None:
        _write(out / "assessment.json", _json(run.assessment.to_dict()))
    if not report.ok:
        print(f"error: {algorithm}: {report.error}", file=sys.stderr)
        return _error_exit(report)
    _write(out / "plan.json", _json(report.result.to_dict(run.grid)))
    if args.render:
        _write(out / "plan.txt", ascii_render(run.grid, report.result.path))
        field = _field_for(run, algorithm, args.field)
        _write(out / f"plan.{args.format}", render_figure(run.grid, field, {algorithm: report.result.path}, args.format,
                                                          f"{scene.name or 'scene'}: {algorithm}"))
    line = f"{algorithm}: length {report.path_length:.3f} m, ADO {report.ado:.3f} m, {report.nodes} nodes"
    if algorithm != "naive" and run.reports[0].ok:
        line += f" (naive: length {run.reports[0].path_length:.3f} m, ADO {run.reports[0].ado:.3f} m)"
    print(line)
    return EXIT_OK


def cmd_assess(args: argparse.Namespace) -> int:
    cfg = _read_config(args.config)
    provider, cached = build_provider(args, cfg)
    scene = load_scene_arg(args.scene)
    catalog = FamilyCatalog.from_scene(scene)
    if cached is not None:
        assessment = cached
    elif not catalog.entries:
        print("warning: scene has no obstacles; nothing to assess", file=sys.stderr)
        assessment = RiskAssessment({}, {}, {}, provider.provider_id if provider else "none")
    elif provider is None:
        raise UsageError("assess needs a risk source: --fixture, --fixture-dir or --remote")
    else:
        assessment = assess(provider, catalog)
    _write(Path(args.out), _json(assessment.to_dict()))
    print(assessment.report(), end="")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    cfg = _read_config(args.config)
    potential, search = build_configs(args, cfg)
    if args.algorithms:
        algorithms = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    else:
        algorithms = list(cfg.get("algorithms") or DEFAULT_ALGORITHMS)
    _check_algorithms(algorithms)
    if len(algorithms) < 2:
        raise UsageError("compare needs at least two algorithms")
    if len(set(algorithms)) != len(algorithms):
        raise UsageError("compare got the same algorithm twice")
    provider, assessment = build_provider(args, cfg)
    if _needs_provider(algorithms) and provider is None and assessment is None:
        raise UsageError("gpt-mha needs a risk source: --fixture, --fixture-dir, --assessment or --remote")
    scene = load_scene_arg(args.scene)
    run = run_scenario(scene, algorithms, potential, search, assessment, provider)
    table = compare_report(run.reports)
    out = Path(args.out)
    text = table.format()
    _write(out / "compare.txt", text)
    _write(out / "compare.csv", table.to_csv())
    _write(out / "compare.json", _json({
        "scene": scene.name,
        "rows": _clean(table.records()),
        "reports": [_clean(r.to_dict()) for r in run.reports],
    }))
    if run.assessment is not None:
        _write(out / "assessment.json", _json(run.assessment.to_dict()))
    if args.render:
        paths = {r.algorithm: r.result.path for r in run.reports if r.ok}
        for name, path in paths.items():
            _write(out / f"{name}.txt", ascii_render(run.grid, path))
        shown = next((a for a in reversed(algorithms) if a in run.fields), None)
        field = _field_for(run, shown, args.field) if shown else (run.distance if args.field == "distance" else None)
        _write(out / f"compare.{args.format}", render_figure(run.grid, field, paths, args.format,
                                                             f"{scene.name or 'scene'}: {', '.join(paths)}"))
    print(text, end="")
    if all(not r.ok for r in run.reports):
        return _error_exit(run.reports[0])
    return EXIT_OK


def cmd_render(args: argparse.Namespace) -> int:
    cfg = _read_config(args.config)
    potential, search = build_configs(args, cfg)
    provider, assessment = build_provider(args, cfg)
    scene = load_scene_arg(args.scene)
    grid = build_grid(scene)
    path = []
    if args.plan:
        try:
            plan = PlanResult.from_dict(json.loads(Path(args.plan).read_text(encoding="utf-8")))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"cannot load plan {args.plan}: {exc}") from None
        bad = [c for c in plan.path if not grid.in_bounds(c)]
        if bad:
            raise UsageError(f"plan cell {bad[0]} lies outside the {grid.cols}x{grid.rows} grid")
        path = plan.path
        algorithm = plan.algorithm or "plan"
    elif args.algorithm:
        _check_algorithms([args.algorithm])
        if _needs_provider([args.algorithm]) and provider is None and assessment is None:
            raise UsageError(f"{args.algorithm} needs a risk source")
        run = run_scenario(scene, [args.algorithm], potential, search, assessment, provider)
        report = run.reports[0]
        if not report.ok:
            print(f"error: {args.algorithm}: {report.error}", file=sys.stderr)
            return _error_exit(report)
        path = report.result.path
        algorithm = args.algorithm
    else:
        algorithm = ""
    if args.format == "ascii":
        data: str | bytes = ascii_render(grid, path, grid.start, grid.goal)
    else:
        if args.field == "none":
            field = None
        elif args.field == "distance":
            field = obstacle_distance_field(grid)
        else:
            if assessment is None and provider is not None and FamilyCatalog.from_scene(scene).entries:
                assessment = assess(provider, FamilyCatalog.from_scene(scene))
            if assessment is not None:
                potential = replace(potential, family_coefficients=assessment.coefficients_for(scene.families))
            field = getattr(compute_fields(grid, scene.goal, potential), args.field)
        data = render_figure(grid, field, {algorithm: path} if path else {}, args.format,
                             f"{scene.name or 'scene'}: {args.field}")
    if args.out == "-":
        if isinstance(data, bytes):
            sys.stdout.buffer.write(data)
        else:
            sys.stdout.write(data)
    else:
        _write(Path(args.out), data)
    return EXIT_OK


# --- parser ------------------------------------------------------------------


def _add_provider(p: argparse.ArgumentParser, allow_cached: bool = True) -> None:
    g = p.add_argument_group("risk source (pick one)")
    ex = g.add_mutually_exclusive_group()
    ex.add_argument("--fixture", metavar="NAME", help="bundled canned response, e.g. site-survey")
    ex.add_argument("--fixture-dir", metavar="DIR", help="directory of <prompt-hash>.txt responses")
    ex.add_argument("--remote", action="store_true", help="query a chat-completions endpoint")
    if allow_cached:
        ex.add_argument("--assessment", metavar="FILE", help="reuse an assessment written by 'assess'")
    else:
        p.set_defaults(assessment=None)
    g.add_argument("--endpoint", help=f"remote endpoint (env {ENV_ENDPOINT})")
    g.add_argument("--model", help=f"remote model name (env {ENV_MODEL})")


def _add_params(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("planner parameters")
    g.add_argument("--k-att", dest="k_att", type=float)
    g.add_argument("--k-rep", dest="k_rep", type=float)
    g.add_argument("--global-scale", dest="global_scale", type=float)
    g.add_argument("--sigma", type=float, help="Gaussian sigma in cells")
    g.add_argument("--kernel-radius", dest="kernel_radius", type=int)
    g.add_argument("--decay-length", dest="decay_length", type=float, help="repulsion length scale in meters")
    g.add_argument("--quadratic-attraction", action="store_true")
    g.add_argument("--family-coefficient", action="append", metavar="FAMILY=K",
                   help="fixed weight for one family (repeatable)")
    g.add_argument("--w1", type=float)
    g.add_argument("--w2", type=float)
    g.add_argument("--apf-blend", dest="apf_blend", type=float, help="weight of the potential in the APF heuristic")
    g.add_argument("--pure-potential", action="store_true")


def _add_render(p: argparse.ArgumentParser, default_field: str = "smoothed") -> None:
    p.add_argument("--field", choices=FIELDS, default=default_field, help="field drawn under the paths")
    p.add_argument("--format", choices=("svg", "png"), default="svg")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bimnav", description="Risk-aware path planning on floorplan grids.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="plan one path and write plan/report documents")
    p.add_argument("scene", help="scene JSON file or bundled scene name")
    p.add_argument("-a", "--algorithm", help=f"one of {', '.join(ALGORITHMS)} (default gpt-mha)")
    p.add_argument("-c", "--config", help="JSON config file")
    p.add_argument("-o", "--out", default="bimnav-out", help="output directory")
    p.add_argument("--render", action="store_true", help="also write ASCII and figure renders")
    _add_render(p)
    _add_provider(p)
    _add_params(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("assess", help="score obstacle families with a risk provider")
    p.add_argument("scene")
    p.add_argument("-c", "--config")
    p.add_argument("-o", "--out", default="assessment.json", help="assessment document path")
    _add_provider(p, allow_cached=False)
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("compare", help="run several algorithms and tabulate length and ADO")
    p.add_argument("scene")
    p.add_argument("-a", "--algorithms", help=f"comma list (default {','.join(DEFAULT_ALGORITHMS)})")
    p.add_argument("-c", "--config")
    p.add_argument("-o", "--out", default="bimnav-out")
    p.add_argument("--render", action="store_true")
    _add_render(p)
    _add_provider(p)
    _add_params(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("render", help="draw a grid, a field, and optionally a path")
    p.add_argument("scene")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--plan", help="plan.json to draw")
    src.add_argument("-a", "--algorithm", help="plan with this algorithm and draw the result")
    p.add_argument("-c", "--config")
    p.add_argument("-o", "--out", default="-", help="output file, '-' for stdout")
    p.add_argument("--field", choices=FIELDS, default="smoothed")
    p.add_argument("--format", choices=("ascii", "svg", "png"), default="ascii")
    _add_provider(p)
    _add_params(p)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    level = logging.WARNING if args.verbose == 0 else (logging.INFO if args.verbose == 1 else logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logging.captureWarnings(True)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SceneError as exc:
        where = f" (field {exc.field})" if getattr(exc, "field", None) else ""
        print(f"scene error{where}: {exc}", file=sys.stderr)
        return EXIT_SCENE
    except PlanningImpossible as exc:
        print(f"planning impossible: {exc}", file=sys.stderr)
        return EXIT_NO_PATH
    except NoPathError as exc:
        print(f"no path: {exc}", file=sys.stderr)
        return EXIT_NO_PATH
    except ProviderError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except AssessmentParseError as exc:
        print(f"assessment parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except Exception as exc:  # noqa: BLE001
        log.debug("unexpected error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
