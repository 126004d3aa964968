"""Per-family danger coefficients from a language model.

The pipeline is prompt -> provider -> regex parse -> normalization. Providers
are either a chat-completions HTTP endpoint or a deterministic fixture.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

import httpx

from .gridmap import Scene

log = logging.getLogger(__name__)

DEFAULT_CAP = 0.5
DEFAULT_ENDPOINT = "https://api.openai.com/v1/chat/completions"
DEFAULT_MODEL = "gpt-3.5-turbo"

ENV_API_KEY = "BIMNAV_API_KEY"
ENV_ENDPOINT = "BIMNAV_ENDPOINT"
ENV_MODEL = "BIMNAV_MODEL"

ROLE_INSTRUCTION = (
    "You are a construction site safety assistant guiding a mobile robot. "
    "Identify danger levels given the description of each family of building "
    "elements listed below. A higher danger level means the robot should keep "
    "a wider berth from every instance of that family."
)

OUTPUT_TEMPLATE = """For every family, answer in exactly this format and in the same order:

<family name>:
Danger Level: <number between 0 and 1>
Reasoning: <one or two sentences>"""

REMINDER = (
    "\n\nYour previous answer could not be parsed. Repeat the evaluation and "
    "give a 'Danger Level:' line followed by a 'Reasoning:' line for every family."
)


class ProviderError(RuntimeError):
    """The provider could not produce a response."""


class AssessmentParseError(ValueError):
    def __init__(self, missing: Sequence[str]):
        super().__init__("response has no danger level for: " + ", ".join(missing))
        self.missing = list(missing)


class CoefficientClampWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FamilyEntry:
    family: str
    description: str
    instance_count: int = 1


@dataclass(frozen=True)
class FamilyCatalog:
    entries: tuple[FamilyEntry, ...]

    def __post_init__(self):
        names = [e.family for e in self.entries]
        if len(set(names)) != len(names):
            raise ValueError("family names must be unique within a catalog")
        for e in self.entries:
            if e.instance_count < 1:
                raise ValueError(f"instance_count for {e.family!r} must be >= 1")

    @property
    def families(self) -> list[str]:
        return [e.family for e in self.entries]

    @classmethod
    def from_scene(cls, scene: Scene) -> "FamilyCatalog":
        counts: dict[str, int] = {}
        descriptions: dict[str, str] = {}
        for obs in scene.obstacles:
            counts[obs.family] = counts.get(obs.family, 0) + 1
            if obs.description and not descriptions.get(obs.family):
                descriptions[obs.family] = obs.description
        return cls(tuple(FamilyEntry(f, descriptions.get(f, ""), n) for f, n in counts.items()))


def build_prompt(catalog: FamilyCatalog) -> str:
    if not catalog.entries:
        raise ValueError("cannot build a prompt for an empty catalog")
    listing = [
        {"family": e.family, "description": e.description, "instance_count": e.instance_count}
        for e in catalog.entries
    ]
    return "\n\n".join([ROLE_INSTRUCTION, "Families (JSON):\n" + json.dumps(listing, indent=2), OUTPUT_TEMPLATE]) + "\n"


_NUMBER = r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?"
_DANGER = re.compile(r"danger\s*level\s*[:=]\s*\**\s*(" + _NUMBER + ")", re.IGNORECASE)
_REASON = re.compile(r"reasoning\s*[:=]\s*\**\s*(.+)", re.IGNORECASE)


def _heading_pattern(families: Iterable[str]) -> re.Pattern:
    alts = []
    for fam in sorted(families, key=len, reverse=True):
        words = [re.escape(w) for w in fam.split()]
        alts.append(r"\s+".join(words))
    # optional multiplicity suffix such as "(x12)"
    return re.compile(r"(?<!\w)(" + "|".join(alts) + r")(?!\w)(?:\s*\(\s*x?\s*\d+\s*\))?", re.IGNORECASE)


def _sections(response: str, catalog: FamilyCatalog) -> dict[str, list[str]]:
    lookup = {" ".join(f.split()).lower(): f for f in catalog.families}
    marks = list(_heading_pattern(catalog.families).finditer(response))
    out: dict[str, list[str]] = {f: [] for f in catalog.families}
    for k, m in enumerate(marks):
        end = marks[k + 1].start() if k + 1 < len(marks) else len(response)
        out[lookup[" ".join(m.group(1).split()).lower()]].append(response[m.end():end])
    return out


def _parse(response: str, catalog: FamilyCatalog) -> tuple[dict[str, float], dict[str, str]]:
    coefficients: dict[str, float] = {}
    explanations: dict[str, str] = {}
    for family, chunks in _sections(response, catalog).items():
        for chunk in chunks:
            m = _DANGER.search(chunk)
            if not m:
                continue
            value = float(m.group(1))
            if not 0.0 <= value <= 1.0:
                clamped = min(max(value, 0.0), 1.0)
                warnings.warn(
                    f"danger level {value} for {family!r} clamped to {clamped}", CoefficientClampWarning, stacklevel=3
                )
                value = clamped
            coefficients[family] = value
            r = _REASON.search(chunk, m.end())
            explanations[family] = r.group(1).strip().strip("*").strip() if r else ""
            break
    missing = [f for f in catalog.families if f not in coefficients]
    if missing:
        raise AssessmentParseError(missing)
    return {f: coefficients[f] for f in catalog.families}, {f: explanations[f] for f in catalog.families}


def parse_coefficients(response: str, catalog: FamilyCatalog) -> dict[str, float]:
    """Danger level of every catalog family, clamped into [0, 1].

    Raises :class:`AssessmentParseError` listing families without a value.
    """
    return _parse(response, catalog)[0]


def parse_explanations(response: str, catalog: FamilyCatalog) -> dict[str, str]:
    return _parse(response, catalog)[1]


def render_response(coefficients: Mapping[str, float], explanations: Mapping[str, str] | None = None) -> str:
    """Write coefficients in the output template, as a well-behaved model would."""
    explanations = explanations or {}
    blocks = []
    for fam, k in coefficients.items():
        blocks.append(f"{fam}:\nDanger Level: {k!r}\nReasoning: {explanations.get(fam, 'n/a')}")
    return "\n\n".join(blocks) + "\n"


def normalize_coefficients(raw: Mapping[str, float], cap: float = DEFAULT_CAP) -> dict[str, float]:
    """Scale all values by one factor so they sum to at most ``cap``."""
    total = sum(raw.values())
    if total <= cap:
        return dict(raw)
    factor = cap / total
    return {k: v * factor for k, v in raw.items()}


def uniform_coefficients(families: Iterable[str], cap: float = DEFAULT_CAP) -> dict[str, float]:
    """Equal weights with the same total mass a model assessment would get."""
    return normalize_coefficients({f: 1.0 for f in families}, cap)


@dataclass(frozen=True)
class RiskAssessment:
    raw: dict[str, float]
    normalized: dict[str, float]
    explanations: dict[str, str]
    provider_id: str
    raw_response: str = ""
    cap: float = DEFAULT_CAP

    def coefficients_for(self, families: Iterable[str]) -> dict[str, float]:
        """Planner weights for ``families``; unassessed families get raw 1.0."""
        families = list(families)
        missing = [f for f in families if f not in self.raw]
        if not missing:
            return dict(self.normalized)
        log.warning("families without an assessment default to 1.0: %s", ", ".join(missing))
        merged = dict(self.raw)
        merged.update({f: 1.0 for f in missing})
        return normalize_coefficients(merged, self.cap)

    def to_dict(self) -> dict:
        return {
            "provider_id": self.provider_id,
            "cap": self.cap,
            "families": [
                {
                    "family": f,
                    "raw": self.raw[f],
                    "normalized": self.normalized[f],
                    "explanation": self.explanations.get(f, ""),
                }
                for f in self.raw
            ],
            "raw_response": self.raw_response,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RiskAssessment":
        rows = doc.get("families", [])
        return cls(
            raw={r["family"]: float(r["raw"]) for r in rows},
            normalized={r["family"]: float(r["normalized"]) for r in rows},
            explanations={r["family"]: r.get("explanation", "") for r in rows},
            provider_id=doc.get("provider_id", ""),
            raw_response=doc.get("raw_response", ""),
            cap=float(doc.get("cap", DEFAULT_CAP)),
        )

    def report(self) -> str:
        """Coefficient table followed by the model's reasoning per family."""
        width = max([len("family")] + [len(f) for f in self.raw])
        lines = [f"{'family':<{width}}  {'danger':>7}  {'weight':>8}", "-" * (width + 19)]
        for f in self.raw:
            lines.append(f"{f:<{width}}  {self.raw[f]:>7.3f}  {self.normalized[f]:>8.5f}")
        lines.append("")
        lines.append(f"Explanations ({self.provider_id}):")
        for f in self.raw:
            lines.append(f"  {f}: {self.explanations.get(f, '')}")
        return "\n".join(lines) + "\n"


class Provider(Protocol):
    provider_id: str

    def complete(self, prompt: str) -> str: ...


def prompt_key(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16]


def named_fixture_text(name: str) -> str:
    path = resources.files("bimnav").joinpath("data", "fixtures", f"{name}.txt")
    if not path.is_file():
        raise ProviderError(f"no bundled fixture named {name!r}")
    return path.read_text(encoding="utf-8")


class FixtureProvider:
    """Replays canned responses.

    Either a directory of ``<prompt hash>.txt`` files, or a script of
    responses served in order (the last one repeats).
    """

    def __init__(self, directory: str | os.PathLike | None = None, responses: Sequence[str] | None = None,
                 provider_id: str = "fixture"):
        if (directory is None) == (responses is None):
            raise ValueError("give exactly one of directory or responses")
        self.directory = Path(directory) if directory is not None else None
        self.responses = list(responses) if responses is not None else None
        if self.responses is not None and not self.responses:
            raise ValueError("responses must not be empty")
        self.provider_id = provider_id
        self.calls = 0

    @classmethod
    def named(cls, name: str) -> "FixtureProvider":
        return cls(responses=[named_fixture_text(name)], provider_id=f"fixture:{name}")

    def complete(self, prompt: str) -> str:
        self.calls += 1
        if self.responses is not None:
            return self.responses[min(self.calls - 1, len(self.responses) - 1)]
        path = self.directory / f"{prompt_key(prompt)}.txt"
        if not path.is_file():
            raise ProviderError(f"no fixture response for prompt {prompt_key(prompt)} in {self.directory}")
        return path.read_text(encoding="utf-8")


@dataclass
class RemoteProvider:
    """Chat-completions client (POST ``{model, messages, temperature}``)."""

    endpoint: str = DEFAULT_ENDPOINT
    model: str = DEFAULT_MODEL
    api_key: str | None = None
    timeout: float = 60.0
    retries: int = 2
    client: httpx.Client | None = field(default=None, repr=False)

    @property
    def provider_id(self) -> str:
        return f"remote:{self.model}"

    @classmethod
    def from_env(cls, endpoint: str | None = None, model: str | None = None, api_key: str | None = None,
                 **kw) -> "RemoteProvider":
        """Explicit arguments win over the environment, which wins over defaults."""
        env = os.environ
        return cls(
            endpoint=endpoint or env.get(ENV_ENDPOINT) or DEFAULT_ENDPOINT,
            model=model or env.get(ENV_MODEL) or DEFAULT_MODEL,
            api_key=api_key or env.get(ENV_API_KEY) or env.get("OPENAI_API_KEY"),
            **kw,
        )

    def complete(self, prompt: str) -> str:
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        client = self.client or httpx.Client(timeout=self.timeout)
        last: Exception | None = None
        try:
            for attempt in range(self.retries + 1):
                try:
                    resp = client.post(self.endpoint, json=body, headers=headers)
                except httpx.HTTPError as exc:
                    last = exc
                    log.warning("provider attempt %d failed: %s", attempt + 1, exc)
                    continue
                if resp.status_code == 429 or resp.status_code >= 500:
                    last = ProviderError(f"HTTP {resp.status_code} from {self.endpoint}")
                    log.warning("provider attempt %d failed: HTTP %d", attempt + 1, resp.status_code)
                    continue
                if resp.status_code >= 400:
                    raise ProviderError(f"HTTP {resp.status_code} from {self.endpoint}: {resp.text[:200]}")
                try:
                    return resp.json()["choices"][0]["message"]["content"]
                except (ValueError, KeyError, IndexError, TypeError) as exc:
                    raise ProviderError(f"unexpected response shape from {self.endpoint}") from exc
        finally:
            if self.client is None:
                client.close()
        raise ProviderError(f"provider failed after {self.retries + 1} attempts: {last}")


def assess(provider: Provider, catalog: FamilyCatalog, cap: float = DEFAULT_CAP) -> RiskAssessment:
    """Prompt, parse (re-prompting once on failure), and normalize."""
    prompt = build_prompt(catalog)
    response = provider.complete(prompt)
    try:
        raw, explanations = _parse(response, catalog)
    except AssessmentParseError as exc:
        log.warning("re-prompting after unparseable response: %s", exc)
        response = provider.complete(prompt + REMINDER)
        raw, explanations = _parse(response, catalog)
    return RiskAssessment(
        raw=raw,
        normalized=normalize_coefficients(raw, cap),
        explanations=explanations,
        provider_id=provider.provider_id,
        raw_response=response,
        cap=cap,
    )
