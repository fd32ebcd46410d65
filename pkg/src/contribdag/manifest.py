"""Run manifests, query files and result emission.

A manifest is a versioned YAML document::

    version: "1"
    config: {n_agents: 4, tau: 0.5, k: 2, rounds: 3, ...}
    embedder: {kind: deterministic-test, dim: 384, ...}
    roles: [{name: Assistant, system_prompt: ...}, ...]
    sim: {models: [...], center_cos: 0.3, dim: 384}
    http: {url: ..., model: ...}          # only for the http backend
    query_source: queries.jsonl
    created_at: "2026-01-01T00:00:00+00:00"

Every omitted section gets its default.  Orchestrator fields may also sit at
the top level (``tau: 0.7``) as a shorthand for ``config: {tau: 0.7}``.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime as _dt
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import yaml

from .agents.http import HttpAgent, HttpEndpoint
from .agents.roles import ROLES_BY_NAME, RoleProfile, default_roster
from .agents.sim import SimAgentModel, SimPopulation
from .embedding import DEFAULT_DIM, EmbedderSpec, make_embedder
from .errors import ConfigError, OutputExistsError, QueryFileError
from .orchestrator import OrchestratorConfig, RunResult, run

MANIFEST_VERSION = "1"
TRANSCRIPT_NAME = "transcript.jsonl"
SUMMARY_NAME = "summary.csv"
MANIFEST_NAME = "manifest.yaml"
SWEEP_NAME = "sweep.csv"
SUMMARY_FIELDS = ["query_id", "correct", "rounds", "prompt_tokens", "completion_tokens"]

_CONFIG_FIELDS = {f.name for f in dataclasses.fields(OrchestratorConfig)}


def default_sim_model() -> SimAgentModel:
    return SimAgentModel.uniform(0.49, 6, p_uplift=0.69)


@dataclass(frozen=True)
class SimSettings:
    models: tuple[SimAgentModel, ...]
    center_cos: float = 0.3
    dim: int = DEFAULT_DIM

    def to_dict(self) -> dict:
        return {"models": [m.to_dict() for m in self.models], "center_cos": self.center_cos, "dim": self.dim}


@dataclass(frozen=True)
class Query:
    id: str
    query: str
    answer: str | None = None
    line: int = 0


@dataclass(frozen=True)
class RunManifest:
    config: OrchestratorConfig = field(default_factory=OrchestratorConfig)
    embedder: EmbedderSpec = field(default_factory=EmbedderSpec)
    roles: tuple[RoleProfile, ...] = ()
    sim: SimSettings | None = None
    http: HttpEndpoint | None = None
    query_source: str | None = None
    created_at: str = ""
    version: str = MANIFEST_VERSION

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "created_at": self.created_at,
            "query_source": self.query_source,
            "config": self.config.to_dict(),
            "embedder": self.embedder.to_dict(),
            "roles": [{"name": r.name, "system_prompt": r.system_prompt} for r in self.roles],
            "sim": self.sim.to_dict() if self.sim else None,
            "http": self.http.to_dict() if self.http else None,
        }

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, allow_unicode=True)

    def population(self) -> SimPopulation:
        if self.sim is None:
            raise ConfigError("sim backend needs a sim section", "sim")
        return SimPopulation(models=self.sim.models, roles=self.roles, center_cos=self.sim.center_cos,
                             dim=self.sim.dim)

    def agents(self, query_index: int = 0, session=None) -> list:
        """Fresh agents for one query; sim streams derive from (seed, query_index)."""
        if self.config.backend == "sim":
            return self.population().agents(self.config.seed, query_index)
        if self.http is None:
            raise ConfigError("http backend needs an http section", "http")
        embedder = make_embedder(self.embedder)
        return [HttpAgent(role, self.http, embedder, session=session) for role in self.roles]


# --------------------------------------------------------------------------
# loading


def _section(raw: dict, key: str) -> dict:
    value = raw.get(key)
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError("must be a mapping", key)
    return value


def _build(cls, data: dict, section: str):
    try:
        return cls(**data)
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], f"{section}.{exc.field}" if exc.field else section) from exc
    except TypeError as exc:
        raise ConfigError(f"unknown or missing field ({exc})", section) from exc
    except Exception as exc:
        raise ConfigError(str(exc), section) from exc


def _roles(raw, n_agents: int) -> tuple[RoleProfile, ...]:
    if not raw:
        return tuple(default_roster(n_agents))
    if not isinstance(raw, list):
        raise ConfigError("must be a list", "roles")
    roles = []
    for i, item in enumerate(raw):
        if isinstance(item, str):
            if item not in ROLES_BY_NAME:
                raise ConfigError(f"unknown role {item!r}", f"roles[{i}]")
            roles.append(ROLES_BY_NAME[item])
        elif isinstance(item, dict):
            roles.append(_build(RoleProfile, item, f"roles[{i}]"))
        else:
            raise ConfigError("must be a role name or {name, system_prompt}", f"roles[{i}]")
    if len(roles) != n_agents:
        raise ConfigError(f"lists {len(roles)} roles for {n_agents} agents", "roles")
    return tuple(roles)


def _sim(raw: dict, n_agents: int) -> SimSettings:
    models_raw = raw.get("models") or [default_sim_model().to_dict()]
    models = []
    for i, m in enumerate(models_raw):
        try:
            models.append(SimAgentModel.from_dict(m))
        except Exception as exc:
            raise ConfigError(str(exc), f"sim.models[{i}]") from exc
    if len(models) == 1:
        models = models * n_agents
    if len(models) != n_agents:
        raise ConfigError(f"lists {len(models)} models for {n_agents} agents", "sim.models")
    extra = {k: v for k, v in raw.items() if k != "models"}
    return _build(SimSettings, {"models": tuple(models), **extra}, "sim")


def manifest_from_dict(raw: dict | None) -> RunManifest:
    """Apply defaults and validate; errors name the offending field."""
    raw = dict(raw or {})
    version = str(raw.pop("version", MANIFEST_VERSION))
    if version != MANIFEST_VERSION:
        raise ConfigError(f"unsupported manifest version {version!r}", "version")
    cfg_raw = dict(_section(raw, "config"))
    for key in list(raw):
        if key in _CONFIG_FIELDS:
            cfg_raw[key] = raw.pop(key)
    known = {"config", "embedder", "roles", "sim", "http", "query_source", "created_at"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown keys {unknown}", "manifest")
    for key in set(cfg_raw) - _CONFIG_FIELDS:
        raise ConfigError("unknown field", f"config.{key}")
    try:
        config = OrchestratorConfig(**cfg_raw)
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], exc.field) from exc
    embedder = _build(EmbedderSpec, _section(raw, "embedder"), "embedder")
    roles = _roles(raw.get("roles"), config.n_agents)
    sim = _sim(_section(raw, "sim"), config.n_agents) if config.backend == "sim" or raw.get("sim") else None
    http_raw = _section(raw, "http")
    http = _build(HttpEndpoint, http_raw, "http") if http_raw else None
    if config.backend == "http" and http is None:
        raise ConfigError("http backend needs an http section with url and model", "http")
    return RunManifest(config=config, embedder=embedder, roles=roles, sim=sim, http=http,
                       query_source=raw.get("query_source"), created_at=str(raw.get("created_at") or ""),
                       version=version)


def load_config(path: str | os.PathLike) -> RunManifest:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return manifest_from_dict(raw)


def load_queries(path: str | os.PathLike) -> list[Query]:
    """Read JSONL records ``{"id", "query", "answer"?}``; blank lines are skipped."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise QueryFileError(f"cannot read {path}: {exc}") from exc
    out: list[Query] = []
    seen: dict[str, int] = {}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise QueryFileError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from exc
        if not isinstance(rec, dict):
            raise QueryFileError(f"{path}:{lineno}: record must be an object")
        qid, query = rec.get("id"), rec.get("query")
        if qid is None or not isinstance(query, str) or not query.strip():
            raise QueryFileError(f"{path}:{lineno}: record needs an id and a non-empty query")
        qid = str(qid)
        if qid in seen:
            raise QueryFileError(f"{path}: duplicate id {qid!r} on lines {seen[qid]} and {lineno}")
        seen[qid] = lineno
        answer = rec.get("answer")
        out.append(Query(id=qid, query=query, answer=None if answer is None else str(answer), line=lineno))
    return out


# --------------------------------------------------------------------------
# emission


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False)


def prepare_out_dir(out_dir: str | os.PathLike, names: Iterable[str], overwrite: bool = False) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    existing = [out / n for n in names if (out / n).exists()]
    if existing and not overwrite:
        raise OutputExistsError(f"{out} already holds {', '.join(p.name for p in existing)}; pass overwrite to replace")
    for p in existing:
        p.unlink()
    return out


class RunWriter:
    """Append-only writer for one run directory; files are created on first use."""

    def __init__(self, out_dir: str | os.PathLike, manifest: RunManifest, overwrite: bool = False):
        self.out = prepare_out_dir(out_dir, (TRANSCRIPT_NAME, SUMMARY_NAME, MANIFEST_NAME), overwrite)
        self.manifest = manifest
        self.transcript_path = self.out / TRANSCRIPT_NAME
        self.summary_path = self.out / SUMMARY_NAME
        self.manifest_path = self.out / MANIFEST_NAME
        self._write(self.manifest_path, manifest.dump(), "w")
        self._write(self.transcript_path, "", "a")
        self._write(self.summary_path, ",".join(SUMMARY_FIELDS) + "\n", "w")

    @staticmethod
    def _write(path: Path, text: str, mode: str) -> None:
        try:
            with path.open(mode, encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise OSError(f"{path}: {exc}") from exc

    def sink(self, record: dict) -> None:
        self._write(self.transcript_path, _dump_json(record) + "\n", "a")

    def summary(self, query_id: str, result: RunResult) -> None:
        correct = "" if result.final_correct is None else str(bool(result.final_correct)).lower()
        row = [query_id, correct, result.rounds_executed, *result.total_tokens]
        self._write(self.summary_path, ",".join(str(x) for x in row) + "\n", "a")

    @property
    def paths(self) -> dict[str, Path]:
        return {"transcript": self.transcript_path, "summary": self.summary_path, "manifest": self.manifest_path}


def execute_run(manifest: RunManifest, queries: Sequence[Query], out_dir: str | os.PathLike,
                overwrite: bool = False, agents_for: Callable[[int], list] | None = None) -> dict[str, Path]:
    """Run every query under ``manifest`` and persist transcript, summary and manifest."""
    if not manifest.created_at:
        manifest = dataclasses.replace(manifest, created_at=_dt.datetime.now(_dt.timezone.utc).isoformat())
    writer = RunWriter(out_dir, manifest, overwrite)
    for qi, q in enumerate(queries):
        agents = agents_for(qi) if agents_for else manifest.agents(qi)
        result = run(q.query, manifest.config, agents, transcript=writer.sink, query_id=q.id)
        writer.summary(q.id, result)
    return writer.paths


def emit_results(results, out_dir: str | os.PathLike, manifest: RunManifest | None = None,
                 overwrite: bool = False) -> dict[str, Path]:
    """Persist finished work.

    ``results`` is either a list of ``(query_id, RunResult)`` pairs (needs a
    manifest) or a list of sweep rows, which become one CSV grouped by config
    hash.
    """
    results = list(results)
    if results and isinstance(results[0], dict):
        return {"sweep": write_sweep_csv(results, out_dir, overwrite)}
    if manifest is None:
        raise ValueError("run results need a manifest")
    writer = RunWriter(out_dir, manifest, overwrite)
    roles = [r.name for r in manifest.roles]
    for qid, result in results:
        for state in result.states:
            writer.sink(state.to_json(query_id=qid, roles=roles))
        writer.summary(qid, result)
    return writer.paths


def write_sweep_csv(rows: Sequence[dict], out_dir: str | os.PathLike, overwrite: bool = False,
                    name: str = SWEEP_NAME) -> Path:
    from .analysis import SWEEP_FIELDS

    out = prepare_out_dir(out_dir, (name,), overwrite)
    order: dict[str, int] = {}
    for row in rows:
        order.setdefault(row["config_hash"], len(order))
    ordered = sorted(rows, key=lambda r: order[r["config_hash"]])  # stable: keeps trial order in a group
    path = out / name
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_FIELDS, extrasaction="ignore")
        writer.writeheader()
        for row in ordered:
            writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in SWEEP_FIELDS})
    return path


def read_transcript(path: str | os.PathLike) -> list[dict]:
    with Path(path).open(encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def read_summary(path: str | os.PathLike) -> list[dict]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))
