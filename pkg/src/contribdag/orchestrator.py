"""Round-by-round orchestration.

Round 0: every agent answers the query alone.  After each round the
responses are embedded, scored (psi), compared pairwise, and a DAG is built
that schedules the next round: agents run in topological order, each reading
the responses of its in-edge sources, and every root additionally receives
the previous round's selected output.  The round's output is the existing
response closest to the psi-weighted centroid.  Optionally the run halts once
every pair of responses is at least ``gamma``-similar.
"""

from __future__ import annotations

import hashlib
import logging
from concurrent.futures import FIRST_COMPLETED, Future, ThreadPoolExecutor, wait
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .agents.base import Agent, ResponseRecord
from .agents.roles import assemble_prompt
from .errors import ConfigError, RoundError
from .topology import EDGE_RULES, CommGraph, SimilarityMatrix, form_graph, reorder, roots, similarity_matrix
from .valuation import ContributionScores, approx_contribution

logger = logging.getLogger(__name__)

BACKENDS = ("sim", "http")

TranscriptSink = Callable[[dict], None]


@dataclass(frozen=True)
class OrchestratorConfig:
    n_agents: int = 4
    tau: float = 0.5
    k: int | None = 2
    rounds: int = 3
    gamma: float | None = None
    reform: bool = True
    edge_rule: str = "alg2"
    seed: int = 0
    backend: str = "sim"
    stale_reads: bool = False
    max_workers: int = 1

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if not isinstance(self.n_agents, int) or self.n_agents < 1:
            raise ConfigError("must be an integer >= 1", "n_agents")
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError(f"must lie in [0, 1], got {self.tau}", "tau")
        if self.k is not None and (not isinstance(self.k, int) or self.k < 1 or self.k >= self.n_agents):
            raise ConfigError(f"must be a positive integer below n_agents={self.n_agents}, got {self.k}", "k")
        if not isinstance(self.rounds, int) or self.rounds < 1:
            raise ConfigError("must be an integer >= 1", "rounds")
        if self.gamma is not None and not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"must lie in [0, 1], got {self.gamma}", "gamma")
        if self.edge_rule not in EDGE_RULES:
            raise ConfigError(f"must be one of {EDGE_RULES}", "edge_rule")
        if self.backend not in BACKENDS:
            raise ConfigError(f"must be one of {BACKENDS}", "backend")
        if not isinstance(self.max_workers, int) or self.max_workers < 1:
            raise ConfigError("must be an integer >= 1", "max_workers")

    def to_dict(self) -> dict:
        return {
            "n_agents": self.n_agents,
            "tau": self.tau,
            "k": self.k,
            "rounds": self.rounds,
            "gamma": self.gamma,
            "reform": self.reform,
            "edge_rule": self.edge_rule,
            "seed": self.seed,
            "backend": self.backend,
            "stale_reads": self.stale_reads,
            "max_workers": self.max_workers,
        }

    def digest(self) -> str:
        """Short stable hash identifying this configuration (seed excluded)."""
        d = self.to_dict()
        d.pop("seed")
        d.pop("max_workers")
        text = ";".join(f"{key}={d[key]!r}" for key in sorted(d))
        return hashlib.sha256(text.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class RoundState:
    round: int
    responses: tuple[ResponseRecord, ...]
    sim: SimilarityMatrix
    scores: ContributionScores
    graph: CommGraph
    round_output: tuple[int, str]
    halted_early: bool = False
    leader: int | None = None
    fed_roots: tuple[int, ...] = ()

    @property
    def embeddings(self) -> np.ndarray:
        return np.vstack([r.embedding for r in self.responses])

    @property
    def tokens(self) -> tuple[int, int]:
        return (sum(r.prompt_tokens for r in self.responses), sum(r.completion_tokens for r in self.responses))

    def to_json(self, query_id: str | None = None, roles: Sequence[str] | None = None) -> dict:
        S = self.sim.S
        prompt, completion = self.tokens
        out = {
            "query_id": query_id,
            "round": self.round,
            "responses": [r.to_json(role=roles[r.agent_id] if roles else None) for r in self.responses],
            "psi": [float(p) for p in self.scores.psi],
            "psi_uniform_fallback": self.scores.uniform_fallback,
            "similarity": {
                "min": self.sim.min_offdiag(),
                "mean": float(S.mean()),
                "sha256": hashlib.sha256(np.round(S, 12).tobytes()).hexdigest(),
            },
            "graph": self.graph.to_json(),
            "leader": self.leader,
            "fed_roots": list(self.fed_roots),
            "round_output": {"agent_id": self.round_output[0], "text": self.round_output[1]},
            "halted_early": self.halted_early,
            "tokens": {"prompt": prompt, "completion": completion},
        }
        return out


@dataclass(frozen=True)
class RunResult:
    final_text: str
    final_index: int
    rounds_executed: int
    states: tuple[RoundState, ...]
    total_tokens: tuple[int, int]
    final_correct: bool | None = None

    @property
    def halted_early(self) -> bool:
        return self.states[-1].halted_early


def select_output(rs: np.ndarray, psi: Sequence[float]) -> int:
    """Index of the embedding closest (cosine) to the psi-weighted centroid.

    Falls back to uniform weights when the psi mass is non-positive, and to
    argmax psi when the centroid itself vanishes.  Ties go to the lower index.
    """
    rs = np.asarray(rs, dtype=float)
    w = np.asarray(psi, dtype=float)
    if w.sum() <= 1e-12:
        w = np.ones_like(w)
    centroid = (w[:, None] * rs).sum(axis=0) / w.sum()
    cn = np.linalg.norm(centroid)
    if cn <= 1e-12:
        return int(np.argmax(np.asarray(psi, dtype=float)))
    cos = (rs @ centroid) / (np.linalg.norm(rs, axis=1) * cn)
    return int(np.argmax(cos))


def aggregate(responses: Sequence[ResponseRecord], scores: ContributionScores | Sequence[float]) -> tuple[int, str]:
    if not responses:
        raise ValueError("nothing to aggregate")
    psi = scores.psi if isinstance(scores, ContributionScores) else scores
    rs = np.vstack([r.embedding for r in responses])
    idx = select_output(rs, psi)
    return idx, responses[idx].text


def _close_round(t: int, responses: Sequence[ResponseRecord], cfg: OrchestratorConfig,
                 prev_graph: CommGraph | None, leader: int | None = None,
                 fed_roots: Sequence[int] = ()) -> RoundState:
    responses = tuple(sorted(responses, key=lambda r: r.agent_id))
    rs = np.vstack([r.embedding for r in responses])
    scores = approx_contribution(rs, round=t)
    sim = similarity_matrix(rs, round=t)
    if prev_graph is None or cfg.reform:
        graph = form_graph(sim, scores, tau=cfg.tau, k=cfg.k, edge_rule=cfg.edge_rule)
    else:
        graph = reorder(prev_graph, scores, round=t)
    output = aggregate(responses, scores)
    halted = cfg.gamma is not None and sim.min_offdiag() >= cfg.gamma
    return RoundState(round=t, responses=responses, sim=sim, scores=scores, graph=graph, round_output=output,
                      halted_early=halted, leader=leader, fed_roots=tuple(fed_roots))


def _check_agents(cfg: OrchestratorConfig, agents: Sequence[Agent]) -> None:
    if len(agents) != cfg.n_agents:
        raise ConfigError(f"config expects {cfg.n_agents} agents, got {len(agents)}", "n_agents")


def init_round(query: str, cfg: OrchestratorConfig, agents: Sequence[Agent]) -> RoundState:
    _check_agents(cfg, agents)
    responses: list[ResponseRecord] = []
    for n, agent in enumerate(agents):
        bundle = assemble_prompt(agent.role, query, [], 0)
        try:
            responses.append(agent.respond(bundle, n, 0))
        except Exception as exc:
            raise RoundError(f"agent {n} failed in round 0: {exc}", round=0, partial=responses, cause=exc) from exc
    return _close_round(0, responses, cfg, None)


def _incoming(n: int, prev: RoundState, done: dict[int, ResponseRecord], heads: set[int],
              agents: Sequence[Agent], stale: bool) -> list[tuple[str, str]]:
    order_pos = {node: i for i, node in enumerate(prev.graph.topo_order)}
    incoming: list[tuple[str, str]] = []
    if n in heads:
        src, text = prev.round_output
        incoming.append((agents[src].role.name, text))
    for m in sorted(prev.graph.sources(n), key=lambda m: order_pos[m]):
        record = prev.responses[m] if stale or m not in done else done[m]
        incoming.append((agents[m].role.name, record.text))
    return incoming


def run_round(prev: RoundState, query: str, cfg: OrchestratorConfig, agents: Sequence[Agent]) -> RoundState:
    """Propagate along ``prev.graph`` and close round ``prev.round + 1``."""
    _check_agents(cfg, agents)
    t = prev.round + 1
    heads = roots(prev.graph)
    head_set = set(heads)
    done: dict[int, ResponseRecord] = {}

    def call(n: int) -> ResponseRecord:
        bundle = assemble_prompt(agents[n].role, query, _incoming(n, prev, done, head_set, agents, cfg.stale_reads), t)
        return agents[n].respond(bundle, n, t)

    if cfg.max_workers == 1:
        for n in prev.graph.topo_order:
            try:
                done[n] = call(n)
            except Exception as exc:
                raise RoundError(f"agent {n} failed in round {t}: {exc}", round=t,
                                 partial=list(done.values()), cause=exc) from exc
    else:
        _run_concurrent(prev.graph, call, done, cfg, t)
    return _close_round(t, list(done.values()), cfg, prev.graph, leader=heads[0], fed_roots=heads)


def _run_concurrent(graph: CommGraph, call: Callable[[int], ResponseRecord], done: dict[int, ResponseRecord],
                    cfg: OrchestratorConfig, t: int) -> None:
    """Dependency-driven scheduling: a node starts once all its sources have answered."""
    deps = {n: set() if cfg.stale_reads else set(graph.sources(n)) for n in range(graph.n)}
    pending = list(graph.topo_order)
    running: dict[Future, int] = {}
    with ThreadPoolExecutor(max_workers=cfg.max_workers) as pool:
        while pending or running:
            for n in [n for n in pending if deps[n] <= done.keys()]:
                pending.remove(n)
                running[pool.submit(call, n)] = n
            finished, _ = wait(running, return_when=FIRST_COMPLETED)
            for fut in finished:
                n = running.pop(fut)
                try:
                    done[n] = fut.result()
                except Exception as exc:
                    for other in running:
                        other.cancel()
                    raise RoundError(f"agent {n} failed in round {t}: {exc}", round=t,
                                     partial=list(done.values()), cause=exc) from exc


def run(query: str, cfg: OrchestratorConfig, agents: Sequence[Agent], transcript: TranscriptSink | None = None,
        query_id: str | None = None) -> RunResult:
    """Initial round plus up to ``rounds - 1`` propagation rounds, halting early on consensus."""
    roles = [a.role.name for a in agents]

    def emit(state: RoundState) -> None:
        if transcript is not None:
            transcript(state.to_json(query_id=query_id, roles=roles))

    states: list[RoundState] = []
    try:
        state = init_round(query, cfg, agents)
        states.append(state)
        emit(state)
        while not state.halted_early and len(states) < cfg.rounds:
            state = run_round(state, query, cfg, agents)
            states.append(state)
            emit(state)
    except RoundError as err:
        if transcript is not None:
            transcript({
                "query_id": query_id,
                "round": err.round,
                "error": str(err),
                "partial_responses": [r.to_json(role=roles[r.agent_id]) for r in err.partial],
            })
        raise

    last = states[-1]
    idx, text = last.round_output
    prompt = sum(s.tokens[0] for s in states)
    completion = sum(s.tokens[1] for s in states)
    return RunResult(
        final_text=text,
        final_index=idx,
        rounds_executed=len(states),
        states=tuple(states),
        total_tokens=(prompt, completion),
        final_correct=last.responses[idx].correct,
    )


class Orchestrator:
    """Convenience wrapper binding a config and a roster."""

    def __init__(self, cfg: OrchestratorConfig, agents: Sequence[Agent]):
        _check_agents(cfg, agents)
        self.cfg = cfg
        self.agents = list(agents)

    def run(self, query: str, transcript: TranscriptSink | None = None, query_id: str | None = None) -> RunResult:
        return run(query, self.cfg, self.agents, transcript=transcript, query_id=query_id)

    def with_config(self, **changes) -> "Orchestrator":
        return Orchestrator(replace(self.cfg, **changes), self.agents)
