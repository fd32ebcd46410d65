"""Closed-form and Monte Carlo checks of the probabilistic claims, plus sweeps.

Everything here is seeded; trial ``i`` of a check always draws from the
same RNG stream, so tallies do not depend on evaluation order.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .agents.roles import assemble_prompt, default_roster
from .agents.sim import AnswerGeometry, SimAgentModel, SimPopulation, hash_seed
from .errors import ContribDagError, InfeasibleGeometryError, InvalidDistributionError
from .orchestrator import OrchestratorConfig, run
from .valuation import approx_contribution, bound_certificate, stability_threshold

# --------------------------------------------------------------------------
# at least two correct


def prob_at_least_two_correct(p: float, n: int) -> float:
    """1 - (1-p)^N - N p (1-p)^(N-1)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if n == 1:
        return 0.0
    q = 1.0 - p
    return 1.0 - q**n - n * p * q ** (n - 1)


def binomial_sigma(p: float, trials: int) -> float:
    return math.sqrt(p * (1.0 - p) / trials)


def mc_at_least_two_correct(p: float, n: int, trials: int, seed: int = 0) -> float:
    rng = np.random.default_rng(np.random.SeedSequence([seed, n, int(round(p * 1e6))]))
    correct = rng.random((trials, n)) < p
    return float(np.mean(correct.sum(axis=1) >= 2))


# --------------------------------------------------------------------------
# agreement concentration


@dataclass(frozen=True)
class Lemma1Result:
    pr_xc: float
    pr_xi: float
    dispersed: bool

    @property
    def boundary(self) -> bool:
        return math.isclose(self.pr_xc, self.pr_xi, rel_tol=0, abs_tol=1e-12)


def _check_distribution(p: float, wrong_probs: Sequence[float]) -> np.ndarray:
    probs = np.asarray(wrong_probs, dtype=float)
    if not 0.0 < p < 1.0:
        raise InvalidDistributionError(f"p must lie in (0, 1), got {p}")
    if probs.size == 0 or np.any(probs < 0):
        raise InvalidDistributionError("wrong-answer probabilities must be non-empty and non-negative")
    if abs(probs.sum() - (1.0 - p)) > 1e-9:
        raise InvalidDistributionError(f"wrong-answer probabilities sum to {probs.sum():.12g}, expected {1 - p:.12g}")
    return probs


def lemma1_check(p: float, wrong_probs: Sequence[float]) -> Lemma1Result:
    """Pr[both correct] = p^2 versus Pr[both pick the same wrong answer] = sum p_k^2."""
    probs = _check_distribution(p, wrong_probs)
    pr_xc = p * p
    pr_xi = float(np.sum(probs**2))
    dispersed = bool(probs.max() <= p * p / (1.0 - p) + 1e-12)
    if dispersed and pr_xc < pr_xi - 1e-12:
        raise AssertionError(f"dispersed errors but p^2={pr_xc} < sum p_k^2={pr_xi}")
    return Lemma1Result(pr_xc=pr_xc, pr_xi=pr_xi, dispersed=dispersed)


def lemma1_monte_carlo(p: float, wrong_probs: Sequence[float], trials: int, seed: int = 0) -> tuple[float, float]:
    """Empirical (both correct, both wrong and matching) rates for two independent agents."""
    probs = _check_distribution(p, wrong_probs)
    rng = np.random.default_rng(np.random.SeedSequence([seed, len(probs), int(round(p * 1e6))]))
    dist = np.concatenate([[p], probs])
    a = rng.choice(len(dist), size=trials, p=dist / dist.sum())
    b = rng.choice(len(dist), size=trials, p=dist / dist.sum())
    both_correct = float(np.mean((a == 0) & (b == 0)))
    wrong_match = float(np.mean((a == b) & (a != 0)))
    return both_correct, wrong_match


def max_dispersed_uniform(p: float) -> int:
    """Smallest K with (1-p)/K <= p^2/(1-p): uniform errors over K answers are dispersed."""
    return max(1, math.ceil((1.0 - p) ** 2 / (p * p) - 1e-12))


# --------------------------------------------------------------------------
# contribution dominance


@dataclass
class Lemma2Report:
    violations: int
    gap_violations: int
    trials: int
    covered: bool
    min_gap_slack: float = math.inf
    assumption_checks: int = 0


def _assumption_holds(rs: np.ndarray, n_correct: int, alpha: float, beta: float, tol: float = 1e-9) -> bool:
    S = rs @ rs.T
    n = rs.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            both = i < n_correct and j < n_correct
            if both and S[i, j] < alpha - tol:
                return False
            if not both and S[i, j] > beta + tol:
                return False
    return True


def sample_assumption_instance(n_correct: int, n_incorrect: int, alpha: float, beta: float, dim: int,
                               rng: np.random.Generator) -> np.ndarray:
    """Unit embeddings: ``n_correct`` clustered (pairwise >= alpha), the rest on distinct answers (<= beta).

    The shared centre cosine and each response's tilt are drawn at random so
    draws cover the admissible region rather than one configuration.
    """
    mu = beta * rng.random()
    geo = AnswerGeometry(n_answers=1 + n_incorrect, alpha=alpha, beta=beta, center_cos=mu, dim=dim,
                         seed=int(rng.integers(2**31)))
    rows = [geo.sample(0, rng.random(), rng) for _ in range(n_correct)]
    rows += [geo.sample(1 + j, rng.random(), rng) for j in range(n_incorrect)]
    return np.vstack(rows)


def lemma2_check(n_correct: int, n_incorrect: int, alpha: float, beta: float, dim: int, trials: int,
                 seed: int = 0) -> Lemma2Report:
    """Count draws in which some correct agent fails to out-score every incorrect one.

    Also counts draws where the inner-product gap against the mean falls short
    of ``(|S|-1)(alpha-beta)/N``.  With a single correct agent the lemma gives
    no strict guarantee; the report is then marked not covered.
    """
    if not alpha > beta:
        raise InfeasibleGeometryError(f"need alpha > beta, got alpha={alpha}, beta={beta}")
    # fails fast on infeasible dims
    AnswerGeometry(n_answers=1 + n_incorrect, alpha=alpha, beta=beta, center_cos=0.0, dim=dim)
    n = n_correct + n_incorrect
    covered = n_correct >= 2 and n_incorrect >= 1
    report = Lemma2Report(violations=0, gap_violations=0, trials=trials, covered=covered)
    if not covered:
        return report
    bound = (n_correct - 1) * (alpha - beta) / n
    for t in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence([seed, t, n_correct, n_incorrect]))
        rs = sample_assumption_instance(n_correct, n_incorrect, alpha, beta, dim, rng)
        if not _assumption_holds(rs, n_correct, alpha, beta):
            raise AssertionError(f"draw {t} breaks the clustering assumption")
        report.assumption_checks += 1
        psi = approx_contribution(rs).psi
        if psi[:n_correct].min() <= psi[n_correct:].max():
            report.violations += 1
        inner = rs @ rs.mean(axis=0)
        slack = float(inner[:n_correct].min() - inner[n_correct:].max() - bound)
        report.min_gap_slack = min(report.min_gap_slack, slack)
        if slack < -1e-9:
            report.gap_violations += 1
    return report


def lemma2_counterexample(n_incorrect: int = 4, alpha: float = 0.9, beta: float = 0.1) -> tuple[np.ndarray, int]:
    """Embeddings satisfying the clustering assumption where an incorrect agent out-scores a correct one.

    Two correct responses sit on +c; each incorrect one leans towards -c by
    cosine -sqrt(beta) along its own orthogonal direction, so incorrect pairs
    have cosine exactly beta.  Returns ``(embeddings, n_correct)``.
    """
    a = math.sqrt(beta)
    dim = 2 + n_incorrect
    c = np.zeros(dim)
    c[0] = 1.0
    tilt = math.acos(alpha) / 2.0
    e1 = np.zeros(dim)
    e1[1] = 1.0
    rows = [math.cos(tilt) * c + math.sin(tilt) * e1, math.cos(tilt) * c - math.sin(tilt) * e1]
    for j in range(n_incorrect):
        ej = np.zeros(dim)
        ej[2 + j] = 1.0
        rows.append(-a * c + math.sqrt(1.0 - a * a) * ej)
    return np.vstack(rows), 2


# --------------------------------------------------------------------------
# shapley bound and ranking stability over random instances


def random_unit_instance(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    rs = rng.standard_normal((n, dim))
    return rs / np.linalg.norm(rs, axis=1, keepdims=True)


@dataclass
class ShapleyVerification:
    rows: list[dict] = field(default_factory=list)
    instances: int = 0
    violations: int = 0
    flagged_pairs: int = 0
    counterexamples: int = 0
    kendall_taus: list[float] = field(default_factory=list)

    @property
    def mean_kendall_tau(self) -> float:
        vals = [t for t in self.kendall_taus if not math.isnan(t)]
        return float(np.mean(vals)) if vals else math.nan


def verify_shapley(instances: int = 500, n_range: tuple[int, int] = (3, 8), dim: int = 384,
                   seed: int = 0, constructed: Iterable[np.ndarray] = ()) -> ShapleyVerification:
    """Exact Shapley vs the cosine estimate on random unit embeddings.

    Checks the residual bound per agent, the ranking-stability implication per
    ordered pair, and records the Kendall tau between psi and phi/L orders.
    ``constructed`` instances are checked after the random ones.
    """
    out = ShapleyVerification()
    rng = np.random.default_rng(seed)

    def draws():
        for i in range(instances):
            n = int(rng.integers(n_range[0], n_range[1] + 1))
            while True:
                rs = random_unit_instance(n, dim, rng)
                if np.min(np.abs(rs @ rs.mean(axis=0))) > 1e-12:
                    break
            yield f"r{i}", rs
        for j, rs in enumerate(constructed):
            yield f"c{j}", np.asarray(rs, dtype=float)

    for inst_id, rs in draws():
        cert = bound_certificate(rs)
        out.instances += 1
        out.violations += int(np.count_nonzero(~cert.ok))
        tilde = cert.normalized_phi
        threshold = stability_threshold(cert)
        n = len(cert.psi)
        for a in range(n):
            for b in range(n):
                if a != b and cert.psi[a] - cert.psi[b] > threshold:
                    out.flagged_pairs += 1
                    if not tilde[a] > tilde[b]:
                        out.counterexamples += 1
        tau = stats.kendalltau(cert.psi, tilde).statistic if n > 1 else math.nan
        out.kendall_taus.append(float(tau))
        for a in range(n):
            out.rows.append({
                "instance_id": inst_id,
                "n": n,
                "agent": a,
                "phi": float(cert.phi[a]),
                "psi": float(cert.psi[a]),
                "L": float(cert.L[a]),
                "residual": float(cert.residuals[a]),
                "bound": float(cert.bound),
                "ok": bool(cert.ok[a]),
            })
    return out


def dominant_cluster_instance(n: int = 4, eps: float = 0.01, seed: int = 1) -> np.ndarray:
    """One agent nearly opposite a tight cluster; large psi gaps with large L factors."""
    rng = np.random.default_rng(seed)
    base = np.array([1.0, 0.0, 0.0])
    rows = []
    for i in range(n):
        v = (-base if i == 0 else base) + eps * rng.standard_normal(3)
        rows.append(v / np.linalg.norm(v))
    return np.vstack(rows)


# --------------------------------------------------------------------------
# rank histograms


@dataclass(frozen=True)
class PopulationSpec:
    agents: tuple[SimAgentModel, ...]
    n_trials: int = 1000
    seed: int = 0
    center_cos: float = 0.3
    dim: int = 384

    def __post_init__(self) -> None:
        object.__setattr__(self, "agents", tuple(self.agents))
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if not self.agents:
            raise ValueError("population needs at least one agent")

    def population(self, n_agents: int | None = None) -> SimPopulation:
        """Roster of ``n_agents`` (models cycled if the spec lists fewer)."""
        n = n_agents or len(self.agents)
        models = tuple(self.agents[i % len(self.agents)] for i in range(n))
        return SimPopulation(models=models, roles=tuple(default_roster(n)), center_cos=self.center_cos, dim=self.dim)


@dataclass(frozen=True)
class RankHistogram:
    counts: np.ndarray

    @property
    def n_trials(self) -> int:
        return int(self.counts[0].sum())

    def fractions(self) -> np.ndarray:
        return self.counts / self.counts.sum(axis=1, keepdims=True)

    def entropy(self, agent: int) -> float:
        p = self.fractions()[agent]
        p = p[p > 0]
        return float(-(p * np.log(p)).sum())


def rank_histogram(pop: PopulationSpec) -> RankHistogram:
    """Tally psi ranks (0 = top) of each agent over independent initial rounds."""
    population = pop.population()
    n = len(pop.agents)
    counts = np.zeros((n, n), dtype=int)
    for trial in range(pop.n_trials):
        agents = population.agents(pop.seed, trial)
        rs = np.vstack([
            agent.respond(assemble_prompt(agent.role, "rank trial", [], 0), i, 0).embedding
            for i, agent in enumerate(agents)
        ])
        for rank, agent_id in enumerate(approx_contribution(rs).ranking()):
            counts[agent_id, rank] += 1
    return RankHistogram(counts=counts)


def strong_weak_pool(n_strong: int, n_weak: int, p_strong: float = 0.77, p_weak: float = 0.51,
                     n_wrong: int = 6, strong_spread: float = 0.3, weak_spread: float = 1.0,
                     n_trials: int = 2000, seed: int = 0) -> PopulationSpec:
    """Strong agents first, then weak ones; weak agents also answer less tightly."""
    strong = SimAgentModel.uniform(p_strong, n_wrong, spread=strong_spread)
    weak = SimAgentModel.uniform(p_weak, n_wrong, spread=weak_spread)
    return PopulationSpec(agents=(strong,) * n_strong + (weak,) * n_weak, n_trials=n_trials, seed=seed)


# --------------------------------------------------------------------------
# sweeps

SWEEP_FIELDS = [
    "config_hash", "label", "n_agents", "tau", "k", "rounds", "gamma", "reform", "edge_rule",
    "query_id", "seed", "correct", "rounds_executed", "halted", "prompt_tokens", "completion_tokens",
    "wall_time", "error",
]


def sweep(configs: Sequence[OrchestratorConfig], pop: PopulationSpec, query_set: Sequence[tuple[str, str]] | None = None,
          labels: Sequence[str] | None = None) -> list[dict]:
    """Run every config over the same seeded trials; one row per (config, trial).

    Trials are ``pop.n_trials`` seeds ``pop.seed + i``; with ``query_set``
    each trial cycles through its queries.  A failing trial is recorded with
    its error and the sweep carries on.
    """
    if not configs:
        raise ValueError("sweep needs at least one config")
    queries = list(query_set) if query_set else [("q0", "simulated query")]
    rows: list[dict] = []
    for ci, cfg in enumerate(configs):
        population = pop.population(cfg.n_agents)
        label = labels[ci] if labels else f"cfg{ci}"
        for trial in range(pop.n_trials):
            qid, query = queries[trial % len(queries)]
            seed = pop.seed + trial
            trial_cfg = replace(cfg, seed=seed)
            row = {
                "config_hash": cfg.digest(), "label": label, "n_agents": cfg.n_agents, "tau": cfg.tau,
                "k": cfg.k, "rounds": cfg.rounds, "gamma": cfg.gamma, "reform": cfg.reform,
                "edge_rule": cfg.edge_rule, "query_id": qid, "seed": seed,
            }
            start = time.perf_counter()
            try:
                res = run(query, trial_cfg, population.agents(seed, trial))
            except ContribDagError as exc:
                row.update(correct=None, rounds_executed=0, halted=False, prompt_tokens=0, completion_tokens=0,
                           wall_time=time.perf_counter() - start, error=str(exc))
            else:
                row.update(correct=res.final_correct, rounds_executed=res.rounds_executed, halted=res.halted_early,
                           prompt_tokens=res.total_tokens[0], completion_tokens=res.total_tokens[1],
                           wall_time=time.perf_counter() - start, error="")
            rows.append(row)
    return rows


def summarize_sweep(rows: Sequence[dict]) -> list[dict]:
    """Per-config accuracy, mean rounds, token totals and wall time."""
    groups: dict[str, list[dict]] = {}
    for row in rows:
        groups.setdefault(row["config_hash"], []).append(row)
    out = []
    for key, grp in groups.items():
        ok = [r for r in grp if not r["error"]]
        out.append({
            "config_hash": key,
            "label": grp[0]["label"],
            "trials": len(grp),
            "failures": len(grp) - len(ok),
            "accuracy": float(np.mean([bool(r["correct"]) for r in ok])) if ok else math.nan,
            "mean_rounds": float(np.mean([r["rounds_executed"] for r in ok])) if ok else math.nan,
            "prompt_tokens": int(sum(r["prompt_tokens"] for r in ok)),
            "completion_tokens": int(sum(r["completion_tokens"] for r in ok)),
            "wall_time": float(sum(r["wall_time"] for r in grp)),
        })
    return out


def single_agent_accuracy(model: SimAgentModel, trials: int, seed: int = 0) -> float:
    """Baseline: one agent answering alone (round 0), same RNG scheme as the orchestrator."""
    pop = SimPopulation(models=(model,), roles=tuple(default_roster(1)))
    hits = 0
    for trial in range(trials):
        agent = pop.agents(seed + trial, trial)[0]
        rec = agent.respond(assemble_prompt(agent.role, "baseline", [], 0), 0, 0)
        hits += bool(rec.correct)
    return hits / trials


__all__ = [
    "Lemma1Result",
    "Lemma2Report",
    "PopulationSpec",
    "RankHistogram",
    "ShapleyVerification",
    "binomial_sigma",
    "dominant_cluster_instance",
    "hash_seed",
    "lemma1_check",
    "lemma1_monte_carlo",
    "lemma2_check",
    "lemma2_counterexample",
    "max_dispersed_uniform",
    "mc_at_least_two_correct",
    "prob_at_least_two_correct",
    "rank_histogram",
    "sample_assumption_instance",
    "single_agent_accuracy",
    "strong_weak_pool",
    "summarize_sweep",
    "sweep",
    "verify_shapley",
]
