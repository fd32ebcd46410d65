"""Command line entry points: ``run``, ``verify <target>`` and ``sweep``.

Exit status is 0 only when every check the command performed passed.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import itertools
import logging
import sys
import time
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import analysis
from .agents.sim import SimAgentModel
from .errors import ContribDagError
from .manifest import (
    RunManifest,
    execute_run,
    load_config,
    load_queries,
    manifest_from_dict,
    prepare_out_dir,
    write_sweep_csv,
)
from .orchestrator import OrchestratorConfig
from .valuation import exact_shapley

VERIFY_TARGETS = ("shapley", "bound", "ranking", "lemma1", "lemma2", "prob2", "ranks", "sweep")


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def parse_gamma(text: str) -> float | None:
    return None if text.strip().lower() in ("none", "off", "unset", "") else float(text)


# --------------------------------------------------------------------------
# run


def _manifest_for_run(args) -> RunManifest:
    manifest = load_config(args.config) if args.config else manifest_from_dict({})
    raw = manifest.to_dict()
    cfg = raw["config"]
    overrides = {
        "backend": args.backend, "n_agents": args.agents, "tau": args.tau, "k": args.topk,
        "rounds": args.rounds, "reform": args.reform, "edge_rule": args.edge_rule, "seed": args.seed,
    }
    for key, value in overrides.items():
        if value is not None:
            cfg[key] = value
    if args.gamma is not None:
        cfg["gamma"] = parse_gamma(args.gamma)
    if args.agents is not None and args.agents != manifest.config.n_agents:
        raw["roles"] = None
        if raw["sim"]:
            raw["sim"]["models"] = raw["sim"]["models"][:1]
    if args.topk is None and cfg["k"] is not None and cfg["k"] >= cfg["n_agents"]:
        cfg["k"] = max(1, cfg["n_agents"] - 1) if cfg["n_agents"] > 1 else None
    if args.endpoint:
        raw["http"] = {**(raw["http"] or {}), "url": args.endpoint, "model": args.model or "default"}
    raw["query_source"] = str(args.query_file)
    raw["created_at"] = None
    return manifest_from_dict(raw)


def cmd_run(args) -> int:
    manifest = _manifest_for_run(args)
    queries = load_queries(args.query_file)
    paths = execute_run(manifest, queries, args.out, overwrite=args.overwrite)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


# --------------------------------------------------------------------------
# verify


@dataclasses.dataclass
class Outcome:
    target: str
    passed: bool
    detail: str
    rows: list[dict]

    def line(self) -> str:
        return f"{self.target}: {'PASS' if self.passed else 'FAIL'} {self.detail}"


def _shapley_rows(args) -> tuple[analysis.ShapleyVerification, float]:
    start = time.perf_counter()
    res = analysis.verify_shapley(instances=args.instances, dim=args.dim, seed=args.seed)
    return res, time.perf_counter() - start


def verify_shapley_target(args) -> Outcome:
    """Exact values sum to v(all) = 1 (efficiency) and respect the residual bound."""
    res, elapsed = _shapley_rows(args)
    rng = np.random.default_rng(args.seed)
    bad = 0
    for _ in range(args.instances):
        n = int(rng.integers(3, 9))
        rs = analysis.random_unit_instance(n, args.dim, rng)
        phi = exact_shapley(rs).phi
        if abs(phi.sum() - 1.0) > 1e-9:  # grand coalition sum is r_avg direction, cos = 1
            bad += 1
    return Outcome("shapley", bad == 0 and res.violations == 0,
                   f"instances={res.instances} efficiency_failures={bad} bound_violations={res.violations} "
                   f"seconds={elapsed:.1f}", res.rows)


def verify_bound_target(args) -> Outcome:
    res, elapsed = _shapley_rows(args)
    return Outcome("bound", res.violations == 0,
                   f"instances={res.instances} agents={len(res.rows)} violations={res.violations} "
                   f"seconds={elapsed:.1f}", res.rows)


def verify_ranking_target(args) -> Outcome:
    constructed = [analysis.dominant_cluster_instance(n=4, eps=0.01, seed=s) for s in range(args.constructed)]
    res = analysis.verify_shapley(instances=args.instances, dim=args.dim, seed=args.seed, constructed=constructed)
    rows = [{"instance": i, "kendall_tau": t} for i, t in enumerate(res.kendall_taus)]
    return Outcome("ranking", res.counterexamples == 0,
                   f"instances={res.instances} flagged_pairs={res.flagged_pairs} "
                   f"counterexamples={res.counterexamples} mean_kendall_tau={res.mean_kendall_tau:.3f}", rows)


LEMMA1_GRID = [(p, k) for p in (0.3, 0.5, 0.6, 0.8, 0.9) for k in (1, 2, 4, 8, 16)]


def verify_lemma1_target(args) -> Outcome:
    rows, failures = [], 0
    for p, k in LEMMA1_GRID:
        wrong = [(1 - p) / k] * k
        res = analysis.lemma1_check(p, wrong)
        if not res.dispersed:
            continue
        both, match = analysis.lemma1_monte_carlo(p, wrong, args.trials, seed=args.seed)
        sigma = np.hypot(analysis.binomial_sigma(res.pr_xc, args.trials), analysis.binomial_sigma(res.pr_xi, args.trials))
        ok = res.pr_xc >= res.pr_xi and both - match >= -3 * sigma
        failures += not ok
        rows.append({"p": p, "K": k, "pr_xc": res.pr_xc, "pr_xi": res.pr_xi, "mc_xc": both, "mc_xi": match, "ok": ok})
    return Outcome("lemma1", failures == 0, f"cells={len(rows)} failures={failures}", rows)


LEMMA2_GRID = [(0.9, 0.1), (0.7, 0.3), (0.6, 0.5)]
LEMMA2_SIZES = [(2, 2), (3, 3)]


def verify_lemma2_target(args) -> Outcome:
    rows, total_v, total_g = [], 0, 0
    for alpha, beta in LEMMA2_GRID:
        for nc, ni in LEMMA2_SIZES:
            rep = analysis.lemma2_check(nc, ni, alpha, beta, dim=args.lemma_dim, trials=args.trials, seed=args.seed)
            total_v += rep.violations
            total_g += rep.gap_violations
            rows.append({"alpha": alpha, "beta": beta, "n_correct": nc, "n_incorrect": ni, "trials": rep.trials,
                         "violations": rep.violations, "gap_violations": rep.gap_violations,
                         "min_gap_slack": rep.min_gap_slack})
    return Outcome("lemma2", total_v == 0 and total_g == 0,
                   f"cells={len(rows)} violations={total_v} gap_violations={total_g}", rows)


def verify_prob2_target(args) -> Outcome:
    rows, failures = [], 0
    for p in (0.2, 0.5, 0.8):
        for n in (2, 4, 8):
            exact = analysis.prob_at_least_two_correct(p, n)
            emp = analysis.mc_at_least_two_correct(p, n, args.trials, seed=args.seed)
            sigma = analysis.binomial_sigma(exact, args.trials)
            ok = abs(emp - exact) <= 3 * sigma
            failures += not ok
            rows.append({"p": p, "N": n, "closed_form": exact, "monte_carlo": emp, "sigma": sigma, "ok": ok})
    return Outcome("prob2", failures == 0, f"cells={len(rows)} failures={failures}", rows)


def verify_ranks_target(args) -> Outcome:
    h31 = analysis.rank_histogram(analysis.strong_weak_pool(3, 1, n_trials=args.trials, seed=args.seed))
    h22 = analysis.rank_histogram(analysis.strong_weak_pool(2, 2, n_trials=args.trials, seed=args.seed))
    weak_last = h31.fractions()[3, 3]
    e31 = h31.entropy(3)
    e22 = min(h22.entropy(2), h22.entropy(3))
    rows = []
    for label, h in (("3+1", h31), ("2+2", h22)):
        for a in range(4):
            rows.append({"pool": label, "agent": a, **{f"rank{r + 1}": int(h.counts[a, r]) for r in range(4)},
                         "entropy": h.entropy(a)})
    return Outcome("ranks", weak_last > 0.5 and e22 > e31,
                   f"weak_rank4={weak_last:.3f} entropy_3+1={e31:.3f} entropy_2+2_min={e22:.3f}", rows)


def verify_sweep_target(args) -> Outcome:
    model = SimAgentModel.uniform(0.35, 6, p_uplift=0.95)
    pop = analysis.PopulationSpec(agents=(model,), n_trials=args.sweep_trials, seed=args.seed)
    n_cfgs = [OrchestratorConfig(n_agents=n) for n in (3, 5, 7, 10)]
    g_cfgs = [OrchestratorConfig(gamma=g) for g in (None, 0.95, 0.9)]
    rows_n = analysis.sweep(n_cfgs, pop, labels=[f"N={c.n_agents}" for c in n_cfgs])
    rows_g = analysis.sweep(g_cfgs, pop, labels=[f"gamma={c.gamma}" for c in g_cfgs])
    tok = lambda r: r["prompt_tokens"] + r["completion_tokens"]  # noqa: E731
    by_seed: dict[tuple[str, int], int] = {(r["label"], r["seed"]): tok(r) for r in rows_n + rows_g}
    seeds = sorted({r["seed"] for r in rows_g})
    g_bad = sum(not (by_seed[("gamma=0.9", s)] <= by_seed[("gamma=0.95", s)] <= by_seed[("gamma=None", s)])
                for s in seeds)
    summary = analysis.summarize_sweep(rows_n)
    totals = [s["prompt_tokens"] + s["completion_tokens"] for s in summary]
    n_ok = all(a <= b for a, b in zip(totals, totals[1:]))
    errors = sum(bool(r["error"]) for r in rows_n + rows_g)
    return Outcome("sweep", n_ok and g_bad == 0 and errors == 0,
                   f"configs={len(n_cfgs) + len(g_cfgs)} tokens_monotone_in_N={n_ok} "
                   f"gamma_order_failures={g_bad} errors={errors}", rows_n + rows_g)


VERIFIERS: dict[str, Callable] = {
    "shapley": verify_shapley_target,
    "bound": verify_bound_target,
    "ranking": verify_ranking_target,
    "lemma1": verify_lemma1_target,
    "lemma2": verify_lemma2_target,
    "prob2": verify_prob2_target,
    "ranks": verify_ranks_target,
    "sweep": verify_sweep_target,
}


def _write_rows(rows: Sequence[dict], path: Path) -> None:
    fields: list[str] = []
    for row in rows:
        fields.extend(k for k in row if k not in fields)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)


def cmd_verify(args) -> int:
    targets = VERIFY_TARGETS if args.target == "all" else (args.target,)
    out = prepare_out_dir(args.out, [f"verify_{t}.csv" for t in targets], args.overwrite)
    status = 0
    user_trials = args.trials
    for target in targets:
        args.trials = user_trials if user_trials is not None else _DEFAULT_TRIALS.get(target, 1000)
        if target == "sweep":
            outcome = verify_sweep_target(args)
            write_sweep_csv(outcome.rows, out, overwrite=True, name="verify_sweep.csv")
        else:
            outcome = VERIFIERS[target](args)
            _write_rows(outcome.rows, out / f"verify_{target}.csv")
        print(outcome.line())
        status |= not outcome.passed
    return int(status)


# --------------------------------------------------------------------------
# sweep


def _grid(specs: Sequence[str]) -> list[dict]:
    axes = []
    for spec in specs:
        key, _, values = spec.partition("=")
        if not values:
            raise ContribDagError(f"grid axis {spec!r} must look like key=v1,v2")
        parsed = []
        for v in values.split(","):
            if key == "gamma":
                parsed.append(parse_gamma(v))
            elif key in ("reform", "stale_reads"):
                parsed.append(parse_bool(v))
            elif key in ("edge_rule", "backend"):
                parsed.append(v)
            elif key == "tau":
                parsed.append(float(v))
            else:
                parsed.append(int(v))
        axes.append([(key, v) for v in parsed])
    return [dict(combo) for combo in itertools.product(*axes)] if axes else [{}]


def cmd_sweep(args) -> int:
    base = load_config(args.config) if args.config else manifest_from_dict({})
    models = base.sim.models if base.sim else (SimAgentModel.uniform(0.49, 6, p_uplift=0.69),)
    configs, labels = [], []
    for point in _grid(args.grid):
        changes = dict(point)
        n = changes.get("n_agents", base.config.n_agents)
        if "k" not in changes and base.config.k is not None and base.config.k >= n:
            changes["k"] = n - 1 if n > 1 else None
        configs.append(dataclasses.replace(base.config, **changes))
        labels.append(",".join(f"{k}={v}" for k, v in point.items()) or "base")
    pop = analysis.PopulationSpec(agents=models, n_trials=args.trials, seed=base.config.seed)
    rows = analysis.sweep(configs, pop, labels=labels)
    path = write_sweep_csv(rows, args.out, overwrite=args.overwrite)
    summary = analysis.summarize_sweep(rows)
    _write_rows(summary, Path(args.out) / "sweep_summary.csv")
    for s in summary:
        print(f"{s['label']} [{s['config_hash']}]: accuracy={s['accuracy']:.3f} mean_rounds={s['mean_rounds']:.2f} "
              f"tokens={s['prompt_tokens'] + s['completion_tokens']} failures={s['failures']}")
    print(f"rows: {path}")
    return int(any(s["failures"] for s in summary))


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="contribdag", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the orchestrator over a query file")
    p.add_argument("--query-file", required=True, type=Path)
    p.add_argument("--config", type=Path)
    p.add_argument("--backend", choices=("sim", "http"))
    p.add_argument("--agents", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--topk", type=int)
    p.add_argument("--rounds", type=int)
    p.add_argument("--gamma", help="consensus threshold, or 'none'")
    p.add_argument("--reform", type=parse_bool)
    p.add_argument("--edge-rule", choices=("alg2", "prose"))
    p.add_argument("--seed", type=int)
    p.add_argument("--endpoint", help="chat-completion URL for the http backend")
    p.add_argument("--model", help="model name sent to the endpoint")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="run a verification target")
    p.add_argument("target", choices=(*VERIFY_TARGETS, "all"))
    p.add_argument("--instances", type=int, default=500)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--sweep-trials", type=int, default=50)
    p.add_argument("--constructed", type=int, default=20)
    p.add_argument("--dim", type=int, default=384)
    p.add_argument("--lemma-dim", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("verify_out"))
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="grid sweep over orchestrator settings")
    p.add_argument("--config", type=Path)
    p.add_argument("--grid", nargs="+", action="extend", default=[],
                   help="axes like n_agents=3,5,7 gamma=none,0.9 (repeatable)")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_sweep)
    return parser


_DEFAULT_TRIALS = {"lemma1": 100_000, "prob2": 100_000, "lemma2": 1000, "ranks": 2000}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ContribDagError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
