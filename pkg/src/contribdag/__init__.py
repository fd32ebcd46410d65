"""Contribution-guided multi-agent orchestration over per-round communication DAGs."""

from .agents import (
    HttpAgent,
    HttpEndpoint,
    PromptBundle,
    ResponseRecord,
    RoleProfile,
    SimAgent,
    SimAgentModel,
    SimPopulation,
    assemble_prompt,
    default_roster,
)
from .embedding import EmbedderSpec, HashEmbedder, HttpEmbedder, cosine, make_embedder, normalize
from .manifest import RunManifest, emit_results, execute_run, load_config, load_queries
from .orchestrator import Orchestrator, OrchestratorConfig, RoundState, RunResult, init_round, run, run_round
from .topology import CommGraph, SimilarityMatrix, form_graph, similarity_matrix
from .valuation import (
    BoundCertificate,
    ContributionScores,
    approx_contribution,
    bound_certificate,
    exact_shapley,
    ranking_stable,
)

__version__ = "0.1.0"

__all__ = [
    "BoundCertificate",
    "CommGraph",
    "ContributionScores",
    "EmbedderSpec",
    "HashEmbedder",
    "HttpAgent",
    "HttpEmbedder",
    "HttpEndpoint",
    "Orchestrator",
    "OrchestratorConfig",
    "PromptBundle",
    "ResponseRecord",
    "RoleProfile",
    "RoundState",
    "RunManifest",
    "RunResult",
    "SimAgent",
    "SimAgentModel",
    "SimPopulation",
    "SimilarityMatrix",
    "approx_contribution",
    "assemble_prompt",
    "bound_certificate",
    "cosine",
    "default_roster",
    "emit_results",
    "exact_shapley",
    "execute_run",
    "form_graph",
    "init_round",
    "load_config",
    "load_queries",
    "make_embedder",
    "normalize",
    "ranking_stable",
    "run",
    "run_round",
    "similarity_matrix",
]
