# %% [markdown]
# # Turning scores into a communication DAG
#
# Similar responses are linked; each agent keeps at most k incoming links.
# Cycles are broken by cutting the edge that points from the weakest to the
# strongest agent, and agents are then scheduled in topological order with
# higher-scoring agents first among ready nodes.

# %%
import numpy as np

from contribdag import approx_contribution, form_graph, similarity_matrix
from contribdag.topology import roots

rng = np.random.default_rng(4)
centre = rng.standard_normal(16)
rs = centre + 0.8 * rng.standard_normal((6, 16))

scores = approx_contribution(rs)
graph = form_graph(similarity_matrix(rs), scores, tau=0.5, k=2)
print("psi     ", np.round(scores.psi, 3))
print("edges   ", sorted(graph.edges))
print("removed ", graph.removed_edges)
print("order   ", graph.topo_order)
print("roots   ", roots(graph))

# %% [markdown]
# The "prose" rule only allows edges from a higher to a lower score, so no
# cycle ever needs to be cut.

# %%
prose = form_graph(similarity_matrix(rs), scores, tau=0.5, k=2, edge_rule="prose")
print("prose edges", sorted(prose.edges), "removed", prose.removed_edges)
