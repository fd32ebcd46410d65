# %% [markdown]
# # A simulated multi-round run
#
# Simulated agents answer correctly with probability p; after reading a correct
# peer they answer correctly with a higher probability. Embeddings of the same
# answer cluster tightly, different answers stay apart.

# %%
from contribdag import OrchestratorConfig, SimAgentModel, SimPopulation, default_roster, run

model = SimAgentModel.uniform(0.45, 6, p_uplift=0.7)
pop = SimPopulation(models=(model,) * 4, roles=tuple(default_roster(4)))
cfg = OrchestratorConfig(n_agents=4, tau=0.5, k=2, rounds=3, seed=11)

res = run("What is 17 * 3?", cfg, pop.agents(cfg.seed, 0))
for state in res.states:
    answers = [r.text.split()[-1] for r in state.responses]
    print(f"round {state.round}: order={state.graph.topo_order} answers={answers} "
          f"output=agent {state.round_output[0]}")
print("final correct:", res.final_correct, "tokens:", res.total_tokens)

# %% [markdown]
# Accuracy over many seeds, compared with a lone agent.

# %%
from contribdag.analysis import PopulationSpec, single_agent_accuracy, summarize_sweep, sweep

spec = PopulationSpec(agents=(model,), n_trials=300, seed=0)
summary = summarize_sweep(sweep([cfg], spec))[0]
print(f"team accuracy {summary['accuracy']:.3f}  vs single agent {single_agent_accuracy(model, 300):.3f}")
