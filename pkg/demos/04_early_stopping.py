# %% [markdown]
# # Stopping once the team agrees
#
# With gamma set, a run halts as soon as every pair of responses is at least
# gamma-similar. Tokens drop; accuracy should barely move.

# %%
from contribdag import OrchestratorConfig, SimAgentModel
from contribdag.analysis import PopulationSpec, summarize_sweep, sweep

model = SimAgentModel.uniform(0.35, 6, p_uplift=0.95)
pop = PopulationSpec(agents=(model,), n_trials=300, seed=100)
configs = [OrchestratorConfig(n_agents=4, rounds=3, gamma=g) for g in (None, 0.95, 0.9)]
for s, g in zip(summarize_sweep(sweep(configs, pop)), (None, 0.95, 0.9)):
    tokens = s["prompt_tokens"] + s["completion_tokens"]
    print(f"gamma={g}: accuracy={s['accuracy']:.3f} mean_rounds={s['mean_rounds']:.2f} tokens={tokens}")
