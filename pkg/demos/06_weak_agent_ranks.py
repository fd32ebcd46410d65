# %% [markdown]
# # Where does a weaker agent rank?
#
# Three strong agents and one weak one answer independently; we tally the
# weak agent's score rank over many trials.

# %%
from contribdag.analysis import rank_histogram, strong_weak_pool

hist = rank_histogram(strong_weak_pool(3, 1, n_trials=1000, seed=3))
print("weak agent rank distribution (rank 1 .. 4):", hist.fractions()[3].round(3))
print("entropy:", round(hist.entropy(3), 3))

mixed = rank_histogram(strong_weak_pool(2, 2, n_trials=1000, seed=3))
print("2 strong + 2 weak, weak agent entropy:", round(mixed.entropy(3), 3))
