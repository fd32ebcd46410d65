# %% [markdown]
# # Why agreement points to the right answer
#
# Two independent agents agree on the correct answer with probability p^2 and
# on one shared wrong answer with probability sum p_k^2. When errors are spread
# out the first dominates. With at least two correct agents and well separated
# answer clusters, correct responses also score highest.

# %%
from contribdag.analysis import (
    lemma1_check,
    lemma1_monte_carlo,
    lemma2_check,
    lemma2_counterexample,
    prob_at_least_two_correct,
)
from contribdag.valuation import approx_contribution

print(lemma1_check(0.6, (0.2, 0.2)))
print("monte carlo:", lemma1_monte_carlo(0.6, (0.2, 0.2), trials=100_000, seed=1))
for n in (3, 4, 5, 7):
    print(f"N={n}: P(at least two correct at p=0.5) = {prob_at_least_two_correct(0.5, n):.4f}")

# %%
for sizes in ((2, 2), (3, 3)):
    print(sizes, lemma2_check(*sizes, alpha=0.8, beta=0.3, dim=16, trials=500, seed=0))

# %% [markdown]
# The separation needs non-negative similarity between answer clusters. When
# wrong answers lean away from the right one, an incorrect response can score
# higher even though the clustering constraints hold.

# %%
rs, n_correct = lemma2_counterexample()
psi = approx_contribution(rs).psi
print("correct psi  ", psi[:n_correct].round(3))
print("incorrect psi", psi[n_correct:].round(3))
