# %% [markdown]
# # Scoring responses by alignment with the group
#
# Each response is embedded, and its score is the cosine between its vector and
# the mean of all vectors. Exact Shapley values over the cosine-to-mean game are
# the expensive reference; for small teams we can compare the two directly.

# %%
import numpy as np

from contribdag import HashEmbedder, approx_contribution, bound_certificate, exact_shapley

emb = HashEmbedder()
texts = [
    "Six times seven is 42, so the answer is 42.",
    "Multiplying 6 by 7 gives 42. Answer: 42.",
    "I think it is 48 because 6 times 8 is 48.",
    "The product is 42.",
]
rs = np.vstack([emb.embed(t) for t in texts])

# %%
scores = approx_contribution(rs)
phi = exact_shapley(rs).phi
for i, t in enumerate(texts):
    print(f"psi={scores.psi[i]:.3f}  shapley={phi[i]:.3f}  {t}")
print("efficiency: sum of Shapley values =", round(phi.sum(), 6))

# %% [markdown]
# The certificate reports the per-agent scale factor L relating the two scores
# and the residual after rescaling.

# %%
cert = bound_certificate(rs)
print("L        ", np.round(cert.L, 3))
print("residual ", np.round(cert.residuals, 4))
print("bound    ", round(cert.bound, 4), "holds:", cert.holds)
