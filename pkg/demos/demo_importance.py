"""
Exposure importance for an additive mixture model
=================================================

Fit an additive exposure-response model to a four-exposure mixture in
which only the first two exposures matter, then rank the exposures by
the share of surface variance each one explains. The importance measure
integrates each exposure out against its estimated conditional
distribution, so correlated exposures are handled without assuming
independence.
"""

import numpy as np

from mixborrow import build_additive_spec, run_chain
from mixborrow.importance import (ConditionalModel, exposure_importance,
                                  surface_draws_from_chain)
from mixborrow.model import Dataset

# four correlated exposures; the response depends on x1 and x2 only
rng = np.random.default_rng(8)
n, P = 600, 4
S = 0.5 ** np.abs(np.subtract.outer(np.arange(P), np.arange(P)))
X = rng.standard_normal((n, P)) @ np.linalg.cholesky(S).T
f_true = 1.5 * np.tanh(X[:, 0]) + X[:, 1]
data = Dataset(Y=(f_true + 0.5 * rng.standard_normal(n))[:, None], Xstar=X)

spec = build_additive_spec(P=P, K=1, C=4)
chain = run_chain(spec, data, n_iter=800, burn_in=400, thin=2, seed=9)

# posterior surface draws at the observed exposures, one row per draw
surfaces = surface_draws_from_chain(chain, spec, data)

# kernel-estimated conditional means; bandwidths default to Silverman's rule
cond = ConditionalModel(kind="kernel")

print("exposure importance (true signal: x1, x2):")
phis = []
for p in range(P):
    res = exposure_importance(surfaces[0], data.Xstar, p, cond)
    phis.append(res["mean"])
    print(f"  x{p + 1}  Phi={res['mean']:.3f}  "
          f"[{res['lower']:.3f}, {res['upper']:.3f}]")

order = np.argsort(phis)[::-1]
print("ranking:", ", ".join(f"x{p + 1}" for p in order))

# the same measure evaluated on the noiseless truth, for reference
print("reference on the true surface:")
for p in range(P):
    res = exposure_importance(f_true, data.Xstar, p, cond)
    print(f"  x{p + 1}  Phi={res['mean']:.3f}")
