"""
Convergence of the stabilized Nitsche-mortar discretization.

The unit square is split at x = 1/2 and meshed independently on each side,
with the right mesh finer than the left (h2 = 2 h1 / 3), so the interface
nodes never line up. We solve the manufactured problem for three coefficient
contrasts and watch the L2 error of u and of the flux multiplier fall.
"""
import numpy as np

from nitsche_mortar import StudyConfig, run_convergence_study

# %% moderate contrast, default penalty
cfg = StudyConfig(beta1=1.0, beta2=10.0)
rep = run_convergence_study(cfg)
print(rep.to_markdown())
print("final rates p=%.3f q=%.3f" % (rep.p[-1], rep.q[-1]))

# %% very large contrast: the weighted average keeps the method balanced
for beta in [(1.0, 1e7), (1e-7, 1e7)]:
    rep = run_convergence_study(StudyConfig(beta1=beta[0], beta2=beta[1]))
    print(beta, "p by level", np.round(rep.p, 3), "max residual %.1e" % max(rep.residuals))

# %% the same study through a config file, as the command line tool reads it
from nitsche_mortar import parse_config

cfg = parse_config("beta1 = 1\nbeta2 = 10\nlevels = 3\n")
print(run_convergence_study(cfg).to_csv())
