"""
The parameter S switches the flux-flux stabilization on and off.

S = 1 gives a symmetric saddle system, S = 0 drops the flux terms from the
primal rows and leaves a plain mortar coupling plus the multiplier penalty.
Both converge at second order in L2 on this problem.
"""
import numpy as np

from nitsche_mortar import MethodParams, StudyConfig, build_saddle_system, discretize, run_convergence_study
from nitsche_mortar.analysis import manufactured_problem

pb = manufactured_problem(1.0, 10.0)
disc = discretize(1 / 8, 1 / 12)
for S in (1.0, 0.5, 0.0):
    A = build_saddle_system(pb, MethodParams(S=S), disc).A
    print(f"S={S}  max|A - A^T| = {abs(A - A.T).max():.2e}")

for S in (1.0, 0.0):
    rep = run_convergence_study(StudyConfig(beta1=1.0, beta2=10.0, S=S))
    print(f"S={S}  e_u {np.array2string(rep.column('e_u_l2'), precision=3)}  p {np.round(rep.p, 3)}")
