"""
Where the penalty bound comes from.

The discrete flux is controlled by the interface trace of the gradient,
||beta du/dn||_Gamma <= C_I h^-1/2 ||beta^1/2 grad u||. We compute C_I as the
largest eigenvalue of a small generalized pencil and then sample the
stabilized form to see that it stays coercive below gamma0 = 1/C_I^2.
"""
from nitsche_mortar import build_rect_tri_mesh, discretize, estimate_trace_constant, fe_space
from nitsche_mortar.checks import coercivity_ratios
from nitsche_mortar.system import admissible_gamma0

# %% the constant does not move under uniform refinement
for h in (1 / 4, 1 / 8, 1 / 16):
    d = discretize(h, h)
    print(f"h={h:.4f}  C_I left {estimate_trace_constant(d.space1):.6f}  right {estimate_trace_constant(d.space2):.6f}")
print("2^(3/4) =", 2 ** 0.75)

# %% refining only along the interface keeps it bounded, flattening the
# cells toward the interface does not
left = (0.0, 0.5, 0.0, 1.0)
for nx, ny in [(2, 4), (2, 16), (2, 64), (8, 4), (32, 4)]:
    space = fe_space(build_rect_tri_mesh(left, nx, ny, "NE", "right"))
    print(f"nx={nx:2d} ny={ny:2d}  C_I {estimate_trace_constant(space):.4f}")

# %% coercivity of the stabilized form just under the admissible penalty
print("admissible gamma0 for beta=(1,1):", admissible_gamma0(1.0, 1.0, 2 ** 0.75))
ratios, gamma0 = coercivity_ratios(samples=100)
print(f"gamma0={gamma0:.4f}  min A(v,mu;v,mu)/|||v,mu|||^2 = {ratios.min():.4f}")
