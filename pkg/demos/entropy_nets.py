"""
Nets of DtN matrices and forced collisions
==========================================

A theta-discrete family has 2^n members, pairwise theta apart in sup norm.
The DtN differences of the members are quantized on a lattice of step
delta / 16 up to a truncation level l*. When the family has more members than
the net has cells, two members must share a cell, and then their DtN maps are
within 8 sqrt2 delta of each other.

Run with ``python demos/entropy_nets.py`` (about 20 s).
"""
# %%

from dtnlab.dtn_map import FamilyGammaBuilder
from dtnlab.entropy_nets import build_net_spec, check_net_property, pigeonhole_search, theta_delta_solve
from dtnlab.forward_solver import SolverConfig
from dtnlab.potentials import build_discrete_family

theta = 0.01
fam = build_discrete_family(theta, 1.0, 0.5, 6, regime="both")
print(f"{len(fam)} members, bump radius {fam.radius:.4f}, pairwise separation >= {theta}")

# %%
# Net parameters at low frequency (q_ref = 0, Phi = 1) for a few deltas.
for delta in (0.9, 0.1, 0.01):
    spec = build_net_spec(delta, "low", kappa2=1e-3)
    print(f"delta = {delta:5.2f}: l* = {spec.ell_star:3d}, log|Y| = {spec.log_cardinality:.3e}")

# %%
# Quantize every member and look for collisions.
builder = FamilyGammaBuilder(fam, 16, SolverConfig(M_trunc=24, N_rad=16))
gammas = builder.gammas(1e-3, 0.0, [theta])[theta]
spec = build_net_spec(0.01, "low", kappa2=1e-3)
nets = [check_net_property(g, spec) for g in gammas]
rep = pigeonhole_search(fam, spec, gammas)
print(f"all members within delta in X_s: {all(n.within for n in nets)}")
print(f"distinct cells: {len(set(rep.cell_hashes))}, colliding pairs: {len(rep.collisions)}")
if rep.collisions:
    worst = max(op / bound for _, _, op, bound in rep.collisions)
    print(f"largest collision distance / (8 sqrt2 delta) = {worst:.3e}")
a, b, xs, op = rep.min_pair
print(f"closest pair ({a}, {b}): X_s distance {xs:.3e}, operator distance {op:.3e}, sup-norm gap {fam.separation(a, b)}")

# %%
# The theta <-> delta relation: delta shrinks like exp(-theta^(-1/2) / 3) until
# the kappa^2 theta^(1/2) term takes over.
for th in (1e-2, 1e-4, 1e-6):
    row = [theta_delta_solve(th, k2, "low").delta for k2 in (1e-3, 0.1, 1.0)]
    print(f"theta = {th:.0e}: delta(kappa^2 = 1e-3, 0.1, 1) = " + ", ".join(f"{d:.3e}" for d in row))
