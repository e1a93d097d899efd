"""Recovery defects of compatible vs obstructed data, and slit capacity.

Two quantitative probes of how the solution spaces converge:

* the first recovery defect: a datum that is compatible with the crack
  (it vanishes on the crack line) transfers onto every member space with
  a defect at the discretization floor, while a bump hidden behind a
  fixed hole keeps a large defect no matter how far the family runs;
* the discrete capacity of the residual crack stub [0, delta_n] x {0}
  decreases with n, the potential-theoretic reason the Dirichlet limit
  is the slit domain and not something smaller.
"""

import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

import moscolab as ml
from moscolab.fem import FunctionSpace, interpolate
from moscolab.mosco import capacity, m1_defect, segment_target

OUT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "out")
os.makedirs(OUT, exist_ok=True)

# odd in x2, so it vanishes on the crack line and survives the transfer
compatible = lambda x: x[:, 1] * (1 - x[:, 0] ** 2 - x[:, 1] ** 2)


def bump(x):
    s2 = (x[:, 0] ** 2 + x[:, 1] ** 2) / 0.2 ** 2
    out = np.zeros(len(x))
    out[s2 < 1] = np.exp(1.0 - 1.0 / (1.0 - s2[s2 < 1]))
    return out


fam = ml.DomainFamily("cracked_disk", 0.06, n_max=5)
limit = FunctionSpace(fam.limit_mesh(), "dirichlet")
u = interpolate(limit, compatible)
members = range(1, fam.n_max + 1)
deltas = list(fam.params)
defects = [m1_defect(u, FunctionSpace(fam.mesh(n), "dirichlet"))
           for n in members]

hole = ml.DomainFamily("fixed_hole", 0.06, n_max=5)
uh = interpolate(FunctionSpace(hole.limit_mesh(), "dirichlet"), bump)
hole_defects = [m1_defect(uh, FunctionSpace(hole.mesh(n), "dirichlet"))
                for n in members]

# capacity of the crack stubs inside the plain disk
space = FunctionSpace(ml.generate_disk(0.08), "dirichlet")
caps = [capacity(segment_target(space.mesh, (0.0, 0.0), (d, 0.0), 0.03),
                 space) for d in deltas]

print(f"compatible datum norm {u.norm_V():.3f}, "
      f"obstructed datum norm {uh.norm_V():.3f}\n")
print("   n   delta    compatible defect   obstructed defect   stub capacity")
for n, (d, dd, hd, c) in enumerate(zip(deltas, defects, hole_defects, caps),
                                   start=1):
    print(f"  {n:2d}  {d:.4f}   {dd:15.5f}   {hd:17.5f}   {c:13.5f}")
print("\nthe compatible defect sits at the mesh floor for every n; the"
      "\nobstructed one never drops, which is exactly the stagnant verdict"
      "\nof the negative-control study")

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
ax1.semilogx(deltas, defects, "o-", label="crack-compatible datum")
ax1.semilogx(deltas, hole_defects, "s--", label="hole-obstructed datum")
ax1.set_xlabel("family parameter")
ax1.set_ylabel("recovery defect")
ax1.set_ylim(bottom=0)
ax1.invert_xaxis()
ax1.legend()
ax2.semilogx(deltas, caps, "o-", color="tab:red")
ax2.set_xlabel("stub length delta_n")
ax2.set_ylabel("discrete capacity of [0, delta_n] x {0}")
ax2.invert_xaxis()
path = os.path.join(OUT, "defect_and_capacity_decay.png")
fig.tight_layout()
fig.savefig(path, dpi=130)
print(f"\nwrote {path}")
