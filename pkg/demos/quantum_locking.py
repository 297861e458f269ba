"""
Quantum locking on a clean square lattice.

Some Hamiltonian eigenstates can have zero amplitude on every exit site.
Population in those states never leaves when there is no noise. The
spectral prediction (overlap of the initial state with the locked
subspace) is compared with the long-time limit of the dynamics, and a
small random perturbation of the couplings is shown to unlock the
network.

Run with ``python demos/quantum_locking.py``.
"""

from qtransport import (HamiltonianSpec, ModelSpec, build, limiting_population, locked_states, locking_probability,
                        perturb)

lat = build("square", 5, "corner")
clean = HamiltonianSpec.regular(lat, 1.0)
for name, hs in (("clean", clean), ("disorder 1e-3", perturb(clean, 1e-3, seed=0))):
    rep = locked_states(hs)
    P_spec = locking_probability(rep, "uniform")
    P_dyn, t_settle = limiting_population(ModelSpec(lat, p=0.0, Gamma=3.0, hamiltonian=hs), "uniform")
    print(f"5x5 square, {name}: locked dimension {rep.locked_dimension}, "
          f"P(inf) spectral {P_spec:.6f}, dynamical {P_dyn:.6f} (settled by t ~ {t_settle:.2g})")

for n, m in ((4, 6), (5, 6)):
    dim = locked_states(HamiltonianSpec.regular(build("rectangle", (n, m), "corner"), 1.0)).locked_dimension
    print(f"{n}x{m} rectangle, corner exit: locked dimension {dim}")
