"""
Optimal noise against chain length.

The optimal noise level falls roughly as b/(N + c). This script scans a
coarse set of chain lengths and fits the law, printing both the
nonlinear fit with its 95% intervals and the linear cross-check.

Run with ``python demos/scaling_law.py`` (under a minute).
"""

from qtransport import fit_scaling, scan_family

Ns = list(range(10, 101, 15))
res = scan_family("chain", Ns, "end", Gamma=3.0, tol=1e-5)
for N, r in res.items():
    print(f"N = {N:3d}: p_opt = {r.p_opt:.5f}")
rep = fit_scaling({N: r.p_opt for N, r in res.items()})
print(f"b = {rep.b:.3f} ({rep.ci_b[0]:.3f}, {rep.ci_b[1]:.3f}), c = {rep.c:.3f} ({rep.ci_c[0]:.3f}, {rep.ci_c[1]:.3f})")
print(f"linear cross-check: b = {rep.b_linear:.3f}, c = {rep.c_linear:.3f}")
