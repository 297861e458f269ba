"""
Independent reference implementations used only by the tests.

The dense oracle builds the full Lindbladian on the (S+1)-dimensional
space {|g>, |1>, ..., |S>} from ladder operators, with no use of the
split form in the package, and propagates with one dense matrix
exponential.
"""

import numpy as np
import scipy.linalg as sla


def ladder_ops(S):
    """sigma^+_i = |i><g| and sigma^-_i = |g><i| on the (S+1)-dim space."""
    plus = []
    for i in range(1, S + 1):
        op = np.zeros((S + 1, S + 1), dtype=complex)
        op[i, 0] = 1.0
        plus.append(op)
    return plus, [op.conj().T for op in plus]


def sigma_z(S, i):
    """|e><e|_i - |g><g|_i restricted to the single-excitation sector."""
    diag = -np.ones(S + 1)
    diag[i] = 1.0
    return np.diag(diag).astype(complex)


def dense_lindbladian(lattice, p, J=1.0, noise="CH", Gamma=3.0, H_sites=None):
    S = lattice.n_sites
    sp_, sm = ladder_ops(S)
    H = np.zeros((S + 1, S + 1), dtype=complex)
    if H_sites is None:
        for i, j in lattice.edges:
            H += -(1 - p) * J * (sp_[i - 1] @ sm[j - 1] + sp_[j - 1] @ sm[i - 1])
    else:
        H[1:, 1:] = H_sites
    Ls = []
    if noise == "CH":
        z = 2 if lattice.kind in ("chain", "ring") else 4
        for i, j in lattice.edges:
            Ls.append(np.sqrt(p * J / z) * sp_[i - 1] @ sm[j - 1])
            Ls.append(np.sqrt(p * J / z) * sp_[j - 1] @ sm[i - 1])
    else:
        for i in range(1, S + 1):
            Ls.append(np.sqrt(p * J / 4) * sigma_z(S, i))
    for x in lattice.exits:
        Ls.append(np.sqrt(Gamma) * sm[x - 1])
    n = S + 1
    I = np.eye(n)
    # column-stacking vec: vec(A X B) = (B^T kron A) vec(X)
    L = -1j * (np.kron(I, H) - np.kron(H.T, I))
    for Lk in Ls:
        LdL = Lk.conj().T @ Lk
        L += np.kron(Lk.conj(), Lk) - 0.5 * np.kron(I, LdL) - 0.5 * np.kron(LdL.T, I)
    return L


def embed(rho_sites):
    S = rho_sites.shape[0]
    out = np.zeros((S + 1, S + 1), dtype=complex)
    out[1:, 1:] = rho_sites
    return out


def dense_propagate(lattice, p, rho0_sites, t, **kw):
    """Full (S+1)x(S+1) density matrix at time ``t``."""
    L = dense_lindbladian(lattice, p, **kw)
    n = lattice.n_sites + 1
    v = sla.expm(L * t) @ embed(rho0_sites).reshape(-1, order="F")
    return v.reshape(n, n, order="F")


def dense_dwelling_time(lattice, p, rho0_sites, **kw):
    """Integral of the site-sector trace, from the site-block resolvent."""
    L = dense_lindbladian(lattice, p, **kw)
    n = lattice.n_sites + 1
    idx = [a + n * b for b in range(1, n) for a in range(1, n)]
    Ls = L[np.ix_(idx, idx)]
    x = np.linalg.solve(Ls, -rho0_sites.reshape(-1, order="F"))
    S = n - 1
    return float(np.real(np.trace(x.reshape(S, S, order="F"))))


def nullspace_locked_dimension(H, exits, tol=1e-9):
    """Locked dimension as the sum over distinct eigenvalues E of
    dim null([H - E; exit rows])."""
    E = np.linalg.eigvalsh(H)
    distinct = []
    for e in E:
        if not distinct or abs(e - distinct[-1]) > 1e-7:
            distinct.append(e)
    S = H.shape[0]
    P = np.zeros((len(exits), S))
    for r, x in enumerate(exits):
        P[r, x - 1] = 1.0
    total = 0
    for e in distinct:
        M = np.vstack([H - e * np.eye(S), P])
        s = np.linalg.svd(M, compute_uv=False)
        total += int(np.sum(s < tol * max(1.0, s.max())))
    return total


def krylov_locked_dimension(H, exits, tol=1e-9):
    """S minus the dimension of the smallest H-invariant subspace that
    contains every exit vector (the part of the space the sink can see)."""
    S = H.shape[0]
    V = np.zeros((S, 0))
    block = np.zeros((S, len(exits)))
    for r, x in enumerate(exits):
        block[x - 1, r] = 1.0
    for _ in range(S + 1):
        if V.shape[1]:
            block = block - V @ (V.T @ block)
            block = block - V @ (V.T @ block)
        if block.size == 0:
            break
        U, s, _ = np.linalg.svd(block, full_matrices=False)
        keep = U[:, s > tol]
        if keep.shape[1] == 0:
            break
        V = np.hstack([V, keep])
        block = H @ keep
    return S - V.shape[1]
