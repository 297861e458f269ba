import numpy as np
import pytest
from scipy.integrate import solve_ivp

from qtransport.drive import DriveSpec, omega_band, propagate_driven
from qtransport.dynamics import ModelSpec, propagate
from qtransport.lattice import build
from qtransport.observables import momentum_basis, momentum_map


def _vectorised_oracle(lattice, drive, Gamma, rho0, t_eval, J=1.0):
    """Driven model from explicit jump operators on the (2S+1)-dim space
    {|g>, |e_i>, |e'_i>}, integrated in the lab frame."""
    S = lattice.n_sites
    n = 2 * S + 1
    A = lattice.adjacency().toarray() if hasattr(lattice.adjacency(), "toarray") else lattice.adjacency()
    H0 = np.zeros((n, n), dtype=complex)
    H0[1:S + 1, 1:S + 1] = -J * A
    H0[S + 1:, S + 1:] = drive.omega * np.eye(S) - drive.Jprime * A
    V = np.zeros((n, n), dtype=complex)
    for i in range(S):
        V[S + 1 + i, 1 + i] = 1.0
    Ls = []
    for x in lattice.exits:
        op = np.zeros((n, n), dtype=complex)
        op[0, x] = np.sqrt(Gamma)
        Ls.append(op)
    for i in range(S):
        op = np.zeros((n, n), dtype=complex)
        op[1 + i, S + 1 + i] = np.sqrt(drive.gamma)
        Ls.append(op)

    def H(t):
        s = np.sin(2 * J * t)
        if drive.field == "complex":
            f = -drive.Omega * np.exp(-1j * drive.omega * t) * s
        else:
            f = -2 * drive.Omega * np.cos(drive.omega * t) * s
        return H0 + f * V + np.conj(f) * V.conj().T

    def rhs(t, y):
        r = y.reshape(n, n)
        h = H(t)
        d = -1j * (h @ r - r @ h)
        for L in Ls:
            LdL = L.conj().T @ L
            d += L @ r @ L.conj().T - 0.5 * (LdL @ r + r @ LdL)
        return d.ravel()

    R0 = np.zeros((n, n), dtype=complex)
    R0[1:S + 1, 1:S + 1] = rho0
    sol = solve_ivp(rhs, (0, t_eval[-1]), R0.ravel(), t_eval=t_eval, method="DOP853", rtol=1e-10, atol=1e-12,
                    max_step=0.25 / (drive.omega + 2))
    return sol.y.T.reshape(-1, n, n)


@pytest.mark.parametrize("field", ["complex", "real"])
def test_matches_jump_operator_oracle(field):
    lat = build("chain", 4, "end")
    drive = DriveSpec(omega=6.0, Omega=0.8, gamma=0.5, Jprime=0.2, field=field)
    t = np.linspace(0, 10, 6)
    rho0 = np.eye(4) / 4
    ref = _vectorised_oracle(lat, drive, 3.0, rho0, t)
    res = propagate_driven(ModelSpec(lat, Gamma=3.0), drive, "uniform", 10, t_eval=t, rtol=1e-10, atol=1e-12)
    up = np.real(np.einsum("kii->k", ref[:, 5:, 5:]))
    lo = np.real(np.einsum("kii->k", ref[:, 1:5, 1:5]))
    np.testing.assert_allclose(res.P_upper, up, atol=1e-7)
    np.testing.assert_allclose(res.P_lower, lo, atol=1e-7)
    np.testing.assert_allclose(res.exited, ref[:, 0, 0].real, atol=1e-7)
    np.testing.assert_allclose(res.rho_lower, ref[:, 1:5, 1:5], atol=1e-7)


def test_zero_drive_equals_passive_model():
    model = ModelSpec(build("chain", 10, "end"))
    t = np.linspace(0, 30, 7)
    res = propagate_driven(model, DriveSpec(Omega=0.0), "uniform", 30, t_eval=t, frame="rotating", rtol=1e-10,
                           atol=1e-12)
    ref = propagate(model, "uniform", 30, t_eval=t, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(res.P, ref.P, atol=1e-8)
    np.testing.assert_allclose(res.P_upper, 0.0, atol=1e-14)


def test_closed_system_conserves_probability():
    model = ModelSpec(build("chain", 6, "end"), Gamma=0.0)
    res = propagate_driven(model, DriveSpec(omega=5.0, Omega=1.0, gamma=0.0, field="real"), 2, 20, n_out=21,
                           frame="lab", rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(res.P, 1.0, atol=1e-8)
    np.testing.assert_allclose(res.exited, 0.0, atol=1e-12)
    assert res.P_upper.max() > 1e-3


def test_trace_and_positivity_with_everything_on():
    model = ModelSpec(build("chain", 8, "end"))
    res = propagate_driven(model, DriveSpec(Omega=0.5, gamma=0.4), "uniform", 40, n_out=41, frame="rotating")
    np.testing.assert_allclose(res.P + res.exited, 1.0, atol=1e-6)
    assert res.populations.min() >= -1e-8
    assert np.all(np.diff(res.P) <= 1e-9)


@pytest.mark.parametrize("field", ["complex", "real"])
def test_lab_and_rotating_frames_agree(field):
    model = ModelSpec(build("chain", 8, "end"))
    drive = DriveSpec(omega=8.0, Omega=0.5, gamma=0.4, field=field)
    t = np.linspace(0, 20, 5)
    a = propagate_driven(model, drive, "uniform", 20, t_eval=t, frame="lab", rtol=1e-10, atol=1e-12)
    b = propagate_driven(model, drive, "uniform", 20, t_eval=t, frame="rotating", rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(a.P_lower, b.P_lower, atol=1e-7)
    np.testing.assert_allclose(a.P_upper, b.P_upper, atol=1e-7)
    # the lower block does not rotate, so the coherences agree too
    np.testing.assert_allclose(a.rho_lower, b.rho_lower, atol=1e-7)


def test_drive_targets_band_edges():
    # starting in the slowest momentum state, the drive lifts it quickly
    N = 20
    model = ModelSpec(build("chain", N, "end"), Gamma=0.0)
    basis = momentum_basis(N)
    v_edge = basis.vectors[:, 0]
    v_mid = basis.vectors[:, N // 2 - 1]
    drive = DriveSpec(Omega=0.3, gamma=0.0)
    up = {}
    for name, v in (("edge", v_edge), ("mid", v_mid)):
        res = propagate_driven(model, drive, np.outer(v, v), 10, n_out=11, frame="rotating")
        up[name] = res.P_upper.max()
    assert up["edge"] > 10 * up["mid"]


def test_momentum_map_of_lower_tier_sums_to_population():
    model = ModelSpec(build("chain", 12, "end"))
    res = propagate_driven(model, DriveSpec(), "uniform", 20, n_out=11, frame="rotating")
    Pk = momentum_map(res.rho_lower, momentum_basis(12))
    np.testing.assert_allclose(Pk.sum(axis=0), res.P_lower, atol=1e-10)


def test_full_two_tier_initial_state():
    model = ModelSpec(build("chain", 3, "end"), Gamma=0.0)
    rho0 = np.zeros((6, 6))
    rho0[4, 4] = 1.0
    res = propagate_driven(model, DriveSpec(Omega=0.0, gamma=1.0), rho0, 5, t_eval=[0, 5], frame="rotating",
                           rtol=1e-10, atol=1e-12)
    assert res.P_upper[-1] == pytest.approx(np.exp(-5.0), rel=1e-6)


def test_omega_band_keys():
    band = omega_band(ModelSpec(build("chain", 6, "end")), DriveSpec(), omegas=(10, 20), t_max=5.0)
    assert set(band) == {10.0, 20.0}
    assert all(0 < v < 1 for v in band.values())


def test_invalid_inputs():
    model = ModelSpec(build("chain", 4, "end"))
    with pytest.raises(ValueError):
        propagate_driven(model.with_p(0.1), DriveSpec())
    with pytest.raises(ValueError):
        propagate_driven(model, DriveSpec(), frame="sideways")
    with pytest.raises(ValueError):
        propagate_driven(model, DriveSpec(), t_max=0)
    with pytest.raises(ValueError):
        DriveSpec(gamma=-1)
    with pytest.raises(ValueError):
        DriveSpec(Omega=-0.1)
    with pytest.raises(ValueError):
        DriveSpec(field="square")


def test_csv(tmp_path):
    res = propagate_driven(ModelSpec(build("chain", 4, "end")), DriveSpec(), "uniform", 2, n_out=3, frame="rotating")
    path = tmp_path / "driven.csv"
    res.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,tier,P,exited"
    assert len(lines) == 1 + 2 * 3
