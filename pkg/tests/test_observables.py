import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import dense_dwelling_time
from qtransport.dynamics import ModelSpec, initial_density, propagate
from qtransport.lattice import build
from qtransport.observables import (
    DivergenceError,
    MomentumBasis,
    _EigSylvester,
    _Sylvester,
    _sylvester_solver,
    dwelling_time,
    group_velocity,
    momentum_basis,
    momentum_map,
    momentum_populations,
    population,
    write_momentum_map,
)
from qtransport.spectral import HamiltonianSpec


@pytest.mark.parametrize(
    "lat, p, noise",
    [
        (build("chain", 3, "end"), 0.1, "CH"),
        (build("chain", 5, "end"), 0.0, "CH"),
        (build("ring", 5, [1]), 0.2, "CH"),
        (build("rectangle", (2, 3), "corner"), 0.5, "PD"),
        (build("square", 2, "corner"), 1.0, "CH"),
    ],
)
def test_resolvent_matches_dense_oracle(lat, p, noise):
    model = ModelSpec(lat, p=p, noise=noise)
    rho0 = initial_density("uniform", lat.n_sites)
    ref = dense_dwelling_time(lat, p, rho0, noise=noise)
    assert dwelling_time(model) == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize(
    "kind, dims, spec, p, noise",
    [
        ("chain", 20, "end", 0.03, "CH"),
        ("chain", 12, "end", 0.0, "CH"),
        ("ring", 15, "end", 0.1, "CH"),
        ("square", 4, "corner", 0.2, "PD"),
        ("rectangle", (3, 5), "corner", 0.05, "CH"),
    ],
)
def test_integrate_agrees_with_resolvent(kind, dims, spec, p, noise):
    model = ModelSpec(build(kind, dims, spec), p=p, noise=noise)
    a = dwelling_time(model, method="resolvent")
    b = dwelling_time(model, method="integrate")
    assert abs(a - b) <= 1e-4 * a


def test_iterative_path_matches_explicit(monkeypatch):
    import qtransport.observables as obs

    model = ModelSpec(build("rectangle", (4, 6), "corner"), p=0.2)
    explicit = dwelling_time(model)
    monkeypatch.setattr(obs, "_EXPLICIT_MAX", 4)
    assert dwelling_time(model) == pytest.approx(explicit, rel=1e-9)


def test_schur_and_eigen_solvers_agree():
    model = ModelSpec(build("rectangle", (3, 4), "corner"), p=0.2)
    K = model.generator.K
    rng = np.random.default_rng(3)
    A = rng.normal(size=K.shape) + 1j * rng.normal(size=K.shape)
    M = A + A.conj().T
    s1 = _Sylvester(K)
    s2 = _sylvester_solver(K)
    assert isinstance(s2, _EigSylvester)
    np.testing.assert_allclose(s1.diag_solve(M), s2.diag_solve(M), atol=1e-10)
    np.testing.assert_allclose(s1.diag_solve_population(4), s2.diag_solve_population(4), atol=1e-10)


def test_single_site_dwelling_time_is_inverse_rate():
    model = ModelSpec(build("chain", 1, [1]), Gamma=2.5)
    assert dwelling_time(model) == pytest.approx(1 / 2.5)


def test_locked_network_diverges():
    model = ModelSpec(build("square", 5, "corner"), p=0.0)
    with pytest.raises(DivergenceError):
        dwelling_time(model)
    # any classical noise unlocks it
    assert np.isfinite(dwelling_time(model.with_p(0.01)))


def test_no_sink_diverges():
    model = ModelSpec(build("chain", 4, "end"), Gamma=0.0, p=0.1)
    for method in ("resolvent", "integrate"):
        with pytest.raises(DivergenceError):
            dwelling_time(model, method=method)


def test_unknown_method():
    with pytest.raises(ValueError):
        dwelling_time(ModelSpec(build("chain", 3, "end")), method="magic")


def test_momentum_basis_diagonalises_chain():
    N, p = 11, 0.2
    b = momentum_basis(build("chain", N, "end"), p=p)
    V = b.vectors
    np.testing.assert_allclose(V.T @ V, np.eye(N), atol=1e-12)
    H = HamiltonianSpec.regular(build("chain", N, "end"), (1 - p)).matrix()
    np.testing.assert_allclose(V.T @ H @ V, np.diag(b.energies), atol=1e-12)
    np.testing.assert_allclose(b.velocities, 2 * (1 - p) * np.sin(b.k), atol=1e-14)
    assert group_velocity(b, 6) == pytest.approx(2 * (1 - p))
    with pytest.raises(ValueError):
        group_velocity(b, 0)
    with pytest.raises(ValueError):
        momentum_basis(build("ring", 5, "end"))
    with pytest.raises(ValueError):
        MomentumBasis(0)


@settings(max_examples=15, deadline=None)
@given(N=st.integers(2, 25), p=st.floats(0.0, 1.0))
def test_momentum_populations_sum_to_P(N, p):
    model = ModelSpec(build("chain", N, "end"), p=p)
    ts = propagate(model, "uniform", 10.0, n_out=11)
    Pk = momentum_map(ts.rho, momentum_basis(N, p))
    np.testing.assert_allclose(Pk.sum(axis=0), ts.P, atol=1e-10)
    assert Pk.shape == (N, 11)
    np.testing.assert_allclose(momentum_populations(ts.state(5), momentum_basis(N, p)), Pk[:, 5], atol=1e-14)
    assert population(ts.state(5)) == pytest.approx(ts.P[5])


def test_momentum_map_csv(tmp_path):
    path = tmp_path / "pk.csv"
    write_momentum_map(path, [0.0, 1.0], np.array([[0.5, 0.25], [0.5, 0.25]]))
    lines = path.read_text().splitlines()
    assert lines[0] == "n,0.0,1.0"
    assert lines[2] == "2,0.5,0.25"
