import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_density_matrix
from stoqmps import spectrum as sp
from stoqmps.ansatz import CircuitAnsatz, random_ansatz
from stoqmps.models import PauliString, heisenberg, sdim
from stoqmps.network import (
    NetworkError,
    StoQmpsNetwork,
    brute_force_rho,
    correlator,
    energy_density,
    fit_correlation_length,
    fixed_point,
    free_energy_density,
    site_channel,
    site_energies,
)
from stoqmps.spectrum import CSA, PSA


def _random_network(rng, q, kind, tau=2, mode="infinite", **kw):
    a = random_ansatz(q, tau, "ladder", "angles", rng)
    s = PSA(float(rng.uniform(0.05, 0.95))) if kind == "psa" else CSA(*rng.uniform(-1.5, 1.5, 2))
    return StoQmpsNetwork(a, s, mode, **kw)


def test_identity_channel_is_identity_on_bond(rng):
    net = StoQmpsNetwork(CircuitAnsatz(1, 1), PSA(0.0))
    ch = site_channel(net)
    rho = random_density_matrix(rng, 2)
    assert np.allclose(ch(rho[None])[0], rho, atol=1e-14)


@pytest.mark.parametrize("kind", ["psa", "csa"])
@pytest.mark.parametrize("q", [1, 2, 3])
def test_channel_trace_preserving_and_cp(kind, q, rng):
    ch = site_channel(_random_network(rng, q, kind))
    env = np.stack([random_density_matrix(rng, 2**q) * w for w in rng.dirichlet(np.ones(ch.n_hidden))])
    out = ch(env)
    assert abs(np.einsum("cii->", out) - 1) < 1e-12
    for d in range(ch.n_hidden):
        assert np.linalg.eigvalsh(ch.choi(d)).min() > -1e-9


def test_identity_channel_fixed_point_is_maximally_mixed():
    net = StoQmpsNetwork(CircuitAnsatz(2, 1), PSA(0.0))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        env = fixed_point(site_channel(net))
    assert env.degenerate and caught
    assert np.allclose(env.rho, np.eye(4) / 4)


def test_swap_channel_fixed_point_is_input_state():
    # SWAP feeds the physical input into the bond: the fixed point is diag(1-p, p)
    swap = np.eye(4)[[0, 2, 1, 3]]
    a = CircuitAnsatz(1, 1, "ladder", "raw", swap[None].astype(complex))
    env = fixed_point(site_channel(StoQmpsNetwork(a, PSA(0.3))))
    assert np.allclose(env.rho, np.diag([0.7, 0.3]), atol=1e-12)


@pytest.mark.parametrize("kind", ["psa", "csa"])
def test_fixed_point_matches_dense_eigenvector(kind, rng):
    ch = site_channel(_random_network(rng, 2, kind))
    env = fixed_point(ch)
    w, v = np.linalg.eig(ch.matrix())
    top = v[:, np.argmax(np.abs(w))]
    top = top / top.reshape(ch.n_hidden, ch.chi, ch.chi).trace(axis1=1, axis2=2).sum()
    assert np.abs(top - env.blocks.reshape(-1)).max() < 1e-10
    rho = env.rho
    assert np.allclose(rho, rho.conj().T, atol=1e-12)
    assert np.linalg.eigvalsh(rho).min() > -1e-10
    assert abs(np.trace(rho) - 1) < 1e-12


@pytest.mark.parametrize("ham", [sdim(1.0), heisenberg()])
def test_infinite_temperature_proxy(ham):
    net = StoQmpsNetwork(CircuitAnsatz(2, 2), PSA(0.5))
    assert abs(energy_density(net, ham)) < 1e-14
    res = free_energy_density(net, ham, 0.7)
    assert abs(res.free_energy + 0.7 * np.log(2)) < 1e-14
    assert free_energy_density(net, ham, 0.0).free_energy == res.energy


def test_product_state_energy():
    # identity circuit, PSA p: <Z> = 1 - 2p, <XX> = 0
    net = StoQmpsNetwork(CircuitAnsatz(1, 1), PSA(0.2))
    assert abs(energy_density(net, sdim(0.0)) + 0.6) < 1e-14


@pytest.mark.parametrize("kind", ["psa", "csa"])
@pytest.mark.parametrize("q", [1, 2])
def test_finite_mode_matches_brute_force(kind, q, rng):
    L = 6
    for ham in (sdim(0.0), sdim(1.0)):
        r = ham.max_range
        net = _random_network(rng, q, kind, mode="finite", L=L, window=(1, L - r + 1))
        bf = brute_force_rho(net, L)
        per_site = site_energies(net, ham)
        ref = [bf.site_energy(ham, i) for i in range(L - r + 1)]
        assert np.abs(per_site - ref).max() < 1e-10
        assert abs(bf.joint_entropy() - sp.finite_entropy(net.spectrum, L)) < 1e-10


def test_brute_force_state_properties(rng):
    net = _random_network(rng, 2, "csa", mode="finite", L=5, window=(1, 4))
    rho = brute_force_rho(net, 5).rho
    assert np.allclose(rho, rho.conj().T, atol=1e-12)
    assert np.linalg.eigvalsh(rho).min() > -1e-10
    assert abs(np.trace(rho) - 1) < 1e-10
    pure = brute_force_rho(StoQmpsNetwork(CircuitAnsatz(2, 1), PSA(0.0)), 4).rho
    expected = np.zeros((16, 16))
    expected[0, 0] = 1
    assert np.allclose(pure, expected)
    with pytest.raises(NetworkError):
        brute_force_rho(net, 9)


def test_identity_circuit_entropy_is_shannon(rng):
    params = CSA(0.6, -0.2)
    bf = brute_force_rho(StoQmpsNetwork(CircuitAnsatz(1, 1), params), 6)
    ev = np.linalg.eigvalsh(bf.rho)
    ev = ev[ev > 1e-15]
    assert abs(-np.sum(ev * np.log(ev)) - sp.enumerated_entropy(params, 6)) < 1e-10


@pytest.mark.parametrize("q", [1, 2, 3])
def test_bulk_window_is_flat_and_matches_infinite(q, rng):
    net = _random_network(rng, q, "psa", mode="finite")
    e = site_energies(net, sdim(1.0))
    assert np.ptp(e) < 1e-8
    bulk = StoQmpsNetwork(net.ansatz, net.spectrum)
    assert abs(e.mean() - energy_density(bulk, sdim(1.0))) < 1e-6


def test_window_validation(rng):
    with pytest.raises(NetworkError):
        StoQmpsNetwork(CircuitAnsatz(1, 1), PSA(0.5), "finite", L=10, window=(5, 11))
    net = StoQmpsNetwork(CircuitAnsatz(1, 1), PSA(0.5), "finite", L=10, window=(5, 10))
    with pytest.raises(NetworkError):
        site_energies(net, sdim(0.0))


def test_product_state_correlators_vanish():
    net = StoQmpsNetwork(CircuitAnsatz(2, 1), PSA(0.5))
    res = correlator(net, PauliString("Z"), PauliString("Z"), 6)
    assert np.abs(res.connected).max() < 1e-14


def test_clustering(rng):
    net = _random_network(rng, 2, "psa", tau=3)
    res = correlator(net, PauliString("Z"), PauliString("Z"), 200)
    assert res.xi is not None
    d = int(np.ceil(20 * res.xi))
    assert d <= 200
    assert abs(res.connected[d - 1]) < 1e-8


def test_correlation_length_fit():
    d = np.arange(1, 15)
    assert abs(fit_correlation_length(d, 0.3 * np.exp(-d / 2.5)) - 2.5) < 1e-10
    assert fit_correlation_length(d, np.zeros(d.size)) is None


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=10, deadline=None)
def test_energy_is_bounded_by_cell_spectrum(seed):
    r = np.random.default_rng(seed)
    net = _random_network(r, 1, "csa")
    ham = sdim(1.0)
    ev = np.linalg.eigvalsh(ham.cell_matrix())
    e = energy_density(net, ham)
    assert ev[0] - 1e-12 <= e <= ev[-1] + 1e-12
