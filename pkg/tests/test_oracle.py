import numpy as np
import pytest
import scipy.sparse as sps
from scipy.sparse.linalg import expm_multiply

from stoqmps import oracle
from stoqmps.models import PAULI, chain_hamiltonian, heisenberg, sdim


@pytest.mark.parametrize("ham", [sdim(0.0), sdim(1.0), heisenberg()])
@pytest.mark.parametrize("L", [5, 6, 8])
def test_momentum_blocks_match_dense(ham, L):
    dense = np.linalg.eigvalsh(chain_hamiltonian(ham, L))
    assert np.abs(oracle.ed_spectrum(ham, L, cache=False) - dense).max() < 1e-10


def test_translation_invariance():
    # relabelling sites i -> i + 1 leaves the spectrum unchanged
    h = chain_hamiltonian(sdim(1.0), 6)
    perm = np.array([int(format(b, "06b")[1:] + format(b, "06b")[0], 2) for b in range(64)])
    assert np.allclose(np.linalg.eigvalsh(h[np.ix_(perm, perm)]), oracle.ed_spectrum(sdim(1.0), 6))


def test_spectrum_cache_roundtrip(tmp_path, monkeypatch):
    monkeypatch.setenv("STOQMPS_CACHE", str(tmp_path))
    first = oracle.ed_spectrum(sdim(0.3), 6)
    assert list(tmp_path.glob("ed_sdim_L6_*.json"))
    assert np.array_equal(oracle.ed_spectrum(sdim(0.3), 6), first)


def test_ed_limits():
    with pytest.raises(ValueError):
        oracle.ed_spectrum(sdim(0.0), 15)
    with pytest.raises(ValueError):
        oracle.ed_thermodynamics(sdim(0.0), 6, -1.0)


def test_ed_high_temperature():
    res = oracle.ed_thermodynamics(sdim(1.0), 8, 1e6)
    assert abs(res.free_energy / -1e6 - np.log(2)) < 1e-5


def test_ed_zero_temperature():
    res = oracle.ed_thermodynamics(sdim(0.0), 8, 0.0)
    assert res.free_energy == res.energy
    assert res.entropy == 0.0


def _sparse_chain(ham, L):
    ops = {k: sps.csr_matrix(v) for k, v in PAULI.items()}
    h = sps.csr_matrix((2**L, 2**L), dtype=complex)
    for t in ham.terms:
        for i in range(L):
            labels = ["I"] * L
            for off, c in t.support():
                labels[(i + off) % L] = c
            m = ops[labels[0]]
            for c in labels[1:]:
                m = sps.kron(m, ops[c], format="csr")
            h = h + t.coeff * m
    return h.real.tocsc()


def test_heisenberg_against_sparse_trace():
    # independent oracle: tr exp(-H/T) from sparse propagation of basis blocks
    L, T = 12, 1.0
    h = _sparse_chain(heisenberg(), L)
    dim = 2**L
    shift = -2.0 * L  # below the ground energy, keeps every term <= 1
    h_shift = h - shift * sps.identity(dim, format="csc")
    z = 0.0
    for start in range(0, dim, 512):
        cols = np.arange(start, min(start + 512, dim))
        block = np.zeros((dim, cols.size))
        block[cols, np.arange(cols.size)] = 1.0
        z += np.trace(expm_multiply(-h_shift / T, block)[cols])
    f_sparse = (shift - T * np.log(z)) / L
    assert abs(oracle.ed_thermodynamics(heisenberg(), L, T).free_energy - f_sparse) < 1e-6


def test_sdim_finite_size_scale():
    # ~1% at the low end of the scanned range; the two sizes nearly cross at T = 1
    def gap(T):
        f8 = oracle.ed_thermodynamics(sdim(1.0), 8, T).free_energy
        f14 = oracle.ed_thermodynamics(sdim(1.0), 14, T).free_energy
        return abs(f8 - f14) / abs(f14)

    gaps = [gap(0.2 * k) for k in range(1, 16)]
    assert 0.005 < max(gaps) < 0.02
    assert abs(gap(1.0) - 1.153e-4) < 1e-6


@pytest.mark.parametrize("method", ["ed", "ff"])
def test_thermodynamic_identities(method):
    def result(T):
        if method == "ff":
            return oracle.tfim_free_energy(T)
        return oracle.ed_thermodynamics(sdim(1.0), 8, T)

    for T in (0.3, 0.8, 1.5, 3.0):
        dT = 1e-4
        slope = (result(T + dT).free_energy - result(T - dT).free_energy) / (2 * dT)
        s = result(T).entropy
        assert abs(slope + s) < 1e-6 * max(1.0, abs(s))
        curv = result(T + 0.05).free_energy - 2 * result(T).free_energy + result(T - 0.05).free_energy
        assert curv <= 1e-10


def test_free_fermion_limits():
    assert abs(oracle.tfim_ground_energy() + 1.273240) < 1e-6
    assert abs(oracle.tfim_free_energy(1e-3).free_energy - oracle.tfim_ground_energy()) < 1e-5
    T = 1e3
    assert abs(oracle.tfim_free_energy(T).free_energy + T * np.log(2)) < 1e-2
    with pytest.raises(ValueError):
        oracle.tfim_free_energy(0.0)


def test_free_fermion_vs_ed_at_unit_temperature():
    ff = oracle.tfim_free_energy(1.0).free_energy
    ed = oracle.ed_thermodynamics(sdim(0.0), 14, 1.0).free_energy
    assert abs(ed - ff) / abs(ff) < 0.01


def test_ground_energy_extrapolation():
    # periodic TFIM: e0(L) = e0 - pi/(6 L^2) * v + ..., fit e0 from L = 10, 12, 14
    Ls = np.array([10, 12, 14])
    e = np.array([oracle.ed_spectrum(sdim(0.0), int(L))[0] / L for L in Ls])
    coef = np.polyfit(1.0 / Ls**2, e, 1)
    assert abs(coef[1] - oracle.tfim_ground_energy()) < 1e-4
