import numpy as np
import pytest

from stoqmps.ansatz import random_ansatz
from stoqmps.models import sdim
from stoqmps.network import StoQmpsNetwork, free_energy_density
from stoqmps.objective import FreeEnergyObjective
from stoqmps.spectrum import CSA, PSA

CASES = [
    ("psa", "infinite", "angles"),
    ("csa", "infinite", "angles"),
    ("psa", "finite", "raw"),
    ("csa", "finite", "raw"),
]


@pytest.mark.parametrize("kind,evaluation,mode", CASES)
def test_objective_matches_network(kind, evaluation, mode, rng):
    ham = sdim(1.0)
    obj = FreeEnergyObjective(ham, 0.8, 2, 2, "ladder", mode, kind, evaluation)
    a = random_ansatz(2, 2, "ladder", mode, rng)
    s = PSA(0.27) if kind == "psa" else CSA(0.4, -0.6)
    x = obj.pack(a, s)
    net = StoQmpsNetwork(a, s, evaluation)
    ref = free_energy_density(net, ham, 0.8)
    assert abs(obj(x) - ref.free_energy) < 1e-10
    e, ent = obj.energy_entropy(x)
    assert abs(e - ref.energy) < 1e-10 and abs(ent - ref.entropy) < 1e-12
    a2, s2 = obj.unpack(x)
    assert np.allclose(a2.params, a.params) and s2 == s
    v, g = obj.value_and_grad(x)
    fd = obj.fd_gradient(x)
    assert abs(v - obj(x)) < 1e-14
    assert np.linalg.norm(g - fd) < 1e-5 * np.linalg.norm(fd)


def test_bounds_and_validation():
    obj = FreeEnergyObjective(sdim(0.0), 1.0, 1, 1)
    assert obj.size == 16
    assert obj.bounds()[-1] == (1e-10, 1 - 1e-10)
    assert FreeEnergyObjective(sdim(0.0), 1.0, 1, 1, kind="csa").bounds()[-2:] == [(None, None)] * 2
    with pytest.raises(ValueError):
        FreeEnergyObjective(sdim(0.0), -1.0, 1, 1)
    with pytest.raises(ValueError):
        FreeEnergyObjective(sdim(1.0), 1.0, 1, 1, evaluation="finite", L=55)
    with pytest.raises(ValueError):
        obj.pack(random_ansatz(1, 1, "ladder", "angles", np.random.default_rng(0)), CSA(0, 0))
