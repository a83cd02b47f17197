import numpy as np
import pytest

from stoqmps import optimize as op
from stoqmps.ansatz import random_ansatz
from stoqmps.models import sdim
from stoqmps.oracle import tfim_free_energy, tfim_ground_energy
from stoqmps.spectrum import PSA


def test_quadratic():
    target = np.array([0.3, -1.2, 2.5, 0.0])
    calls = []

    def fg(x):
        calls.append(1)
        d = x - target
        return float(d @ d), 2 * d

    res = op.local_minimize(fg, np.zeros(4))
    assert np.abs(res.x - target).max() < 1e-8
    assert res.n_evals <= 50 and len(calls) == res.n_evals


def test_non_finite_aborts():
    def fg(x):
        return float("nan"), np.zeros_like(x)

    with pytest.raises(op.NonFiniteObjective):
        op.local_minimize(fg, np.zeros(2))


def test_deterministic_local_minimize():
    obj = op.make_objective(op.ThermalProblem(sdim(0.0), 1.0), op.RunSetup(1), 1)
    x0 = np.random.default_rng(3).uniform(0, 6, obj.size)
    x0[-1] = 0.5
    a = op.local_minimize(obj.value_and_grad, x0, obj.bounds())
    b = op.local_minimize(obj.value_and_grad, x0, obj.bounds())
    assert np.array_equal(a.x, b.x) and a.history == b.history
    assert 0.0 <= a.x[-1] <= 1.0


def test_randomness_table():
    assert op.randomness(2, 4, "angles") == 0.5
    assert op.randomness(2, 5, "angles") == 0.4
    assert op.randomness(3, 3, "angles") == 0.3
    assert op.randomness(5, 5, "raw") == 0.05
    assert op.randomness(4, 2, "raw") == 0.1
    # unlisted q falls back to the nearest listed one
    assert op.randomness(1, 2, "angles") == 0.5
    assert op.randomness(7, 6, "raw") == 0.05
    cfg = op.OptimizerConfig(randomness={3: 0.9}, randomness_scale=10)
    assert cfg.strength(2, 3, "angles") == 9.0
    assert cfg.strength(2, 2, "angles") == 5.0
    with pytest.raises(ValueError):
        op.OptimizerConfig(n_batch=0)
    with pytest.raises(ValueError):
        op.OptimizerConfig(randomness=-1.0).strength(2, 2, "angles")


@pytest.mark.parametrize("mode", ["angles", "raw"])
def test_grow_layer_without_noise_is_exact(mode, rng):
    problem = op.ThermalProblem(sdim(1.0), 0.7)
    a = random_ansatz(2, 2, "ladder", mode, rng)
    s = PSA(0.3)
    f_prev = op.make_objective(problem, op.RunSetup(2, mode=mode), 2)
    prev = f_prev(f_prev.pack(a, s))
    batch = op.grow_layer(a, s, 0.0, 4, rng)
    obj = op.make_objective(problem, op.RunSetup(2, mode=mode), 3)
    values = [obj(obj.pack(b, sb)) for b, sb in batch]
    assert all(np.array_equal(b.params, batch[0][0].params) for b, _ in batch)
    assert all(v == values[0] for v in values)
    assert abs(values[0] - prev) < 1e-14


def test_grow_layer_noise(rng):
    a = random_ansatz(2, 1, "ladder", "raw", rng)
    batch = op.grow_layer(a, PSA(0.5), 0.2, 3, rng, carry_forward=True)
    assert batch[0][0].params.shape == (4, 4, 4)
    assert not np.allclose(batch[1][0].params, batch[0][0].params)
    for b, _ in batch:
        for m in b.params:
            assert np.allclose(m.conj().T @ m, np.eye(4), atol=1e-12)


def test_classify():
    assert op.classify(None, [1.0]) == "successful"
    assert op.classify(-1.0, [-1.1, -0.5]) == "successful"
    assert op.classify(-1.0, [-1.0, -0.9]) == "trapped"
    assert op.classify(-1.0, [-0.99, -0.9]) == "lost"


def test_q1_tfim_unit_temperature():
    run = op.batch_sequential(op.ThermalProblem(sdim(0.0), 1.0), op.RunSetup(1), 1, op.OptimizerConfig(n_batch=30))
    rel = (run.best.best_f - tfim_free_energy(1.0).free_energy) / abs(tfim_free_energy(1.0).free_energy)
    assert 0 <= rel <= 0.20
    assert 0.0 <= run.best.spectrum.p <= 1.0


def test_ground_state_energy_q1():
    run = op.batch_sequential(op.ThermalProblem(sdim(0.0), 0.0), op.RunSetup(1), 1, op.OptimizerConfig(n_batch=10))
    e0 = tfim_ground_energy()
    assert 0 <= (run.best.best_f - e0) / abs(e0) <= 0.02


def test_determinism_and_monotonicity():
    problem = op.ThermalProblem(sdim(1.0), 1.0)
    cfg = op.OptimizerConfig(n_batch=3, seed=11)
    a = op.batch_sequential(problem, op.RunSetup(2, geometry="brick"), 3, cfg)
    b = op.batch_sequential(problem, op.RunSetup(2, geometry="brick"), 3, cfg)
    for la, lb in zip(a.levels, b.levels):
        assert np.array_equal(la.ansatz.params, lb.ansatz.params)
        assert [i.history for i in la.instances] == [i.history for i in lb.instances]
    assert all(y <= x + 1e-9 for x, y in zip(a.best_f, a.best_f[1:]))


def test_instance_order_does_not_change_best(rng):
    problem = op.ThermalProblem(sdim(0.0), 1.0)
    setup = op.RunSetup(1)
    starts = [(random_ansatz(1, 1, "ladder", "angles", rng), PSA(0.5)) for _ in range(4)]
    cfg = op.OptimizerConfig(n_batch=4)
    fwd = op.optimize_level(problem, setup, 1, starts, cfg)
    rev = op.optimize_level(problem, setup, 1, starts[::-1], cfg)
    assert fwd.best_f == rev.best_f
    assert sorted(i.f for i in fwd.instances) == sorted(i.f for i in rev.instances)


def test_trivial_ansatz_at_high_temperature():
    res = op.temperature_scan(sdim(0.0), [1e3], op.RunSetup(0), 1, op.OptimizerConfig(n_batch=2))
    assert 0 <= res[0].relative_error < 1e-3


def test_persistence_roundtrip(tmp_path):
    problem = op.ThermalProblem(sdim(0.0), 1.0)
    setup = op.RunSetup(1)
    run = op.batch_sequential(problem, setup, 2, op.OptimizerConfig(n_batch=2),
                              on_level=lambda lv: op.write_level(tmp_path, lv))
    loaded = op.load_run(tmp_path, problem, setup)
    assert [lv.best_f for lv in loaded.levels] == run.best_f
    assert np.array_equal(loaded.best.ansatz.params, run.best.ansatz.params)
    # resuming a finished run does no work
    again = op.batch_sequential(problem, setup, 2, op.OptimizerConfig(n_batch=2), start=loaded)
    assert len(again.levels) == 2 and again.levels[1].seconds == loaded.levels[1].seconds


def test_lost_signature_with_excess_randomness():
    # ten times the table strength wipes out the optimized circuit
    problem = op.ThermalProblem(sdim(0.0), 1.0)
    cfg = op.OptimizerConfig(n_batch=3, randomness_scale=10.0, carry_forward=False, seed=1)
    run = op.batch_sequential(problem, op.RunSetup(3), 2, cfg)
    assert run.levels[1].best_f > run.levels[0].best_f + 1e-6
    assert run.levels[1].status == "lost"


def test_parallel_matches_serial():
    problem = op.ThermalProblem(sdim(0.0), 1.0)
    serial = op.batch_sequential(problem, op.RunSetup(1), 1, op.OptimizerConfig(n_batch=2, jobs=1))
    parallel = op.batch_sequential(problem, op.RunSetup(1), 1, op.OptimizerConfig(n_batch=2, jobs=2))
    assert serial.best_f == parallel.best_f
