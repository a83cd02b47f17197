"""Batch-sequential free-energy minimization.

Depth ``tau = 1`` starts from ``n_batch`` random circuits.  Every instance is
minimized with L-BFGS-B, the best one is extended by an identity layer,
all parameters are perturbed by i.i.d. uniform noise in ``[0, x]`` and the
resulting batch is minimized again, up to the target depth.
"""

from __future__ import annotations

import json
import logging
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from multiprocessing import get_context
from pathlib import Path
from typing import Literal

import numpy as np
from scipy.optimize import minimize

from . import spectrum as spec
from .ansatz import CircuitAnsatz, Geometry, Mode, append_identity_layer, random_ansatz, reunitarize
from .models import HamiltonianSpec
from .network import DEFAULT_L, DEFAULT_WINDOW, FreeEnergyResult, relative_error

log = logging.getLogger(__name__)

warnings.filterwarnings("ignore", message="Casting complex values to real", module="jax")

# Perturbation strength x for the next depth, keyed by parameterization
# mode, bond qubits and whether that depth exceeds 4.
RANDOMNESS_TABLE: dict[str, dict[int, tuple[float, float]]] = {
    "angles": {2: (0.5, 0.4), 3: (0.3, 0.2)},
    "raw": {2: (0.2, 0.2), 3: (0.12, 0.12), 4: (0.1, 0.08), 5: (0.07, 0.05)},
}


def randomness(q: int, tau: int, mode: Mode) -> float:
    """Table value for a circuit of depth ``tau``; absent ``q`` uses the nearest listed one."""
    table = RANDOMNESS_TABLE[mode]
    nearest = min(table, key=lambda k: (abs(k - q), k))
    low, high = table[nearest]
    return low if tau <= 4 else high


@dataclass
class OptimizerConfig:
    n_batch: int = 30
    # overrides the table when set: a number, or {tau: x}
    randomness: float | dict | None = None
    randomness_scale: float = 1.0
    gtol: float = 1e-8
    max_evals: int = 5000
    gradient: Literal["exact", "fd"] = "exact"
    fd_step: float = 1e-6
    seed: int = 0
    jobs: int = 1
    # instance 0 of every grown batch is the unperturbed previous best
    carry_forward: bool = True

    def __post_init__(self):
        if self.n_batch < 1:
            raise ValueError("n_batch must be >= 1")
        if self.randomness_scale < 0:
            raise ValueError("randomness_scale must be >= 0")

    def strength(self, q: int, tau: int, mode: Mode) -> float:
        if self.randomness is None:
            x = randomness(q, tau, mode)
        elif isinstance(self.randomness, dict):
            x = float(self.randomness.get(tau, self.randomness.get(str(tau), randomness(q, tau, mode))))
        else:
            x = float(self.randomness)
        if x < 0:
            raise ValueError("randomness must be >= 0")
        return x * self.randomness_scale


class NonFiniteObjective(FloatingPointError):
    pass


@dataclass
class LocalResult:
    x: np.ndarray
    f: float
    n_evals: int
    converged: bool
    message: str
    history: list[float] = field(default_factory=list)
    min_visited: float = np.inf


def local_minimize(fun_and_grad, x0, bounds=None, config: OptimizerConfig | None = None) -> LocalResult:
    """L-BFGS-B from ``x0``; ``fun_and_grad(x) -> (f, grad)``.

    Raises :class:`NonFiniteObjective` when the objective or its gradient is
    not finite.  Also records the lowest value evaluated anywhere.
    """
    config = config or OptimizerConfig()
    visited = [np.inf]
    last = [np.nan]
    history: list[float] = []

    def wrapped(x):
        f, g = fun_and_grad(x)
        if not np.isfinite(f) or not np.all(np.isfinite(g)):
            raise NonFiniteObjective(f"objective returned f={f} at |x|={np.linalg.norm(x):.3g}")
        visited[0] = min(visited[0], f)
        last[0] = f
        return f, g

    res = minimize(
        wrapped,
        np.asarray(x0, dtype=float),
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        # the last evaluation of an iteration is the accepted point
        callback=lambda xk: history.append(float(last[0])),
        options={"maxfun": config.max_evals, "maxiter": config.max_evals, "gtol": config.gtol, "ftol": 1e-15},
    )
    if not history or history[-1] != res.fun:
        history.append(float(res.fun))
    return LocalResult(np.asarray(res.x), float(res.fun), int(res.nfev), bool(res.success), str(res.message), history, visited[0])


@dataclass(frozen=True)
class ThermalProblem:
    ham: HamiltonianSpec
    T: float

    def __post_init__(self):
        if self.T < 0:
            raise ValueError("temperature must be non-negative")


@dataclass(frozen=True)
class RunSetup:
    """Everything except the temperature that defines an objective."""

    q: int
    geometry: Geometry = "ladder"
    mode: Mode = "angles"
    kind: Literal["psa", "csa"] = "psa"
    evaluation: Literal["infinite", "finite"] = "infinite"
    L: int = DEFAULT_L
    window: tuple[int, int] = DEFAULT_WINDOW


def make_objective(problem: ThermalProblem, setup: RunSetup, tau: int):
    from .objective import FreeEnergyObjective

    return FreeEnergyObjective(
        problem.ham, problem.T, setup.q, tau, setup.geometry, setup.mode, setup.kind,
        setup.evaluation, setup.L, setup.window,
    )


def initial_spectrum(kind: str) -> spec.SpectrumParams:
    return spec.PSA(0.5) if kind == "psa" else spec.CSA(0.0, 0.0)


def perturb(ansatz: CircuitAnsatz, x: float, rng: np.random.Generator) -> CircuitAnsatz:
    """Add i.i.d. uniform ``[0, x]`` noise to every parameter (raw mode: then re-unitarize)."""
    if x == 0:
        return ansatz
    if ansatz.mode == "angles":
        return replace(ansatz, params=ansatz.params + rng.uniform(0.0, x, size=ansatz.params.shape))
    noisy = ansatz.params + rng.uniform(0.0, x, size=ansatz.params.shape)
    return replace(ansatz, params=np.stack([reunitarize(m) for m in noisy]))


def grow_layer(
    ansatz: CircuitAnsatz,
    spectrum: spec.SpectrumParams,
    x: float,
    n_batch: int,
    rng: np.random.Generator | list[np.random.Generator],
    carry_forward: bool = False,
) -> list[tuple[CircuitAnsatz, spec.SpectrumParams]]:
    """Batch of depth ``tau + 1`` starting points from the depth-``tau`` best."""
    grown = append_identity_layer(ansatz)
    rngs = rng if isinstance(rng, list) else [rng] * n_batch
    batch = []
    for i in range(n_batch):
        if carry_forward and i == 0:
            batch.append((grown, spectrum))
        else:
            batch.append((perturb(grown, x, rngs[i]), spectrum))
    return batch


def instance_rng(seed: int, tau: int, instance: int) -> np.random.Generator:
    return np.random.default_rng([seed, tau, instance])


@dataclass
class InstanceResult:
    index: int
    f: float | None
    x: np.ndarray | None
    n_evals: int
    min_visited: float
    history: list[float]
    error: str | None = None


@dataclass
class LevelResult:
    tau: int
    best_f: float
    best_index: int
    ansatz: CircuitAnsatz
    spectrum: spec.SpectrumParams
    instances: list[InstanceResult]
    status: str
    strength: float
    seconds: float

    @property
    def min_visited(self) -> float:
        return min(i.min_visited for i in self.instances)

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "best_f": self.best_f,
            "best_index": self.best_index,
            "status": self.status,
            "randomness": self.strength,
            "seconds": self.seconds,
            "min_visited_f": self.min_visited,
            "instance_f": [i.f for i in self.instances],
            "ansatz": self.ansatz.to_dict(),
            "spectrum": self.spectrum.to_dict(),
        }


@dataclass
class OptimizationRun:
    problem: ThermalProblem
    setup: RunSetup
    levels: list[LevelResult] = field(default_factory=list)

    @property
    def best_f(self) -> list[float]:
        return [lv.best_f for lv in self.levels]

    @property
    def best(self) -> LevelResult:
        return self.levels[-1]


def _run_instance(args) -> InstanceResult:
    problem, setup, tau, index, x0, config = args
    obj = make_objective(problem, setup, tau)
    if config.gradient == "exact":
        fg = obj.value_and_grad
    else:
        def fg(x):
            return obj(x), obj.fd_gradient(x, config.fd_step)
    try:
        res = local_minimize(fg, x0, obj.bounds(), config)
    except NonFiniteObjective as exc:
        log.warning("instance %d at tau=%d aborted: %s", index, tau, exc)
        return InstanceResult(index, None, None, 0, np.inf, [], str(exc))
    return InstanceResult(index, res.f, res.x, res.n_evals, res.min_visited, res.history)


def _map(tasks, jobs: int):
    if jobs <= 1 or len(tasks) == 1:
        return [_run_instance(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs, mp_context=get_context("spawn")) as pool:
        return list(pool.map(_run_instance, tasks))


def classify(prev_best: float | None, perturbed: list[float], tol: float = 1e-6) -> str:
    """``lost`` when every perturbed instance ends above the previous best,
    ``trapped`` when none improves on it, ``successful`` otherwise."""
    if prev_best is None or not perturbed:
        return "successful"
    best = min(perturbed)
    if best > prev_best + tol:
        return "lost"
    if best > prev_best - 1e-9 * max(1.0, abs(prev_best)):
        return "trapped"
    return "successful"


def optimize_level(
    problem: ThermalProblem,
    setup: RunSetup,
    tau: int,
    starts: list[tuple[CircuitAnsatz, spec.SpectrumParams]],
    config: OptimizerConfig,
    prev_best: float | None = None,
    strength: float = 0.0,
) -> LevelResult:
    t0 = time.time()
    obj = make_objective(problem, setup, tau)
    tasks = [(problem, setup, tau, i, obj.pack(a, s), config) for i, (a, s) in enumerate(starts)]
    results = _map(tasks, config.jobs)
    ok = [r for r in results if r.f is not None]
    if not ok:
        raise RuntimeError(f"all instances failed at tau={tau}: " + "; ".join(r.error or "" for r in results))
    # strictly lowest f; exact ties go to the lowest index
    best = min(ok, key=lambda r: (r.f, r.index))
    ansatz, spectrum = obj.unpack(best.x)
    perturbed = [r.f for r in ok if not (config.carry_forward and r.index == 0 and prev_best is not None)]
    status = classify(prev_best, perturbed)
    return LevelResult(tau, best.f, best.index, ansatz, spectrum, results, status, strength, time.time() - t0)


def batch_sequential(
    problem: ThermalProblem,
    setup: RunSetup,
    tau_max: int,
    config: OptimizerConfig | None = None,
    start: OptimizationRun | None = None,
    on_level=None,
) -> OptimizationRun:
    """Grow and optimize circuits from depth 1 (or from ``start``) to ``tau_max``.

    ``on_level`` is called with each finished :class:`LevelResult`.
    """
    config = config or OptimizerConfig()
    run = start if start is not None else OptimizationRun(problem, setup)
    while (len(run.levels) and run.levels[-1].tau or 0) < tau_max:
        if not run.levels:
            tau = 1
            starts = [
                (random_ansatz(setup.q, 1, setup.geometry, setup.mode, instance_rng(config.seed, 1, i)),
                 initial_spectrum(setup.kind))
                for i in range(config.n_batch)
            ]
            level = optimize_level(problem, setup, tau, starts, config)
        else:
            prev = run.levels[-1]
            tau = prev.tau + 1
            x = config.strength(setup.q, tau, setup.mode)
            rngs = [instance_rng(config.seed, tau, i) for i in range(config.n_batch)]
            starts = grow_layer(prev.ansatz, prev.spectrum, x, config.n_batch, rngs, config.carry_forward)
            level = optimize_level(problem, setup, tau, starts, config, prev.best_f, x)
        log.info("tau=%d best f=%.10f status=%s (%.1fs)", level.tau, level.best_f, level.status, level.seconds)
        run.levels.append(level)
        if on_level is not None:
            on_level(level)
    return run


def exact_reference(ham: HamiltonianSpec, T: float, ed_sites: int = 14):
    """Thermodynamic-limit TFIM solution when available, periodic ED otherwise."""
    from . import oracle

    is_tfim = ham.name == "sdim" and ham.params.get("V", 0.0) == 0.0
    if is_tfim and T > 0:
        return oracle.tfim_free_energy(T)
    return oracle.ed_thermodynamics(ham, ed_sites, T)


def temperature_scan(
    ham: HamiltonianSpec,
    temperatures,
    setup: RunSetup,
    tau: int,
    config: OptimizerConfig | None = None,
) -> list[FreeEnergyResult]:
    """Independent batch-sequential runs per temperature, with relative errors."""
    out = []
    for T in temperatures:
        problem = ThermalProblem(ham, float(T))
        run = batch_sequential(problem, setup, tau, config)
        best = run.best
        ref = exact_reference(ham, float(T))
        obj = make_objective(problem, setup, tau)
        e, s = obj.energy_entropy(obj.pack(best.ansatz, best.spectrum))
        out.append(
            FreeEnergyResult(
                e, s, best.best_f, float(T), relative_error(best.best_f, ref.free_energy),
                {"q": setup.q, "tau": tau, "geometry": setup.geometry, "kind": setup.kind,
                 "seed": (config or OptimizerConfig()).seed, "f_exact": ref.free_energy,
                 "oracle": ref.method, "best_f_by_tau": run.best_f},
            )
        )
    return out


def level_path(run_dir: Path, tau: int) -> Path:
    return Path(run_dir) / f"tau{tau:02d}.json"


def write_level(run_dir: Path, level: LevelResult, extra: dict | None = None) -> Path:
    """Persist one depth; the file only appears once fully written."""
    path = level_path(run_dir, level.tau)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps({**level.to_dict(), **(extra or {}), "complete": True}, indent=1))
    os.replace(tmp, path)
    return path


def load_level(path: Path) -> LevelResult:
    d = json.loads(Path(path).read_text())
    if not d.get("complete"):
        raise ValueError(f"{path} is not a completed level")
    low = float(d.get("min_visited_f", np.inf))
    instances = [InstanceResult(i, f, None, 0, low, []) for i, f in enumerate(d["instance_f"])]
    return LevelResult(
        int(d["tau"]), float(d["best_f"]), int(d["best_index"]), CircuitAnsatz.from_dict(d["ansatz"]),
        spec.spectrum_from_dict(d["spectrum"]), instances, d["status"], float(d["randomness"]), float(d["seconds"]),
    )


def load_run(run_dir: Path, problem: ThermalProblem, setup: RunSetup) -> OptimizationRun:
    """Completed depths ``1, 2, ...`` found in ``run_dir`` (stops at the first gap)."""
    run = OptimizationRun(problem, setup)
    tau = 1
    while level_path(run_dir, tau).exists():
        run.levels.append(load_level(level_path(run_dir, tau)))
        tau += 1
    return run
