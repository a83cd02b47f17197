"""Differentiable free-energy objective over a flat parameter vector.

The vector holds the circuit parameters followed by the spectrum
parameters (``[p]`` for PSA, ``[J, h]`` for CSA).  Value and gradient come
from a jit-compiled jax function; the contraction kernels are the same
ones the numpy evaluation in :mod:`stoqmps.network` uses.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import jax
import jax.numpy as jnp
import numpy as np

from . import _core, spectrum as spec
from .ansatz import CircuitAnsatz, Geometry, Mode, gate_layout, site_unitary_from_vector, N_ANGLES, N_RAW
from .models import HamiltonianSpec
from .network import DEFAULT_L, DEFAULT_WINDOW

jax.config.update("jax_enable_x64", True)

# keeps the entropy derivative finite at the PSA box edges
P_EPS = 1e-10


def _xlogx(x):
    safe = jnp.where(x > 0, x, 1.0)
    return jnp.where(x > 0, x * jnp.log(safe), 0.0)


def _finite_csa_transitions(J, h, L):
    s = jnp.array([1.0, -1.0])
    t = jnp.exp(J * jnp.outer(s, s) + 0.5 * h * (s[:, None] + s[None, :]))
    u = jnp.exp(0.5 * h * s)
    right = [u]
    for _ in range(L - 1):
        r = t @ right[-1]
        right.append(r / jnp.sum(r))
    right = right[::-1]
    init = u * right[0]
    init = init / jnp.sum(init)
    trans = [jnp.tile(init, (2, 1))]
    for i in range(L - 1):
        m = t * right[i + 1][None, :]
        trans.append(m / jnp.sum(m, axis=1, keepdims=True))
    return jnp.stack(trans)


@dataclass(frozen=True)
class ObjectiveSpec:
    """Static structure of an objective; jit caches are keyed on it."""

    terms: tuple[tuple[str, float], ...]
    max_range: int
    q: int
    tau: int
    geometry: Geometry
    mode: Mode
    kind: Literal["psa", "csa"]
    evaluation: Literal["infinite", "finite"]
    L: int = DEFAULT_L
    window: tuple[int, int] = DEFAULT_WINDOW

    @property
    def n_gates(self) -> int:
        return len(gate_layout(self.q, self.tau, self.geometry))

    @property
    def n_circuit(self) -> int:
        return self.n_gates * (N_ANGLES if self.mode == "angles" else N_RAW)

    @property
    def n_spectrum(self) -> int:
        return 1 if self.kind == "psa" else 2


def _energy_entropy(spec_: ObjectiveSpec, x):
    circ = x[: spec_.n_circuit]
    sp = x[spec_.n_circuit :]
    u = site_unitary_from_vector(circ, spec_.q, spec_.tau, spec_.geometry, spec_.mode, xp=jnp)
    a = _core.kraus(u, spec_.q)
    chi = 2 ** spec_.q
    terms = list(spec_.terms)
    r = spec_.max_range
    if spec_.kind == "psa":
        p = sp[0]
        emit = jnp.stack([1.0 - p, p])[None, :]
        entropy = -(_xlogx(p) + _xlogx(1.0 - p))
        n_c = 1
        bulk = jnp.ones((1, 1))
    else:
        J, h = sp[0], sp[1]
        emit = jnp.eye(2)
        entropy = spec.csa_entropy(J, h, xp=jnp)
        n_c = 2
        bulk = spec.csa_stationary(J, h, xp=jnp)

    if spec_.evaluation == "infinite":
        s = _core.superoperator(a, emit, bulk, xp=jnp)
        env = _core.solve_fixed_point(s, n_c, chi, xp=jnp)
        energy = _core.terms_expectation(a, emit, jnp.stack([bulk] * r), env, terms, xp=jnp)
        return energy, entropy

    lo, hi = spec_.window
    if spec_.kind == "psa":
        trans = jnp.ones((spec_.L, 1, 1))
    else:
        trans = _finite_csa_transitions(J, h, spec_.L)
    env = _core.initial_env(n_c, chi, xp=jnp)

    def step(e, t):
        return _core.site_step(a, emit, t, e, None, xp=jnp), None

    env, _ = jax.lax.scan(step, env, trans[: lo - 1])
    total = 0.0
    for i in range(lo - 1, hi):
        total = total + _core.terms_expectation(a, emit, trans[i : i + r], env, terms, xp=jnp)
        if i + 1 < hi:
            env, _ = step(env, trans[i])
    return total / (hi - lo + 1), entropy


@lru_cache(maxsize=64)
def _compiled(spec_: ObjectiveSpec):
    def free_energy(x, T):
        e, s = _energy_entropy(spec_, x)
        return e - T * s

    parts = jax.jit(lambda x: _energy_entropy(spec_, x))
    return jax.jit(free_energy), jax.jit(jax.value_and_grad(free_energy)), parts


class FreeEnergyObjective:
    """``f(x) = energy(x) - T * entropy(x)`` with exact (autodiff) gradients."""

    def __init__(
        self,
        ham: HamiltonianSpec,
        T: float,
        q: int,
        tau: int,
        geometry: Geometry = "ladder",
        mode: Mode = "angles",
        kind: Literal["psa", "csa"] = "psa",
        evaluation: Literal["infinite", "finite"] = "infinite",
        L: int = DEFAULT_L,
        window: tuple[int, int] = DEFAULT_WINDOW,
    ):
        if T < 0:
            raise ValueError("temperature must be non-negative")
        if evaluation == "finite" and window[1] > L - ham.max_range + 1:
            raise ValueError(f"window {window} does not fit range-{ham.max_range} terms in L={L}")
        self.ham = ham
        self.T = float(T)
        self.spec = ObjectiveSpec(
            tuple((t.labels, t.coeff) for t in ham.terms),
            ham.max_range, q, tau, geometry, mode, kind, evaluation, L, tuple(window),
        )
        self._f, self._fg, self._parts = _compiled(self.spec)

    @property
    def size(self) -> int:
        return self.spec.n_circuit + self.spec.n_spectrum

    def bounds(self) -> list[tuple[float | None, float | None]]:
        b: list[tuple[float | None, float | None]] = [(None, None)] * self.spec.n_circuit
        if self.spec.kind == "psa":
            return b + [(P_EPS, 1.0 - P_EPS)]
        return b + [(None, None), (None, None)]

    def __call__(self, x) -> float:
        return float(self._f(jnp.asarray(x, dtype=float), self.T))

    def value_and_grad(self, x) -> tuple[float, np.ndarray]:
        v, g = self._fg(jnp.asarray(x, dtype=float), self.T)
        return float(v), np.asarray(g, dtype=float)

    def fd_gradient(self, x, step: float = 1e-6) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        g = np.empty_like(x)
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = step
            g[i] = (self(x + e) - self(x - e)) / (2 * step)
        return g

    def energy_entropy(self, x) -> tuple[float, float]:
        e, s = self._parts(jnp.asarray(x, dtype=float))
        return float(e), float(s)

    def pack(self, ansatz: CircuitAnsatz, spectrum: spec.SpectrumParams) -> np.ndarray:
        if isinstance(spectrum, spec.PSA):
            if self.spec.kind != "psa":
                raise ValueError("objective expects a CSA spectrum")
            tail = [spectrum.p]
        else:
            if self.spec.kind != "csa":
                raise ValueError("objective expects a PSA spectrum")
            tail = [spectrum.J, spectrum.h]
        return np.concatenate([ansatz.to_vector(), tail])

    def unpack(self, x) -> tuple[CircuitAnsatz, spec.SpectrumParams]:
        x = np.asarray(x, dtype=float)
        s = self.spec
        shell = CircuitAnsatz(s.q, s.tau, s.geometry, s.mode)
        ansatz = shell.with_vector(x[: s.n_circuit])
        tail = x[s.n_circuit :]
        if s.kind == "psa":
            return ansatz, spec.PSA(float(np.clip(tail[0], 0.0, 1.0)))
        return ansatz, spec.CSA(float(tail[0]), float(tail[1]))
