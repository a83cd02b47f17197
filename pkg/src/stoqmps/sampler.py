"""Shot-based emulation of the site-by-site measure-and-reset protocol.

Every shot keeps a dense density matrix of the bond register.  At each site
the physical qubit is prepared in its sampled input bit, the site circuit is
applied gate by gate (followed by depolarizing noise on the gate support when
enabled), the physical qubit is rotated to the measurement basis, measured
with a Bernoulli draw from the exact outcome probability and discarded.
Shots are processed as one batch of independent density matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _core, spectrum as spec
from .ansatz import CircuitAnsatz, build_site_unitary
from .models import HamiltonianSpec, PauliString
from .network import finite_transitions, hidden_chain

MAX_SAMPLER_QUBITS = 6

_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_SDG = np.diag([1, -1j])
# rotation taking the eigenbasis of each Pauli to the computational basis
BASIS_ROTATION = {"X": _H, "Y": _H @ _SDG, "Z": None}
_CX = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


class SamplerError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseModel:
    eps_1q: float = 5e-4
    eps_2q: float = 8e-3
    enabled: bool = True

    def __post_init__(self):
        for eps in (self.eps_1q, self.eps_2q):
            if not 0.0 <= eps <= 1.0:
                raise SamplerError("depolarizing rates must lie in [0, 1]")

    @property
    def rate_1q(self) -> float:
        return self.eps_1q if self.enabled else 0.0

    @property
    def rate_2q(self) -> float:
        return self.eps_2q if self.enabled else 0.0


NOISELESS = NoiseModel(enabled=False)


@dataclass(frozen=True)
class SamplerConfig:
    shots: int = 1200
    burn_in: int = 5
    # number of term start positions averaged after burn-in
    window: int = 6
    use_ancilla: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.shots < 1:
            raise SamplerError("shots must be >= 1")
        if self.burn_in < 0:
            raise SamplerError("burn_in must be >= 0")
        if self.window < 1:
            raise SamplerError("window must be >= 1")


@dataclass(frozen=True)
class ShotEstimate:
    label: str
    estimate: float
    stderr: float
    shots: int
    noisy: bool = False

    @classmethod
    def from_samples(cls, label: str, samples: np.ndarray, noisy: bool) -> "ShotEstimate":
        n = samples.size
        err = float(np.std(samples, ddof=1) / np.sqrt(n)) if n > 1 else float("inf")
        return cls(label, float(np.mean(samples)), err, n, noisy)

    def to_dict(self) -> dict:
        return {"observable": self.label, "estimate": self.estimate, "stderr": self.stderr,
                "shots": self.shots, "noisy": self.noisy}


@dataclass(frozen=True)
class MeasurementGroup:
    basis: str
    terms: tuple[PauliString, ...]


def measurement_groups(ham: HamiltonianSpec) -> list[MeasurementGroup]:
    """Partition terms by the single Pauli basis in which every site is measured.

    All sites share one basis so that every translate of a term is read out
    in the same shot; a term qualifies when all its non-identity labels agree.
    """
    groups: dict[str, list[PauliString]] = {}
    for term in ham.terms:
        letters = {c for _, c in term.support()}
        if len(letters) != 1:
            raise SamplerError(f"term {term.labels} mixes Pauli bases; not measurable in a uniform basis")
        groups.setdefault(letters.pop(), []).append(term)
    return [MeasurementGroup(b, tuple(groups[b])) for b in sorted(groups)]


def _n_qubits(rho) -> int:
    n = int(round(np.log2(rho.shape[-1])))
    if 2 ** n != rho.shape[-1]:
        raise SamplerError("register dimension is not a power of two")
    return n


def _partial_trace(t: np.ndarray, rows, cols) -> np.ndarray:
    idx = [chr(97 + k) for k in range(t.ndim)]
    for r, c in zip(rows, cols):
        idx[c] = idx[r]
    out = [l for k, l in enumerate(idx) if k not in rows and k not in cols]
    return np.einsum("".join(idx) + "->" + "".join(out), t)


def depolarize(rho: np.ndarray, support, eps: float) -> np.ndarray:
    """``(1-eps) rho + eps tr_S(rho) x I/2^|S|`` on qubits ``support`` (qubit 0 most significant).

    Leading axes of ``rho`` are treated as a batch.
    """
    if not 0.0 <= eps <= 1.0:
        raise SamplerError("depolarizing rate must lie in [0, 1]")
    if eps == 0.0:
        return rho
    n = _n_qubits(rho)
    batch = rho.shape[:-2]
    t = rho.reshape(batch + (2,) * (2 * n))
    rows = [len(batch) + i for i in support]
    cols = [len(batch) + n + i for i in support]
    k = len(rows)
    ident = np.eye(2 ** k).reshape((2,) * (2 * k)) / 2 ** k
    mixed = np.multiply.outer(_partial_trace(t, rows, cols), ident)
    mixed = np.moveaxis(mixed, list(range(mixed.ndim - 2 * k, mixed.ndim)), rows + cols)
    return ((1 - eps) * t + eps * mixed).reshape(rho.shape)


def embed(gate: np.ndarray, first: int, n: int) -> np.ndarray:
    """Full-register matrix of a gate on qubits ``first, first+1, ...``."""
    k = _n_qubits(gate)
    return np.kron(np.kron(np.eye(2 ** first), gate), np.eye(2 ** (n - first - k)))


def conjugate(rho: np.ndarray, gate: np.ndarray, first: int) -> np.ndarray:
    """``G rho G^dag`` for a gate on qubits ``first, first+1, ...`` (batched)."""
    g = embed(gate, first, _n_qubits(rho))
    return g @ rho @ g.conj().T


def _noisy_gate(rho, gate, first, noise: NoiseModel):
    rho = conjugate(rho, gate, first)
    k = _n_qubits(gate)
    eps = noise.rate_1q if k == 1 else noise.rate_2q
    return depolarize(rho, list(range(first, first + k)), eps)


def _ry(theta):
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def gadget_states(p: float, noise: NoiseModel = NOISELESS) -> tuple[np.ndarray, np.ndarray]:
    """Outcome probabilities and conditional physical states of the ancilla gadget.

    ``Ry`` on the physical qubit, CNOT onto the ancilla, then the ancilla is
    measured.  Returns ``probs[c]`` and ``states[c]`` (2x2) per outcome ``c``.
    """
    if not 0.0 <= p <= 1.0:
        raise SamplerError("p must lie in [0, 1]")
    rho = np.zeros((4, 4), dtype=complex)
    rho[0, 0] = 1.0
    rho = _noisy_gate(rho, _ry(2 * np.arcsin(np.sqrt(p))), 0, noise)
    rho = _noisy_gate(rho, _CX, 0, noise)
    t = rho.reshape(2, 2, 2, 2)
    blocks = np.stack([t[:, c, :, c] for c in range(2)])
    probs = np.clip(np.real(np.einsum("cii->c", blocks)), 0.0, None)
    states = np.stack([blocks[c] / probs[c] if probs[c] > 0 else np.diag([1.0 - c, c]).astype(complex)
                       for c in range(2)])
    return probs, states


def ancilla_init(p: float, noise: NoiseModel = NOISELESS, rng: np.random.Generator | None = None,
                 register: np.ndarray | None = None):
    """Prepare the physical qubit as ``p|1><1| + (1-p)|0><0|`` with the ancilla gadget.

    Without ``rng`` the ancilla outcome is discarded (traced out); with it an
    outcome is drawn and the physical qubit is left in the matching
    conditional state.  The physical qubit is prepended (most significant)
    to ``register`` when given.  Returns ``(state, outcome)``.
    """
    probs, states = gadget_states(p, noise)
    if rng is None:
        phys, outcome = np.einsum("c,cij->ij", probs, states), None
    else:
        outcome = int(rng.random() < probs[1] / probs.sum())
        phys = states[outcome]
    if register is None:
        return phys, outcome
    return np.kron(phys, register), outcome


@dataclass
class _Circuit:
    gates: list[np.ndarray]
    pairs: list[tuple[int, int]]
    q: int


def _circuit(ansatz: CircuitAnsatz) -> _Circuit:
    if ansatz.q > MAX_SAMPLER_QUBITS:
        raise SamplerError(f"sampler supports q <= {MAX_SAMPLER_QUBITS}")
    return _Circuit(ansatz.gates(), ansatz.pairs, ansatz.q)


# above this register dimension the site map is applied gate by gate per shot
_TRANSFER_MAX_DIM = 32


def _noisy_site(rho, circuit: _Circuit, basis: str, noise: NoiseModel):
    for g, (w, _) in zip(circuit.gates, circuit.pairs):
        rho = _noisy_gate(rho, g, w, noise)
    rot = BASIS_ROTATION[basis]
    if rot is not None:
        rho = _noisy_gate(rho, rot, 0, noise)
    return rho


def site_transfer(circuit: _Circuit, basis: str, noise: NoiseModel) -> np.ndarray:
    """Linear map of the noisy site (circuit, basis rotation) on the flattened register.

    Built by pushing every matrix unit through :func:`_noisy_site`, so it
    equals the gate-by-gate evolution exactly.
    """
    d = 2 ** (circuit.q + 1)
    units = np.eye(d * d, dtype=complex).reshape(d * d, d, d)
    return _noisy_site(units, circuit, basis, noise).reshape(d * d, d * d).T


def protocol_step(bond: np.ndarray, phys: np.ndarray, circuit: _Circuit, basis: str,
                  noise: NoiseModel, u: np.ndarray, transfer: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """One site for a batch of shots.

    ``bond`` is ``(S, chi, chi)``, ``phys`` the ``(S, 2, 2)`` prepared input
    and ``u`` uniforms deciding the measurement outcomes.  ``transfer`` is
    an optional precomputed :func:`site_transfer`.  Returns the
    post-measurement bond states and the outcome bits.
    """
    s, chi = bond.shape[0], bond.shape[-1]
    d = 2 * chi
    rho = np.einsum("sab,sij->saibj", phys, bond).reshape(s, d, d)
    if transfer is None:
        rho = _noisy_site(rho, circuit, basis, noise)
    else:
        rho = (rho.reshape(s, d * d) @ transfer.T).reshape(s, d, d)
    t = rho.reshape(s, 2, chi, 2, chi)
    p1 = np.clip(np.real(np.einsum("sii->s", t[:, 1, :, 1, :])), 0.0, 1.0)
    bits = (u < p1).astype(np.int8)
    post = np.where(bits[:, None, None] == 1, t[:, 1, :, 1, :], t[:, 0, :, 0, :])
    norm = np.where(bits == 1, p1, 1.0 - p1)
    post = post / np.where(norm > 0, norm, 1.0)[:, None, None]
    return 0.5 * (post + np.conj(np.swapaxes(post, 1, 2))), bits


def _chain_length(config: SamplerConfig, span: int) -> int:
    return config.burn_in + config.window + span - 1


def sample_outcomes(ansatz: CircuitAnsatz, spectrum: spec.SpectrumParams, basis: str, n_sites: int,
                    config: SamplerConfig, noise: NoiseModel = NOISELESS, stream: int = 0) -> np.ndarray:
    """Measured bits ``(shots, n_sites)`` for every site measured in ``basis``.

    Shot ``k`` draws all its randomness from the generator seeded with
    ``(seed, stream, k)``, so results do not depend on batching.
    """
    circuit = _circuit(ansatz)
    chi = 2 ** ansatz.q
    shots = config.shots
    uniforms = np.stack([np.random.default_rng([config.seed, stream, k]).random((n_sites, 2))
                         for k in range(shots)])
    chain = spec.finite_chain(spectrum, n_sites)
    bond = np.zeros((shots, chi, chi), dtype=complex)
    bond[:, 0, 0] = 1.0
    prev = np.zeros(shots, dtype=np.int64)
    out = np.empty((shots, n_sites), dtype=np.int8)
    gadget_cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}
    transfer = site_transfer(circuit, basis, noise) if 2 * chi <= _TRANSFER_MAX_DIM else None
    for i in range(n_sites):
        p_one = np.full(shots, chain.initial[1]) if i == 0 else chain.transitions[i - 1][prev, 1]
        if config.use_ancilla:
            phys = np.empty((shots, 2, 2), dtype=complex)
            drawn = np.empty(shots, dtype=np.int64)
            for p in np.unique(p_one):
                if p not in gadget_cache:
                    gadget_cache[p] = gadget_states(float(p), noise)
                probs, states = gadget_cache[p]
                sel = p_one == p
                c = (uniforms[sel, i, 0] < probs[1] / probs.sum()).astype(np.int64)
                drawn[sel] = c
                phys[sel] = states[c]
        else:
            drawn = (uniforms[:, i, 0] < p_one).astype(np.int64)
            phys = np.zeros((shots, 2, 2), dtype=complex)
            phys[np.arange(shots), drawn, drawn] = 1.0
        prev = drawn
        bond, out[:, i] = protocol_step(bond, phys, circuit, basis, noise, uniforms[:, i, 1], transfer)
    return out


def _term_samples(bits: np.ndarray, term: PauliString, burn_in: int, window: int) -> np.ndarray:
    eig = 1 - 2 * bits.astype(float)
    acc = np.zeros(bits.shape[0])
    for start in range(burn_in, burn_in + window):
        prod = np.ones(bits.shape[0])
        for off, _ in term.support():
            prod *= eig[:, start + off]
        acc += prod
    return acc / window


def run_protocol(ansatz: CircuitAnsatz, spectrum: spec.SpectrumParams, group: MeasurementGroup,
                 ham: HamiltonianSpec, config: SamplerConfig, noise: NoiseModel = NOISELESS,
                 stream: int = 0) -> list[ShotEstimate]:
    """Per-term estimates of one measurement group, plus the group's energy contribution.

    Each term is averaged over ``config.window`` start positions after
    ``config.burn_in`` sites.  The last entry, labelled ``energy[<basis>]``,
    is the coefficient-weighted sum of the group's terms per shot.
    """
    n_sites = _chain_length(config, ham.max_range)
    bits = sample_outcomes(ansatz, spectrum, group.basis, n_sites, config, noise, stream)
    out = []
    energy = np.zeros(config.shots)
    for term in group.terms:
        samples = _term_samples(bits, term, config.burn_in, config.window)
        energy += term.coeff * samples
        out.append(ShotEstimate.from_samples(term.labels, samples, noise.enabled))
    out.append(ShotEstimate.from_samples(f"energy[{group.basis}]", energy, noise.enabled))
    return out


def estimate_free_energy(ansatz: CircuitAnsatz, spectrum: spec.SpectrumParams, ham: HamiltonianSpec,
                         T: float, config: SamplerConfig, noise: NoiseModel = NOISELESS) -> tuple[ShotEstimate, list[ShotEstimate]]:
    """Sampled energy of all groups minus ``T`` times the exact entropy density.

    Groups use independent shots, so their standard errors add in quadrature.
    Returns the free-energy estimate and all per-term estimates.
    """
    rows = []
    value, var, shots = 0.0, 0.0, 0
    for k, group in enumerate(measurement_groups(ham)):
        est = run_protocol(ansatz, spectrum, group, ham, config, noise, stream=k)
        rows.extend(est)
        value += est[-1].estimate
        var += est[-1].stderr ** 2
        shots += est[-1].shots
    f = value - T * spec.entropy_density(spectrum)
    return ShotEstimate("free_energy", f, float(np.sqrt(var)), shots, noise.enabled), rows


def exact_term_values(ansatz: CircuitAnsatz, spectrum: spec.SpectrumParams, ham: HamiltonianSpec,
                      config: SamplerConfig) -> dict[str, float]:
    """Noiseless expectation of each term over the same sites the protocol averages."""
    r = ham.max_range
    n_sites = _chain_length(config, r)
    a = _core.kraus(build_site_unitary(ansatz), ansatz.q)
    emit = hidden_chain(spectrum)
    trans = finite_transitions(spectrum, n_sites)
    env = _core.initial_env(emit.shape[0], 2 ** ansatz.q)
    sums = {t.labels: 0.0 for t in ham.terms}
    for i in range(config.burn_in + config.window):
        if i >= config.burn_in:
            for t in ham.terms:
                sums[t.labels] += _core.terms_expectation(a, emit, trans[i : i + r], env, [(t.labels, 1.0)])
        env = _core.site_step(a, emit, trans[i], env)
    return {k: float(v) / config.window for k, v in sums.items()}


def sample_correlator(ansatz: CircuitAnsatz, spectrum: spec.SpectrumParams, basis: str, max_distance: int,
                      config: SamplerConfig, noise: NoiseModel = NOISELESS, stream: int = 0) -> list[ShotEstimate]:
    """``<O_0>`` and ``<O_0 O_r>`` for ``r = 1..max_distance`` with every site measured in ``basis``."""
    if basis not in BASIS_ROTATION:
        raise SamplerError(f"unknown basis {basis!r}")
    if max_distance < 1:
        raise SamplerError("max_distance must be >= 1")
    n_sites = _chain_length(config, max_distance + 1)
    bits = sample_outcomes(ansatz, spectrum, basis, n_sites, config, noise, stream)
    out = [ShotEstimate.from_samples(basis, _term_samples(bits, PauliString(basis), config.burn_in, config.window),
                                     noise.enabled)]
    for r in range(1, max_distance + 1):
        term = _Pair(basis, r)
        out.append(ShotEstimate.from_samples(f"{basis}{basis}(r={r})",
                                             _term_samples(bits, term, config.burn_in, config.window), noise.enabled))
    return out


@dataclass(frozen=True)
class _Pair:
    """Two-point term of arbitrary distance (not limited to the Hamiltonian range)."""

    basis: str
    distance: int

    def support(self):
        return [(0, self.basis), (self.distance, self.basis)]
