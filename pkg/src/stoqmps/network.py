"""Exact contraction of the stochastic qMPS ladder network.

Two evaluation modes are supported.  ``infinite`` uses the fixed point of
the site channel as the left environment.  ``finite`` grows an open chain
of ``L`` sites from the bond state ``|0...0>`` and averages per-site
energies over a bulk window.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import _core, spectrum as spec
from .ansatz import CircuitAnsatz, build_site_unitary
from .models import PAULI, HamiltonianSpec, PauliString, dense_term_matrix

DEFAULT_L = 60
DEFAULT_WINDOW = (48, 54)


class NetworkError(RuntimeError):
    pass


@dataclass(frozen=True)
class StoQmpsNetwork:
    """Circuit + spectrum + evaluation mode.

    ``window`` is an inclusive 1-based range of sites at which translation
    cells start; it must lie inside ``[1, L - r + 1]`` for every evaluated
    Hamiltonian of range ``r``.
    """

    ansatz: CircuitAnsatz
    spectrum: spec.SpectrumParams
    mode: Literal["infinite", "finite"] = "infinite"
    L: int = DEFAULT_L
    window: tuple[int, int] = DEFAULT_WINDOW

    def __post_init__(self):
        if self.mode not in ("infinite", "finite"):
            raise NetworkError(f"unknown evaluation mode {self.mode!r}")
        if self.mode == "finite":
            lo, hi = self.window
            if not (1 <= lo <= hi <= self.L):
                raise NetworkError(f"window {self.window} outside chain of length {self.L}")

    @property
    def chi(self) -> int:
        return 2 ** self.ansatz.q


def hidden_chain(params: spec.SpectrumParams):
    """Emission table and hidden-state count for the spectrum."""
    if isinstance(params, spec.PSA):
        return np.array([[1.0 - params.p, params.p]])
    return np.eye(2)


def finite_transitions(params: spec.SpectrumParams, L: int) -> np.ndarray:
    """Transition into site ``i`` (0-based) for ``i = 0..L-1``."""
    if isinstance(params, spec.PSA):
        return np.ones((L, 1, 1))
    chain = spec.finite_chain(params, L)
    first = np.tile(chain.initial, (2, 1))
    return np.concatenate([first[None], chain.transitions])


def stationary_transition(params: spec.SpectrumParams) -> np.ndarray:
    if isinstance(params, spec.PSA):
        return np.ones((1, 1))
    return spec.stationary_chain(params)[1]


@dataclass
class SiteChannel:
    """Site map on the enlarged bond space ``(hidden, chi, chi)``."""

    kraus: np.ndarray
    emit: np.ndarray
    trans: np.ndarray

    @property
    def n_hidden(self) -> int:
        return self.emit.shape[0]

    @property
    def chi(self) -> int:
        return self.kraus.shape[-1]

    def __call__(self, env: np.ndarray, op=None) -> np.ndarray:
        return _core.site_step(self.kraus, self.emit, self.trans, env, op)

    def matrix(self) -> np.ndarray:
        return _core.superoperator(self.kraus, self.emit, self.trans)

    def choi(self, hidden: int = 0) -> np.ndarray:
        """Choi matrix of the bond map ``K_d`` for hidden state ``d``."""
        chi = self.chi
        k = np.einsum("n,anij,ankl->ikjl", self.emit[hidden], self.kraus, self.kraus.conj())
        # k[i, k', j, l] = K(|j><l|)[i, k']; Choi = sum |j><l| x K(|j><l|)
        return np.einsum("ikjl->jilk", k).reshape(chi * chi, chi * chi)


def site_channel(network: StoQmpsNetwork) -> SiteChannel:
    """Bulk site channel of the network (stationary spectrum transitions)."""
    a = _core.kraus(build_site_unitary(network.ansatz), network.ansatz.q)
    return SiteChannel(a, hidden_chain(network.spectrum), stationary_transition(network.spectrum))


@dataclass
class BondEnvironment:
    blocks: np.ndarray  # (hidden, chi, chi)
    residual: float = 0.0
    degenerate: bool = False

    @property
    def rho(self) -> np.ndarray:
        """Bond density matrix with the classical index summed out."""
        return self.blocks.sum(axis=0)


def fixed_point(channel: SiteChannel, tol: float = 1e-11, max_iter: int = 100_000) -> BondEnvironment:
    """Unit-trace fixed point of the site channel.

    A direct linear solve is tried first and polished by power iteration.
    When the dominant eigenvalue is degenerate (gap below 1e-9) power
    iteration from the maximally mixed state decides the result and the
    environment is flagged; the identity channel therefore returns the
    maximally mixed state.
    """
    n_c, chi = channel.n_hidden, channel.chi
    s = channel.matrix()
    ev = np.sort(np.abs(np.linalg.eigvals(s)))[::-1]
    degenerate = len(ev) > 1 and ev[0] - ev[1] < 1e-9
    if degenerate:
        warnings.warn("site channel has a degenerate dominant eigenvalue", RuntimeWarning, stacklevel=2)
        v = (_core.trace_functional(n_c, chi) / (n_c * chi)).reshape(n_c, chi, chi)
    else:
        v = _core.solve_fixed_point(s, n_c, chi)
    flat = v.reshape(-1)
    for _ in range(max_iter):
        nxt = s @ flat
        nxt = nxt / np.sum(nxt.reshape(n_c, chi, chi).trace(axis1=1, axis2=2))
        residual = np.linalg.norm(nxt - flat)
        flat = nxt
        if residual < tol:
            break
    else:
        raise NetworkError(f"fixed point did not converge (residual {residual:.2e})")
    blocks = flat.reshape(n_c, chi, chi)
    blocks = 0.5 * (blocks + blocks.conj().transpose(0, 2, 1))
    return BondEnvironment(blocks, float(np.linalg.norm(s @ blocks.reshape(-1) - blocks.reshape(-1))), degenerate)


def _cell_terms(ham: HamiltonianSpec):
    return [(t.labels, t.coeff) for t in ham.terms]


def site_energies(network: StoQmpsNetwork, ham: HamiltonianSpec) -> np.ndarray:
    """Per-site ``<h_i>`` for each window site (finite mode)."""
    if network.mode != "finite":
        raise NetworkError("site_energies needs finite mode")
    lo, hi = network.window
    r = ham.max_range
    if hi > network.L - r + 1:
        raise NetworkError(f"window end {hi} leaves no room for range-{r} terms in L={network.L}")
    q = network.ansatz.q
    a = _core.kraus(build_site_unitary(network.ansatz), q)
    emit = hidden_chain(network.spectrum)
    trans = finite_transitions(network.spectrum, network.L)
    env = _core.initial_env(emit.shape[0], network.chi)
    out = []
    for i in range(hi):
        # env holds the state after sites 1..i
        if i + 1 >= lo:
            out.append(_core.terms_expectation(a, emit, trans[i : i + r], env, _cell_terms(ham)))
        env = _core.site_step(a, emit, trans[i], env)
    return np.array(out, dtype=float)


def energy_density(network: StoQmpsNetwork, ham: HamiltonianSpec) -> float:
    if network.mode == "finite":
        return float(np.mean(site_energies(network, ham)))
    channel = site_channel(network)
    env = fixed_point(channel)
    r = ham.max_range
    trans = np.tile(channel.trans, (r, 1, 1))
    return float(_core.terms_expectation(channel.kraus, channel.emit, trans, env.blocks, _cell_terms(ham)))


@dataclass
class FreeEnergyResult:
    energy: float
    entropy: float
    free_energy: float
    T: float
    relative_error: float | None = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "energy": self.energy,
            "entropy": self.entropy,
            "free_energy": self.free_energy,
            "relative_error": self.relative_error,
            **self.metadata,
        }


def relative_error(f: float, f_exact: float) -> float:
    return (f - f_exact) / abs(f_exact)


def free_energy_density(
    network: StoQmpsNetwork,
    ham: HamiltonianSpec,
    T: float,
    f_exact: float | None = None,
    metadata: dict | None = None,
) -> FreeEnergyResult:
    if T < 0:
        raise ValueError("temperature must be non-negative")
    eps = energy_density(network, ham)
    s = spec.entropy_density(network.spectrum)
    f = eps - T * s
    meta = {"q": network.ansatz.q, "tau": network.ansatz.tau, "geometry": network.ansatz.geometry}
    meta.update(metadata or {})
    rel = None if f_exact is None else relative_error(f, f_exact)
    return FreeEnergyResult(eps, s, f, T, rel, meta)


@dataclass
class CorrelatorResult:
    op_a: str
    op_b: str
    distances: np.ndarray
    raw: np.ndarray
    connected: np.ndarray
    xi: float | None

    def rows(self):
        for d, r, c in zip(self.distances, self.raw, self.connected):
            yield int(d), float(r), float(c)


def fit_correlation_length(distances, values, d_min: int = 2, threshold: float = 1e-10) -> float | None:
    """Least-squares slope of ``ln|C(d)|`` against ``d``; ``None`` if too few points."""
    d = np.asarray(distances, dtype=float)
    v = np.abs(np.asarray(values, dtype=float))
    keep = (d >= d_min) & (v > threshold)
    if keep.sum() < 2:
        return None
    slope = np.polyfit(d[keep], np.log(v[keep]), 1)[0]
    if slope >= 0:
        return None
    return float(-1.0 / slope)


def correlator(
    network: StoQmpsNetwork, op_a: PauliString, op_b: PauliString, max_distance: int
) -> CorrelatorResult:
    """Raw and connected ``<A_0 B_d>`` in the bulk of the infinite chain.

    ``d`` is the offset between the first sites of the two operators and
    runs from ``range(A)`` up to ``max_distance``.
    """
    if op_a.range > 2 or op_b.range > 2:
        raise ValueError("correlators support single-site or adjacent-pair observables")
    channel = site_channel(network)
    env = fixed_point(channel).blocks
    step = channel

    def insert(state, labels):
        for c in labels:
            state = step(state, None if c == "I" else PAULI[c])
        return state

    def tr(x):
        return float(np.real(np.einsum("cii->", x)))

    mean_a = tr(insert(env, op_a.labels)) * op_a.coeff
    mean_b = tr(insert(env, op_b.labels)) * op_b.coeff
    state = insert(env, op_a.labels)
    dists, raw = [], []
    d = op_a.range
    while d <= max_distance:
        dists.append(d)
        raw.append(op_a.coeff * op_b.coeff * tr(insert(state, op_b.labels)))
        state = step(state)
        d += 1
    raw = np.array(raw)
    connected = raw - mean_a * mean_b
    dists = np.array(dists)
    return CorrelatorResult(op_a.labels, op_b.labels, dists, raw, connected, fit_correlation_length(dists, connected))


def _statevectors(u: np.ndarray, q: int, L: int) -> np.ndarray:
    """``psi[n, x, i]``: physical amplitudes ``x`` and bond ``i`` for every input string ``n``."""
    chi = 2 ** q
    blocks = u.reshape(2 * chi, 2, chi)  # [out (a,i), n, j]
    bits = (np.arange(2 ** L)[:, None] >> np.arange(L - 1, -1, -1)[None, :]) & 1
    psi = np.zeros((2 ** L, 1, chi), dtype=complex)
    psi[:, 0, 0] = 1.0
    for x in range(L):
        m = blocks[:, bits[:, x], :]  # (2chi, strings, chi)
        nxt = np.einsum("ksj,spj->spk", m, psi)
        psi = nxt.reshape(2 ** L, psi.shape[1] * 2, chi)
    return psi


@dataclass
class BruteForceState:
    rho: np.ndarray  # physical density matrix, site 1 most significant
    probs: np.ndarray
    psi: np.ndarray

    def joint_entropy(self) -> float:
        """Von Neumann entropy of the physical + final bond state."""
        flat = self.psi.reshape(self.psi.shape[0], -1)
        w = np.sqrt(self.probs)
        gram = (w[:, None] * flat.conj()) @ (flat.T * w[None, :])
        ev = np.linalg.eigvalsh(0.5 * (gram + gram.conj().T))
        ev = ev[ev > 1e-300]
        return float(-np.sum(ev * np.log(ev)))

    def reduced(self, start: int, length: int) -> np.ndarray:
        """Reduced density matrix on sites ``start .. start+length-1`` (0-based)."""
        L = int(np.log2(self.rho.shape[0]))
        t = self.rho.reshape((2,) * (2 * L))
        keep = list(range(start, start + length))
        traced = [i for i in range(L) if i not in keep]
        letters = "abcdefghijklmnopqrstuvwxyz"
        left = list(letters[:L])
        right = list(letters[L : 2 * L]) if 2 * L <= 26 else None
        if right is None:
            raise NetworkError("chain too long for reduced()")
        for i in traced:
            right[i] = left[i]
        out = "".join(left[i] for i in keep) + "".join(right[i] for i in keep)
        r = np.einsum("".join(left) + "".join(right) + "->" + out, t)
        return r.reshape(2 ** length, 2 ** length)

    def site_energy(self, ham: HamiltonianSpec, start: int) -> float:
        r = ham.max_range
        red = self.reduced(start, r)
        h = sum(dense_term_matrix(t, pad_to=r) for t in ham.terms)
        return float(np.real(np.trace(red @ h)))


def brute_force_rho(network: StoQmpsNetwork, L: int) -> BruteForceState:
    """Materialize ``sum_n P[n] |psi[n]><psi[n]|`` over all ``2**L`` input strings."""
    q = network.ansatz.q
    if L < 1 or L > 8 or q + L > 14:
        raise NetworkError("brute force needs 1 <= L <= 8 and q + L <= 14")
    u = build_site_unitary(network.ansatz)
    psi = _statevectors(u, q, L)
    probs = np.exp(spec.all_log_probs(network.spectrum, L))
    rho = np.einsum("n,nxi,nyi->xy", probs, psi, psi.conj())
    return BruteForceState(rho, probs, psi)
