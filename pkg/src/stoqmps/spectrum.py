"""Classical Boltzmann distributions over the physical-qubit input bits.

Bits ``n`` map to Ising spins ``s = (-1)**n``; array index 0 is ``n=0``
(``s=+1``) and index 1 is ``n=1`` (``s=-1``).  The classical energy is

    W[s] = -sum_i (J s_i s_{i+1} + h s_i),   P[s] = exp(-W[s]) / Z.

The product-state ansatz (PSA) draws each bit independently with
``P(n=1) = p``; it coincides with the correlated ansatz (CSA) at ``J = 0``
and ``h = atanh(1 - 2p)``, i.e. ``p = exp(-h) / (2 cosh h)``.

All entropies are in nats.  Finite chains are open with the field applied
on every site; the symmetric transfer matrix splits the field between the
two spins of each bond and the boundary vectors carry the remaining half.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

_OVERFLOW = 300.0


class SpectrumError(ValueError):
    """Invalid spectrum parameters or a degenerate transfer matrix."""


@dataclass(frozen=True)
class PSA:
    """Independent bits with ``P(n=1) = p``."""

    p: float

    def __post_init__(self):
        if not (np.isfinite(self.p) and 0.0 <= self.p <= 1.0):
            raise SpectrumError(f"PSA probability must lie in [0, 1], got {self.p}")

    def to_csa(self) -> "CSA":
        if self.p in (0.0, 1.0):
            raise SpectrumError("deterministic PSA has no finite CSA field")
        return CSA(0.0, 0.5 * np.log((1.0 - self.p) / self.p))

    def to_dict(self) -> dict:
        return {"kind": "psa", "p": float(self.p)}


@dataclass(frozen=True)
class CSA:
    """Nearest-neighbour classical Ising chain with coupling ``J`` and field ``h``."""

    J: float
    h: float

    def __post_init__(self):
        if not (np.isfinite(self.J) and np.isfinite(self.h)):
            raise SpectrumError(f"CSA couplings must be finite, got J={self.J}, h={self.h}")

    def to_dict(self) -> dict:
        return {"kind": "csa", "J": float(self.J), "h": float(self.h)}


SpectrumParams = Union[PSA, CSA]


def spectrum_from_dict(d: dict) -> SpectrumParams:
    kind = d.get("kind")
    if kind == "psa":
        return PSA(float(d["p"]))
    if kind == "csa":
        return CSA(float(d["J"]), float(d["h"]))
    raise SpectrumError(f"unknown spectrum kind {kind!r}")


def psa_from_field(h: float) -> PSA:
    """PSA equivalent to ``CSA(0, h)``."""
    return PSA(float(np.exp(-h) / (2.0 * np.cosh(h))))


@dataclass(frozen=True)
class TransferSpectrum:
    lambda_plus: float
    lambda_minus: float
    v_plus: np.ndarray
    v_minus: np.ndarray
    # coefficients of the all-ones vector in the eigenbasis
    a_plus: float
    a_minus: float


def _check_scale(params: CSA, beta: float):
    if not np.isfinite(beta):
        raise SpectrumError("beta must be finite")
    if abs(beta * params.J) > _OVERFLOW or abs(beta * params.h) > _OVERFLOW:
        raise SpectrumError("|beta J| or |beta h| too large; rescale the couplings")


def transfer_matrix(params: CSA, beta: float = 1.0) -> np.ndarray:
    _check_scale(params, beta)
    J, h = params.J, params.h
    off = np.exp(-beta * J)
    return np.array([[np.exp(beta * (J + h)), off], [off, np.exp(beta * (J - h))]])


def _lambda(J, h, beta):
    a = np.exp(beta * J) * np.cosh(beta * h)
    b = np.exp(2 * beta * J) * np.sinh(beta * h) ** 2 + np.exp(-2 * beta * J)
    return a + np.sqrt(b), a - np.sqrt(b)


def eigenvalues(params: CSA, beta: float = 1.0) -> TransferSpectrum:
    """Closed-form eigen-decomposition of the 2x2 transfer matrix."""
    _check_scale(params, beta)
    lp, lm = _lambda(params.J, params.h, beta)
    t = transfer_matrix(params, beta)
    vecs = []
    for lam in (lp, lm):
        # two candidate null vectors of (T - lam); keep the better conditioned one
        v1 = np.array([t[0, 1], lam - t[0, 0]])
        v2 = np.array([lam - t[1, 1], t[1, 0]])
        v = v1 if np.linalg.norm(v1) >= np.linalg.norm(v2) else v2
        v = v / np.linalg.norm(v)
        vecs.append(v if v.sum() >= 0 else -v)
    ones = np.ones(2)
    return TransferSpectrum(lp, lm, vecs[0], vecs[1], float(ones @ vecs[0]), float(ones @ vecs[1]))


def binary_entropy(p: float) -> float:
    return float(-sum(x * np.log(x) for x in (p, 1.0 - p) if x > 0.0))


def csa_entropy(J, h, xp=np):
    """``ln lam+ - d(ln lam+)/d(beta)`` at ``beta = 1`` with the analytic derivative."""
    eJ, e2J = xp.exp(J), xp.exp(2 * J)
    sh, ch = xp.sinh(h), xp.cosh(h)
    a = eJ * ch
    b = e2J * sh ** 2 + 1.0 / e2J
    da = J * a + h * eJ * sh
    db = 2 * J * e2J * sh ** 2 + 2 * h * e2J * sh * ch - 2 * J / e2J
    lam = a + xp.sqrt(b)
    dlam = da + db / (2 * xp.sqrt(b))
    return xp.log(lam) - dlam / lam


def csa_stationary(J, h, xp=np):
    """Bulk transition matrix ``P[s, s'] = T[s, s'] v[s'] / (lam v[s])``."""
    off = xp.exp(-J)
    t00, t11 = xp.exp(J + h), xp.exp(J - h)
    lam = xp.exp(J) * xp.cosh(h) + xp.sqrt(xp.exp(2 * J) * xp.sinh(h) ** 2 + xp.exp(-2 * J))
    # (T01, lam - T00) and (lam - T11, T10) are both Perron vectors; pick the stable one
    v = xp.where(t00 >= t11, xp.stack([lam - t11, off]), xp.stack([off, lam - t00]))
    t = xp.stack([xp.stack([t00, off]), xp.stack([off, t11])])
    p = t * v[None, :] / (lam * v[:, None])
    return p / xp.sum(p, axis=1, keepdims=True)


def entropy_density(params: SpectrumParams) -> float:
    """Thermodynamic-limit Shannon entropy per site, in nats."""
    if isinstance(params, PSA):
        return binary_entropy(params.p)
    _check_scale(params, 1.0)
    return float(csa_entropy(params.J, params.h))


def entropy_density_general(weights, k: int, beta_step: float = 1e-6) -> float:
    """Entropy density of ``W = sum_i w(n_i, ..., n_{i+k-1})``.

    ``weights`` has shape ``(2,) * k`` and holds the energy contribution of
    one window of ``k`` consecutive bits.  The transfer matrix acts on the
    ``2**k`` window states; the entropy follows from its dominant eigenvalue
    and a central-difference beta derivative.
    """
    w = np.asarray(weights, dtype=float)
    if k < 1 or k > 6:
        raise SpectrumError("window length must be between 1 and 6")
    if w.shape != (2,) * k:
        raise SpectrumError(f"weights must have shape {(2,) * k}, got {w.shape}")
    flat = w.reshape(-1)
    dim = 2 ** k
    states = np.arange(dim)
    # window (a_1..a_k) -> (a_2..a_{k+1}); bit a_1 is most significant
    succ = ((states << 1) & (dim - 1))[:, None] | np.arange(2)[None, :]

    def log_lambda(beta):
        t = np.zeros((dim, dim))
        for bit in (0, 1):
            t[states, succ[:, bit]] = np.exp(-beta * flat)
        ev = np.linalg.eigvals(t)
        order = np.argsort(-np.abs(ev))
        if dim > 1 and abs(ev[order[0]]) - abs(ev[order[1]]) < 1e-10:
            raise SpectrumError("degenerate dominant eigenvalue; thermodynamic limit not unique")
        return np.log(ev[order[0]].real)

    d = (log_lambda(1 + beta_step) - log_lambda(1 - beta_step)) / (2 * beta_step)
    return float(log_lambda(1.0) - d)


def csa_window_weights(params: CSA) -> np.ndarray:
    """Two-site weight table reproducing the nearest-neighbour ``W``."""
    s = np.array([1.0, -1.0])
    return -(params.J * np.outer(s, s) + params.h * s[:, None])


def _as_spins(bits) -> np.ndarray:
    b = np.asarray(bits, dtype=int)
    if b.ndim != 1 or b.size < 1:
        raise SpectrumError("bitstring must be a non-empty 1d sequence")
    if np.any((b != 0) & (b != 1)):
        raise SpectrumError("bits must be 0 or 1")
    return 1 - 2 * b


def log_partition(params: CSA, L: int) -> float:
    """``ln Z`` of the open chain of ``L`` sites, computed with rescaling."""
    t = transfer_matrix(params)
    u = np.exp(0.5 * params.h * np.array([1.0, -1.0]))
    v = u.copy()
    log_scale = 0.0
    for _ in range(L - 1):
        v = t @ v
        norm = v.sum()
        log_scale += np.log(norm)
        v /= norm
    return float(log_scale + np.log(u @ v))


def log_prob(params: SpectrumParams, bits) -> float:
    """Exact log-probability of an open-chain configuration."""
    s = _as_spins(bits)
    if isinstance(params, PSA):
        n1 = int(np.sum(s < 0))
        n0 = s.size - n1
        with np.errstate(divide="ignore"):
            return float(
                (n1 * np.log(params.p) if n1 else 0.0) + (n0 * np.log1p(-params.p) if n0 else 0.0)
            )
    _check_scale(params, 1.0)
    neg_w = params.J * np.sum(s[:-1] * s[1:]) + params.h * np.sum(s)
    return float(neg_w - log_partition(params, s.size))


@dataclass(frozen=True)
class MarkovChain:
    """Bits as a Markov chain: ``initial[a]`` and ``transitions[i, a, b] = P(n_{i+1}=b | n_i=a)``."""

    initial: np.ndarray
    transitions: np.ndarray

    @property
    def length(self) -> int:
        return self.transitions.shape[0] + 1


def finite_chain(params: SpectrumParams, L: int) -> MarkovChain:
    """Exact sequential (left-to-right) conditionals of the open chain."""
    if L < 1:
        raise SpectrumError("chain length must be >= 1")
    if isinstance(params, PSA):
        row = np.array([1.0 - params.p, params.p])
        return MarkovChain(row, np.tile(row, (L - 1, 2, 1)))
    t = transfer_matrix(params)
    u = np.exp(0.5 * params.h * np.array([1.0, -1.0]))
    # right[i] is proportional to the weight of sites i+1..L given site i
    right = np.empty((L, 2))
    right[L - 1] = u
    for i in range(L - 2, -1, -1):
        r = t @ right[i + 1]
        right[i] = r / r.sum()
    trans = np.empty((max(L - 1, 0), 2, 2))
    for i in range(L - 1):
        m = t * right[i + 1][None, :]
        trans[i] = m / m.sum(axis=1, keepdims=True)
    init = u * right[0]
    return MarkovChain(init / init.sum(), trans)


def stationary_chain(params: SpectrumParams) -> tuple[np.ndarray, np.ndarray]:
    """Bulk marginal and transition matrix of the infinite chain."""
    if isinstance(params, PSA):
        row = np.array([1.0 - params.p, params.p])
        return row, np.tile(row, (2, 1))
    spec = eigenvalues(params)
    t = transfer_matrix(params)
    v = spec.v_plus
    trans = t * v[None, :] / (spec.lambda_plus * v[:, None])
    trans /= trans.sum(axis=1, keepdims=True)
    return v ** 2 / (v @ v), trans


def finite_entropy(params: SpectrumParams, L: int) -> float:
    """Exact Shannon entropy of the open ``L``-site chain (chain rule)."""
    if isinstance(params, PSA):
        return L * binary_entropy(params.p)
    chain = finite_chain(params, L)

    def h(row):
        r = row[row > 0]
        return -np.sum(r * np.log(r))

    total = h(chain.initial)
    marginal = chain.initial
    for t in chain.transitions:
        total += sum(marginal[a] * h(t[a]) for a in range(2))
        marginal = marginal @ t
    return float(total)


def sample_bitstrings(params: SpectrumParams, L: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` exact samples of shape ``(n, L)`` by sequential conditional sampling."""
    chain = finite_chain(params, L)
    out = np.empty((n, L), dtype=np.int8)
    out[:, 0] = rng.random(n) < chain.initial[1]
    for i, t in enumerate(chain.transitions):
        out[:, i + 1] = rng.random(n) < t[out[:, i], 1]
    return out


def sample_bitstring(params: SpectrumParams, L: int, rng: np.random.Generator) -> np.ndarray:
    return sample_bitstrings(params, L, 1, rng)[0]


def all_log_probs(params: SpectrumParams, L: int) -> np.ndarray:
    """Log-probabilities of all ``2**L`` configurations (bit 0 most significant)."""
    bits = (np.arange(2 ** L)[:, None] >> np.arange(L - 1, -1, -1)[None, :]) & 1
    if isinstance(params, PSA):
        n1 = bits.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            logs = np.array([np.log1p(-params.p), np.log(params.p)])
            return np.where(n1 > 0, n1 * logs[1], 0.0) + np.where(n1 < L, (L - n1) * logs[0], 0.0)
    _check_scale(params, 1.0)
    s = 1.0 - 2.0 * bits
    neg_w = params.J * np.sum(s[:, :-1] * s[:, 1:], axis=1) + params.h * np.sum(s, axis=1)
    # normalized by the brute-force sum, not the transfer matrix
    return neg_w - np.logaddexp.reduce(neg_w)


def enumerated_entropy(params: SpectrumParams, L: int) -> float:
    lp = all_log_probs(params, L)
    p = np.exp(lp)
    with np.errstate(invalid="ignore"):
        return float(-np.sum(np.where(p > 0, p * lp, 0.0)))


__all__ = [
    "PSA",
    "CSA",
    "SpectrumParams",
    "SpectrumError",
    "TransferSpectrum",
    "MarkovChain",
    "transfer_matrix",
    "eigenvalues",
    "entropy_density",
    "entropy_density_general",
    "csa_window_weights",
    "log_prob",
    "log_partition",
    "finite_chain",
    "stationary_chain",
    "finite_entropy",
    "sample_bitstring",
    "sample_bitstrings",
    "binary_entropy",
    "psa_from_field",
    "spectrum_from_dict",
]
