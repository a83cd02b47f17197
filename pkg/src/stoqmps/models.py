"""Translation-invariant spin-chain Hamiltonians as Pauli-string term lists."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

MAX_RANGE = 3


@dataclass(frozen=True)
class PauliString:
    """Product of Paulis on sites ``0 .. len(labels)-1`` of one translation cell.

    >>> PauliString("XIX", 0.5).range
    3
    """

    labels: str
    coeff: float = 1.0

    def __post_init__(self):
        if not self.labels or any(c not in PAULI for c in self.labels):
            raise ValueError(f"invalid Pauli labels {self.labels!r}")
        if set(self.labels) == {"I"}:
            raise ValueError("a term needs at least one non-identity label")
        if self.labels[0] == "I" or self.labels[-1] == "I":
            raise ValueError("labels must start and end on a non-identity operator")
        if len(self.labels) > MAX_RANGE:
            raise ValueError(f"range {len(self.labels)} exceeds {MAX_RANGE}")
        if not np.isfinite(self.coeff):
            raise ValueError("coefficient must be finite")

    @property
    def range(self) -> int:
        return len(self.labels)

    def support(self) -> list[tuple[int, str]]:
        return [(i, c) for i, c in enumerate(self.labels) if c != "I"]


@dataclass(frozen=True)
class HamiltonianSpec:
    name: str
    terms: tuple[PauliString, ...]
    params: dict = field(default_factory=dict, compare=False)

    @property
    def max_range(self) -> int:
        return max(t.range for t in self.terms)

    def cell_matrix(self) -> np.ndarray:
        """Dense ``h_i`` on ``max_range`` sites (terms padded with identities)."""
        r = self.max_range
        out = np.zeros((2 ** r, 2 ** r), dtype=complex)
        for t in self.terms:
            out += t.coeff * dense_term_matrix(PauliString(t.labels, 1.0), pad_to=r)
        return out

    def to_dict(self) -> dict:
        return {"model": self.name, **self.params}


def dense_term_matrix(term: PauliString, pad_to: int | None = None) -> np.ndarray:
    """Kronecker product of the term's Paulis times its coefficient."""
    labels = term.labels + "I" * ((pad_to or term.range) - term.range)
    return term.coeff * reduce(np.kron, (PAULI[c] for c in labels))


def sdim(V: float) -> HamiltonianSpec:
    """Ising chain with self-dual perturbation.

    ``H = sum_i -(X_i X_{i+1} + Z_i) + V (Z_i Z_{i+1} + X_{i-1} X_{i+1})``;
    the last term is anchored at offsets (0, 2).  ``V = 0`` is the critical
    transverse-field Ising chain.
    """
    if not np.isfinite(V):
        raise ValueError("V must be finite")
    terms = [PauliString("XX", -1.0), PauliString("Z", -1.0)]
    if V != 0:
        terms += [PauliString("ZZ", float(V)), PauliString("XIX", float(V))]
    return HamiltonianSpec("sdim", tuple(terms), {"V": float(V)})


def heisenberg() -> HamiltonianSpec:
    return HamiltonianSpec(
        "heisenberg",
        (PauliString("XX", 1.0), PauliString("YY", 1.0), PauliString("ZZ", 1.0)),
    )


def model_from_dict(d: dict) -> HamiltonianSpec:
    name = d.get("model")
    if name == "sdim":
        return sdim(float(d.get("V", 0.0)))
    if name == "tfim":
        return sdim(0.0)
    if name == "heisenberg":
        return heisenberg()
    raise ValueError(f"unknown model {name!r}")


def chain_hamiltonian(ham: HamiltonianSpec, L: int, periodic: bool = True) -> np.ndarray:
    """Dense ``2**L`` Hamiltonian (small ``L`` only; bit 0 is site 0)."""
    dim = 2 ** L
    out = np.zeros((dim, dim), dtype=complex)
    for t in ham.terms:
        starts = range(L) if periodic else range(L - t.range + 1)
        for i in starts:
            ops = ["I"] * L
            for off, c in t.support():
                ops[(i + off) % L] = c
            out += t.coeff * reduce(np.kron, (PAULI[c] for c in ops))
    return out
