"""Parameterized site unitaries built from layers of SU(4) gates.

Wire convention: wire 0 is the physical qubit, wires ``1..q`` are the bond
qubits.  In every matrix wire 0 is the most significant bit, so the site
unitary ``U`` acting on ``2 ** (q + 1)`` states has row index
``n * 2**q + i`` for physical state ``n`` and bond state ``i``.

The builders take an ``xp`` array module so the same code serves numpy
evaluation and the differentiable jax objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

Geometry = Literal["ladder", "brick"]
Mode = Literal["angles", "raw"]

N_ANGLES = 15
N_RAW = 32

# Gate parameter layout (15 angles):
#   [0:3]   A1, single-qubit gate on the upper wire, applied first
#   [3:6]   A2, single-qubit gate on the lower wire, applied first
#   [6:9]   core angles (t1, t2, t3)
#   [9:12]  A3, upper wire, applied last
#   [12:15] A4, lower wire, applied last
# A(a, b, c) = Rx(a) Rz(b) Rx(c); core = CX10 (Rz(t1) x Ry(t2)) CX01 (1 x Ry(t3)) CX10.
IDENTITY_ANGLES = np.array(
    [0.0, 0.0, 0.0,
     0.0, 0.0, 0.0,
     np.pi / 2, np.pi / 2, np.pi / 2,
     0.0, 3 * np.pi / 2, np.pi,
     0.0, 3 * np.pi / 2, 3 * np.pi],
)
# build_su4 multiplies by this so that det U = 1 and U(IDENTITY_ANGLES) = I
_PHASE = np.exp(-0.25j * np.pi)

_CX01 = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
_CX10 = np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=complex)


class AnsatzError(ValueError):
    """Invalid circuit geometry or gate parameters."""


def rx(theta, xp=np):
    c, s = xp.cos(theta / 2), xp.sin(theta / 2)
    return xp.array([[c, -1j * s], [-1j * s, c]])


def ry(theta, xp=np):
    c, s = xp.cos(theta / 2), xp.sin(theta / 2)
    return xp.array([[c, -s], [s, c]]).astype(complex)


def rz(theta, xp=np):
    e = xp.exp(-0.5j * theta)
    z = xp.zeros_like(e)
    return xp.array([[e, z], [z, xp.conj(e)]])


def _one_qubit(a, xp=np):
    return rx(a[0], xp) @ rz(a[1], xp) @ rx(a[2], xp)


def build_su4(params, xp=np):
    """Two-qubit gate from 15 angles using three CNOTs.

    Four Euler-angle single-qubit gates dress the entangling core.  The
    family covers SU(4) up to a global phase.
    """
    if xp is np:
        params = np.asarray(params, dtype=float)
        if params.shape != (N_ANGLES,):
            raise AnsatzError(f"expected {N_ANGLES} angles, got shape {params.shape}")
        if not np.all(np.isfinite(params)):
            raise AnsatzError("gate angles must be finite")
    first = xp.kron(_one_qubit(params[0:3], xp), _one_qubit(params[3:6], xp))
    core = (
        _CX10
        @ xp.kron(rz(params[6], xp), ry(params[7], xp))
        @ _CX01
        @ xp.kron(np.eye(2), ry(params[8], xp))
        @ _CX10
    )
    last = xp.kron(_one_qubit(params[9:12], xp), _one_qubit(params[12:15], xp))
    return _PHASE * (last @ core @ first)


def reunitarize(matrix, xp=np, check: bool = True):
    """Q factor of a QR decomposition with real-positive diagonal of R.

    Idempotent on unitaries.  With ``check`` (numpy only) an input whose
    condition number exceeds 1e12 is rejected.
    """
    if xp is np and check:
        matrix = np.asarray(matrix, dtype=complex)
        if not np.all(np.isfinite(matrix)):
            raise AnsatzError("matrix entries must be finite")
        if np.linalg.cond(matrix) > 1e12:
            raise AnsatzError("matrix is numerically rank deficient")
    q, r = xp.linalg.qr(matrix)
    d = xp.diagonal(r)
    return q * (d / xp.abs(d))[None, :]


def gate_layout(q: int, tau: int, geometry: Geometry) -> list[tuple[int, int]]:
    """Wire pairs of all two-qubit gates in application order.

    Ladder: every layer applies ``q`` gates cascading from the physical wire
    down the bond register, (0,1), (1,2), ..., (q-1,q).
    Brick: layer ``l`` applies the pairs (0,1), (2,3), ... for even ``l`` and
    (1,2), (3,4), ... for odd ``l``.
    """
    if q < 0 or tau < 1:
        raise AnsatzError(f"need q >= 0 and tau >= 1, got q={q}, tau={tau}")
    n_wires = q + 1
    pairs: list[tuple[int, int]] = []
    for layer in range(tau):
        if geometry == "ladder":
            pairs.extend((w, w + 1) for w in range(q))
        elif geometry == "brick":
            pairs.extend((w, w + 1) for w in range(layer % 2, n_wires - 1, 2))
        else:
            raise AnsatzError(f"unknown geometry {geometry!r}")
    return pairs


def layer_sizes(q: int, tau: int, geometry: Geometry) -> list[int]:
    if geometry == "ladder":
        return [q] * tau
    return [len(range(layer % 2, q, 2)) for layer in range(tau)]


def apply_gate(op, gate, wires: tuple[int, int], n_wires: int, xp=np):
    """Left-multiply a ``2**n_wires`` square operator by ``gate`` on adjacent wires."""
    w = wires[0]
    dim = op.shape[-1]
    t = op.reshape((2 ** w, 4, 2 ** (n_wires - w - 2), dim))
    t = xp.einsum("ab,xbyd->xayd", gate, t)
    return t.reshape((2 ** n_wires, dim))


def compose_site_unitary(gates, pairs, q: int, xp=np):
    u = xp.eye(2 ** (q + 1), dtype=complex)
    for g, wires in zip(gates, pairs):
        u = apply_gate(u, g, wires, q + 1, xp)
    return u


def gates_from_vector(vec, n_gates: int, mode: Mode, xp=np):
    """Split a flat parameter vector into a list of 4x4 unitaries."""
    if mode == "angles":
        v = vec.reshape((n_gates, N_ANGLES))
        return [build_su4(v[i], xp) for i in range(n_gates)]
    v = vec.reshape((n_gates, 4, 4, 2))
    return [reunitarize(v[i, ..., 0] + 1j * v[i, ..., 1], xp, check=False) for i in range(n_gates)]


def site_unitary_from_vector(vec, q: int, tau: int, geometry: Geometry, mode: Mode, xp=np):
    pairs = gate_layout(q, tau, geometry)
    return compose_site_unitary(gates_from_vector(vec, len(pairs), mode, xp), pairs, q, xp)


@dataclass(frozen=True)
class CircuitAnsatz:
    """Circuit geometry plus per-gate parameters.

    ``params`` has shape ``(n_gates, 15)`` in angle mode and
    ``(n_gates, 4, 4)`` complex in raw-matrix mode.  Raw matrices are
    re-unitarized whenever they are used.
    """

    q: int
    tau: int
    geometry: Geometry = "ladder"
    mode: Mode = "angles"
    params: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self):
        if self.mode not in ("angles", "raw"):
            raise AnsatzError(f"unknown parameterization mode {self.mode!r}")
        pairs = gate_layout(self.q, self.tau, self.geometry)
        n = len(pairs)
        if self.params is None:
            object.__setattr__(self, "params", identity_params(n, self.mode))
        p = np.array(self.params, dtype=float if self.mode == "angles" else complex)
        expected = (n, N_ANGLES) if self.mode == "angles" else (n, 4, 4)
        if p.shape != expected:
            raise AnsatzError(f"params shape {p.shape} does not match {expected}")
        if not np.all(np.isfinite(p)):
            raise AnsatzError("gate parameters must be finite")
        p.setflags(write=False)
        object.__setattr__(self, "params", p)

    @property
    def n_gates(self) -> int:
        return self.params.shape[0]

    @property
    def _width(self) -> int:
        return N_ANGLES if self.mode == "angles" else N_RAW

    @property
    def bond_dim(self) -> int:
        return 2 ** self.q

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return gate_layout(self.q, self.tau, self.geometry)

    def gates(self) -> list[np.ndarray]:
        if self.mode == "angles":
            return [build_su4(p) for p in self.params]
        return [reunitarize(m) for m in self.params]

    def to_vector(self) -> np.ndarray:
        """Flat real parameter vector (15 angles or 32 interleaved floats per gate)."""
        if self.mode == "angles":
            return self.params.ravel().copy()
        return np.stack([self.params.real, self.params.imag], axis=-1).ravel()

    def with_vector(self, vec) -> "CircuitAnsatz":
        vec = np.asarray(vec, dtype=float)
        if self.mode == "angles":
            params = vec.reshape(self.n_gates, N_ANGLES)
        else:
            v = vec.reshape(self.n_gates, 4, 4, 2)
            params = v[..., 0] + 1j * v[..., 1]
        return CircuitAnsatz(self.q, self.tau, self.geometry, self.mode, params)

    def to_dict(self) -> dict:
        return {
            "q": self.q,
            "tau": self.tau,
            "geometry": self.geometry,
            "mode": self.mode,
            "gates": [list(map(float, g)) for g in self.to_vector().reshape(self.n_gates, self._width)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CircuitAnsatz":
        shell = cls(int(d["q"]), int(d["tau"]), d["geometry"], d["mode"])
        return shell.with_vector(np.asarray(d["gates"], dtype=float).ravel())


def identity_params(n_gates: int, mode: Mode) -> np.ndarray:
    if mode == "angles":
        return np.tile(IDENTITY_ANGLES, (n_gates, 1))
    return np.tile(np.eye(4, dtype=complex), (n_gates, 1, 1))


def build_site_unitary(ansatz: CircuitAnsatz) -> np.ndarray:
    """Dense ``2**(q+1)`` site unitary of the circuit."""
    return compose_site_unitary(ansatz.gates(), ansatz.pairs, ansatz.q)


def random_ansatz(q: int, tau: int, geometry: Geometry, mode: Mode, rng: np.random.Generator) -> CircuitAnsatz:
    """Angles i.i.d. uniform in [0, 2pi); raw matrices are reunitarized complex Gaussians."""
    n = len(gate_layout(q, tau, geometry))
    if mode == "angles":
        params = rng.uniform(0.0, 2 * np.pi, size=(n, N_ANGLES))
    else:
        z = rng.normal(size=(n, 4, 4)) + 1j * rng.normal(size=(n, 4, 4))
        params = np.stack([reunitarize(m) for m in z])
    return CircuitAnsatz(q, tau, geometry, mode, params)


def append_identity_layer(ansatz: CircuitAnsatz) -> CircuitAnsatz:
    """Same circuit with one more layer of identity gates at the end."""
    tau = ansatz.tau + 1
    extra = layer_sizes(ansatz.q, tau, ansatz.geometry)[-1]
    params = np.concatenate([ansatz.params, identity_params(extra, ansatz.mode)])
    return CircuitAnsatz(ansatz.q, tau, ansatz.geometry, ansatz.mode, params)
