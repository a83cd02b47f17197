"""Array-module generic contraction kernels shared by numpy evaluation and jax.

The environment is a stack ``env[c]`` of (unnormalized) bond density
matrices, one per hidden classical state ``c`` of the spectrum chain.  The
total bond state is ``env.sum(0)`` and its trace is one.  For the product
ansatz there is a single hidden state that emits the mixture ``(1-p, p)``;
for the correlated ansatz the hidden state is the previous bit.

One site step is ``env'[d] = K_d( sum_c P[c, d] env[c] )`` where ``K_d``
feeds physical input ``n`` with weight ``emit[d, n]`` through the site
unitary and traces out (or measures an operator on) the physical output.
"""

from __future__ import annotations

import numpy as np

from .models import PAULI


def kraus(u, q: int):
    """``A[a, n, i, j] = <a, i| U |n, j>`` for physical ``a, n`` and bond ``i, j``."""
    chi = 2 ** q
    return u.reshape(2, chi, 2, chi).transpose(0, 2, 1, 3)


def site_step(A, emit, trans, env, op=None, xp=np):
    """One site of the chain, optionally inserting ``op`` on the physical output."""
    mixed = xp.einsum("cd,cjk->djk", trans, env)
    b = xp.einsum("anij,djk->danik", A, mixed)
    if op is None:
        return xp.einsum("danik,anlk,dn->dil", b, xp.conj(A), emit)
    return xp.einsum("danik,bnlk,ba,dn->dil", b, xp.conj(A), op, emit)


def superoperator(A, emit, trans, xp=np):
    """Matrix of :func:`site_step` acting on the row-major flattened ``env``."""
    n_c = emit.shape[0]
    chi = A.shape[-1]
    kmat = xp.einsum("dn,anij,ankl->dikjl", emit, A, xp.conj(A)).reshape(n_c, chi * chi, chi * chi)
    s = xp.einsum("cd,dxy->dxcy", trans, kmat)
    return s.reshape(n_c * chi * chi, n_c * chi * chi)


def trace_functional(n_c: int, chi: int, xp=np):
    return xp.tile(xp.eye(chi).reshape(-1), n_c).astype(complex)


def solve_fixed_point(s, n_c: int, chi: int, xp=np):
    """Unit-trace fixed point of ``s`` from ``(1 - s + w t^T) v = w``.

    ``t`` is the trace functional and ``w`` the maximally mixed vector; the
    system is nonsingular whenever the fixed point is unique.
    """
    dim = s.shape[0]
    t = trace_functional(n_c, chi, xp)
    w = t / (n_c * chi)
    m = xp.eye(dim, dtype=complex) - s + xp.outer(w, t)
    v = xp.linalg.solve(m, w)
    return v.reshape(n_c, chi, chi)


def _trie(terms):
    """Group ``(labels, coeff)`` pairs by their first label."""
    root: dict = {}
    for labels, coeff in terms:
        node = root
        for c in labels:
            node = node.setdefault(c, {})
        node[None] = node.get(None, 0.0) + coeff
    return root


def terms_expectation(A, emit, transitions, env, terms, xp=np):
    """``sum coeff * <prod_k O_k>`` for terms starting at the site after ``env``.

    ``transitions[k]`` is the hidden-state transition into the k-th site of
    the term.  Shared label prefixes are contracted once.
    """

    def walk(node, state, depth):
        total = 0.0
        for label, child in node.items():
            if label is None:
                total = total + child * xp.real(xp.einsum("cii->", state))
                continue
            op = None if label == "I" else PAULI[label]
            nxt = site_step(A, emit, transitions[depth], state, op, xp)
            total = total + walk(child, nxt, depth + 1)
        return total

    return walk(_trie(terms), env, 0)


def initial_env(n_c: int, chi: int, xp=np):
    """Bond register ``|0...0><0...0|`` stored in hidden block 0."""
    env = np.zeros((n_c, chi, chi), dtype=complex)
    env[0, 0, 0] = 1.0
    return xp.asarray(env)
