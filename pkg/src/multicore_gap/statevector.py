"""Exact pure-state simulation of sampled circuits.

Amplitudes are little-endian: qubit 0 is the least significant bit of the
basis index. Gates act in place on complex128 arrays of length ``2**n``.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.linalg import hadamard

from .errors import CapExceeded, EqualQubits, IndexOutOfRange
from .model import (
    STATEVECTOR_QUBIT_CAP,
    CircuitConfig,
    InterCZ,
    IntraCZ,
    SingleQubit,
    haar_angles,
    sample_circuit,
)

EXACT_MOMENT_QUBIT_CAP = 6


def check_qubit_cap(n_qubits: int, cap: int) -> None:
    if n_qubits < 1:
        raise ValueError("need at least one qubit")
    if n_qubits > cap:
        raise CapExceeded(f"{n_qubits} qubits exceeds the cap of {cap}")


def new_zero_state(n_qubits: int, cap: int = STATEVECTOR_QUBIT_CAP) -> np.ndarray:
    check_qubit_cap(n_qubits, cap)
    state = np.zeros(2**n_qubits, dtype=np.complex128)
    state[0] = 1.0
    return state


def rotation_matrix(angles: tuple[float, float, float]) -> np.ndarray:
    """Single-qubit unitary ``Rz(phi) Ry(theta) Rz(lam)`` up to global phase."""
    theta, phi, lam = angles
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array(
        [
            [c, -np.exp(1j * lam) * s],
            [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c],
        ],
        dtype=np.complex128,
    )


def sample_haar_single_qubit(rng: np.random.Generator) -> np.ndarray:
    """Haar-random 2x2 unitary (modulo global phase)."""
    return rotation_matrix(haar_angles(rng))


def _n_qubits(state: np.ndarray) -> int:
    n = state.size.bit_length() - 1
    if state.ndim != 1 or 1 << n != state.size:
        raise ValueError("statevector length must be a power of two")
    return n


def apply_single_qubit(state: np.ndarray, qubit: int, u: np.ndarray) -> np.ndarray:
    n = _n_qubits(state)
    if not 0 <= qubit < n:
        raise IndexOutOfRange(f"qubit {qubit} outside 0..{n - 1}")
    view = state.reshape(2 ** (n - 1 - qubit), 2, 2**qubit)
    a0 = view[:, 0, :].copy()
    a1 = view[:, 1, :]
    view[:, 0, :] = u[0, 0] * a0 + u[0, 1] * a1
    view[:, 1, :] = u[1, 0] * a0 + u[1, 1] * a1
    return state


@lru_cache(maxsize=512)
def _cz_indices(n: int, q1: int, q2: int) -> np.ndarray:
    idx = np.arange(2**n)
    mask = ((idx >> q1) & 1).astype(bool) & ((idx >> q2) & 1).astype(bool)
    return np.flatnonzero(mask)


def apply_cz(state: np.ndarray, q1: int, q2: int) -> np.ndarray:
    """Negate every amplitude whose bits ``q1`` and ``q2`` are both set."""
    n = _n_qubits(state)
    if not (0 <= q1 < n and 0 <= q2 < n):
        raise IndexOutOfRange(f"CZ qubits ({q1}, {q2}) outside 0..{n - 1}")
    if q1 == q2:
        raise EqualQubits("CZ needs two distinct qubits")
    lo, hi = min(q1, q2), max(q1, q2)
    state[_cz_indices(n, lo, hi)] *= -1
    return state


def run_events(state: np.ndarray, events) -> np.ndarray:
    for ev in events:
        if isinstance(ev, SingleQubit):
            apply_single_qubit(state, ev.qubit, rotation_matrix(ev.angles))
        elif isinstance(ev, IntraCZ):
            apply_cz(state, ev.q1, ev.q2)
        elif isinstance(ev, InterCZ):
            apply_cz(state, ev.control, ev.target)
        else:
            raise TypeError(f"unknown gate event {ev!r}")
    return state


def run_circuit_state(config: CircuitConfig, circuit_index: int,
                      cap: int = STATEVECTOR_QUBIT_CAP) -> np.ndarray:
    state = new_zero_state(config.n_qubits, cap)
    return run_events(state, sample_circuit(config, circuit_index))


def run_circuit(config: CircuitConfig, circuit_index: int,
                cap: int = STATEVECTOR_QUBIT_CAP) -> np.ndarray:
    """Computational-basis probabilities of circuit ``circuit_index`` applied to |0...0>."""
    return np.abs(run_circuit_state(config, circuit_index, cap)) ** 2


def sample_haar_state(rng: np.random.Generator, n_qubits: int,
                      cap: int = STATEVECTOR_QUBIT_CAP) -> np.ndarray:
    check_qubit_cap(n_qubits, cap)
    d = 2**n_qubits
    z = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return z / np.linalg.norm(z)


def sample_haar_state_probs(rng: np.random.Generator, n_qubits: int,
                            cap: int = STATEVECTOR_QUBIT_CAP) -> np.ndarray:
    p = np.abs(sample_haar_state(rng, n_qubits, cap)) ** 2
    return p / p.sum()


# -- Pauli moments ---------------------------------------------------------

@lru_cache(maxsize=None)
def _reduced_class_index(n: int) -> np.ndarray:
    """Reduced index of the Pauli ``X^a Z^b`` stored at position ``a * 2**n + b``.

    Per qubit the symbol is 1 (identity), z (Z only) or eps (X or Y), giving
    base-3 digits 0, 1, 2 with qubit 0 least significant.
    """
    a = np.arange(2**n)[:, None]
    b = np.arange(2**n)[None, :]
    out = np.zeros((2**n, 2**n), dtype=np.int64)
    for q in range(n):
        xa = (a >> q) & 1
        zb = (b >> q) & 1
        digit = np.where(xa == 1, 2, zb)
        out += digit * 3**q
    return out.ravel()


def pauli_expectations(states: np.ndarray) -> np.ndarray:
    """``|<psi| X^a Z^b |psi>|`` for all ``a, b``; trailing shape ``(2**n, 2**n)``.

    For each shift ``a`` the product ``conj(psi[x ^ a]) psi[x]`` is Walsh-Hadamard
    transformed over ``x``. Phases from Y = iXZ drop out of the modulus.
    """
    states = np.atleast_2d(states)
    n = _n_qubits(states[0])
    d = 2**n
    x = np.arange(d)
    shifted = states[:, x[:, None] ^ x[None, :]]  # [s, a, x] = psi[x ^ a]
    prod = np.conj(shifted) * states[:, None, :]
    return np.abs(prod @ hadamard(d))


def exact_reduced_moments(states: np.ndarray, n_cores: int, n_qubits_per_core: int,
                          cap: int = EXACT_MOMENT_QUBIT_CAP) -> np.ndarray:
    """Squared Pauli coefficients ``tr(rho P)**2`` summed into reduced classes.

    Accepts one state or a stack of states; returns arrays of length ``3**n``
    where X and Y on each qubit are pooled into one symbol. For a pure state the
    components add up to ``2**n``.
    """
    n = n_cores * n_qubits_per_core
    check_qubit_cap(n, cap)
    single = np.ndim(states) == 1
    states = np.atleast_2d(np.asarray(states, dtype=np.complex128))
    if states.shape[1] != 2**n:
        raise ValueError(f"expected states of length {2**n}")
    sq = (pauli_expectations(states) ** 2).reshape(states.shape[0], -1)
    cls = _reduced_class_index(n)
    out = np.zeros((states.shape[0], 3**n))
    for row, vals in zip(out, sq):
        row[:] = np.bincount(cls, weights=vals, minlength=3**n)
    return out[0] if single else out
