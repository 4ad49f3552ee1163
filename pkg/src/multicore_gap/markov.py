"""Reduced second-moment Markov operators and their spectra.

A moment vector holds ``E[r_P**2]`` for the Pauli expansion of the state with
X and Y pooled per qubit, so it lives on ``3**n`` indices. The base-3 digit of
qubit ``g`` (global index) is the symbol on that qubit: 0 for the identity,
1 for Z, 2 for the pooled X/Y class. Digit order is little-endian, matching
the statevector qubit order.

Operators are column stochastic and act on column vectors (``v -> M @ v``).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigs

from .errors import (
    CapExceeded,
    DegenerateCore,
    NoConvergence,
    NoSubleadingEigenvalue,
    NotUnitary,
    OutOfRange,
    SpectrumAnomaly,
)
from .model import MARKOV_DIM_CAP, CircuitConfig, LinkSet

DENSE_THRESHOLD = 3**7
UNIT_TOLERANCE = 1e-8

PAULIS = {
    "I": np.eye(2, dtype=np.complex128),
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}
REDUCED_SYMBOL = {"I": 0, "Z": 1, "X": 2, "Y": 2}
SYMBOL_NAMES = ("1", "z", "eps")

CZ_GATE = np.diag([1, 1, 1, -1]).astype(np.complex128)


def reduced_single_qubit_matrix(c_rand: float) -> np.ndarray:
    """3x3 reduced action ``R(c)`` of a single-qubit rotation on (1, z, eps).

    ``c = 1/3`` is the Haar point; ``c = 1`` is the identity.
    """
    c = float(c_rand)
    if not -1.0 <= c <= 1.0:
        raise OutOfRange(f"c_rand must lie in [-1, 1], got {c}")
    return np.array(
        [
            [1.0, 0.0, 0.0],
            [0.0, c, (1.0 - c) / 2.0],
            [0.0, 1.0 - c, (1.0 + c) / 2.0],
        ]
    )


# -- brute-force Pauli conjugation -----------------------------------------

def _pair_matrix(label: tuple[str, str]) -> np.ndarray:
    # label[0] acts on the gate's qubit 0, the least significant bit
    return np.kron(PAULIS[label[1]], PAULIS[label[0]])


PAULI_PAIRS = tuple(itertools.product("IXYZ", repeat=2))


def brute_force_pauli_conjugation_oracle(gate: np.ndarray) -> dict:
    """Squared Pauli coefficients of ``U P U^dag`` for all 16 two-qubit Paulis.

    Returns ``{P: {Q: |tr(Q U P U^dag)|**2 / 16}}`` keeping only non-zero
    weights. Labels are pairs such as ``("X", "I")`` with the first letter on
    the gate's qubit 0.
    """
    u = np.asarray(gate, dtype=np.complex128)
    if u.shape != (4, 4) or not np.allclose(u.conj().T @ u, np.eye(4), atol=1e-10):
        raise NotUnitary("gate must be a 4x4 unitary")
    out = {}
    for p in PAULI_PAIRS:
        conj = u @ _pair_matrix(p) @ u.conj().T
        weights = {}
        for q in PAULI_PAIRS:
            w = abs(np.trace(_pair_matrix(q).conj().T @ conj) / 4.0) ** 2
            if w > 1e-14:
                weights[q] = w
        out[p] = weights
    return out


def reduced_two_qubit_matrix(gate: np.ndarray) -> np.ndarray:
    """9x9 reduced transfer matrix of a two-qubit gate, from the brute-force oracle.

    Index ``a + 3 b`` carries symbol ``a`` on qubit 0 and ``b`` on qubit 1.
    Raises ``ValueError`` if the gate does not treat X and Y alike, i.e. if
    the pooling is not exact for it.
    """
    oracle = brute_force_pauli_conjugation_oracle(gate)
    columns: dict[int, np.ndarray] = {}
    for p, weights in oracle.items():
        col = np.zeros(9)
        for q, w in weights.items():
            col[REDUCED_SYMBOL[q[0]] + 3 * REDUCED_SYMBOL[q[1]]] += w
        src = REDUCED_SYMBOL[p[0]] + 3 * REDUCED_SYMBOL[p[1]]
        if src in columns and not np.allclose(columns[src], col, atol=1e-12):
            raise ValueError(f"gate is not lumpable on the reduced class of {p}")
        columns[src] = col
    return np.column_stack([columns[i] for i in range(9)])


@lru_cache(maxsize=None)
def _cz_table() -> np.ndarray:
    m = reduced_two_qubit_matrix(CZ_GATE)
    table = np.zeros((3, 3, 2), dtype=np.int64)
    for src in range(9):
        (dst,) = np.flatnonzero(np.abs(m[:, src]) > 0.5)
        table[src % 3, src // 3] = (dst % 3, dst // 3)
    return table


def reduced_cz_map() -> dict[tuple[int, int], tuple[int, int]]:
    """CZ action on reduced symbol pairs, as derived from the conjugation oracle."""
    table = _cz_table()
    return {(a, b): (int(table[a, b, 0]), int(table[a, b, 1]))
            for a in range(3) for b in range(3)}


@lru_cache(maxsize=256)
def _cz_permutation(n: int, i: int, j: int) -> np.ndarray:
    """Row index that each column of CZ on digits ``(i, j)`` maps to."""
    idx = np.arange(3**n)
    di = (idx // 3**i) % 3
    dj = (idx // 3**j) % 3
    table = _cz_table()
    return idx + (table[di, dj, 0] - di) * 3**i + (table[di, dj, 1] - dj) * 3**j


def cz_matrix(n: int, i: int, j: int) -> sp.csr_matrix:
    d = 3**n
    return sp.csr_matrix((np.ones(d), (_cz_permutation(n, i, j), np.arange(d))), shape=(d, d))


def embed_single(matrix: np.ndarray, digit: int, n: int) -> np.ndarray:
    return np.kron(np.eye(3 ** (n - 1 - digit)), np.kron(matrix, np.eye(3**digit)))


def build_core_matrix(n_qubits_per_core: int, p_single: float, c_rand: float) -> np.ndarray:
    """Mean one-gate reduced transfer matrix of a single core."""
    nq = int(n_qubits_per_core)
    if nq < 1:
        raise ValueError("n_qubits_per_core must be >= 1")
    if not 0.0 <= p_single <= 1.0:
        raise OutOfRange(f"p_single must lie in [0, 1], got {p_single}")
    r = reduced_single_qubit_matrix(c_rand)
    m = sum(embed_single(r, i, nq) for i in range(nq)) * (p_single / nq)
    if p_single < 1.0:
        if nq < 2:
            raise DegenerateCore("a single-qubit core has no pair for a two-qubit gate")
        pairs = [(i, j) for i in range(nq) for j in range(nq) if i != j]
        m = m + (1.0 - p_single) / len(pairs) * sum(cz_matrix(nq, i, j).toarray() for i, j in pairs)
    return m


# -- operators -------------------------------------------------------------

@dataclass(frozen=True)
class KronFactor:
    """Block-diagonal-by-digit factor ``blocks[-1] (x) ... (x) blocks[0]``.

    ``blocks[c]`` acts on the digit group of core ``c``.
    """

    blocks: tuple[np.ndarray, ...]

    @property
    def dim(self) -> int:
        return int(np.prod([b.shape[0] for b in self.blocks]))

    def apply(self, x: np.ndarray) -> np.ndarray:
        m = x.shape[1]
        sizes = tuple(b.shape[0] for b in reversed(self.blocks))
        t = x.reshape(sizes + (m,))
        last = len(self.blocks) - 1
        for c, block in enumerate(self.blocks):
            ax = last - c
            t = np.moveaxis(np.tensordot(block, t, axes=([1], [ax])), 0, ax)
        return np.ascontiguousarray(t).reshape(-1, m)

    def to_dense(self) -> np.ndarray:
        out = np.array([[1.0]])
        for block in reversed(self.blocks):
            out = np.kron(out, block)
        return out


Factor = Union[np.ndarray, sp.spmatrix, KronFactor]


@dataclass(frozen=True)
class ReducedOperator:
    """Composite linear operator on moment vectors.

    ``factors[0]`` is applied first, so the operator equals
    ``factors[-1] @ ... @ factors[0]``.
    """

    dim: int
    factors: tuple = field(default=())
    label: str = ""

    def __post_init__(self) -> None:
        for f in self.factors:
            shape = (f.dim, f.dim) if isinstance(f, KronFactor) else f.shape
            if shape != (self.dim, self.dim):
                raise ValueError(f"factor of shape {shape} does not match dim {self.dim}")

    def then(self, other: "ReducedOperator") -> "ReducedOperator":
        """Operator that applies ``self`` first and ``other`` second."""
        return ReducedOperator(self.dim, self.factors + other.factors, self.label)

    def power(self, k: int) -> "ReducedOperator":
        return ReducedOperator(self.dim, self.factors * int(k), self.label)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        vector = x.ndim == 1
        y = x.reshape(self.dim, -1)
        for f in self.factors:
            y = f.apply(y) if isinstance(f, KronFactor) else f @ y
        y = np.asarray(y)
        return y.ravel() if vector else y

    __matmul__ = matvec

    def to_dense(self, batch: int = 2048) -> np.ndarray:
        out = np.empty((self.dim, self.dim))
        for start in range(0, self.dim, batch):
            stop = min(start + batch, self.dim)
            cols = np.zeros((self.dim, stop - start))
            cols[np.arange(start, stop), np.arange(stop - start)] = 1.0
            out[:, start:stop] = self.matvec(cols)
        return out

    def to_sparse(self) -> sp.csr_matrix:
        acc = sp.identity(self.dim, format="csr")
        for f in self.factors:
            m = sp.csr_matrix(f.to_dense()) if isinstance(f, KronFactor) else sp.csr_matrix(f)
            acc = m @ acc
        acc.eliminate_zeros()
        return acc.tocsr()

    def column_sums(self) -> np.ndarray:
        """Column sums, computed as ``1^T M`` by pushing the ones row through the factors."""
        row = np.ones(self.dim)
        for f in reversed(self.factors):
            if isinstance(f, KronFactor):
                row = KronFactor(tuple(b.T for b in f.blocks)).apply(row[:, None]).ravel()
            else:
                row = np.asarray(f.T @ row).ravel()
        return row


def _check_dim(dim: int, cap: int) -> None:
    if dim > cap:
        raise CapExceeded(f"reduced dimension {dim} exceeds the cap of {cap}")


def build_intra_operator(n_cores: int, core_matrix: np.ndarray,
                         cap: int = MARKOV_DIM_CAP) -> ReducedOperator:
    """One intracore step on every core: the Kronecker power of ``core_matrix``."""
    core_matrix = np.asarray(core_matrix, dtype=float)
    dim = core_matrix.shape[0] ** n_cores
    _check_dim(dim, cap)
    return ReducedOperator(dim, (KronFactor((core_matrix,) * n_cores),), "intra")


def build_link_operator(link: tuple[int, int], n_qubits_per_core: int, n_cores: int) -> sp.csr_matrix:
    """Uniform mixture of the ``2 Nq^2`` CZ placements across one link."""
    alpha, beta = link
    nq = n_qubits_per_core
    n = n_cores * nq
    d = 3**n
    rows, cols = [], []
    for q1 in range(nq):
        for q2 in range(nq):
            a, b = alpha * nq + q1, beta * nq + q2
            for i, j in ((a, b), (b, a)):
                rows.append(_cz_permutation(n, i, j))
                cols.append(np.arange(d))
    weight = 1.0 / (2 * nq * nq)
    data = np.full(len(rows) * d, weight)
    return sp.csr_matrix((data, (np.concatenate(rows), np.concatenate(cols))), shape=(d, d))


def build_inter_operator(links: Union[LinkSet, Iterable[tuple[int, int]]], n_qubits_per_core: int,
                         n_cores: int, cap: int = MARKOV_DIM_CAP) -> ReducedOperator:
    """Product of link mixtures; the first link in canonical order is applied first."""
    dim = 3 ** (n_cores * n_qubits_per_core)
    _check_dim(dim, cap)
    factors = tuple(build_link_operator(link, n_qubits_per_core, n_cores) for link in links)
    return ReducedOperator(dim, factors, "inter")


def build_total_operator(config: CircuitConfig, interactions: bool = True,
                         cap: int = MARKOV_DIM_CAP) -> ReducedOperator:
    """One circuit layer: ``I`` intracore steps, then the inter-core links.

    With ``interactions=False`` the links are dropped, leaving the factorized
    per-core dynamics.
    """
    core = build_core_matrix(config.n_qubits_per_core, config.p_single, config.c_rand)
    intra = build_intra_operator(config.n_cores, core, cap)
    links = config.links if interactions else ()
    inter = build_inter_operator(links, config.n_qubits_per_core, config.n_cores, cap)
    op = intra.power(config.intracore_steps).then(inter)
    return ReducedOperator(op.dim, op.factors, "total")


def identity_moments(n: int) -> np.ndarray:
    """Point mass on the all-identity string."""
    v = np.zeros(3**n)
    v[0] = 1.0
    return v


# -- spectrum --------------------------------------------------------------

@dataclass(frozen=True)
class SpectrumResult:
    """Subleading eigenvalue plus audit data.

    ``value`` is the modulus used as Lambda; ``eigenvalue`` keeps the complex
    number it came from and ``is_complex`` flags a non-negligible imaginary
    part. ``top_moduli`` lists the five largest moduli, unit ones included.
    ``n_unit`` counts unit eigenvalues seen; on the ARPACK path it is a lower
    bound since only a few eigenvalues are computed.
    """

    value: float
    eigenvalue: complex
    is_complex: bool
    top_moduli: tuple[float, ...]
    n_unit: int
    method: str


def _as_operator(op) -> ReducedOperator:
    if isinstance(op, ReducedOperator):
        return op
    m = op if sp.issparse(op) else np.asarray(op, dtype=float)
    return ReducedOperator(m.shape[0], (m,))


def _select(eigenvalues: np.ndarray, unit_tolerance: float, method: str,
            n_deflated: int = 0) -> SpectrumResult:
    moduli = np.abs(eigenvalues)
    if moduli.size and moduli.max() > 1.0 + 1e-8:
        raise SpectrumAnomaly(f"eigenvalue modulus {moduli.max():.12g} exceeds 1")
    order = np.argsort(-moduli, kind="stable")
    eigenvalues, moduli = eigenvalues[order], moduli[order]
    unit = moduli >= 1.0 - unit_tolerance
    rest = np.flatnonzero(~unit)
    if rest.size == 0:
        raise NoSubleadingEigenvalue("no eigenvalue modulus below the unit tolerance")
    lam = complex(eigenvalues[rest[0]])
    top = tuple(float(m) for m in np.concatenate([np.ones(n_deflated), moduli])[:5])
    return SpectrumResult(
        value=float(moduli[rest[0]]),
        eigenvalue=lam,
        is_complex=abs(lam.imag) > 1e-6 * abs(lam),
        top_moduli=top,
        n_unit=int(unit.sum()) + n_deflated,
        method=method,
    )


def _fixes_identity_string(op: ReducedOperator) -> bool:
    probe = np.random.default_rng(12345).random(op.dim)
    e0 = np.zeros(op.dim)
    e0[0] = 1.0
    return bool(np.allclose(op.matvec(e0), e0, atol=1e-12)
                and abs(op.matvec(probe)[0] - probe[0]) < 1e-12)


def subleading_eigenvalue(op, unit_tolerance: float = UNIT_TOLERANCE,
                          dense_threshold: int = DENSE_THRESHOLD, k: int = 8,
                          maxiter: int = 20000, tol: float = 1e-13) -> SpectrumResult:
    """Largest eigenvalue modulus strictly below ``1 - unit_tolerance``.

    Dense eigendecomposition up to ``dense_threshold``; beyond it ARPACK runs
    on the operator restricted to the complement of its conserved quantities.
    Every column-stochastic operator here conserves the component sum, and
    operators built in this module also keep the all-identity component
    separate, so ``W = {v : v[0] = 0, sum(v) = 0}`` is invariant and carries
    every eigenvalue except the two unit ones. ARPACK sees ``M Q`` with ``Q``
    the orthogonal projector onto ``W``, whose spectrum is that of ``M`` on
    ``W`` plus zeros. Any further unit eigenvalues (disconnected cores) are
    excluded by ``unit_tolerance``.
    """
    op = _as_operator(op)
    dim = op.dim
    if dim <= max(dense_threshold, 16):
        return _select(np.linalg.eigvals(op.to_dense()), unit_tolerance, "dense")

    split_identity = _fixes_identity_string(op)

    def project(v: np.ndarray) -> np.ndarray:
        v = np.array(v, dtype=float).ravel()
        if split_identity:
            v[0] = 0.0
            v[1:] -= v[1:].mean()
        else:
            v -= v.mean()
        return v

    lin = LinearOperator((dim, dim), matvec=lambda v: op.matvec(project(v)), dtype=float)
    v0 = project(np.random.default_rng(0).random(dim))
    n_deflated = 2 if split_identity else 1
    k = min(k, dim - 2)
    while True:
        ncv = min(dim, max(2 * k + 1, 40))
        try:
            vals = eigs(lin, k=k, which="LM", v0=v0, ncv=ncv, tol=tol, maxiter=maxiter,
                        return_eigenvectors=False)
        except ArpackNoConvergence as exc:
            raise NoConvergence(f"ARPACK did not converge on dim {dim}") from exc
        moduli = np.abs(vals)
        if np.any(moduli < 1.0 - unit_tolerance) or k >= dim - 2:
            return _select(vals, unit_tolerance, "arpack", n_deflated)
        k = min(2 * k, dim - 2)


def spectral_gap(lam: float) -> float:
    return 1.0 - lam


def normalized_gap(lam: float, depth: int) -> float:
    """Per-gate gap ``1 - lam**(1/depth)``."""
    if not 0.0 <= lam <= 1.0:
        raise OutOfRange(f"Lambda must lie in [0, 1], got {lam}")
    if int(depth) != depth or depth < 1:
        raise OutOfRange(f"depth must be a positive integer, got {depth}")
    return 1.0 - lam ** (1.0 / depth)


def write_operator_triplets(op: ReducedOperator, path: Union[str, Path], *,
                            n_cores: int, n_qubits_per_core: int, topology: str,
                            intracore_steps: int, p_single: float, c_rand: float) -> Path:
    """Dump ``op`` as ``row col value`` lines after a one-line header."""
    m = op.to_sparse().tocoo()
    order = np.lexsort((m.row, m.col))
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(
            f"# dim={op.dim} n_cores={n_cores} n_qubits_per_core={n_qubits_per_core} "
            f"topology={topology} I={intracore_steps} p_single={p_single!r} c_rand={c_rand!r}\n"
        )
        for r, c, v in zip(m.row[order].tolist(), m.col[order].tolist(), m.data[order].tolist()):
            fh.write(f"{r} {c} {v!r}\n")
    return path


def read_operator_triplets(path: Union[str, Path]) -> tuple[dict, sp.csr_matrix]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = dict(item.split("=", 1) for item in lines[0].lstrip("# ").split())
    dim = int(header["dim"])
    rows, cols, vals = [], [], []
    for line in lines[1:]:
        r, c, v = line.split()
        rows.append(int(r))
        cols.append(int(c))
        vals.append(float(v))
    return header, sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim))


def link_order_spread(config: CircuitConfig, orders: Sequence[Sequence[tuple[int, int]]],
                      **kwargs) -> float:
    """Max spread of Lambda across alternative link orders (diagnostic only)."""
    core = build_core_matrix(config.n_qubits_per_core, config.p_single, config.c_rand)
    intra = build_intra_operator(config.n_cores, core).power(config.intracore_steps)
    values = []
    for order in orders:
        inter = build_inter_operator(order, config.n_qubits_per_core, config.n_cores)
        values.append(subleading_eigenvalue(intra.then(inter), **kwargs).value)
    return float(max(values) - min(values))
