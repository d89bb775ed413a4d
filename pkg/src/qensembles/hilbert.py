"""Hilbert-space plumbing for spin-1/2 chains.

States, Hermitian operators, bipartitions, product measurement bases, and the
model Hamiltonians used throughout (mixed-field Ising chain and variants,
chaotic XXZ, transverse-field Ising). Site ordering is little-endian: site 0
is the least significant bit of a basis index, so basis index
i = sum_j bit_j * 2^j. All values are immutable after construction and all
operations are pure functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from ._util import (
    Caps,
    DEFAULT_CAPS,
    InvalidMatrixError,
    InvalidModelError,
    check_cap,
)

HERMITICITY_TOL = 1e-12
NORM_TOL = 1e-12
ORTHONORMALITY_TOL = 1e-12

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# Columns are the basis vectors of the single-site X/Y/Z eigenbases.
_SINGLE_QUBIT_BASIS = {
    "Z": np.eye(2, dtype=complex),
    "X": np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2),
    "Y": np.array([[1, 1], [1j, -1j]], dtype=complex) / math.sqrt(2),
}


@dataclass(frozen=True)
class PureState:
    """Complex amplitude vector over a labeled tensor-product basis."""

    amplitudes: np.ndarray
    dims: tuple[int, ...]
    norm_convention: str = "normalized"  # "normalized" | "unnormalized"

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if amps.ndim != 1 or amps.size != int(np.prod(self.dims)):
            raise ValueError("amplitude length must equal product of dims")
        if self.norm_convention == "normalized":
            n2 = float(np.vdot(amps, amps).real)
            if abs(n2 - 1.0) > 1e-12:
                raise ValueError(f"normalized state has |norm^2 - 1| = {abs(n2 - 1.0):.3e}")
        elif self.norm_convention != "unnormalized":
            raise ValueError(f"unknown norm convention {self.norm_convention!r}")

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def n_sites(self) -> int:
        return len(self.dims)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "PureState":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return PureState(self.amplitudes / n, self.dims, "normalized")


def n_qubit_dims(n: int) -> tuple[int, ...]:
    return (2,) * n


def qubit_state(amplitudes: Iterable[complex], convention: str = "normalized") -> PureState:
    amps = np.asarray(list(amplitudes), dtype=complex)
    n = int(round(math.log2(amps.size)))
    if 2**n != amps.size:
        raise ValueError("amplitude length is not a power of 2")
    return PureState(amps, n_qubit_dims(n), convention)


@dataclass(frozen=True)
class HermitianOperator:
    """Dense Hermitian matrix on a tensor-product space."""

    entries: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex)
        object.__setattr__(self, "entries", m)
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        d = int(np.prod(self.dims))
        if m.shape != (d, d):
            raise ValueError("entry matrix shape must match product of dims")
        defect = float(np.abs(m - m.conj().T).max()) if d else 0.0
        if defect > HERMITICITY_TOL:
            raise InvalidMatrixError(f"matrix deviates from Hermitian by {defect:.3e}")

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class Bipartition:
    """Split of the chain into subsystem A and complement B.

    Subsystem indices are little-endian within each part: sites_A[0] is the
    least significant bit of an A-index, likewise for B.
    """

    n_sites: int
    sites_A: tuple[int, ...]
    sites_B: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        sa = tuple(int(s) for s in self.sites_A)
        if len(set(sa)) != len(sa) or any(s < 0 or s >= self.n_sites for s in sa):
            raise ValueError("sites_A must be distinct sites of the chain")
        object.__setattr__(self, "sites_A", sa)
        sb = tuple(s for s in range(self.n_sites) if s not in set(sa))
        object.__setattr__(self, "sites_B", sb)

    @property
    def d_a(self) -> int:
        return 2 ** len(self.sites_A)

    @property
    def d_b(self) -> int:
        return 2 ** len(self.sites_B)


def central_sites(n: int, width: int) -> tuple[int, ...]:
    """`width` contiguous sites nearest the middle of an n-site chain."""
    start = (n - width) // 2
    return tuple(range(start, start + width))


@dataclass(frozen=True)
class MeasurementBasis:
    """Complete orthonormal basis on a set of sites.

    kind "pauli-product": per-site X/Y/Z eigenbases given by `letters`;
    kind "rotated": per-site 2x2 unitaries (columns = local basis vectors);
    kind "explicit": a dense matrix whose columns are the basis vectors.
    Outcome indices are little-endian over `sites` order.
    """

    sites: tuple[int, ...]
    kind: str
    letters: str | None = None
    local_unitaries: tuple | None = None
    matrix: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return 2 ** len(self.sites)

    def site_unitaries(self) -> list[np.ndarray]:
        if self.kind == "pauli-product":
            return [_SINGLE_QUBIT_BASIS[ch] for ch in self.letters]
        if self.kind == "rotated":
            return [np.asarray(u, dtype=complex) for u in self.local_unitaries]
        raise ValueError("explicit basis has no site factorization")


def pauli_basis(sites: Sequence[int], letters: str) -> MeasurementBasis:
    sites = tuple(int(s) for s in sites)
    if len(letters) == 1:
        letters = letters * len(sites)
    if len(letters) != len(sites) or any(ch not in "XYZ" for ch in letters):
        raise ValueError("letters must be one X/Y/Z character per site")
    return MeasurementBasis(sites=sites, kind="pauli-product", letters=letters)


def rotated_basis(sites: Sequence[int], unitaries: Sequence[np.ndarray]) -> MeasurementBasis:
    us = tuple(np.asarray(u, dtype=complex) for u in unitaries)
    if len(us) != len(sites):
        raise ValueError("one unitary per site required")
    for u in us:
        if u.shape != (2, 2) or np.abs(u.conj().T @ u - np.eye(2)).max() > ORTHONORMALITY_TOL:
            raise ValueError("local rotations must be 2x2 unitaries")
    return MeasurementBasis(sites=tuple(int(s) for s in sites), kind="rotated", local_unitaries=us)


def explicit_basis(sites: Sequence[int], matrix: np.ndarray) -> MeasurementBasis:
    m = np.asarray(matrix, dtype=complex)
    d = 2 ** len(sites)
    if m.shape != (d, d):
        raise ValueError("basis matrix must be square of the subsystem dimension")
    return MeasurementBasis(sites=tuple(int(s) for s in sites), kind="explicit", matrix=m)


def basis_gram_defect(basis: MeasurementBasis) -> float:
    """Max deviation of the basis Gram matrix from the identity."""
    if basis.kind == "explicit":
        g = basis.matrix.conj().T @ basis.matrix
        return float(np.abs(g - np.eye(basis.dim)).max())
    defect = 0.0
    for u in basis.site_unitaries():
        defect = max(defect, float(np.abs(u.conj().T @ u - np.eye(2)).max()))
    return defect


def basis_matrix(basis: MeasurementBasis, caps: Caps = DEFAULT_CAPS) -> np.ndarray:
    """Dense matrix whose columns are the basis vectors (capped)."""
    check_cap(caps, "max_moment_entries", basis.dim**2)
    if basis.kind == "explicit":
        return basis.matrix.copy()
    out = np.array([[1.0 + 0j]])
    for u in basis.site_unitaries():
        out = np.kron(u, out)  # later sites are more significant
    return out


# ---------------------------------------------------------------------------
# bit bookkeeping for bipartitions
# ---------------------------------------------------------------------------


@lru_cache(maxsize=64)
def _subsystem_indices(n: int, sites: tuple[int, ...]) -> np.ndarray:
    """For each full basis index, the little-endian index over `sites`."""
    full = np.arange(2**n, dtype=np.int64)
    sub = np.zeros_like(full)
    for k, s in enumerate(sites):
        sub |= ((full >> s) & 1) << k
    return sub


def split_bipartite(state: PureState, part: Bipartition) -> np.ndarray:
    """Amplitudes as a (D_A, D_B) matrix in the bipartition's index convention."""
    if state.n_sites != part.n_sites:
        raise ValueError("state and bipartition disagree on the number of sites")
    a_idx = _subsystem_indices(part.n_sites, part.sites_A)
    b_idx = _subsystem_indices(part.n_sites, part.sites_B)
    m = np.zeros((part.d_a, part.d_b), dtype=complex)
    m[a_idx, b_idx] = state.amplitudes
    return m


def merge_bipartite(m: np.ndarray, part: Bipartition, convention: str = "normalized") -> PureState:
    """Inverse of split_bipartite."""
    a_idx = _subsystem_indices(part.n_sites, part.sites_A)
    b_idx = _subsystem_indices(part.n_sites, part.sites_B)
    amps = np.asarray(m, dtype=complex)[a_idx, b_idx]
    return PureState(amps, n_qubit_dims(part.n_sites), convention)


def apply_local_rotations(m: np.ndarray, unitaries: Sequence[np.ndarray], conjugate: bool = False) -> np.ndarray:
    """Contract each little-endian qubit axis of the columns of m with a 2x2 matrix.

    m has shape (rows, 2^k); unitaries[j] acts on bit j of the column index.
    With conjugate=True the complex conjugate of each unitary is applied,
    which turns amplitudes over the computational basis into overlap tables
    <basis vector | state>.
    """
    rows, d = m.shape
    k = len(unitaries)
    if d != 2**k:
        raise ValueError("column dimension does not match the number of unitaries")
    out = np.ascontiguousarray(m)
    for j, u in enumerate(unitaries):
        uj = np.conj(u) if conjugate else u
        lo, hi = 2**j, 2 ** (k - j - 1)
        t = out.reshape(rows, hi, 2, lo)
        out = np.einsum("rhbl,bz->rhzl", t, uj, optimize=True).reshape(rows, d)
    return out


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def product_state(theta: float, n: int) -> PureState:
    """Uniform product state with single-site vector (cos(theta/2), i sin(theta/2))."""
    if n < 1:
        raise InvalidModelError("need at least one site")
    local = np.array([math.cos(theta / 2), 1j * math.sin(theta / 2)], dtype=complex)
    amps = np.array([1.0 + 0j])
    for _ in range(n):
        amps = np.kron(local, amps)
    return PureState(amps, n_qubit_dims(n))


def _pauli_string_entries(n: int, ops: Mapping[int, str]):
    """Rows, columns and values of a Pauli string with identity padding."""
    d = 2**n
    cols = np.arange(d, dtype=np.int64)
    flip = 0
    for site, letter in ops.items():
        if letter in ("X", "Y"):
            flip |= 1 << site
    rows = cols ^ flip
    vals = np.ones(d, dtype=complex)
    for site, letter in ops.items():
        bit = (cols >> site) & 1
        if letter == "Y":
            vals = vals * np.where(bit == 0, 1j, -1j)
        elif letter == "Z":
            vals = vals * (1 - 2 * bit)
    return rows, cols, vals


def _accumulate_string(h: np.ndarray, n: int, coeff: float, ops: Mapping[int, str]) -> None:
    if coeff == 0.0:
        return
    rows, cols, vals = _pauli_string_entries(n, ops)
    h[rows, cols] += coeff * vals


def build_hamiltonian(model: Mapping, caps: Caps = DEFAULT_CAPS) -> HermitianOperator:
    """Assemble a dense model Hamiltonian from its specification.

    Supported model names: "mfim" (transverse+longitudinal-in-XY Ising chain),
    "mfim_broken_trs" (adds a Z field and YY coupling), "xxz" (chaotic
    next-nearest-neighbor ZZ variant), "tfim" (mfim with h_x = 0), "gue" and
    "explicit" (caller-provided Hermitian matrix). Open boundary conditions
    only; chains are little-endian.
    """
    spec = dict(model)
    name = spec.pop("model", None)
    if name in ("gue", "explicit"):
        m = np.asarray(spec["matrix"], dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidMatrixError("explicit Hamiltonian must be square")
        n = int(round(math.log2(m.shape[0])))
        if 2**n != m.shape[0]:
            raise InvalidMatrixError("explicit Hamiltonian dimension must be a power of 2")
        return HermitianOperator(m, n_qubit_dims(n))

    n = int(spec.pop("n", 0))
    if n < 1:
        raise InvalidModelError(f"model {name!r} needs n >= 1 sites")
    if spec.pop("boundary", "open") != "open":
        raise InvalidModelError("only open boundary conditions are supported")
    check_cap(caps, "max_moment_entries", (2**n) ** 2)
    d = 2**n
    h = np.zeros((d, d), dtype=complex)

    if name == "mfim" or name == "tfim" or name == "mfim_broken_trs":
        hx = float(spec.pop("hx", 0.890))
        hy = float(spec.pop("hy", 0.9045))
        j = float(spec.pop("j", 1.0))
        if name == "tfim":
            hx = 0.0
        hz = jp = 0.0
        if name == "mfim_broken_trs":
            hz = float(spec.pop("hz", 0.5))
            jp = float(spec.pop("jp", 0.4))
        for s in range(n):
            _accumulate_string(h, n, hx, {s: "X"})
            _accumulate_string(h, n, hy, {s: "Y"})
            _accumulate_string(h, n, hz, {s: "Z"})
        for s in range(n - 1):
            _accumulate_string(h, n, j, {s: "X", s + 1: "X"})
            _accumulate_string(h, n, jp, {s: "Y", s + 1: "Y"})
    elif name == "xxz":
        j = float(spec.pop("j", math.sqrt(2.0)))
        delta = float(spec.pop("delta", (math.sqrt(5.0) + 1.0) / 4.0))
        delta2 = float(spec.pop("delta2", 1.0))
        for s in range(n - 1):
            _accumulate_string(h, n, j / 4.0, {s: "X", s + 1: "X"})
            _accumulate_string(h, n, j / 4.0, {s: "Y", s + 1: "Y"})
            _accumulate_string(h, n, delta / 4.0, {s: "Z", s + 1: "Z"})
        for s in range(n - 2):
            _accumulate_string(h, n, delta2 / 4.0, {s: "Z", s + 2: "Z"})
    else:
        raise InvalidModelError(f"unknown model {name!r}")

    if spec:
        raise InvalidModelError(f"unused model parameters: {sorted(spec)}")
    return HermitianOperator(h, n_qubit_dims(n))


def project_outcome(
    state: PureState,
    part: Bipartition,
    basis: MeasurementBasis,
    outcome_index: int,
) -> tuple[PureState, float]:
    """Project the B factor onto one basis vector.

    Returns the unnormalized A-side state and the outcome probability (its
    squared norm).
    """
    if tuple(basis.sites) != tuple(part.sites_B):
        raise ValueError("basis must live on the B side of the bipartition")
    if not 0 <= outcome_index < part.d_b:
        raise IndexError("outcome index out of range")
    m = split_bipartite(state, part)
    if basis.kind == "explicit":
        vec = basis.matrix[:, outcome_index]
    else:
        vec = np.array([1.0 + 0j])
        for j, u in enumerate(basis.site_unitaries()):
            bit = (outcome_index >> j) & 1
            vec = np.kron(u[:, bit], vec)
    amp = m @ np.conj(vec)
    p = float(np.vdot(amp, amp).real)
    return PureState(amp, n_qubit_dims(len(part.sites_A)), "unnormalized"), p


def projection_table(state: PureState, part: Bipartition, basis: MeasurementBasis) -> np.ndarray:
    """All unnormalized projected states at once, as a (D_A, D_B) table.

    Column z holds (I_A (x) <z|) |state>; squared column norms are the outcome
    probabilities.
    """
    if tuple(basis.sites) != tuple(part.sites_B):
        raise ValueError("basis must live on the B side of the bipartition")
    m = split_bipartite(state, part)
    if basis.kind == "explicit":
        return m @ np.conj(basis.matrix)
    return apply_local_rotations(m, basis.site_unitaries(), conjugate=True)


def partial_trace(obj, part: Bipartition, keep: str = "A") -> HermitianOperator:
    """Reduced density matrix of a pure state or of a full-space operator."""
    if keep not in ("A", "B"):
        raise ValueError("keep must be 'A' or 'B'")
    if isinstance(obj, PureState):
        m = split_bipartite(obj, part)
        rho = m @ m.conj().T if keep == "A" else m.T @ m.conj()
        sites = part.sites_A if keep == "A" else part.sites_B
        return HermitianOperator(_hermitize(rho), n_qubit_dims(len(sites)))
    if isinstance(obj, HermitianOperator):
        if len(obj.dims) != part.n_sites:
            raise ValueError("operator and bipartition disagree on the number of sites")
        a_idx = _subsystem_indices(part.n_sites, part.sites_A)
        b_idx = _subsystem_indices(part.n_sites, part.sites_B)
        perm = np.empty(2**part.n_sites, dtype=np.int64)
        perm[a_idx * part.d_b + b_idx] = np.arange(2**part.n_sites)
        r = obj.entries[np.ix_(perm, perm)].reshape(part.d_a, part.d_b, part.d_a, part.d_b)
        if keep == "A":
            rho = np.einsum("abcb->ac", r)
            sites = part.sites_A
        else:
            rho = np.einsum("abad->bd", r)
            sites = part.sites_B
        return HermitianOperator(_hermitize(rho), n_qubit_dims(len(sites)))
    raise TypeError("expected a PureState or HermitianOperator")


def _hermitize(m: np.ndarray) -> np.ndarray:
    return (m + m.conj().T) / 2.0


def tensor_power(v: np.ndarray, k: int, caps: Caps = DEFAULT_CAPS) -> np.ndarray:
    """Kronecker power v^{(x) k}; copy 0 is the most significant index digit."""
    if k < 1:
        raise ValueError("k must be >= 1")
    v = np.asarray(v, dtype=complex)
    check_cap(caps, "max_state_dim", v.size**k)
    out = v
    for _ in range(k - 1):
        out = np.kron(out, v)
    return out


def operator_from_strings(n: int, terms: Iterable[tuple[float, Mapping[int, str]]]) -> HermitianOperator:
    """Dense operator from (coefficient, {site: letter}) Pauli strings."""
    d = 2**n
    h = np.zeros((d, d), dtype=complex)
    for coeff, ops in terms:
        _accumulate_string(h, n, coeff, ops)
    return HermitianOperator(h, n_qubit_dims(n))


def restricted_hamiltonian(model: Mapping, part: Bipartition, side: str) -> HermitianOperator:
    """Model terms supported entirely inside one side of a bipartition.

    Used for energy-revealing diagnostics: the returned operator acts on the
    full chain but contains only strings whose sites all lie in the chosen
    side.
    """
    spec = dict(model)
    name = spec.get("model")
    n = int(spec.get("n", part.n_sites))
    keep = set(part.sites_A if side == "A" else part.sites_B)
    full = build_hamiltonian(model)
    if name in ("gue", "explicit"):
        raise InvalidModelError("restriction needs a local model")
    terms = []
    if name in ("mfim", "tfim", "mfim_broken_trs"):
        hx = float(spec.get("hx", 0.890)) if name != "tfim" else 0.0
        hy = float(spec.get("hy", 0.9045))
        j = float(spec.get("j", 1.0))
        hz = float(spec.get("hz", 0.5)) if name == "mfim_broken_trs" else 0.0
        jp = float(spec.get("jp", 0.4)) if name == "mfim_broken_trs" else 0.0
        for s in range(n):
            if s in keep:
                terms += [(hx, {s: "X"}), (hy, {s: "Y"}), (hz, {s: "Z"})]
        for s in range(n - 1):
            if s in keep and s + 1 in keep:
                terms += [(j, {s: "X", s + 1: "X"}), (jp, {s: "Y", s + 1: "Y"})]
    elif name == "xxz":
        j = float(spec.get("j", math.sqrt(2.0)))
        delta = float(spec.get("delta", (math.sqrt(5.0) + 1.0) / 4.0))
        delta2 = float(spec.get("delta2", 1.0))
        for s in range(n - 1):
            if s in keep and s + 1 in keep:
                terms += [
                    (j / 4.0, {s: "X", s + 1: "X"}),
                    (j / 4.0, {s: "Y", s + 1: "Y"}),
                    (delta / 4.0, {s: "Z", s + 1: "Z"}),
                ]
        for s in range(n - 2):
            if s in keep and s + 2 in keep:
                terms.append((delta2 / 4.0, {s: "Z", s + 2: "Z"}))
    else:
        raise InvalidModelError(f"unknown model {name!r}")
    assert full.dim == 2**n
    return operator_from_strings(n, terms)
