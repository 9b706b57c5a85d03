"""Truncated Fock-space operator algebra on the control/target/ancilla Hilbert space.

All operators are dense complex matrices.  Frequencies are angular (rad/s)
throughout the package; hbar = 1.

Mode ordering is fixed as [control cavity, target cavity, ancilla], with the
ancilla truncated to its three lowest levels g, e, f.  Tomography routines
work on two-mode (cavity-only) layouts obtained by tracing out the ancilla.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    InvalidDimensionError,
    LayoutError,
    NumericError,
    TruncationWarning,
)

HERMITIAN_ATOL = 1e-12
UNITARY_ATOL = 1e-10
NORM_ATOL = 1e-10

ANCILLA_G, ANCILLA_E, ANCILLA_F = 0, 1, 2
ANCILLA_DIM = 3

_DEFAULT_LABELS = {
    1: ("mode",),
    2: ("control", "target"),
    3: ("control", "target", "ancilla"),
}


@dataclass(frozen=True)
class ModeLayout:
    """Ordered list of truncated mode dimensions defining the composite space.

    Parameters
    ----------
    dims : tuple of int
        Fock truncation per mode.  Three-mode layouts are ordered
        [control, target, ancilla]; the ancilla dimension must be 3.
    labels : tuple of str, optional
        Mode names; defaults depend on the number of modes.
    """

    dims: tuple[int, ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if not dims or any(d < 1 for d in dims):
            raise InvalidDimensionError(f"mode dimensions must be positive, got {dims}")
        if len(dims) > 3:
            raise LayoutError("at most three modes are supported")
        labels = tuple(self.labels) or _DEFAULT_LABELS[len(dims)]
        if len(labels) != len(dims):
            raise LayoutError(f"{len(dims)} dims but {len(labels)} labels")
        object.__setattr__(self, "labels", labels)
        if "ancilla" in labels and dims[labels.index("ancilla")] != ANCILLA_DIM:
            raise LayoutError("ancilla mode must have exactly 3 levels (g, e, f)")

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def n_modes(self) -> int:
        return len(self.dims)

    def mode_index(self, label: str) -> int:
        return self.labels.index(label)

    def basis_index(self, occupations) -> int:
        """Flat index of the basis state |n_0, n_1, ...>."""
        if len(occupations) != self.n_modes:
            raise LayoutError("occupation list does not match the number of modes")
        return int(np.ravel_multi_index(tuple(occupations), self.dims))

    def drop(self, mode: int) -> ModeLayout:
        """Layout with one mode removed (used after partial trace)."""
        keep = [i for i in range(self.n_modes) if i != mode]
        return ModeLayout(
            tuple(self.dims[i] for i in keep), tuple(self.labels[i] for i in keep)
        )


def default_layout(control_dim: int = 8, target_dim: int = 12) -> ModeLayout:
    """Three-mode layout at the convergence-checked default truncations."""
    return ModeLayout((control_dim, target_dim, ANCILLA_DIM))


def cavity_layout(control_dim: int, target_dim: int) -> ModeLayout:
    """Two-mode cavity-only layout used by the tomography routines."""
    return ModeLayout((control_dim, target_dim))


@dataclass(frozen=True)
class Operator:
    """Complex square matrix on a composite space with verified flags.

    The ``hermitian`` and ``unitary`` flags are checked at construction
    (max-element tolerances 1e-12 and 1e-10 respectively); setting a flag
    on a matrix that fails the check raises ``ValueError``.
    """

    layout: ModeLayout
    matrix: np.ndarray
    hermitian: bool = False
    unitary: bool = False

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", m)
        d = self.layout.total_dim
        if m.shape != (d, d):
            raise LayoutError(f"matrix shape {m.shape} does not match layout dim {d}")
        if self.hermitian and np.max(np.abs(m - m.conj().T)) > HERMITIAN_ATOL:
            raise ValueError("hermitian flag set but matrix is not Hermitian")
        if self.unitary:
            dev = np.max(np.abs(m.conj().T @ m - np.eye(d)))
            if dev > UNITARY_ATOL:
                raise ValueError(f"unitary flag set but max|A^dag A - I| = {dev:.2e}")

    @property
    def dim(self) -> int:
        return self.layout.total_dim

    def dag(self) -> Operator:
        return Operator(self.layout, self.matrix.conj().T, self.hermitian, self.unitary)

    def _check_layout(self, other: Operator):
        if self.layout.dims != other.layout.dims:
            raise LayoutError("operators live on different layouts")

    def __add__(self, other: Operator) -> Operator:
        self._check_layout(other)
        return Operator(
            self.layout,
            self.matrix + other.matrix,
            hermitian=self.hermitian and other.hermitian,
        )

    def __sub__(self, other: Operator) -> Operator:
        self._check_layout(other)
        return Operator(
            self.layout,
            self.matrix - other.matrix,
            hermitian=self.hermitian and other.hermitian,
        )

    def __mul__(self, scalar) -> Operator:
        return Operator(
            self.layout,
            self.matrix * scalar,
            hermitian=self.hermitian and float(np.imag(scalar)) == 0.0,
        )

    __rmul__ = __mul__

    def __matmul__(self, other: Operator) -> Operator:
        self._check_layout(other)
        return Operator(
            self.layout,
            self.matrix @ other.matrix,
            unitary=self.unitary and other.unitary,
        )

    def commutes_with(self, other: Operator, atol: float = 1e-10) -> bool:
        self._check_layout(other)
        c = self.matrix @ other.matrix - other.matrix @ self.matrix
        return bool(np.max(np.abs(c)) <= atol)


@dataclass(frozen=True)
class QuantumState:
    """Pure ket or density matrix on a composite space.

    Validation enforces unit ket norm, and for density matrices
    Hermiticity, positive semidefiniteness (eigenvalue floor) and unit
    trace.  Reconstruction output may be ``normalized=False``, in which
    case the trace constraint is skipped; relaxed floors can be passed by
    integrators whose error tolerance exceeds the defaults.
    """

    layout: ModeLayout
    kind: str  # "ket" | "density"
    data: np.ndarray
    normalized: bool = True
    trace_atol: float = field(default=NORM_ATOL, repr=False, compare=False)
    psd_atol: float = field(default=NORM_ATOL, repr=False, compare=False)

    def __post_init__(self):
        d = self.layout.total_dim
        data = np.asarray(self.data, dtype=complex)
        object.__setattr__(self, "data", data)
        if self.kind == "ket":
            if data.shape != (d,):
                raise LayoutError(f"ket shape {data.shape} does not match dim {d}")
            if self.normalized and abs(np.linalg.norm(data) - 1.0) > self.trace_atol:
                raise ValueError("ket is not normalized")
        elif self.kind == "density":
            if data.shape != (d, d):
                raise LayoutError(f"density shape {data.shape} does not match dim {d}")
            if np.max(np.abs(data - data.conj().T)) > max(1e-9, self.trace_atol):
                raise ValueError("density matrix is not Hermitian")
            if self.normalized:
                if abs(np.trace(data).real - 1.0) > self.trace_atol:
                    raise ValueError("density matrix trace differs from 1")
                evals = np.linalg.eigvalsh(0.5 * (data + data.conj().T))
                if evals.min() < -self.psd_atol:
                    raise ValueError(
                        f"density matrix not positive semidefinite ({evals.min():.2e})"
                    )
        else:
            raise ValueError(f"unknown state kind {self.kind!r}")

    @property
    def isket(self) -> bool:
        return self.kind == "ket"

    def to_density(self) -> QuantumState:
        if not self.isket:
            return self
        rho = np.outer(self.data, self.data.conj())
        return QuantumState(self.layout, "density", rho, self.normalized)

    def norm(self) -> float:
        if self.isket:
            return float(np.linalg.norm(self.data))
        return float(np.trace(self.data).real)

    def expectation(self, op: Operator) -> complex:
        if self.layout.dims != op.layout.dims:
            raise LayoutError("state and operator layouts differ")
        if self.isket:
            return complex(np.vdot(self.data, op.matrix @ self.data))
        return complex(np.trace(op.matrix @ self.data))

    def overlap(self, other: QuantumState) -> complex:
        """<self|other> for kets; Tr[rho_self rho_other] otherwise."""
        if self.layout.dims != other.layout.dims:
            raise LayoutError("states live on different layouts")
        if self.isket and other.isket:
            return complex(np.vdot(self.data, other.data))
        a, b = self.to_density().data, other.to_density().data
        return complex(np.trace(a @ b))

    def mode_populations(self, mode: int) -> np.ndarray:
        """Probability of each Fock level of one mode (others traced out)."""
        reduced = self.partial_trace((mode,))
        return np.real(np.diag(reduced.data))

    def partial_trace(self, keep) -> QuantumState:
        """Reduced density matrix on the modes in ``keep`` (in layout order)."""
        keep = tuple(sorted(keep))
        dims = self.layout.dims
        n = len(dims)
        rho = self.to_density().data.reshape(dims + dims)
        traced = [i for i in range(n) if i not in keep]
        for count, i in enumerate(traced):
            ax = i - count  # axes shift as we trace
            rho = np.trace(rho, axis1=ax, axis2=ax + rho.ndim // 2)
        new_layout = ModeLayout(
            tuple(dims[i] for i in keep), tuple(self.layout.labels[i] for i in keep)
        )
        d = new_layout.total_dim
        return QuantumState(
            new_layout,
            "density",
            rho.reshape(d, d),
            self.normalized,
            trace_atol=self.trace_atol,
            psd_atol=self.psd_atol,
        )


def basis_ket(layout: ModeLayout, occupations) -> QuantumState:
    """Fock basis state |n_0, n_1, ...> on the given layout."""
    for n, d in zip(occupations, layout.dims):
        if not 0 <= n < d:
            raise InvalidDimensionError(f"occupation {n} outside dimension {d}")
    vec = np.zeros(layout.total_dim, dtype=complex)
    vec[layout.basis_index(occupations)] = 1.0
    return QuantumState(layout, "ket", vec)


def product_ket(layout: ModeLayout, mode_vectors) -> QuantumState:
    """Normalized tensor product of per-mode amplitude vectors."""
    if len(mode_vectors) != layout.n_modes:
        raise LayoutError("need one vector per mode")
    vec = np.array([1.0 + 0j])
    for v, d in zip(mode_vectors, layout.dims):
        v = np.asarray(v, dtype=complex)
        if v.shape != (d,):
            raise LayoutError(f"mode vector length {v.shape} does not match dim {d}")
        vec = np.kron(vec, v)
    nrm = np.linalg.norm(vec)
    if nrm == 0:
        raise ValueError("zero product state")
    return QuantumState(layout, "ket", vec / nrm)


def _single_mode_layout(dim: int) -> ModeLayout:
    return ModeLayout((dim,), ("mode",))


def annihilation(dim: int) -> Operator:
    """Ladder operator a with entries sqrt(n) at (n-1, n)."""
    if dim < 2:
        raise InvalidDimensionError("annihilation operator needs dim >= 2")
    m = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1)
    return Operator(_single_mode_layout(dim), m)


def number(dim: int) -> Operator:
    """Photon number operator a^dag a."""
    return Operator(_single_mode_layout(dim), np.diag(np.arange(dim, dtype=float)),
                    hermitian=True)


def identity(dim: int) -> Operator:
    return Operator(_single_mode_layout(dim), np.eye(dim), hermitian=True, unitary=True)


def projector(dim: int, level: int) -> Operator:
    """|level><level| on a single mode."""
    m = np.zeros((dim, dim))
    m[level, level] = 1.0
    return Operator(_single_mode_layout(dim), m, hermitian=True)


def transition(dim: int, row: int, col: int) -> Operator:
    """|row><col| on a single mode."""
    m = np.zeros((dim, dim))
    m[row, col] = 1.0
    return Operator(_single_mode_layout(dim), m, hermitian=row == col)


def parity(dim: int) -> Operator:
    """Photon-number parity, diagonal entries (-1)^n."""
    if dim < 1:
        raise InvalidDimensionError("parity needs dim >= 1")
    m = np.diag((-1.0) ** np.arange(dim))
    return Operator(_single_mode_layout(dim), m, hermitian=True, unitary=True)


def displacement(beta: complex, dim: int, guard: int = 8) -> Operator:
    """Displacement operator D(beta) = exp(beta a^dag - beta* a).

    Computed on ``dim + guard`` Fock levels and projected back to ``dim``,
    which suppresses the unitarity violation a naively truncated
    exponential shows near the cutoff.  The unitary flag is set only if
    the projected matrix passes the 1e-8 unitarity check; a warning is
    issued when |beta|^2 exceeds the reported dimension.
    """
    if dim < 1:
        raise InvalidDimensionError("displacement needs dim >= 1")
    if guard < 0:
        raise ValueError("guard must be non-negative")
    if abs(beta) ** 2 > dim:
        warnings.warn(
            f"displacement |beta|^2 = {abs(beta)**2:.2f} exceeds dim = {dim}; "
            "result is truncation-limited",
            TruncationWarning,
            stacklevel=2,
        )
    big = dim + guard
    a = np.diag(np.sqrt(np.arange(1, big, dtype=float)), k=1)
    gen = 1j * (beta * a.conj().T - np.conj(beta) * a)  # Hermitian
    evals, vecs = np.linalg.eigh(gen)
    d_big = (vecs * np.exp(-1j * evals)) @ vecs.conj().T
    m = d_big[:dim, :dim]
    dev = np.max(np.abs(m.conj().T @ m - np.eye(dim)))
    return Operator(_single_mode_layout(dim), m, unitary=bool(dev <= 1e-8))


def embed(op: Operator, mode_index: int, layout: ModeLayout) -> Operator:
    """Kronecker-embed a single-mode operator into the composite space."""
    if op.layout.n_modes != 1:
        raise LayoutError("embed expects a single-mode operator")
    if not 0 <= mode_index < layout.n_modes:
        raise LayoutError(f"mode index {mode_index} outside layout")
    if op.layout.dims[0] != layout.dims[mode_index]:
        raise LayoutError(
            f"operator dim {op.layout.dims[0]} does not match mode dim "
            f"{layout.dims[mode_index]}"
        )
    m = np.array([[1.0 + 0j]])
    for i, d in enumerate(layout.dims):
        m = np.kron(m, op.matrix if i == mode_index else np.eye(d))
    return Operator(layout, m, hermitian=op.hermitian, unitary=op.unitary)


def zero_operator(layout: ModeLayout) -> Operator:
    d = layout.total_dim
    return Operator(layout, np.zeros((d, d)), hermitian=True)


def identity_on(layout: ModeLayout) -> Operator:
    return Operator(layout, np.eye(layout.total_dim), hermitian=True, unitary=True)


def matrix_exponential(A: Operator, scale: complex = 1.0) -> Operator:
    """exp(scale * A), by eigendecomposition for Hermitian A.

    Non-Hermitian operators go through scaling-and-squaring
    (``scipy.linalg.expm``).  Non-finite input raises ``NumericError``.
    Hermitian/unitary flags of the result are set by direct check.
    """
    m = A.matrix
    if not np.all(np.isfinite(m.view(float))):
        raise NumericError("matrix exponential of non-finite operator")
    scale = complex(scale)
    if not np.isfinite(scale.real) or not np.isfinite(scale.imag):
        raise NumericError("non-finite scale")
    if A.hermitian:
        evals, vecs = np.linalg.eigh(m)
        out = (vecs * np.exp(scale * evals)) @ vecs.conj().T
    else:
        out = scipy.linalg.expm(scale * m)
    if not np.all(np.isfinite(out.view(float))):
        raise NumericError("matrix exponential overflowed")
    d = A.dim
    herm = np.max(np.abs(out - out.conj().T)) <= HERMITIAN_ATOL * max(
        1.0, np.max(np.abs(out))
    )
    unit = np.max(np.abs(out.conj().T @ out - np.eye(d))) <= UNITARY_ATOL
    return Operator(A.layout, out, hermitian=bool(herm), unitary=bool(unit))
