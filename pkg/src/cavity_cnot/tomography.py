"""Joint Wigner tomography, MLE state reconstruction, QPT and concurrence.

The joint Wigner function of the two cavities is the displaced joint-parity
expectation, W(beta_C, beta_T) = (4/pi^2) Tr[rho D_C D_T P D_C^dag D_T^dag].
Density matrices are reconstructed from Wigner samples by a
positivity-constrained Gaussian-likelihood fit whose trace is deliberately
left unconstrained, so tomography failures show up as a reduced trace.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import LayoutError, LeakageError, UnderdeterminedError
from .gate import LogicalEncoding, code_ket, codeword, encoding, logical_coeffs
from .hilbert import ModeLayout, QuantumState, cavity_layout, displacement, parity

WIGNER_SCALE = 4.0 / math.pi**2


@dataclass(frozen=True)
class WignerSample:
    """One displaced-parity measurement: displacements, value, fit weight."""

    beta_C: complex
    beta_T: complex
    value: float
    weight: float = 1.0


def displacement_grid(
    points_per_axis: int = 6, extent: float = 1.8, arrangement: str = "rings"
) -> np.ndarray:
    """Product grid of (beta_C, beta_T) pairs, `points_per_axis`^4 in total.

    Each cavity gets points_per_axis^2 displacements with |beta| <= extent,
    enough to cover states with up to ~4 photons.  The default arrangement
    places them on equal-area rings with a golden-ratio angular twist per
    ring; a separable square lattice ("square") is also available but
    aliases high-order moments, leaving the exactly-determined
    reconstruction problem rank-deficient.
    """
    n = points_per_axis
    if arrangement == "square":
        axis = np.linspace(-extent, extent, n)
        betas = (axis[:, None] + 1j * axis[None, :]).reshape(-1)
    elif arrangement == "rings":
        betas = np.empty(n * n, dtype=complex)
        for j in range(n):
            r = extent * math.sqrt((j + 1) / n)
            for k in range(n):
                theta = 2.0 * math.pi * (k + j * 0.382) / n
                betas[j * n + k] = r * np.exp(1j * theta)
    else:
        raise ValueError(f"unknown arrangement {arrangement!r}")
    pairs = np.empty((betas.size**2, 2), dtype=complex)
    pairs[:, 0] = np.repeat(betas, betas.size)
    pairs[:, 1] = np.tile(betas, betas.size)
    return pairs


def displaced_parity(beta: complex, dim: int, guard: int = 8) -> np.ndarray:
    """D(beta) P D(beta)^dag on one mode, computed with guard levels."""
    big = dim + guard
    d = displacement(beta, big, guard=0).matrix
    p = parity(big).matrix
    return (d @ p @ d.conj().T)[:dim, :dim]


def _parity_stacks(grid, dims, guard):
    """Per-mode stacks of displaced-parity operators for the unique betas."""
    stacks = []
    indices = []
    for mode in range(2):
        betas = np.asarray([g[mode] for g in grid], dtype=complex)
        uniq, inv = np.unique(betas, return_inverse=True)
        mats = np.stack([displaced_parity(b, dims[mode], guard) for b in uniq])
        stacks.append(mats)
        indices.append(inv)
    return stacks, indices


def joint_wigner(
    rho: QuantumState,
    grid,
    shots: int | None = None,
    contrast: float = 1.0,
    rng=None,
    guard: int = 8,
) -> list[WignerSample]:
    """Evaluate the joint Wigner function on a grid of displacement pairs.

    Exact expectation values by default; with ``shots`` set, each point is
    sampled from the corresponding binomial parity statistics, and
    ``contrast`` scales the underlying parity expectation (the measured
    vacuum value in the experiment is 0.79 rather than 1).
    """
    if rho.layout.n_modes != 2:
        raise LayoutError("joint_wigner expects a two-mode cavity state")
    dims = rho.layout.dims
    mat = rho.to_density().data
    (mc, mt), (ic, it) = _parity_stacks(grid, dims, guard)
    r4 = mat.reshape(dims[0], dims[1], dims[0], dims[1])
    # Tr[rho (A x B)] = A[j,i] B[l,k] rho[(i,k),(j,l)]
    half = np.einsum("aji,ikjl->akl", mc, r4)
    table = np.einsum("akl,blk->ab", half, mt)
    parities = np.real(table[ic, it]) * contrast
    if shots is not None:
        gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        prob = np.clip(0.5 * (1.0 + parities), 0.0, 1.0)
        counts = gen.binomial(shots, prob)
        parities = 2.0 * counts / shots - 1.0
        weights = np.full(len(parities), float(shots))
    else:
        weights = np.ones(len(parities))
    return [
        WignerSample(complex(g[0]), complex(g[1]), WIGNER_SCALE * p, w)
        for g, p, w in zip(grid, parities, weights)
    ]


def vacuum_reference(grid, dims, shots=None, contrast=1.0, rng=None, guard=8) -> float:
    """Wigner value of the two-mode vacuum at the origin (calibration point)."""
    layout = cavity_layout(*dims)
    vac = np.zeros(layout.total_dim, dtype=complex)
    vac[0] = 1.0
    state = QuantumState(layout, "ket", vac)
    sample = joint_wigner(state, [(0.0, 0.0)], shots, contrast, rng, guard)[0]
    return sample.value


def calibrate_samples(samples, vacuum_value: float) -> list[WignerSample]:
    """Rescale measured samples by the vacuum calibration point.

    Dividing by the measured vacuum parity removes the readout contrast, so
    reconstructions from contrast-scaled data match the unscaled ones.
    """
    factor = WIGNER_SCALE / vacuum_value
    return [
        WignerSample(s.beta_C, s.beta_T, s.value * factor, s.weight) for s in samples
    ]


_DESIGN_CACHE: dict = {}


def _design_matrix(samples, dims, guard):
    grid = [(s.beta_C, s.beta_T) for s in samples]
    key = (dims, guard, np.asarray(grid, dtype=complex).tobytes())
    cached = _DESIGN_CACHE.get(key)
    if cached is not None:
        return cached
    (mc, mt), (ic, it) = _parity_stacks(grid, dims, guard)
    d = dims[0] * dims[1]
    a = np.empty((len(samples), d * d), dtype=complex)
    for row in range(len(samples)):
        e = WIGNER_SCALE * np.kron(mc[ic[row]], mt[it[row]])
        a[row] = e.T.reshape(-1)  # Tr[E rho] = vec(E^T) . vec(rho)
    _DESIGN_CACHE.clear()  # keep at most one grid resident
    _DESIGN_CACHE[key] = a
    return a


def _psd_projection(mat):
    evals, vecs = np.linalg.eigh(0.5 * (mat + mat.conj().T))
    clipped = np.clip(evals, 0.0, None)
    return (vecs * clipped) @ vecs.conj().T


def mle_reconstruct(
    samples,
    dims,
    guard: int = 8,
    max_iters: int = 20000,
    improvement_tol: float = 1e-10,
) -> QuantumState:
    """Most-likely positive semidefinite density matrix given Wigner samples.

    Maximizes the Gaussian likelihood (weighted least squares) over the PSD
    cone with the trace left free; the reported trace carries the
    tomography-failure probability.  Exact data short-circuits through an
    unconstrained solve; otherwise an accelerated projected-gradient
    iteration runs until the objective improves by less than
    ``improvement_tol`` per step.
    """
    dims = tuple(int(d) for d in dims)
    d = dims[0] * dims[1]
    if len(samples) < d * d:
        raise UnderdeterminedError(
            f"{len(samples)} samples cannot determine a {d}x{d} density matrix"
        )
    a = _design_matrix(samples, dims, guard)
    b = np.array([s.value for s in samples], dtype=float)
    w = np.sqrt(np.array([s.weight for s in samples], dtype=float))
    w /= w.max()
    aw = a * w[:, None]
    bw = b * w

    x = scipy.linalg.lstsq(aw, bw.astype(complex), lapack_driver="gelsy")[0]
    rho = 0.5 * (x.reshape(d, d) + x.reshape(d, d).conj().T)
    evals = np.linalg.eigvalsh(rho)
    if evals.min() >= -1e-11 * max(1.0, evals.max()):
        rho = _psd_projection(rho)
    else:
        # Noisy data: the unconstrained solve amplifies noise along weakly
        # measured directions, so grow the constrained fit from zero and
        # let positivity plus the data determine the estimate.  For barely
        # determined problems (photon cutoffs at the sample-count limit),
        # restrict dims as far as the state's support allows first.
        rho = _fista(aw, bw, np.zeros((d, d), dtype=complex), max_iters,
                     improvement_tol)
    layout = cavity_layout(*dims)
    return QuantumState(layout, "density", rho, normalized=False)


def _fista(aw, bw, rho0, max_iters, improvement_tol):
    """Monotone accelerated projected gradient on the normal equations."""
    d = rho0.shape[0]
    gram = aw.conj().T @ aw
    h = aw.conj().T @ bw
    const = float(np.real(bw @ bw))
    # largest Hessian eigenvalue by power iteration, with headroom; the
    # monotone safeguard below backtracks if the step is still too long
    v = np.ones(gram.shape[0], dtype=complex) / math.sqrt(gram.shape[0])
    for _ in range(40):
        v = gram @ v
        v /= np.linalg.norm(v)
    lip = 2.4 * float(np.real(np.vdot(v, gram @ v)))

    def obj_grad(r):
        x = r.reshape(-1)
        gx = gram @ x
        f = float(np.real(np.vdot(x, gx)) - 2.0 * np.real(np.vdot(h, x)) + const)
        g = (gx - h).reshape(d, d)
        return f, g + g.conj().T

    rho = _psd_projection(rho0)
    momentum = rho.copy()
    t_acc = 1.0
    f_prev, _ = obj_grad(rho)
    for _ in range(max_iters):
        _, g_m = obj_grad(momentum)
        candidate = _psd_projection(momentum - g_m / lip)
        f_cand, _ = obj_grad(candidate)
        if f_cand > f_prev:
            # momentum overshot: restart, then backtrack the step length
            t_acc = 1.0
            _, g_r = obj_grad(rho)
            for _ in range(60):
                candidate = _psd_projection(rho - g_r / lip)
                f_cand, _ = obj_grad(candidate)
                if f_cand <= f_prev:
                    break
                lip *= 2.0
            if f_cand > f_prev:
                break  # no descent direction left at any step size
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_acc**2))
        momentum = candidate + ((t_acc - 1.0) / t_next) * (candidate - rho)
        rho, t_acc = candidate, t_next
        if f_prev - f_cand < improvement_tol:
            break
        f_prev = f_cand
    return rho


def state_fidelity(rho: QuantumState, psi_ideal: QuantumState) -> float:
    """<psi|rho|psi>, in [0, trace(rho)]."""
    if rho.layout.dims != psi_ideal.layout.dims:
        raise LayoutError("state layouts differ")
    if not psi_ideal.isket:
        raise ValueError("reference state must be a ket")
    v = psi_ideal.data
    if rho.isket:
        return float(abs(np.vdot(v, rho.data)) ** 2)
    return float(np.real(np.vdot(v, rho.data @ v)))


# ---------------------------------------------------------------------------
# Process tomography over the two-qubit code space.
# ---------------------------------------------------------------------------

_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
PAULI_LABELS = tuple(
    a + b for a in "IXYZ" for b in "IXYZ"
)  # II, IX, ..., ZZ (control first)
_PAULI_OPS = tuple(np.kron(_PAULI[l[0]], _PAULI[l[1]]) for l in PAULI_LABELS)

QPT_INPUT_LABELS = ("0", "1", "X+", "Y+")


@dataclass(frozen=True)
class ProcessMatrix:
    """Chi matrix over the two-qubit Pauli basis {I,X,Y,Z} x {I,X,Y,Z}."""

    chi: np.ndarray
    labels: tuple = PAULI_LABELS

    def __post_init__(self):
        chi = np.asarray(self.chi, dtype=complex)
        if chi.shape != (16, 16):
            raise ValueError("chi must be 16x16")
        if np.max(np.abs(chi - chi.conj().T)) > 1e-10:
            raise ValueError("chi must be Hermitian")
        object.__setattr__(self, "chi", chi)

    @property
    def trace(self) -> float:
        return float(np.trace(self.chi).real)

    def normalized(self) -> ProcessMatrix:
        return ProcessMatrix(self.chi / self.trace, self.labels)


def chi_from_logical_unitary(u4: np.ndarray) -> ProcessMatrix:
    """Chi matrix of a unitary channel on the code space."""
    coeffs = np.array([np.trace(e.conj().T @ u4) / 4.0 for e in _PAULI_OPS])
    return ProcessMatrix(np.outer(coeffs, coeffs.conj()))


LOGICAL_CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)


def cnot_chi() -> ProcessMatrix:
    return chi_from_logical_unitary(LOGICAL_CNOT)


def identity_chi() -> ProcessMatrix:
    return chi_from_logical_unitary(np.eye(4, dtype=complex))


def process_fidelity(chi: ProcessMatrix, chi_ideal: ProcessMatrix) -> float:
    """Tr{chi_ideal chi}."""
    return float(np.real(np.trace(chi_ideal.chi @ chi.chi)))


def project_to_qubits(rho: QuantumState, enc: LogicalEncoding):
    """Project a two-cavity state onto the logical code space.

    Returns the 4x4 logical density matrix (basis |00>, |01>, |10>, |11>,
    control qubit first) and the leakage, the probability weight outside
    the code space.
    """
    if rho.layout.n_modes == 3:
        rho = rho.partial_trace((0, 1))
    if rho.layout.n_modes != 2:
        raise LayoutError("project_to_qubits expects a two-cavity state")
    dims = rho.layout.dims
    basis = np.empty((dims[0] * dims[1], 4), dtype=complex)
    col = 0
    for i in (0, 1):
        wc = codeword(enc, "control", i, dims[0]).data
        for j in (0, 1):
            wt = codeword(enc, "target", j, dims[1]).data
            basis[:, col] = np.kron(wc, wt)
            col += 1
    mat = rho.to_density().data
    rho4 = basis.conj().T @ mat @ basis
    leakage = float(np.real(np.trace(mat)) - np.real(np.trace(rho4)))
    return rho4, leakage


def qpt(gate_runner, enc: LogicalEncoding | str, layout: ModeLayout | None = None,
        mle: bool = False, leak_limit: float = 0.2) -> ProcessMatrix:
    """Quantum process tomography from sixteen logical input states.

    ``gate_runner`` maps a physical input QuantumState (ancilla in g) to an
    output state; outputs are projected onto the code space and the chi
    matrix is recovered by linear inversion, optionally projected onto the
    positive cone (``mle=True``).
    """
    if isinstance(enc, str):
        enc = encoding(enc)
    if layout is None:
        dc, dt = enc.min_dims()
        layout = ModeLayout((dc, dt, 3))
    rhos_in = []
    rhos_out = []
    for cl in QPT_INPUT_LABELS:
        for tl in QPT_INPUT_LABELS:
            cc, tc = logical_coeffs(cl), logical_coeffs(tl)
            logical = np.kron(np.array(cc), np.array(tc))
            rhos_in.append(np.outer(logical, logical.conj()))
            out = gate_runner(code_ket(enc, layout, cc, tc))
            rho4, leak = project_to_qubits(out, enc)
            if leak > leak_limit:
                raise LeakageError(
                    f"input ({cl}, {tl}): {leak:.1%} of the output lies outside "
                    "the code space"
                )
            rhos_out.append(rho4)

    n = len(rhos_in)
    a = np.empty((16 * n, 256), dtype=complex)
    b = np.empty(16 * n, dtype=complex)
    for j, (rin, rout) in enumerate(zip(rhos_in, rhos_out)):
        b[16 * j : 16 * (j + 1)] = rout.reshape(-1)
        for m in range(16):
            em_r = _PAULI_OPS[m] @ rin
            for nn in range(16):
                a[16 * j : 16 * (j + 1), 16 * m + nn] = (
                    em_r @ _PAULI_OPS[nn].conj().T
                ).reshape(-1)
    x, *_ = np.linalg.lstsq(a, b, rcond=None)
    chi = x.reshape(16, 16)
    chi = 0.5 * (chi + chi.conj().T)
    if mle:
        chi = _psd_projection(chi)
    return ProcessMatrix(chi)


# ---------------------------------------------------------------------------
# Entanglement of the projected two-qubit state.
# ---------------------------------------------------------------------------

_SIGMA_YY = np.kron(_PAULI["Y"], _PAULI["Y"])


def concurrence(rho_4x4) -> float:
    """Wootters concurrence of a two-qubit density matrix.

    C = max(0, l1 - l2 - l3 - l4) with l_i the descending square roots of
    the eigenvalues of rho (sy x sy) rho* (sy x sy).  Sub-unit traces
    (leaky projections) are renormalized first.
    """
    rho = np.asarray(rho_4x4, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError("concurrence is defined for 4x4 density matrices")
    tr = np.trace(rho).real
    if tr <= 1e-12:
        return 0.0
    rho = rho / tr
    r = rho @ _SIGMA_YY @ rho.conj() @ _SIGMA_YY
    evals = np.sort(np.abs(np.real(np.linalg.eigvals(r))))[::-1]
    lams = np.sqrt(evals)
    return float(max(0.0, lams[0] - lams[1] - lams[2] - lams[3]))


# ---------------------------------------------------------------------------
# Serialization.
# ---------------------------------------------------------------------------


def samples_to_json(samples) -> str:
    rows = [
        {
            "beta_C": [s.beta_C.real, s.beta_C.imag],
            "beta_T": [s.beta_T.real, s.beta_T.imag],
            "value": s.value,
            "weight": s.weight,
        }
        for s in samples
    ]
    return json.dumps({"wigner_samples": rows}, sort_keys=True)


def samples_from_json(text: str) -> list[WignerSample]:
    rows = json.loads(text)["wigner_samples"]
    return [
        WignerSample(
            complex(*r["beta_C"]), complex(*r["beta_T"]), r["value"], r.get("weight", 1.0)
        )
        for r in rows
    ]


def matrix_to_csv(matrix: np.ndarray, basis_note: str) -> str:
    """CSV with real then imaginary parts, row-major, basis documented."""
    matrix = np.asarray(matrix, dtype=complex)
    buf = io.StringIO()
    buf.write(f"# basis: {basis_note}; row-major; parts: real then imag\n")
    writer = csv.writer(buf)
    for part in (matrix.real, matrix.imag):
        for row in part:
            writer.writerow([f"{v:.17g}" for v in row])
    return buf.getvalue()


def matrix_from_csv(text: str) -> np.ndarray:
    rows = [
        [float(v) for v in line]
        for line in csv.reader(io.StringIO(text))
        if line and not line[0].startswith("#")
    ]
    n = len(rows) // 2
    re = np.array(rows[:n])
    im = np.array(rows[n:])
    return re + 1j * im
