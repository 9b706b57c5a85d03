"""Time evolution under piecewise-constant Hamiltonians.

Segments hold a parameter snapshot, an optional sideband drive and the
f-level frame offset; within a segment the Hamiltonian is constant, so
unitary evolution uses exact eigendecomposition propagators and the open
system integrates the Lindblad master equation with an adaptive
high-order solver over a sparse right-hand side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse
from scipy.integrate import solve_ivp

from . import hamiltonian as ham
from .errors import IntegrationError, LayoutError, PhysicalityError
from .hilbert import (
    ANCILLA_E,
    ANCILLA_F,
    ANCILLA_G,
    ModeLayout,
    Operator,
    QuantumState,
    annihilation,
    basis_ket,
    embed,
    number,
    product_ket,
    projector,
    transition,
)


@dataclass(frozen=True)
class CoherenceParams:
    """Measured coherence times (seconds) and thermal populations.

    Defaults are the measured values; thermal populations default to zero
    (states are verified thermal-free before each run) and the measured
    occupations are available through ``measured_thermal``.
    """

    t1_C: float = 2.2e-3
    t2_C: float = 0.5e-3
    t1_T: float = 2.0e-3
    t2_T: float = 0.6e-3
    t1_f: float = 40e-6   # f -> e energy relaxation
    t2_f: float = 17e-6   # g-f dephasing time
    t1_e: float = 60e-6   # e -> g energy relaxation
    t2_e: float = 37e-6   # g-e dephasing time
    n_thermal_C: float = 0.0
    n_thermal_T: float = 0.0
    p_thermal_e: float = 0.0
    p_thermal_f: float = 0.0

    def __post_init__(self):
        for t1, t2, tag in (
            (self.t1_C, self.t2_C, "control"),
            (self.t1_T, self.t2_T, "target"),
            (self.t1_f, self.t2_f, "ancilla f"),
            (self.t1_e, self.t2_e, "ancilla e"),
        ):
            if t1 <= 0 or t2 <= 0:
                raise PhysicalityError(f"{tag}: coherence times must be positive")
            if t2 > 2.0 * t1 * (1 + 1e-12):
                raise PhysicalityError(f"{tag}: T2 = {t2} exceeds 2*T1 = {2 * t1}")

    @classmethod
    def lossless(cls) -> CoherenceParams:
        inf = math.inf
        return cls(inf, inf, inf, inf, inf, inf, inf, inf)

    @classmethod
    def measured_thermal(cls, **overrides) -> CoherenceParams:
        base = dict(n_thermal_C=0.025, n_thermal_T=0.025,
                    p_thermal_e=0.075, p_thermal_f=0.005)
        base.update(overrides)
        return cls(**base)

    def to_config(self) -> dict:
        from dataclasses import asdict

        return asdict(self)

    @classmethod
    def from_config(cls, cfg: dict) -> CoherenceParams:
        return cls(**cfg)


@dataclass(frozen=True)
class SidebandDrive:
    """Constant sideband drive: single-photon coupling rate and pump phase."""

    rate: float
    phase: float = 0.0


@dataclass(frozen=True)
class PulseSegment:
    """One piecewise-constant slice of the pulse sequence.

    ``params`` is the device snapshot valid during the segment (pump-on
    segments carry chi_T already switched to its pump-on value) and
    ``f_detuning`` the f-level frame offset making the matched sideband
    transition static.
    """

    duration: float
    params: ham.DeviceParams
    sideband: SidebandDrive | None = None
    f_detuning: float = 0.0

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("segment duration must be non-negative")


def sideband_segment(
    duration: float,
    params: ham.DeviceParams,
    pump: ham.PumpParams,
    n_C_ref: int = 2,
    n_T_ref: int = 2,
    omega_C: float | None = None,
    phase: float | None = None,
) -> PulseSegment:
    """Pump-on segment; chi_T switches to its pump-on value."""
    if omega_C is None:
        omega_C = ham.sideband_rate(params, pump, 1)
    if phase is None:
        phase = pump.phase
    det = ham.f_level_detuning(
        params, n_C_ref, n_T_ref, pump_on=True, extra=pump.detuning_offset
    )
    return PulseSegment(duration, ham.pump_on_params(params),
                        SidebandDrive(omega_C, phase), det)


def wait_segment(
    duration: float,
    params: ham.DeviceParams,
    n_C_ref: int = 2,
    n_T_ref: int = 2,
) -> PulseSegment:
    """Pump-off segment in the same rotating frame as the gate pulses."""
    det = ham.f_level_detuning(params, n_C_ref, n_T_ref, pump_on=False)
    return PulseSegment(duration, params, None, det)


def idle_segment(duration: float, params: ham.DeviceParams) -> PulseSegment:
    """Free evolution with no pump context (ancilla idle in g)."""
    return PulseSegment(duration, params, None, 0.0)


def segment_hamiltonian(segment: PulseSegment, layout: ModeLayout) -> Operator:
    """Assemble the constant Hamiltonian of one segment."""
    h = ham.build_static(segment.params, layout, frame="rotating")
    if segment.f_detuning != 0.0:
        h = h + segment.f_detuning * ham.f_projector_on(layout)
    if segment.sideband is not None:
        h = h + ham.build_sideband(
            segment.params,
            pump=None,
            layout=layout,
            omega_C=segment.sideband.rate,
            phase=segment.sideband.phase,
        )
    return h


def segment_propagator(segment: PulseSegment, layout: ModeLayout) -> Operator:
    h = segment_hamiltonian(segment, layout)
    evals, vecs = np.linalg.eigh(h.matrix)
    u = (vecs * np.exp(-1j * evals * segment.duration)) @ vecs.conj().T
    return Operator(layout, u, unitary=True)


def sequence_propagator(segments, layout: ModeLayout) -> Operator:
    u = np.eye(layout.total_dim, dtype=complex)
    for seg in segments:
        u = segment_propagator(seg, layout).matrix @ u
    return Operator(layout, u, unitary=True)


def evolve_unitary(state: QuantumState, segments) -> QuantumState:
    """Apply exp(-i H_k t_k) segment by segment."""
    data = state.data
    for seg in segments:
        u = segment_propagator(seg, state.layout).matrix
        data = u @ data if state.isket else u @ data @ u.conj().T
    return QuantumState(state.layout, state.kind, data, state.normalized,
                        trace_atol=max(state.trace_atol, 1e-9),
                        psd_atol=max(state.psd_atol, 1e-9))


def _rate(t: float) -> float:
    return 0.0 if math.isinf(t) else 1.0 / t


def collapse_operators(coh: CoherenceParams, layout: ModeLayout) -> list[Operator]:
    """Lindblad channels built from measured coherence times.

    Amplitude damping sqrt(1/T1) a per cavity, cavity pure dephasing
    sqrt(2 (1/T2 - 1/(2 T1))) n, ancilla f->e and e->g decay, ancilla
    level dephasing from the respective T2, and thermal excitation
    channels scaled by the thermal populations.
    """
    if layout.n_modes != 3:
        raise LayoutError("collapse operators need a 3-mode layout")
    ops: list[Operator] = []
    anc = layout.dims[2]

    for mode, t1, t2, n_th in (
        (0, coh.t1_C, coh.t2_C, coh.n_thermal_C),
        (1, coh.t1_T, coh.t2_T, coh.n_thermal_T),
    ):
        g1 = _rate(t1)
        if g1 > 0:
            ops.append(math.sqrt(g1) * embed(annihilation(layout.dims[mode]), mode, layout))
        gphi = _rate(t2) - 0.5 * g1
        if gphi > 1e-18 * max(g1, 1.0):
            ops.append(math.sqrt(2.0 * gphi) * embed(number(layout.dims[mode]), mode, layout))
        if n_th > 0 and g1 > 0:
            up = embed(annihilation(layout.dims[mode]), mode, layout).dag()
            ops.append(math.sqrt(n_th * g1) * up)

    g_fe = _rate(coh.t1_f)
    if g_fe > 0:
        ops.append(math.sqrt(g_fe) * embed(transition(anc, ANCILLA_E, ANCILLA_F), 2, layout))
    g_eg = _rate(coh.t1_e)
    if g_eg > 0:
        ops.append(math.sqrt(g_eg) * embed(transition(anc, ANCILLA_G, ANCILLA_E), 2, layout))
    gphi_f = _rate(coh.t2_f) - 0.5 * g_fe
    if gphi_f > 1e-18 * max(g_fe, 1.0):
        ops.append(math.sqrt(2.0 * gphi_f) * embed(projector(anc, ANCILLA_F), 2, layout))
    gphi_e = _rate(coh.t2_e) - 0.5 * g_eg
    if gphi_e > 1e-18 * max(g_eg, 1.0):
        ops.append(math.sqrt(2.0 * gphi_e) * embed(projector(anc, ANCILLA_E), 2, layout))
    if coh.p_thermal_e > 0 and g_eg > 0:
        ops.append(
            math.sqrt(coh.p_thermal_e * g_eg)
            * embed(transition(anc, ANCILLA_E, ANCILLA_G), 2, layout)
        )
    if coh.p_thermal_f > 0 and g_fe > 0:
        ops.append(
            math.sqrt(coh.p_thermal_f * g_fe)
            * embed(transition(anc, ANCILLA_F, ANCILLA_E), 2, layout)
        )
    return ops


class _LindbladRHS:
    """Sparse d rho / dt for one segment's constant Hamiltonian."""

    def __init__(self, h_matrix: np.ndarray, collapse: list[Operator]):
        self.dim = h_matrix.shape[0]
        self.h = scipy.sparse.csr_matrix(h_matrix)
        self.h_t = scipy.sparse.csr_matrix(h_matrix.T)
        self.ls = []
        m = scipy.sparse.csr_matrix((self.dim, self.dim), dtype=complex)
        for op in collapse:
            l = scipy.sparse.csr_matrix(op.matrix)
            self.ls.append((l, l.conj()))
            m = m + (l.conj().T @ l)
        self.m = m.tocsr()
        self.m_t = self.m.T.tocsr()

    def __call__(self, t, y):
        rho = y.reshape(self.dim, self.dim)
        out = -1j * (self.h @ rho - (self.h_t @ rho.T).T)
        for l, l_conj in self.ls:
            out += (l_conj @ (l @ rho).T).T
        out -= 0.5 * (self.m @ rho + (self.m_t @ rho.T).T)
        return out.ravel()


def evolve_lindblad(
    rho: QuantumState,
    segments,
    collapse: list[Operator],
    tol: float = 1e-9,
) -> QuantumState:
    """Integrate d rho/dt = -i[H, rho] + sum_k D[L_k] rho over the segments.

    Trace is preserved to ``tol`` and the output is validated with a
    positivity floor of 10 * tol.  Raises ``IntegrationError`` if the
    adaptive solver fails.
    """
    if rho.isket:
        raise ValueError("evolve_lindblad needs a density matrix input")
    return _lindblad_run(rho, segments, collapse, tol, sample_times=None)[0]


def lindblad_trajectory(
    rho: QuantumState,
    segments,
    sample_times,
    collapse: list[Operator],
    tol: float = 1e-9,
) -> list[QuantumState]:
    """States at the requested absolute times along the segment sequence."""
    if rho.isket:
        raise ValueError("lindblad_trajectory needs a density matrix input")
    return _lindblad_run(rho, segments, collapse, tol, sample_times)[1]


def _lindblad_run(rho, segments, collapse, tol, sample_times):
    layout = rho.layout
    total = sum(s.duration for s in segments)
    times = None
    if sample_times is not None:
        times = np.asarray(sample_times, dtype=float)
        if np.any(times < 0) or np.any(times > total * (1 + 1e-12)):
            raise ValueError("sample times outside the sequence duration")
    y = rho.data.astype(complex).ravel()
    t0 = 0.0
    snapshots: list[QuantumState] = []

    def make_state(vec):
        mat = vec.reshape(layout.total_dim, layout.total_dim)
        mat = 0.5 * (mat + mat.conj().T)  # report the Hermitian part
        return QuantumState(layout, "density", mat, rho.normalized,
                            trace_atol=max(100 * tol, 1e-9),
                            psd_atol=max(10 * tol, 1e-9))

    if times is not None:
        for t in times[times <= 1e-18]:
            snapshots.append(make_state(y))

    for seg in segments:
        if seg.duration == 0:
            continue
        rhs = _LindbladRHS(segment_hamiltonian(seg, layout).matrix, collapse)
        t1 = t0 + seg.duration
        t_eval = None
        if times is not None:
            inside = times[(times > t0 + 1e-18) & (times <= t1)]
            t_eval = np.concatenate([inside, [t1]]) if len(inside) else None
        sol = solve_ivp(
            rhs,
            (t0, t1),
            y,
            method="DOP853",
            rtol=tol,
            atol=tol * 1e-2 / layout.total_dim,
            t_eval=t_eval,
            dense_output=False,
        )
        if not sol.success:
            raise IntegrationError(f"master-equation solver failed: {sol.message}")
        if t_eval is not None:
            for k in range(len(sol.t) - 1):
                snapshots.append(make_state(sol.y[:, k]))
            # final column corresponds to t1 (may also be a sample point)
            if len(sol.t) and abs(sol.t[-1] - t1) < 1e-18 and np.any(
                np.abs(times - t1) < 1e-18
            ):
                snapshots.append(make_state(sol.y[:, -1]))
        y = sol.y[:, -1]
        t0 = t1
    return make_state(y), snapshots


def sideband_trace(
    n_C: int,
    target_state,
    detuning: float,
    durations,
    params: ham.DeviceParams | None = None,
    pump: ham.PumpParams | None = None,
    omega_C: float | None = None,
    layout: ModeLayout | None = None,
    n_T_match: int = 2,
) -> np.ndarray:
    """Ancilla f population vs pulse duration under the driven sideband.

    The pump is frequency-matched at (n_C, n_T_match) and ``detuning``
    shifts the f level away from that condition.  ``target_state`` is a
    Fock index or an amplitude vector for the target cavity.  n_C = 0 is
    allowed and produces a flat trace (no control photon to convert).
    """
    params = params or ham.DeviceParams()
    pump = pump or ham.PumpParams()
    if omega_C is None:
        omega_C = ham.sideband_rate(params, pump, 1)
    if isinstance(target_state, (int, np.integer)):
        dim_t = max(int(target_state) + 1, 2)
        tvec = np.zeros(dim_t, dtype=complex)
        tvec[int(target_state)] = 1.0
    else:
        tvec = np.asarray(target_state, dtype=complex)
        dim_t = len(tvec)
    if layout is None:
        layout = ModeLayout((max(n_C + 1, 2), dim_t, 3))
    cvec = np.zeros(layout.dims[0], dtype=complex)
    cvec[n_C] = 1.0
    avec = np.zeros(3, dtype=complex)
    avec[ANCILLA_G] = 1.0
    psi0 = product_ket(layout, [cvec, np.pad(tvec, (0, layout.dims[1] - dim_t)), avec])

    seg = sideband_segment(
        0.0, params, pump, n_C_ref=max(n_C, 1), n_T_ref=n_T_match, omega_C=omega_C
    )
    seg = PulseSegment(0.0, seg.params, seg.sideband, seg.f_detuning + detuning)
    h = segment_hamiltonian(seg, layout)
    evals, vecs = np.linalg.eigh(h.matrix)
    coeff = vecs.conj().T @ psi0.data
    durations = np.asarray(durations, dtype=float)
    phases = np.exp(-1j * np.outer(durations, evals))
    amps = phases * coeff  # (n_t, dim) in the eigenbasis
    states = amps @ vecs.T  # back to the Fock basis
    probs = np.abs(states) ** 2
    probs = probs.reshape(len(durations), *layout.dims)
    return probs[:, :, :, ANCILLA_F].sum(axis=(1, 2))
