"""Named end-to-end scenarios reproducing the gate's headline measurements.

Each scenario composes calibration, pulse-sequence evolution and tomography
from a cold start, runs deterministically for a given spec and seed, and
returns metrics (with units) plus series data ready for JSON/CSV export.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from . import __version__
from . import hamiltonian as ham
from . import tomography as tomo
from .dynamics import (
    CoherenceParams,
    collapse_operators,
    evolve_lindblad,
    idle_segment,
    lindblad_trajectory,
    sideband_trace,
)
from .errors import ConfigError
from .gate import (
    GateTimings,
    LogicalEncoding,
    apply_cnot,
    calibrate_timings,
    cnot_sequence,
    code_ket,
    encoding,
    logical_coeffs,
)
from .hilbert import ModeLayout, QuantumState

SCENARIOS = (
    "bell",
    "qpt",
    "repeated_gate",
    "crosskerr_concurrence",
    "chevron",
    "onoff_ratio",
)

#: identity-process fidelities the SPAM depolarization is fitted to
SPAM_TARGET_F_IDENTITY = {"kitten": 0.92, "fock02": 0.92, "single_photon": 0.98,
                          "generalized_kitten": 0.92}

PARITY_CONTRAST = 0.79


@dataclass
class ExperimentSpec:
    """Scenario selector plus noise toggles and per-scenario knobs."""

    scenario: str
    encoding: str = "kitten"
    decoherence: bool = False
    spam: bool = False
    shots: int | None = None
    repetitions: int = 20
    input_states: tuple = ("0,X-", "1,X-", "X+,X-")
    wait_times: tuple | None = None        # crosskerr grid, seconds
    durations: tuple | None = None         # chevron grid, seconds
    crosskerr_dephasing: float | None = 500e-6
    lindblad_tol: float = 1e-8
    output: str | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(
                f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}"
            )
        if self.scenario == "repeated_gate":
            if self.repetitions < 2:
                raise ConfigError("repeated_gate needs repetitions >= 2")
            if not self.input_states:
                raise ConfigError("repeated_gate needs at least one input state")
        if self.scenario == "crosskerr_concurrence" and self.encoding != "single_photon":
            raise ConfigError("crosskerr_concurrence uses the single_photon encoding")

    def to_config(self) -> dict:
        return asdict(self)

    @classmethod
    def from_config(cls, cfg: dict) -> "ExperimentSpec":
        cfg = dict(cfg)
        for key in ("input_states", "wait_times", "durations"):
            if key in cfg and cfg[key] is not None:
                cfg[key] = tuple(cfg[key])
        return cls(**cfg)


@dataclass
class ExperimentResult:
    """Scalar metrics (with units), series tables and provenance."""

    scenario: str
    metrics: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def add_metric(self, name: str, value, units: str):
        self.metrics[name] = {"value": value, "units": units}

    def add_series(self, name: str, columns, rows):
        self.series[name] = {"columns": list(columns), "rows": [list(r) for r in rows]}

    def to_json(self) -> str:
        return json.dumps(
            {
                "scenario": self.scenario,
                "metrics": self.metrics,
                "series": self.series,
                "provenance": self.provenance,
            },
            sort_keys=True,
            indent=2,
        )

    def series_csv(self, name: str) -> str:
        table = self.series[name]
        lines = [",".join(table["columns"])]
        for row in table["rows"]:
            lines.append(",".join(f"{v:.12g}" if isinstance(v, float) else str(v)
                                  for v in row))
        return "\n".join(lines) + "\n"


def config_hash(payload: dict) -> str:
    text = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:12]


_MAX_WORKERS = 1


def set_max_workers(n: int):
    """Cap sweep parallelism (sweep points are independent evolutions)."""
    global _MAX_WORKERS
    _MAX_WORKERS = max(1, int(n))


def _map_indexed(fn, items):
    if _MAX_WORKERS == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=_MAX_WORKERS) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Shared pipeline pieces.
# ---------------------------------------------------------------------------


def spam_depolarization(enc_name: str) -> float:
    """Code-space depolarization fitted so the identity process fidelity
    matches the measured encode-and-measure control experiment."""
    f_id = SPAM_TARGET_F_IDENTITY[enc_name]
    return 4.0 * (1.0 - f_id) / 3.0


def _depolarize_code(state: QuantumState, enc: LogicalEncoding, lam: float) -> QuantumState:
    """rho -> (1 - lam) rho + lam * Pi_code / 4 on the full space."""
    layout = state.layout
    rho = state.to_density().data
    basis = np.empty((layout.total_dim, 4), dtype=complex)
    col = 0
    for i in (0, 1):
        for j in (0, 1):
            basis[:, col] = code_ket(
                enc, layout, (1 - i, i), (1 - j, j)
            ).data
            col += 1
    mixed = (basis @ basis.conj().T) / 4.0
    out = (1.0 - lam) * rho + lam * mixed
    return QuantumState(layout, "density", out, trace_atol=1e-7, psd_atol=1e-9)


def _gate_layout(enc: LogicalEncoding) -> ModeLayout:
    dc, dt = enc.min_dims()
    return ModeLayout((dc + 1, dt + 1, 3))


@dataclass(frozen=True)
class GateSetup:
    """Calibrated gate context shared by the scenarios."""

    params: ham.DeviceParams
    coherence: CoherenceParams
    pump: ham.PumpParams
    enc: LogicalEncoding
    timings: GateTimings
    layout: ModeLayout

    @property
    def sequence(self):
        return cnot_sequence(self.timings, self.params, self.pump)


def make_setup(
    enc_name: str,
    params: ham.DeviceParams | None = None,
    coherence: CoherenceParams | None = None,
    pump: ham.PumpParams | None = None,
    timings: GateTimings | None = None,
) -> GateSetup:
    params = params or ham.DeviceParams()
    coherence = coherence or CoherenceParams()
    enc = encoding(enc_name)
    if pump is None:
        pump = ham.matched_pump(params, enc.n_C, enc.n_T_match)
    if timings is None:
        timings = calibrate_timings(params, pump, enc)
    return GateSetup(params, coherence, pump, enc, timings, _gate_layout(enc))


def _run_gate(setup: GateSetup, state: QuantumState, spec: ExperimentSpec):
    noise = setup.coherence if spec.decoherence else None
    return apply_cnot(state, setup.sequence, noise=noise, tol=spec.lindblad_tol)


def _ideal_logical(enc, layout, logical4):
    vec = np.zeros(layout.total_dim, dtype=complex)
    idx = 0
    for i in (0, 1):
        for j in (0, 1):
            vec = vec + logical4[idx] * code_ket(enc, layout, (1 - i, i), (1 - j, j)).data
            idx += 1
    return QuantumState(layout, "ket", vec / np.linalg.norm(vec))


def _reconstruct(state: QuantumState, spec: ExperimentSpec, enc, rng) -> QuantumState:
    """Tomography pipeline: Wigner sampling, calibration, MLE reconstruction.

    Reconstruction dims follow the encoding support (the restricted space
    the data determine well); the parity-contrast scale plus vacuum
    calibration is applied whenever the SPAM model is on.
    """
    dims = enc.min_dims()
    cavities = state.partial_trace((0, 1))
    grid = tomo.displacement_grid()
    contrast = PARITY_CONTRAST if spec.spam else 1.0
    samples = tomo.joint_wigner(
        cavities, grid, shots=spec.shots, contrast=contrast, rng=rng
    )
    if contrast != 1.0 or spec.shots is not None:
        vac_shots = None if spec.shots is None else max(spec.shots * 100, 10000)
        vac = tomo.vacuum_reference(
            grid, cavities.layout.dims, shots=vac_shots, contrast=contrast, rng=rng
        )
        samples = tomo.calibrate_samples(samples, vac)
    full = tomo.mle_reconstruct(samples, cavities.layout.dims)
    # restrict to the encoding support for reporting
    dc, dt = dims
    rho = full.data.reshape(cavities.layout.dims * 2)[
        :dc, :dt, :dc, :dt
    ].reshape(dc * dt, dc * dt)
    from .hilbert import cavity_layout

    return QuantumState(cavity_layout(dc, dt), "density", rho, normalized=False)


def _cavity_ket(state: QuantumState, dims) -> QuantumState:
    """Project an ancilla-g ket onto the cavity space with given dims."""
    from .hilbert import cavity_layout

    full_dims = state.layout.dims
    vec = state.data.reshape(full_dims)[: dims[0], : dims[1], 0].reshape(-1)
    return QuantumState(
        cavity_layout(*dims), "ket", vec / np.linalg.norm(vec)
    )


# ---------------------------------------------------------------------------
# Scenarios.
# ---------------------------------------------------------------------------


def run_bell(spec: ExperimentSpec, setup: GateSetup | None = None, seed: int = 0) -> ExperimentResult:
    """Prepare (|0_L> + |1_L>) |0_L>, run the gate, reconstruct the output."""
    setup = setup or make_setup(spec.encoding)
    enc, layout = setup.enc, setup.layout
    rng = np.random.default_rng(seed)
    lam = spam_depolarization(enc.name) if spec.spam else 0.0

    psi_in = code_ket(enc, layout, logical_coeffs("X+"), logical_coeffs("0"))
    prepared = _depolarize_code(psi_in, enc, lam) if lam else psi_in
    out = _run_gate(setup, prepared, spec)

    bell = _ideal_logical(enc, layout, np.array([1, 0, 0, 1]) / math.sqrt(2))
    dims = enc.min_dims()
    bell_cav = _cavity_ket(bell, dims)
    in_cav = _cavity_ket(psi_in, dims)

    rho_in = _reconstruct(prepared if lam else psi_in.to_density(), spec, enc, rng)
    rho_out = _reconstruct(out.to_density() if out.isket else out, spec, enc, rng)

    f_in = tomo.state_fidelity(rho_in, in_cav)
    f_bell = tomo.state_fidelity(rho_out, bell_cav)
    rho4, leak = tomo.project_to_qubits(rho_out, enc)
    conc = tomo.concurrence(rho4)

    result = ExperimentResult("bell")
    result.add_metric("F_in", f_in, "dimensionless")
    result.add_metric("F_Bell", f_bell, "dimensionless")
    result.add_metric("concurrence", conc, "dimensionless")
    result.add_metric("leakage", leak, "dimensionless")
    result.add_metric("trace_out", rho_out.norm(), "dimensionless")
    result.add_metric("gate_time", setup.timings.total_duration, "s")
    result.series["rho_out_real"] = {
        "columns": [f"c{k}" for k in range(rho_out.data.shape[0])],
        "rows": [[float(v) for v in row] for row in rho_out.data.real],
    }
    return result


def run_qpt(spec: ExperimentSpec, setup: GateSetup | None = None, seed: int = 0) -> ExperimentResult:
    """Process tomography of the gate and of the encode-measure identity."""
    setup = setup or make_setup(spec.encoding)
    enc, layout = setup.enc, setup.layout
    lam = spam_depolarization(enc.name) if spec.spam else 0.0

    def gate_runner(state):
        prepared = _depolarize_code(state, enc, lam) if lam else state
        return _run_gate(setup, prepared, spec)

    def identity_runner(state):
        return _depolarize_code(state, enc, lam) if lam else state

    chi_gate = tomo.qpt(gate_runner, enc, layout)
    chi_id = tomo.qpt(identity_runner, enc, layout)
    f_cnot = tomo.process_fidelity(chi_gate, tomo.cnot_chi())
    f_identity = tomo.process_fidelity(chi_id, tomo.identity_chi())

    result = ExperimentResult("qpt")
    result.add_metric("F_CNOT", f_cnot, "dimensionless")
    result.add_metric("F_identity", f_identity, "dimensionless")
    result.add_metric("chi_trace", chi_gate.trace, "dimensionless")
    result.add_metric("spam_depolarization", lam, "dimensionless")
    result.series["chi_real"] = {
        "columns": list(chi_gate.labels),
        "rows": [[float(v) for v in row] for row in chi_gate.chi.real],
    }
    result.series["chi_imag"] = {
        "columns": list(chi_gate.labels),
        "rows": [[float(v) for v in row] for row in chi_gate.chi.imag],
    }
    return result


def run_repeated_gate(spec: ExperimentSpec, setup: GateSetup | None = None,
                      seed: int = 0) -> ExperimentResult:
    """State fidelity vs number of gate applications, with linear-fit slopes."""
    setup = setup or make_setup(spec.encoding)
    enc, layout = setup.enc, setup.layout
    reps = spec.repetitions

    result = ExperimentResult("repeated_gate")
    rows = []
    logical_cnot = tomo.LOGICAL_CNOT

    for label in spec.input_states:
        c_label, t_label = (s.strip() for s in label.split(","))
        cc, tc = logical_coeffs(c_label), logical_coeffs(t_label)
        logical = np.kron(np.array(cc), np.array(tc))
        rho = code_ket(enc, layout, cc, tc).to_density()
        fids = []
        for n in range(1, reps + 1):
            rho = _run_gate(setup, rho, spec)
            ideal = _ideal_logical(enc, layout, np.linalg.matrix_power(logical_cnot, n) @ logical)
            fids.append(tomo.state_fidelity(rho, ideal))
        ns = np.arange(1, reps + 1)
        slope = -float(np.polyfit(ns, fids, 1)[0])
        result.add_metric(f"slope[{label}]", slope, "fidelity loss per gate")
        for n, f in zip(ns, fids):
            rows.append([label, int(n), float(f)])

    slopes = [m["value"] for k, m in result.metrics.items() if k.startswith("slope[")]
    active = [
        m["value"]
        for k, m in result.metrics.items()
        if k.startswith("slope[") and not k.startswith("slope[0,")
    ]
    result.add_metric("slope_mean_all", float(np.mean(slopes)), "fidelity loss per gate")
    if active:
        result.add_metric(
            "slope_mean_active", float(np.mean(active)), "fidelity loss per gate"
        )
    result.add_series("fidelity_vs_n", ["input", "n", "fidelity"], rows)
    return result


def run_crosskerr(spec: ExperimentSpec, setup: GateSetup | None = None,
                  seed: int = 0) -> ExperimentResult:
    """Concurrence vs idle time under the always-on cross-Kerr coupling."""
    setup = setup or make_setup(spec.encoding)
    enc, layout = setup.enc, setup.layout
    params = setup.params
    chi_ct = params.chi_CT

    if spec.wait_times is not None:
        times = np.asarray(spec.wait_times, dtype=float)
    else:
        t_max = 2.0 * math.pi / chi_ct if chi_ct else 1e-3
        times = np.linspace(0.0, t_max, 41)

    coh = setup.coherence
    if spec.decoherence and spec.crosskerr_dephasing:
        # thermal-ancilla dephasing folded into an effective cavity T2
        t_phi = spec.crosskerr_dephasing
        coh = CoherenceParams(
            t1_C=coh.t1_C, t2_C=min(coh.t2_C, t_phi), t1_T=coh.t1_T,
            t2_T=min(coh.t2_T, t_phi), t1_f=coh.t1_f, t2_f=coh.t2_f,
            t1_e=coh.t1_e, t2_e=coh.t2_e,
        )

    separable = code_ket(enc, layout, logical_coeffs("X+"), logical_coeffs("0"))
    bell_seq = setup.sequence
    bell_state = apply_cnot(separable, bell_seq)

    segment = idle_segment(float(times[-1]) if len(times) else 0.0, params)
    result = ExperimentResult("crosskerr_concurrence")
    rows = []
    for name, start in (("separable", separable), ("bell", bell_state)):
        if spec.decoherence:
            states = lindblad_trajectory(
                start.to_density(), [segment], times,
                collapse_operators(coh, layout), tol=spec.lindblad_tol,
            )
        else:
            from .dynamics import evolve_unitary

            states = [
                evolve_unitary(start, [idle_segment(float(t), params)])
                for t in times
            ]
        concs = []
        for st in states:
            rho4, _ = tomo.project_to_qubits(st.partial_trace((0, 1)), enc)
            concs.append(tomo.concurrence(rho4))
        for t, c in zip(times, concs):
            rows.append([name, float(t), float(c)])
        concs = np.asarray(concs)
        if name == "separable" and len(times) > 2 and chi_ct:
            peak = int(np.argmax(concs))
            result.add_metric("first_max_time", float(times[peak]), "s")
            result.add_metric(
                "chi_CT_fitted", math.pi / float(times[peak]) if times[peak] else 0.0,
                "rad/s",
            )
        result.add_metric(f"max_concurrence[{name}]", float(concs.max()), "dimensionless")

    result.add_series("concurrence_vs_time", ["initial_state", "time_s", "concurrence"], rows)
    result.add_metric("chi_CT_configured", chi_ct, "rad/s")
    return result


def run_onoff_ratio(spec: ExperimentSpec, setup: GateSetup | None = None,
                    seed: int = 0) -> ExperimentResult:
    """Residual entangling rate and the gate on/off ratio pi/(Omega_res t_g)."""
    setup = setup or make_setup(spec.encoding)
    enc = setup.enc
    params = setup.params
    n_c = enc.n_C
    nbar_t = enc.mean_target_photons()
    omega_res = n_c * nbar_t * params.chi_CT
    t_g = setup.timings.total_duration

    result = ExperimentResult("onoff_ratio")
    result.add_metric("n_C", n_c, "photons")
    result.add_metric("nbar_T", nbar_t, "photons")
    result.add_metric("Omega_res", omega_res, "rad/s")
    result.add_metric("gate_time", t_g, "s")
    if omega_res > 0:
        result.add_metric("onoff_ratio", math.pi / (omega_res * t_g), "dimensionless")
    else:
        result.add_metric("onoff_ratio", math.inf, "dimensionless")
    return result


def run_chevron(spec: ExperimentSpec, setup: GateSetup | None = None,
                seed: int = 0) -> ExperimentResult:
    """Sideband oscillations of the ancilla f population vs target state."""
    setup = setup or make_setup(spec.encoding)
    enc = setup.enc
    params, pump = setup.params, setup.pump
    n_c = enc.n_C
    rate = ham.sideband_rate(params, pump, 1)
    full_rate = math.sqrt(n_c) * rate
    if spec.durations is not None:
        durations = np.asarray(spec.durations, dtype=float)
    else:
        durations = np.linspace(0.0, 6.0 * math.pi / full_rate, 481)

    support = enc.support("target")
    dim_t = max(support) + 1
    targets = {f"n_T={n}": np.eye(dim_t)[n] for n in support}
    w0 = tomo.codeword_vector = None  # noqa: no-op placeholder
    from .gate import codeword

    targets["codeword_0L"] = codeword(enc, "target", 0, dim_t).data
    targets["control_vacuum"] = np.eye(dim_t)[enc.n_T_match]

    result = ExperimentResult("chevron")
    rows = []

    def trace_for(item):
        name, tvec = item
        n_ctrl = 0 if name == "control_vacuum" else n_c
        return name, sideband_trace(
            n_ctrl, tvec, 0.0, durations, params=params, pump=pump,
            n_T_match=enc.n_T_match,
        )

    traces = dict(_map_indexed(trace_for, list(targets.items())))
    for name, pf in traces.items():
        for t, v in zip(durations, pf):
            rows.append([name, float(t), float(v)])
        result.add_metric(f"max_Pf[{name}]", float(np.max(pf)) if len(pf) else 0.0,
                          "population")

    resonant = traces[f"n_T={enc.n_T_match}"]
    detuned = [
        traces[f"n_T={n}"] for n in support if n != enc.n_T_match
    ]
    if detuned and len(durations):
        contrast_res = float(np.max(resonant))
        contrast_det = float(np.mean([np.max(d) for d in detuned]))
        result.add_metric("contrast_reduction",
                          1.0 - contrast_det / contrast_res, "dimensionless")
    result.add_metric("full_rate", full_rate, "rad/s")
    result.add_series("pf_vs_time", ["target", "time_s", "P_f"], rows)
    return result


_RUNNERS = {
    "bell": run_bell,
    "qpt": run_qpt,
    "repeated_gate": run_repeated_gate,
    "crosskerr_concurrence": run_crosskerr,
    "chevron": run_chevron,
    "onoff_ratio": run_onoff_ratio,
}


def run(spec: ExperimentSpec, params: ham.DeviceParams | None = None,
        coherence: CoherenceParams | None = None,
        pump: ham.PumpParams | None = None, seed: int = 0) -> ExperimentResult:
    """Dispatch a scenario from a cold start and stamp provenance."""
    setup = make_setup(spec.encoding, params, coherence, pump)
    result = _RUNNERS[spec.scenario](spec, setup, seed)
    payload = {
        "spec": spec.to_config(),
        "device": (params or ham.DeviceParams()).to_config(),
        "coherence": (coherence or CoherenceParams()).to_config(),
        "pump": setup.pump.to_config(),
        "seed": seed,
    }
    result.provenance = {
        "config_hash": config_hash(payload),
        "code_version": __version__,
        "effective_config": payload,
    }
    return result
