"""Static and driven Hamiltonians of the two-cavity/ancilla system.

Builds the dispersive Hamiltonian (e- and f-level shifts, cross-Kerr,
self-Kerr), the pump-activated control-ancilla sideband coupling, and the
pump-derived quantities: frequency-matching condition, sideband oscillation
rate, and ancilla Stark shift.

Simulation frame
----------------
Dynamics run in a frame with each mode co-rotating at its bare frequency and
the ancilla f level co-rotating such that the sideband transition matched at
reference photon numbers (n_C_ref, n_T_ref) is static.  In that frame the
static Hamiltonian is purely number-diagonal and the f level carries an
explicit detuning offset; segments with the pump on use the pump-on value of
the target dispersive shift, with the pump-induced ancilla Stark shift
absorbed into the matching condition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict, replace

import numpy as np

from . import hilbert
from .errors import ExpansionValidityError, NoTransitionError
from .hilbert import (
    ANCILLA_E,
    ANCILLA_F,
    ModeLayout,
    Operator,
    annihilation,
    embed,
    number,
    projector,
)

TWO_PI = 2.0 * math.pi

#: Expansion-validity bound on |phi_q * xi| for the fourth-order Josephson model.
XI_VALIDITY_LIMIT = 0.5

_RATE_LIMIT = TWO_PI * 100e6  # sanity bound on chi and Kerr magnitudes


@dataclass(frozen=True)
class DeviceParams:
    """Measured Hamiltonian parameters, all angular frequencies in rad/s.

    Defaults are the measured device values (predicted values where no
    measurement exists).  Readout-resonator terms are stored for
    completeness but never enter the dynamics.
    """

    chi_C: float = TWO_PI * 3.3e6      # control-ancilla f-level dispersive shift
    chi_T: float = TWO_PI * 1.9e6      # target-ancilla f-level dispersive shift
    chi_T_pump: float = TWO_PI * 1.4e6  # chi_T while the sideband pump is on
    chi_Ce: float = TWO_PI * 1.02e6    # e-level shifts
    chi_Te: float = TWO_PI * 1.10e6
    chi_CT: float = TWO_PI * 2e3       # cavity-cavity cross-Kerr
    kerr_CC: float = TWO_PI * 1.6e3    # self-Kerr rates
    kerr_TT: float = TWO_PI * 3.4e3
    omega_C: float = TWO_PI * 4.22e9
    omega_T: float = TWO_PI * 5.45e9
    omega_ge: float = TWO_PI * 4.79e9
    omega_gf: float = TWO_PI * 9.46e9
    EJ: float = TWO_PI * 21e9          # Josephson energy over hbar
    phi_q: float = 0.32                # zero-point flux participation, ancilla
    phi_C: float = 0.016               # zero-point flux participation, control
    phi_T: float = 0.0                 # not reported; unused in dynamics
    phi_r: float = 0.0
    # readout terms: stored, unused in dynamics
    omega_r: float = TWO_PI * 7.70e9
    chi_r: float = TWO_PI * 3.3e6
    chi_Cr: float = TWO_PI * 5e3
    chi_Tr: float = TWO_PI * 12e3
    kerr_rr: float = TWO_PI * 7e3

    def __post_init__(self):
        for name in ("chi_C", "chi_T", "chi_T_pump", "chi_Ce", "chi_Te",
                     "chi_CT", "kerr_CC", "kerr_TT", "chi_r", "chi_Cr",
                     "chi_Tr", "kerr_rr"):
            if abs(getattr(self, name)) >= _RATE_LIMIT:
                raise ValueError(f"{name} magnitude exceeds 2*pi*100 MHz")
        for name in ("omega_C", "omega_T", "omega_ge", "omega_gf", "omega_r", "EJ"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def to_config(self) -> dict:
        """JSON-ready dict with frequencies in Hz (divided by 2*pi)."""
        out = {}
        for k, v in asdict(self).items():
            out[k] = v / TWO_PI if k not in ("phi_q", "phi_C", "phi_T", "phi_r") else v
        return out

    @classmethod
    def from_config(cls, cfg: dict) -> DeviceParams:
        kwargs = {}
        for k, v in cfg.items():
            kwargs[k] = v if k in ("phi_q", "phi_C", "phi_T", "phi_r") else TWO_PI * v
        return cls(**kwargs)


@dataclass(frozen=True)
class PumpParams:
    """Sideband pump drive settings.

    ``xi`` is the dimensionless ancilla displacement induced by the pump;
    ``omega_p`` the pump frequency in rad/s (see ``pump_frequency``);
    ``detuning_offset`` is a single knob for the unresolved ~1 MHz
    frequency deviation seen in the experiment (added to the f-level
    detuning while the pump is on).  The envelope is rectangular by
    default; ``ramped`` applies linear ramps of length ``rise``.
    """

    xi: complex = 0.5
    omega_p: float = 0.0
    phase: float = 0.0
    envelope: str = "rectangular"
    rise: float = 0.0
    detuning_offset: float = 0.0

    def __post_init__(self):
        if self.envelope not in ("rectangular", "ramped"):
            raise ValueError(f"unknown envelope {self.envelope!r}")
        if self.envelope == "ramped" and self.rise <= 0:
            raise ValueError("ramped envelope needs rise > 0")

    def to_config(self) -> dict:
        return {
            "xi": [complex(self.xi).real, complex(self.xi).imag],
            "omega_p": self.omega_p / TWO_PI,
            "phase": self.phase,
            "envelope": self.envelope,
            "rise": self.rise,
            "detuning_offset": self.detuning_offset / TWO_PI,
        }

    @classmethod
    def from_config(cls, cfg: dict) -> PumpParams:
        cfg = dict(cfg)
        xi = cfg.get("xi", 0.5)
        if isinstance(xi, (list, tuple)):
            xi = complex(xi[0], xi[1])
        cfg["xi"] = xi
        if "omega_p" in cfg:
            cfg["omega_p"] = TWO_PI * cfg["omega_p"]
        if "detuning_offset" in cfg:
            cfg["detuning_offset"] = TWO_PI * cfg["detuning_offset"]
        return cls(**cfg)


def pump_frequency(n_C: int, n_T: int, params: DeviceParams) -> float:
    """Frequency-matching condition for the control-ancilla sideband.

    Returns omega_gf - omega_C - (n_C - 1) chi_C - n_T chi_T, the pump
    frequency that makes the |n_C, g> <-> |n_C - 1, f> transition resonant
    with n_T photons in the target cavity.
    """
    if n_C < 1:
        raise NoTransitionError(
            "for n_C = 0 the pump does not drive sideband oscillations"
        )
    return params.omega_gf - params.omega_C - (n_C - 1) * params.chi_C - n_T * params.chi_T


def matched_pump(
    params: DeviceParams,
    n_C: int = 2,
    n_T: int = 2,
    xi: complex = 0.5,
    **kwargs,
) -> PumpParams:
    """Pump tuned to the matching condition at reference photon numbers."""
    return PumpParams(xi=xi, omega_p=pump_frequency(n_C, n_T, params), **kwargs)


def sideband_rate(params: DeviceParams, pump: PumpParams, n_C: int) -> float:
    """Full sideband oscillation (Rabi) rate sqrt(n_C) * Omega_C in rad/s.

    The single-photon rate follows from the pumped four-wave-mixing term of
    the Josephson Hamiltonian: Omega_C = sqrt(2) E_J phi_q^3 phi_C |xi|,
    where the sqrt(2) is the g-to-f matrix element of the double ancilla
    excitation.
    """
    if n_C < 1:
        raise NoTransitionError("sideband rate defined for n_C >= 1")
    if abs(params.phi_q * pump.xi) >= XI_VALIDITY_LIMIT:
        raise ExpansionValidityError(
            f"|phi_q * xi| = {abs(params.phi_q * pump.xi):.3f} >= "
            f"{XI_VALIDITY_LIMIT}; fourth-order expansion invalid"
        )
    omega_C = math.sqrt(2.0) * params.EJ * params.phi_q**3 * params.phi_C * abs(pump.xi)
    return math.sqrt(n_C) * omega_C


def stark_shift(params: DeviceParams, pump: PumpParams) -> float:
    """Pump-induced ancilla frequency shift per excitation: -E_J phi_q^4 |xi|^2."""
    return -params.EJ * params.phi_q**4 * abs(pump.xi) ** 2


def xi_from_stark_shift(shift: float, params: DeviceParams) -> float:
    """Invert the Stark-shift formula to recover |xi| from a measured shift."""
    if shift > 0:
        raise ValueError("pump Stark shift is negative")
    return math.sqrt(-shift / params.EJ) / params.phi_q**2


def build_static(
    params: DeviceParams, layout: ModeLayout, frame: str = "rotating"
) -> Operator:
    """Static system Hamiltonian on C, T and the ancilla (readout omitted).

    In the rotating frame each mode co-rotates at its bare frequency, so
    only the dispersive shifts, cross-Kerr and self-Kerr terms remain; the
    lab frame adds the bare mode energies.  Always Hermitian and
    number-diagonal.
    """
    if frame not in ("rotating", "lab"):
        raise ValueError(f"unknown frame {frame!r}")
    dims = layout.dims
    if layout.n_modes != 3:
        raise hilbert.LayoutError("static Hamiltonian needs a 3-mode layout")
    n_C = np.arange(dims[0], dtype=float)
    n_T = np.arange(dims[1], dtype=float)
    diag_e = np.zeros(dims[2])
    diag_e[ANCILLA_E] = 1.0
    diag_f = np.zeros(dims[2])
    diag_f[ANCILLA_F] = 1.0
    anc_one = np.ones(dims[2])

    def outer3(a, b, c):
        return np.einsum("i,j,k->ijk", a, b, c).reshape(-1)

    one_C = np.ones(dims[0])
    one_T = np.ones(dims[1])
    diag = (
        -params.chi_Ce * outer3(n_C, one_T, diag_e)
        - params.chi_Te * outer3(one_C, n_T, diag_e)
        - params.chi_C * outer3(n_C, one_T, diag_f)
        - params.chi_T * outer3(one_C, n_T, diag_f)
        - params.chi_CT * outer3(n_C, n_T, anc_one)
        - 0.5 * params.kerr_CC * outer3(n_C * (n_C - 1), one_T, anc_one)
        - 0.5 * params.kerr_TT * outer3(one_C, n_T * (n_T - 1), anc_one)
    )
    if frame == "lab":
        anc_energy = np.zeros(dims[2])
        anc_energy[ANCILLA_E] = params.omega_ge
        anc_energy[ANCILLA_F] = params.omega_gf
        diag = diag + (
            params.omega_C * outer3(n_C, one_T, anc_one)
            + params.omega_T * outer3(one_C, n_T, anc_one)
            + outer3(one_C, one_T, anc_energy)
        )
    return Operator(layout, np.diag(diag), hermitian=True)


def build_sideband(
    params: DeviceParams,
    pump: PumpParams,
    layout: ModeLayout,
    omega_C: float | None = None,
    phase: float | None = None,
) -> Operator:
    """Sideband coupling (Omega_C / 2)(e^{i phi} a_C |f><g| + h.c.).

    ``omega_C`` is the single-photon coupling rate; when omitted it is
    derived from the pump via ``sideband_rate``.  Written in the frame
    where the matched transition is static; the photon-number-dependent
    detunings live in the static Hamiltonian.
    """
    if omega_C is None:
        omega_C = sideband_rate(params, pump, 1)
    if phase is None:
        phase = pump.phase
    a_C = embed(annihilation(layout.dims[0]), 0, layout)
    f_g = embed(transition_gf(layout.dims[2]), 2, layout)
    half = 0.5 * omega_C * np.exp(1j * phase) * (a_C.matrix @ f_g.matrix)
    return Operator(layout, half + half.conj().T, hermitian=True)


def transition_gf(dim: int = 3) -> Operator:
    """|f><g| on the ancilla."""
    return hilbert.transition(dim, ANCILLA_F, 0)


def f_level_detuning(
    params: DeviceParams,
    n_C_ref: int,
    n_T_ref: int,
    pump_on: bool,
    extra: float = 0.0,
) -> float:
    """Frame offset of the f level making the reference branch static.

    With the pump on, the target dispersive shift takes its pump-on value
    and the matching condition absorbs the ancilla Stark shift, so the
    offset uses chi_T_pump; with the pump off the bare chi_T applies.
    """
    chi_t = params.chi_T_pump if pump_on else params.chi_T
    return (n_C_ref - 1) * params.chi_C + n_T_ref * chi_t + extra


def pump_on_params(params: DeviceParams) -> DeviceParams:
    """Parameter snapshot valid while a sideband segment is active."""
    return replace(params, chi_T=params.chi_T_pump)


def f_projector_on(layout: ModeLayout) -> Operator:
    return embed(projector(layout.dims[2], ANCILLA_F), 2, layout)


def e_projector_on(layout: ModeLayout) -> Operator:
    return embed(projector(layout.dims[2], ANCILLA_E), 2, layout)


def joint_number(layout: ModeLayout) -> Operator:
    """n_C + n_T on a 2- or 3-mode layout."""
    op = embed(number(layout.dims[0]), 0, layout) + embed(
        number(layout.dims[1]), 1, layout
    )
    return op
