"""Matrix-product-state simulation of an optomechanical CPHASE gate with delayed feedback."""

__version__ = "0.1.0"

from .dense import DenseState, dense_evolve, dense_from_mps, mps_from_dense
from .dynamics import (
    DiscardedWeightExceeded,
    ParameterWarning,
    ProtocolParams,
    build_time_bin_unitary,
    evolve_repetitions,
    swap_back,
    sweep_forward,
)
from .mps import (
    MpsState,
    TwoSiteGate,
    apply_two_site_gate,
    canonicalize,
    entanglement_entropy,
    load_checkpoint,
    overlap,
    save_checkpoint,
    swap_adjacent,
)
from .protocol import (
    ObservableRecord,
    conditional_phase,
    entropy_from_phase,
    pi_gate_search,
    run_protocol,
)
from .semiclassical import (
    SemiclassicalState,
    loss_penalty,
    parasitic_dephasing_fidelity,
    phi1,
    photon_kick,
    quarter_period,
    run_semiclassical_protocol,
    semiclassical_fidelity,
)
from .state_prep import (
    TemporalMode,
    WaveguideLayout,
    assemble_initial_state,
    decompose_mode_state,
    gaussian_mode,
    reference_basis_state,
)
