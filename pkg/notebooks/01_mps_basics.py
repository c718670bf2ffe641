# Vidal-form MPS basics: one photon spread over a few time bins.
import numpy as np

from optofeedback.dense import dense_from_mps
from optofeedback.mps import entropy_profile, save_checkpoint, load_checkpoint, swap_adjacent
from optofeedback.state_prep import TemporalMode, decompose_mode_state

# A photon with a ramp-shaped envelope over five bins
mode = TemporalMode.from_amplitudes(0, [1, 2, 3, 2, 1])
seg = decompose_mode_state(mode)
print("bond dims:", seg.bond_dims)  # never more than 2 for one photon
print("entropy per bond (bits):", np.round(entropy_profile(seg), 4))

# The dense vector has the photon amplitudes on the one-excitation basis states
amps = dense_from_mps(seg).amplitudes
print("one-photon amplitudes:", np.round(amps[[16, 8, 4, 2, 1]].real, 4))

# Swapping two bins permutes the envelope
swapped = swap_adjacent(seg, 1)
print("after swapping bins 1 and 2:", np.round(dense_from_mps(swapped).amplitudes[[16, 8, 4, 2, 1]].real, 4))

# Checkpoints are plain JSON
save_checkpoint(seg, "/tmp/photon.json")
print("reloaded bonds:", load_checkpoint("/tmp/photon.json").bond_dims)
