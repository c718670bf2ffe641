# A single photon passing an empty cavity (no optomechanical coupling).
# The cavity delays and reshapes the wavepacket but returns all of it.
import numpy as np

from optofeedback.dynamics import ProtocolParams, build_time_bin_unitary, sweep_forward
from optofeedback.state_prep import WaveguideLayout, build_waveguide_state, gaussian_mode

p = ProtocolParams(g0=0.0, omega_m=2 * np.pi / 300, tau=40.0, d_mech=2, svd_threshold=0.0, max_bond=None)
layout = WaveguideLayout(p.waveguide_bins, p.dt)
mode = gaussian_mode(60.0, 40.0, layout)
state = build_waveguide_state(p, layout, [mode], [(0.0, 1.0)])
out = sweep_forward(state, build_time_bin_unitary(p), p)


def photon_in_bin(st, k):
    env = np.ones(1, dtype=complex)
    for s in range(st.n_sites):
        g = st.gammas[s] * st.right_lambda(s)[None, None, :]
        env = env @ g[:, 1 if s == k else 0, :]
    return env[0]


out_amps = np.array([photon_in_bin(out, k) for k in range(p.waveguide_bins)])
in_amps = np.zeros(p.waveguide_bins, complex)
in_amps[mode.start_bin:mode.stop_bin] = mode.amplitudes
t = layout.bin_times()
print(f"photon left in the waveguide: {np.sum(abs(out_amps) ** 2):.6f}")
print(f"input centroid {np.sum(t * abs(in_amps) ** 2):.2f}, output centroid {np.sum(t * abs(out_amps) ** 2):.2f}")
# A resonant one-sided cavity delays a long pulse by about 4/kappa
