# The feedback CPHASE protocol at reduced scale (omega_m = 1e-3, kappa tau = 200).
# Takes under a minute on one core.
import logging

from optofeedback.dynamics import ProtocolParams
from optofeedback.protocol import entropy_from_phase, run_protocol
from optofeedback.semiclassical import phi1

logging.basicConfig(level=logging.INFO, format="%(message)s")

p = ProtocolParams(g0=0.05, omega_m=1e-3, tau=200.0, n_rep=2)
print("waveguide bins:", p.waveguide_bins)
for rec in run_protocol(p, include_initial=True):
    print(
        f"rep {rec.rep_index:3.1f}  phase {rec.phase:.5f} (ideal {rec.rep_index * phi1(p.g0):.5f})"
        f"  4F {4 * rec.fidelity_F:.6f}  S_om {rec.s_om:.1e}"
        f"  S_oo {rec.s_oo:.5f} vs S(phase) {entropy_from_phase(rec.phase):.5f}"
    )
# After one bounce the mechanics still holds the photons' information, so S_om
# and the infidelity are large; after a full repetition both nearly vanish.
