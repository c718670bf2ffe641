# The MPS pipeline against brute-force state-vector evolution on toy chains.
import numpy as np

from optofeedback.dense import oracle_deviation, random_toy_case

rng = np.random.default_rng(0)
for _ in range(8):
    case = random_toy_case(rng)
    p = case.params
    print(f"{p.waveguide_bins} bins, d_mech={p.d_mech}, g0={p.g0:.3f}, {case.bounces} bounces:"
          f" max deviation {oracle_deviation(case):.1e}")
