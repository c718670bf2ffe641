# Semiclassical kick model: phase, residual displacement and the pi curve.
import math

from optofeedback.semiclassical import (
    loss_penalty,
    parasitic_dephasing_fidelity,
    phi1,
    run_semiclassical_protocol,
    semiclassical_conditional_phase,
    semiclassical_pi_curve,
)

for g in (0.02, 0.05, 0.1, 0.2):
    _, beta = run_semiclassical_protocol(1, 1, g, 1)
    print(f"g0={g}: phase {semiclassical_conditional_phase(g, 1):.5f} (ideal {phi1(g):.5f}), |beta_r|^2 {abs(beta) ** 2:.2e}")

print("\npi gate along N_rep, with and without 4% loss per repetition")
for pt in semiclassical_pi_curve(range(1, 13)):
    print(f"N_rep={pt.n_rep:2d}  g0={pt.g0_over_kappa:.4f}  F={pt.fidelity:.4f}  F*0.96^N={loss_penalty(pt.fidelity, 0.96, pt.n_rep):.4f}")

print("\nfrequency jitter from a second mechanical mode")
for s in (0.05, 0.1, 0.2):
    mc, closed, se = parasitic_dephasing_fidelity(s, 200_000, seed=1)
    print(f"sigma={s}: Monte Carlo {mc:.4f} +- {se:.4f}, closed form {closed:.4f}")
