"""Replica MI and MMSE curves, with the single-crossing check.

The alpha = 0.1 prior has one jump in M_RS; the alpha = 0.3 prior fails the
single-crossing test.
"""

import numpy as np

from replica_cs import figure1_prior, phase_transition, replica_curve, single_crossing_check

deltas = np.round(np.arange(0, 6.0001, 0.5), 10)
for alpha in (0.1, 0.3):
    p = figure1_prior(alpha)
    check = single_crossing_check(p)
    print(f"alpha={alpha}: single crossing = {check.is_single_crossing}")
    curve = replica_curve(p, deltas)
    for d, i, m in zip(deltas, curve.i_rs, curve.m_rs):
        print(f"  delta={d:4.1f}  I_RS={i:.5f}  M_RS={m:.5f}")
    for j in curve.jumps:
        print(f"  jump at delta*={j.delta_star:.5f}: M_RS {j.z_minus:.4f} -> {j.z_plus:.4f}")
    print(f"  phase transition: {phase_transition(p)}")
