"""Exact-posterior Monte Carlo for BPSK, compared against the replica prediction.

Estimates the per-coordinate MI and MMSE at n = 8 and prints the MI
difference profile with its standard errors.
"""

import numpy as np

from replica_cs import bpsk_prior, estimate, mi_difference_profile, replica_pair

p, n = bpsk_prior(), 8
for m in (8, 16, 32):
    est = estimate(p, n, m, trials=4000, seed=1)
    i_rs, m_rs = replica_pair(p, m / n)
    print(f"m={m:2d}: MI/n={est.mi_hat / n:.4f} +- {est.mi_se / n:.4f} (I_RS={i_rs:.4f}), "
          f"MMSE={est.mmse_hat:.4f} +- {est.mmse_se:.4f} (M_RS={m_rs:.4f})")

prof = mi_difference_profile(p, n, 2 * n, trials=4000, seed=2)
print("\n m  I'(m)     SE      0.5 log(1+MMSE)")
for m, ip, mm in prof.rows():
    print(f"{m:2d}  {ip:.4f}  {prof.i_prime_se[m]:.4f}  {0.5 * np.log1p(mm):.4f}")
