"""Finite-n sandwiches and gap bounds for BPSK with n = 8."""

from replica_cs import bpsk_prior
from replica_cs.bounds import bounds_report

p, n = bpsk_prior(), 8
print(" m   mi_lower  mi_upper  mmse_lower mmse_upper  mi_gap")
for m in (4, 8, 16, 24, 32):
    r = bounds_report(p, n, m)
    gap = "   -" if r["mi_gap"] is None else f"{r['mi_gap']:.4f}"
    print(f"{m:2d}  {r['mi_lower']:8.4f}  {r['mi_upper']:8.4f}  {r['mmse_lower']:9.4f}  {r['mmse_upper']:9.4f}  {gap}")
