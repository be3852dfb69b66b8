"""Scalar Gaussian channel: mutual information and MMSE for several priors.

Prints I_X(s) and mmse_X(s) on a few SNRs, then checks the I-MMSE relation
dI/ds = mmse/2 with a central difference.
"""

import numpy as np

from replica_cs import bpsk_prior, figure1_prior, gaussian_prior
from replica_cs.channel import evaluate

priors = {"gaussian": gaussian_prior(), "bpsk": bpsk_prior(), "fig1(0.1)": figure1_prior(0.1)}
snrs = np.array([0.1, 1.0, 10.0, 100.0])

for name, p in priors.items():
    ix, mm, _ = evaluate(p, snrs)
    h = 1e-4 * snrs
    slope = (evaluate(p, snrs + h)[0] - evaluate(p, snrs - h)[0]) / (2 * h)
    print(f"{name}")
    for s, a, b, d in zip(snrs, ix, mm, slope):
        print(f"  s={s:7.2f}  I_X={a:.6f} nats  mmse={b:.6f}  dI/ds - mmse/2 = {d - b / 2:+.1e}")
