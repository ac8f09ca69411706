"""Fidelity of twin states under a tiny change of detuning.

Two copies of the same initial state evolve with detunings differing by
1e-4.  In the chaotic regime their overlap collapses exponentially, at a
rate tied to the Lyapunov exponent; in the regular regime it barely moves.
"""
import math

from atomwalk import AtomInit, Coherent, InitialCondition, SystemParams
from atomwalk.analysis import fidelity_decay, predictability_horizon

params = SystemParams(delta=0.4, n_trunc=100)
for z0 in (1.0, 0.0):
    init = InitialCondition(Coherent(math.sqrt(10)), AtomInit.from_inversion(z0), 0.0, 25.0)
    res = fidelity_decay(params, init, delta_delta=1e-4, horizon=500.0)
    f = res.series.values
    print(f"coherent field, z(0) = {z0:g}: min f = {f.min():.6f}, "
          f"separation rate = {res.separation_rate:.4f}")

print(f"\nwith lambda = 0.04 an error of 1e-3 grows to order one after "
      f"{predictability_horizon(0.04, 1.0, 1e-3):.0f} time units")
