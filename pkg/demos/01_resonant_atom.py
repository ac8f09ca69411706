"""Exact resonance: purity of an atom crossing a Fock field at delta = 0.

An excited atom enters a field holding ten photons.  With zero detuning
the optical potential vanishes, the atom keeps its speed, and the purity
follows a closed form.  We integrate the full equations and compare.
"""
import math

import numpy as np

from atomwalk import AtomInit, SystemParams, fock_initial, integrate, purity
from atomwalk.observables import TimeSeries, autocorrelation_period
from atomwalk.oracles import resonant_purity

params = SystemParams(delta=0.0)
state = fock_initial(10, AtomInit.excited(), params, x0=0.0, p0=25.0)
traj = integrate(state, params, 1000.0, sample_dt=0.1)

P = purity(traj)
exact = resonant_purity(10, params.omega_r, 25.0, traj.tau)
print(f"largest deviation from the closed form: {np.max(np.abs(P - exact)):.2e}")

period = autocorrelation_period(TimeSeries.from_samples(traj.tau, P), min_lag=50.0)
print(f"purity repeats every {period:.2f} time units "
      f"(free flight over half a wavelength: {math.pi / (params.omega_r * 25.0):.2f})")
print(f"momentum never changes: spread {np.ptp(traj.p):.1e}")
