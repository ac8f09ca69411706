"""Sensitivity of the atomic inversion to its own initial value.

The atom starts with inversion z_in; we record z_out at a fixed time.
Early on the map is smooth.  Once chaos has amplified the grid spacing to
order one the map turns jagged, which marks the predictability horizon of
the internal degree of freedom.
"""
import numpy as np

from atomwalk import AtomInit, Fock, InitialCondition, SystemParams
from atomwalk.analysis import count_monotone_segments, inversion_map, total_variation

params = SystemParams(delta=0.4)
init = InitialCondition(Fock(10), AtomInit.excited(), x0=0.0, p0=25.0)
taus = [25.0, 50.0, 75.0, 100.0, 200.0]
rows = np.array(inversion_map(np.linspace(-1, 1, 401), params, init, taus, workers=None))

for i, tau in enumerate(taus):
    col = rows[:, i + 1]
    print(f"tau = {tau:5.0f}: total variation {total_variation(col):7.2f}, "
          f"{count_monotone_segments(col):3d} monotone pieces")
