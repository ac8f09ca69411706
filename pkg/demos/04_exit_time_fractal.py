"""Exit times from the standing wave and their fractal structure.

Atoms start at x = 0 and leave when they reach a node at -pi/2 or 3pi/2.
Counting the monotone pieces of the exit time T(p0) on finer and finer
grids shows new structure appearing at every scale inside the chaotic
band, and none in a band where the atom stays trapped.
"""
from atomwalk import AtomInit, Fock, InitialCondition, SystemParams
from atomwalk.analysis import fractal_refinement, scattering_scan

params = SystemParams(delta=0.4)
init = InitialCondition(Fock(10), AtomInit.excited(), x0=0.0, p0=25.0)

for rec in scattering_scan([30.0, 46.0, 60.0, 90.0], params, init, tau_max=1e4):
    state = "trapped" if rec.timed_out else f"left at x = {rec.x_exit:+.3f}"
    print(f"p0 = {rec.p0:5.1f}: T = {rec.T:9.2f}, turned {rec.m} times, {state}")

res = fractal_refinement((45.9, 46.9), params, init, levels=(100, 300, 1000), workers=None)
print(f"\nmonotone segments of T(p0) on [45.9, 46.9]: {res.counts} for grids of {res.sizes} points")
