"""Strain-driven material point: damage evolution under uniaxial stretch.

Prints the damage tensor eigenvalues, the hardening variable and the
stress as the stretch grows, for the isotropic and the anisotropic
degradation branch.
"""
import numpy as np

from anisodamage import InternalState, MaterialParams, point_update


def drive(k_ani, stretches, dt=0.01):
    p = MaterialParams.set1(k_ani=k_ani).with_(H_i=0.0, A_i=0.0)
    state = InternalState()
    print(f"\nk_ani = {k_ani:g}")
    print(f"{'stretch':>8} {'D1':>8} {'D2':>8} {'D3':>8} {'xi':>8} {'S_xx':>10}")
    for lam in stretches:
        C = np.diag([lam ** 2, 1.0, 1.0])
        state, r = point_update(C, np.zeros(2), state, dt, p, "C")
        d = np.linalg.eigvalsh(state.D)[::-1]
        print(f"{lam:8.4f} {d[0]:8.4f} {d[1]:8.4f} {d[2]:8.4f} {state.xi:8.4f} "
              f"{r.S[0, 0]:10.2f}")


if __name__ == "__main__":
    lams = np.linspace(1.0, 1.12, 13)[1:]
    for k in (0.0, 1.0):
        drive(k, lams)
