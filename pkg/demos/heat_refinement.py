"""Time refinement of a decaying sine mode.

The heat problem has no control influence and zero cost, so the forward solver
can be compared with closed forms: the semi-discrete mode decays like
exp(-lambda_h t), where lambda_h is the P1 eigenvalue of the sine mode.
Crank-Nicolson should gain a factor 4 per halving of the step and implicit
Euler a factor 2.
"""

import numpy as np

from hybridpar import ControlField, PseudoTimeGrid, build_uniform_mesh, heat_problem, solve_state

N_NODES = 41
NU = 1.0
T = 0.1


def p1_eigenvalue(h):
    c = np.cos(np.pi * h)
    return NU * 6.0 * (1.0 - c) / (h * h * (2.0 + c))


def main():
    P = heat_problem(nu=NU, T=T)
    mesh = build_uniform_mesh(N_NODES)
    lam = p1_eigenvalue(1.0 / (N_NODES - 1))
    ref = np.exp(-lam * T) * np.sin(np.pi * mesh.nodes)
    print(f"P1 eigenvalue {lam:.6f} vs continuous {NU * np.pi ** 2:.6f}")
    for scheme in ("CN", "IE"):
        prev = None
        print(f"\n{scheme}:  n_steps   max error     ratio")
        for n in (10, 20, 40, 80, 160):
            u = ControlField.zeros(PseudoTimeGrid(n), 1, N_NODES)
            y = solve_state(P, mesh, u, T / 2, scheme).final()[0]
            err = np.max(np.abs(y - ref))
            ratio = "" if prev is None else f"{prev / err:8.3f}"
            print(f"     {n:8d}   {err:.3e}  {ratio}")
            prev = err


if __name__ == "__main__":
    main()
