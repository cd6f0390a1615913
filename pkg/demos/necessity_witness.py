"""A network whose nodes share a nonzero W*_g cannot be observed.

Both nodes are blind to the unstable mode driven by the unknown input, so
the common W*_g is spanned by it. Starting every estimator with the same
error along that direction, no amount of coupling removes the error.
"""

import numpy as np

from geoduio.errors import JointConditionViolated
from geoduio.geometry import decompose_node
from geoduio.graphs import laplacian_from_edges
from geoduio.plants import GlobalPlant, node_system
from geoduio.signals import InputSignal, constant
from geoduio.simulate import SimConfig, simulate_continuous
from geoduio.subspace import DiscreteRegion
from geoduio.synthesis import (build_continuous_bank, check_joint_condition_ct,
                               check_joint_condition_dt, compute_ei_fi)

A = np.array([[0.5, 0.0, 0.0], [0.0, -1.0, 1.0], [0.0, 0.0, -2.0]])
B = np.array([[1.0], [0.0], [0.0]])
OUTPUTS = (np.array([[0.0, 1.0, 0.0]]), np.array([[0.0, 0.0, 1.0]]))


def plant(ts=None):
    a = A if ts is None else np.eye(3) + ts * A
    sig = InputSignal(((constant(0.0),),))
    return GlobalPlant(a, B, OUTPUTS, ((), ()), ts, sig, "witness")


def main():
    p = plant()
    ds = [decompose_node(node_system(p, i)) for i in range(2)]
    check = check_joint_condition_ct(ds)
    v = check.witness.basis[:, 0]
    print("continuous joint condition:", check.ok, "witness:", v)
    for i, d in enumerate(ds):
        print(f"node {i + 1}: (A + L C) v = {d.a_l @ v}")

    bank = build_continuous_bank(ds, laplacian_from_edges(2, [(0, 1)]), 0.0,
                                 100.0, 100.0, check_bounds=False)
    cfg = SimConfig(horizon=4.0, dt=1e-3, x0=tuple(v), xhat0=(0.0,) * 6)
    tr = simulate_continuous(p, bank, cfg)
    for t in (0.0, 1.0, 2.0, 3.0, 4.0):
        k = int(round(t / 1e-3))
        print(f"t = {t:.0f}: errors {np.array2string(tr.err_norm[k], precision=3)}")

    dds = [decompose_node(node_system(plant(0.01), i), DiscreteRegion()) for i in range(2)]
    print("discrete joint condition:", bool(check_joint_condition_dt(dds)))
    try:
        compute_ei_fi(dds)
    except JointConditionViolated as exc:
        print("E_i, F_i synthesis refused:", exc)


if __name__ == "__main__":
    main()
