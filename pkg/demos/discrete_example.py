"""Discrete example: a slow invariant zero is absorbed into W*_g.

The continuous joint condition fails on this network while the discrete
one, which also uses the measurements, holds.
"""

import numpy as np

from geoduio.geometry import decompose_node
from geoduio.plants import build_example_dt, node_system
from geoduio.scenario import load_scenario, run_scenario
from geoduio.simulate import bound_check
from geoduio.subspace import DiscreteRegion
from geoduio.synthesis import check_joint_condition_ct, check_joint_condition_dt


def main():
    plant = build_example_dt()
    region = DiscreteRegion(0.999)
    ds = [decompose_node(node_system(plant, i), region) for i in range(plant.n_nodes)]
    d2 = ds[1]
    print("node 2 invariant zeros:", np.round(np.sort_complex(d2.fixed_spectrum.all), 4))
    print("classified bad:", np.round(np.sort_complex(d2.fixed_spectrum.bad), 4))
    print(f"dim W* = {d2.w_star.dim}, dim W*_g = {d2.w_g_star.dim}")

    print("continuous joint condition:", bool(check_joint_condition_ct(ds)))
    print("discrete joint condition:", bool(check_joint_condition_dt(ds)))

    _, bank, trace = run_scenario(load_scenario("example_dt"))
    err, bound = bound_check(trace, bank)
    print(f"d = {bank.rounds}: steady network error {err:.3e} <= bound {bound:.3e}")


if __name__ == "__main__":
    main()
