"""Distribution of |rho|_{L^2} / bound over random orthonormal-gradient frames,
by frame size and spectral slope."""

import argparse

import numpy as np

from nsv4 import inequalities as iq
from nsv4 import io
from nsv4 import spectral as sp
from nsv4 import tangent as tg


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--n-max", type=int, default=8)
    p.add_argument("--slopes", default="0,1,2,3")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="rho_montecarlo.csv")
    a = p.parse_args()

    grid = sp.make_grid(a.n)
    rows = {"n": [], "slope": [], "rho_l2": [], "bound": [], "ratio": []}
    for slope in (float(s) for s in a.slopes.split(",")):
        for n in range(1, a.n_max + 1):
            for t in range(a.trials):
                fr = tg.TangentFrame.random(grid, n, np.random.default_rng([a.seed, n, t]), slope=slope)
                r = iq.rho_bound_check(fr)
                for k, v in zip(rows, (n, slope, r.rho_l2, r.bound, r.ratio)):
                    rows[k].append(v)
        sel = np.array(rows["slope"]) == slope
        print(f"slope {slope:g}: max ratio {np.max(np.array(rows['ratio'])[sel]):.4e}")
    io.write_csv(a.out, rows)


if __name__ == "__main__":
    main()
