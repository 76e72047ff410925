"""Negative-eigenvalue counts of -Delta - V for growing well depth, against the
CLR bound L * int V^2 (d = 4)."""

import argparse

from nsv4 import inequalities as iq
from nsv4 import io


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--kind", choices=("box", "separable"), default="box")
    p.add_argument("--depths", default="2,5,10,15,20,30,40")
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--box", type=float, default=6.0)
    p.add_argument("--resolution", type=int, default=20)
    p.add_argument("--out", default="clr_family.csv")
    a = p.parse_args()

    rows = {"depth": [], "count": [], "integral_v2": [], "bound": [], "ratio": [], "lowest": []}
    for d in (float(x) for x in a.depths.split(",")):
        r = iq.clr_count(iq.PotentialSpec(a.kind, d, a.radius, a.box, a.resolution))
        for k in rows:
            rows[k].append(d if k == "depth" else getattr(r, k))
        print(f"depth {d:g}: count {r.count}, bound {r.bound:.2f}, ratio {r.ratio:.3f}")
    io.write_csv(a.out, rows)


if __name__ == "__main__":
    main()
