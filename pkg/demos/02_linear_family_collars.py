"""Collar atlases on the linear model family.

cube_family(3) is the family of compactified moduli spaces of a totally
ordered set p0 > p1 > p2 > p3: the (p_i, p_j) space is a unit cube of
dimension j - i - 1, and chains pin its coordinate-zero walls.  After
building the collar atlas, the nesting, concatenation and associativity
identities of the gluing maps hold to full numerical precision.

Run:  python3 demos/02_linear_family_collars.py     (a few seconds)
"""

import numpy as np

from strataglue import (
    Chain,
    build_collars,
    check_associativity,
    check_compat_concat,
    check_compat_one_pair,
    check_stratum_condition,
    cube_family,
    validate_family,
)


def main():
    rng = np.random.default_rng(0)
    family = cube_family(3)
    print(f"family {family.name}: pairs {family.pairs()}")
    report = validate_family(family, samples=32, rng=rng)
    print(f"structural validation: {'ok' if report.passed else 'FAILED'}")

    atlas = build_collars(family, rng=rng)
    for rec in atlas.records():
        print(f"  collar chart {rec['chain']}: eps = {rec['epsilon']}")

    full = Chain(("p0", "p1", "p2", "p3"))
    res = check_compat_one_pair(
        atlas, full, Chain(("p0", "p2", "p3")), samples=2000, rng=rng
    )
    print(f"nested gluing identity residual        : {res:.3e}")
    res = check_compat_concat(
        atlas, Chain(("p0", "p1", "p2")), Chain(("p2", "p3")),
        samples=2000, rng=rng,
    )
    print(f"concatenation identity residual        : {res:.3e}")
    res = check_associativity(atlas, full.points, samples=20, grid=16, rng=rng)
    print(f"associativity residual (both orders vs"
          f" the full-chain map): {res:.3e}")
    failures, total = check_stratum_condition(atlas, samples=2000, rng=rng)
    print(f"stratum condition: {failures} failures in {total} samples")


if __name__ == "__main__":
    main()
