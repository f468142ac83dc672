"""Exact bookkeeping of collar coordinates along chains.

A chain records a descending sequence of critical points; a parameter
attaches one nonnegative collar coordinate to each interior point.  The
operations below are all exact over integers and fractions, which is
what makes the compatibility identities checkable with equality.

Run:  python3 demos/01_parameter_algebra.py
"""

from strataglue import (
    Chain,
    GlueParam,
    add,
    concat_params,
    extend,
    mask,
    restrict,
    zero_support_subchain,
)


def main():
    chain = Chain(("a", "r1", "r2", "r3", "b"))
    sub = Chain(("a", "r2", "b"))
    param = GlueParam(chain, (5, 6, 7))
    print(f"chain     {chain}")
    print(f"subchain  {sub}")
    print(f"parameter {param.values}")
    print()
    print(f"restrict to subchain : {restrict(param, sub).values}")
    print(f"mask the subchain    : {mask(param, sub).values}")
    ext = extend(GlueParam(sub, (8,)), chain)
    print(f"extend (8) to chain  : {ext.values}")
    print(f"sum with (8)         : {add(param, GlueParam(sub, (8,))).values}")
    print()

    # masking and restriction split a parameter exactly
    recovered = add(mask(param, sub), extend(restrict(param, sub), chain))
    print(f"mask + extended restriction == original: {recovered == param}")

    # concatenation inserts an exact zero at the junction
    left = GlueParam(Chain(("a", "r1", "b")), (5,))
    right = GlueParam(Chain(("b", "r2", "c")), (7,))
    joined = concat_params(left, right)
    print(f"concatenated         : {joined.chain} {joined.values}")

    # the zero pattern of a parameter names the stratum a glued point
    # must land in
    pattern = GlueParam(chain, (5, 0, 7))
    print(f"zero support of {pattern.values}: {zero_support_subchain(pattern)}")


if __name__ == "__main__":
    main()
