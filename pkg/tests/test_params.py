"""Exact algebra of collar-coordinate tuples.

All operations are pure and exact over int/Fraction, so the identities
are asserted with equality, not a tolerance.  Property tests draw random
chains, subchains and rational tuples.
"""

from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from strataglue import (
    Chain,
    GlueParam,
    InputError,
    add,
    concat_chains,
    concat_params,
    extend,
    mask,
    restrict,
    zero_support_subchain,
)

fractions = st.fractions(
    min_value=0, max_value=100, max_denominator=20
)


@st.composite
def chain_and_subchain(draw):
    k = draw(st.integers(min_value=0, max_value=4))
    chain = Chain(tuple(f"p{i}" for i in range(k + 2)))
    keep = draw(st.lists(st.booleans(), min_size=k, max_size=k))
    sub = Chain(
        (chain.head,)
        + tuple(r for r, f in zip(chain.interior, keep) if f)
        + (chain.tail,)
    )
    values = tuple(draw(fractions) for _ in range(k))
    return GlueParam(chain, values), sub


# -- worked values -----------------------------------------------------


def test_worked_values():
    chain = Chain(("a", "r1", "r2", "r3", "b"))
    sub = Chain(("a", "r2", "b"))
    param = GlueParam(chain, (5, 6, 7))
    assert restrict(param, sub).values == (6,)
    assert mask(param, sub).values == (5, 0, 7)
    assert extend(GlueParam(sub, (8,)), chain).values == (0, 8, 0)
    assert add(param, GlueParam(sub, (8,))).values == (5, 14, 7)


def test_concat_worked_values():
    a = GlueParam(Chain(("a", "r1", "b")), (5,))
    b = GlueParam(Chain(("b", "r2", "c")), (7,))
    joined = concat_params(a, b)
    assert joined.chain == Chain(("a", "r1", "b", "r2", "c"))
    assert joined.values == (5, 0, 7)
    assert joined.value_at("b") == 0


def test_zero_support_subchain():
    chain = Chain(("a", "r1", "r2", "r3", "b"))
    param = GlueParam(chain, (5, 0, 7))
    assert zero_support_subchain(param) == Chain(("a", "r2", "b"))
    assert zero_support_subchain(GlueParam.zero(chain)) == chain


# -- properties --------------------------------------------------------


@given(chain_and_subchain())
def test_restrict_extend_roundtrip(data):
    param, sub = data
    sub_param = restrict(param, sub)
    assert restrict(extend(sub_param, param.chain), sub) == sub_param


@given(chain_and_subchain())
def test_mask_plus_restriction_recovers_param(data):
    param, sub = data
    recovered = add(
        mask(param, sub), extend(restrict(param, sub), param.chain)
    )
    assert recovered == param


@given(chain_and_subchain())
def test_mask_and_restrict_split_support(data):
    param, sub = data
    kept = set(sub.interior)
    masked = mask(param, sub)
    for r in param.chain.interior:
        if r in kept:
            assert masked.value_at(r) == 0
            assert restrict(param, sub).value_at(r) == param.value_at(r)
        else:
            assert masked.value_at(r) == param.value_at(r)


@given(chain_and_subchain(), chain_and_subchain())
def test_concat_bookkeeping(left, right):
    a, _ = left
    b, _ = right
    # relabel the second chain so the junction matches the first tail
    shift = len(a.chain.points) - 1
    bchain = Chain(
        (a.chain.tail,) + tuple(f"p{shift + i + 1}" for i in range(len(b.chain.points) - 1))
    )
    b = GlueParam(bchain, b.values)
    joined = concat_params(a, b)
    assert joined.chain == concat_chains(a.chain, bchain)
    assert joined.values == a.values + (0,) + b.values
    assert joined.chain.length == a.chain.length + b.chain.length + 1
    assert joined.value_at(a.chain.tail) == 0


@given(chain_and_subchain())
def test_zero_support_matches_zero_pattern(data):
    param, _ = data
    support = zero_support_subchain(param)
    assert support.head == param.chain.head
    assert support.tail == param.chain.tail
    assert set(support.interior) == {
        r for r in param.chain.interior if param.value_at(r) == 0
    }


@given(chain_and_subchain())
def test_extend_is_zero_off_subchain(data):
    param, sub = data
    ext = extend(restrict(param, sub), param.chain)
    for r in param.chain.interior:
        if r not in set(sub.interior):
            assert ext.value_at(r) == 0


# -- errors ------------------------------------------------------------


def test_negative_value_rejected():
    with pytest.raises(InputError):
        GlueParam(Chain(("a", "r", "b")), (-1,))
    with pytest.raises(InputError):
        GlueParam(Chain(("a", "r", "b")), (Fraction(-1, 2),))


def test_value_count_must_match_chain_length():
    with pytest.raises(InputError):
        GlueParam(Chain(("a", "r", "b")), (1, 2))


def test_value_at_requires_interior_point():
    param = GlueParam(Chain(("a", "r", "b")), (1,))
    with pytest.raises(InputError):
        param.value_at("a")
    with pytest.raises(InputError):
        param.value_at("zzz")


def test_restrict_requires_subchain():
    param = GlueParam(Chain(("a", "r", "b")), (1,))
    with pytest.raises(InputError):
        restrict(param, Chain(("a", "r")))
