"""The algebra of gluing/collaring parameter tuples.

A parameter on a chain ``I`` assigns one nonnegative coordinate to each
interior point of ``I``.  The operations below (restriction to a
subchain, masking, extension, concatenation with a zero junction, and
addition of parameters on subchains) are the bookkeeping the collar
construction runs on.  All operations are pure; with int/Fraction
coordinates every identity holds exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InputError
from .poset import Chain, concat_chains, is_subchain


@dataclass(frozen=True)
class GlueParam:
    """A tuple of collar coordinates, one per interior point of a chain."""

    chain: Chain
    values: tuple

    def __post_init__(self):
        if len(self.values) != self.chain.length:
            raise InputError(
                f"{len(self.values)} values for a chain of length "
                f"{self.chain.length}"
            )
        if any(v < 0 for v in self.values):
            raise InputError(f"negative collar coordinate in {self.values}")

    @classmethod
    def zero(cls, chain: Chain) -> "GlueParam":
        return cls(chain, (0,) * chain.length)

    def value_at(self, point_id: str):
        """The coordinate attached to one interior point of the chain."""
        try:
            i = self.chain.interior.index(point_id)
        except ValueError:
            raise InputError(f"{point_id!r} is not interior to {self.chain}") from None
        return self.values[i]

    def __iter__(self):
        return iter(self.values)


def _require_subchain(sub: Chain, chain: Chain) -> None:
    if not is_subchain(sub, chain):
        raise InputError(f"{sub} is not a subchain of {chain}")


def restrict(param: GlueParam, sub: Chain) -> GlueParam:
    """Keep only the coordinates at interior points of ``sub``."""
    _require_subchain(sub, param.chain)
    return GlueParam(sub, tuple(param.value_at(r) for r in sub.interior))


def mask(param: GlueParam, sub: Chain) -> GlueParam:
    """Zero the coordinates at interior points of ``sub``, keep the rest."""
    _require_subchain(sub, param.chain)
    kept = set(sub.interior)
    return GlueParam(
        param.chain,
        tuple(0 if r in kept else v for r, v in zip(param.chain.interior, param.values)),
    )


def extend(param: GlueParam, chain: Chain) -> GlueParam:
    """View a parameter on a subchain as one on ``chain``, zero elsewhere."""
    _require_subchain(param.chain, chain)
    have = dict(zip(param.chain.interior, param.values))
    return GlueParam(chain, tuple(have.get(r, 0) for r in chain.interior))


def concat_params(first: GlueParam, second: GlueParam) -> GlueParam:
    """Concatenate along composable chains, inserting 0 at the junction."""
    joined = concat_chains(first.chain, second.chain)
    return GlueParam(joined, first.values + (0,) + second.values)


def add(param: GlueParam, *parts: GlueParam) -> GlueParam:
    """Componentwise sum after extending every part to ``param.chain``."""
    total = list(param.values)
    for part in parts:
        ext = extend(part, param.chain)
        total = [a + b for a, b in zip(total, ext.values)]
    return GlueParam(param.chain, tuple(total))


def zero_support_subchain(param: GlueParam) -> Chain:
    """The subchain of head, tail and interior points whose coordinate is 0.

    This is the chain whose stratum the glued point must land in, by the
    stratum condition.
    """
    kept = [param.chain.head]
    kept += [r for r, v in zip(param.chain.interior, param.values) if v == 0]
    kept.append(param.chain.tail)
    return Chain(tuple(kept))
