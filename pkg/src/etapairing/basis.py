"""Fixed-particle-number determinant basis for a spinful fermion chain.

Each basis state is a pair of bitmasks ``(up_mask, down_mask)``; bit ``i``
of a mask is the occupancy of site ``i`` for that spin species.  Fermionic
signs follow the Jordan-Wigner convention in which all spin-up modes
(sites ``0..L-1``) precede all spin-down modes, so a spin-down operator at
site ``i`` crosses every spin-up fermion plus the spin-down fermions on
sites below ``i``.

The composite state index is up-major::

    index(up, down) = up_ordinal * n_down_dets + down_ordinal

This layout is fixed (tag ``LAYOUT_TAG``) so that on-disk caches keyed to
it remain portable.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb
from typing import Iterable, Sequence

LAYOUT_TAG = "up-major-v1"

MAX_SITES = 16

# Elementary operator: (dagger, spin, site) with spin 0 = up, 1 = down.
OpSpec = tuple[bool, int, int]


class SectorError(ValueError):
    """Raised for particle numbers that do not define a valid sector."""


def _parity(x: int) -> int:
    return x.bit_count() & 1


@dataclass(frozen=True, eq=False)
class SectorBasis:
    """Ordered determinant basis of the (L, n_up, n_down) sector.

    Immutable after construction; identity semantics (two independently
    built bases for the same sector are equal in content but distinct
    objects, which keeps them usable as weak cache keys).
    """

    L: int
    n_up: int
    n_down: int
    up_dets: tuple[int, ...]
    down_dets: tuple[int, ...]
    up_index: dict[int, int]
    down_index: dict[int, int]

    @property
    def n_up_dets(self) -> int:
        return len(self.up_dets)

    @property
    def n_down_dets(self) -> int:
        return len(self.down_dets)

    @property
    def dim(self) -> int:
        return len(self.up_dets) * len(self.down_dets)

    def state_index(self, up_mask: int, down_mask: int) -> int:
        """Composite index of a determinant (up-major layout)."""
        return self.up_index[up_mask] * len(self.down_dets) + self.down_index[down_mask]

    def state_masks(self, k: int) -> tuple[int, int]:
        """Inverse of :meth:`state_index`."""
        nd = len(self.down_dets)
        return self.up_dets[k // nd], self.down_dets[k % nd]

    def doublon_counts(self) -> list[int]:
        """Number of doubly occupied sites for every basis state."""
        return [
            (mu & md).bit_count() for mu in self.up_dets for md in self.down_dets
        ]


def _dets(L: int, n: int) -> tuple[int, ...]:
    masks = []
    for occ in combinations(range(L), n):
        m = 0
        for i in occ:
            m |= 1 << i
        masks.append(m)
    return tuple(sorted(masks))


def build_sector_basis(L: int, n_up: int, n_down: int) -> SectorBasis:
    """Construct the determinant basis of a fixed-(L, n_up, n_down) sector.

    Deterministic ordering: masks sorted ascending per spin species.
    dim = C(L, n_up) * C(L, n_down).
    """
    if not 0 < L <= MAX_SITES:
        raise SectorError(f"site count must be in 1..{MAX_SITES}, got {L}")
    if not (0 <= n_up <= L and 0 <= n_down <= L):
        raise SectorError(
            f"empty sector: (n_up={n_up}, n_down={n_down}) invalid for L={L}"
        )
    up = _dets(L, n_up)
    down = _dets(L, n_down)
    return SectorBasis(
        L=L,
        n_up=n_up,
        n_down=n_down,
        up_dets=up,
        down_dets=down,
        up_index={m: k for k, m in enumerate(up)},
        down_index={m: k for k, m in enumerate(down)},
    )


def create(mask: int, site: int) -> tuple[int, int] | None:
    """Apply c^dag at ``site`` within one spin species.

    Returns (new_mask, sign) where sign is the parity of occupied modes
    below ``site`` in this species, or None if the site is occupied.
    """
    if (mask >> site) & 1:
        return None
    sign = -1 if _parity(mask & ((1 << site) - 1)) else 1
    return mask | (1 << site), sign


def annihilate(mask: int, site: int) -> tuple[int, int] | None:
    """Apply c at ``site`` within one spin species (see :func:`create`)."""
    if not (mask >> site) & 1:
        return None
    sign = -1 if _parity(mask & ((1 << site) - 1)) else 1
    return mask ^ (1 << site), sign


def apply_ops(
    up_mask: int, down_mask: int, ops: Sequence[OpSpec]
) -> tuple[int, int, int] | None:
    """Apply a product of elementary operators to a determinant.

    ``ops`` is the operator product read left to right, so the last entry
    acts on the ket first.  Spin-down operators pick up the (-1)^{N_up}
    string from crossing the full spin-up factor.

    Returns (up_mask, down_mask, sign) or None when annihilated.
    """
    sign = 1
    for dagger, spin, site in reversed(ops):
        if spin == 0:
            res = create(up_mask, site) if dagger else annihilate(up_mask, site)
            if res is None:
                return None
            up_mask, s = res
        else:
            res = create(down_mask, site) if dagger else annihilate(down_mask, site)
            if res is None:
                return None
            down_mask, s = res
            if _parity(up_mask):
                s = -s
        sign *= s
    return up_mask, down_mask, sign


_BILINEAR_KINDS = ("hop_up", "hop_down", "pair_create", "pair_annihilate", "density")


def apply_bilinear(
    basis: SectorBasis,
    kind: str,
    sites: tuple[int, int],
    masks: tuple[int, int],
) -> tuple[tuple[int, int], int] | None:
    """Apply one elementary bilinear to a determinant with its fermion sign.

    Kinds (sites = (i, j)):
      hop_up / hop_down   c^dag_{i,s} c_{j,s}
      pair_create         c^dag_{i,up} c^dag_{j,down}
      pair_annihilate     c_{j,down} c_{i,up}   (adjoint of pair_create)
      density             n_{i,up} n_{j,down}   (diagonal)

    Returns ((up_mask, down_mask), sign) or None when the action
    annihilates the state.
    """
    i, j = sites
    if not (0 <= i < basis.L and 0 <= j < basis.L):
        raise ValueError(f"sites {sites} outside chain of length {basis.L}")
    if kind == "hop_up":
        ops = [(True, 0, i), (False, 0, j)]
    elif kind == "hop_down":
        ops = [(True, 1, i), (False, 1, j)]
    elif kind == "pair_create":
        ops = [(True, 0, i), (True, 1, j)]
    elif kind == "pair_annihilate":
        ops = [(False, 1, j), (False, 0, i)]
    elif kind == "density":
        ops = [(True, 0, i), (False, 0, i), (True, 1, j), (False, 1, j)]
    else:
        raise ValueError(f"unknown bilinear kind {kind!r}; expected one of {_BILINEAR_KINDS}")
    res = apply_ops(masks[0], masks[1], ops)
    if res is None:
        return None
    up, down, sign = res
    return (up, down), sign


def chain_bonds(L: int) -> list[tuple[int, int]]:
    """Directed nearest-neighbour bonds (i, i+1) of the periodic chain.

    The two-site ring degenerates to a single bond so that the pair of
    sites is not coupled twice.
    """
    if L == 1:
        return []
    if L == 2:
        return [(0, 1)]
    return [(i, (i + 1) % L) for i in range(L)]
