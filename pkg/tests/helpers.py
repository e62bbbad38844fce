"""Shared builders for randomized tests.

Every generator takes an explicit ``random.Random`` so failures reproduce
from the seed in the test that caught them.
"""

from __future__ import annotations

import random
from fractions import Fraction

from sinktree.tree import build_tree


def rand_param(rng: random.Random, rational: bool = True):
    """A positive edge parameter, rational by default."""
    if rational:
        return Fraction(rng.randint(1, 6), rng.randint(1, 3))
    return rng.randint(1, 6) / rng.randint(1, 3)


def rand_weight(rng: random.Random, rational: bool = True):
    """A nonnegative vertex weight; zero about a quarter of the time."""
    if rng.random() < 0.25:
        return 0
    if rational:
        return Fraction(rng.randint(1, 8), rng.randint(1, 2))
    return rng.randint(1, 8) / rng.randint(1, 2)


def random_tree(rng: random.Random, n: int, rational: bool = True):
    """Random recursive tree: each vertex attaches to a uniform earlier one."""
    edges = []
    for v in range(1, n):
        u = rng.randrange(v)
        edges.append((u, v, rand_param(rng, rational), rand_param(rng, rational)))
    return build_tree(edges, [rand_weight(rng, rational) for _ in range(n)])


def random_block(rng: random.Random, tree, grow: float = 0.6):
    """A random connected block and a member vertex to use as center."""
    s = rng.randrange(tree.n)
    block = {s}
    frontier = [s]
    while frontier:
        x = frontier.pop()
        for y in tree.adj(x):
            if y not in block and rng.random() < grow:
                block.add(y)
                frontier.append(y)
    return block, s


def path_tree(n: int, tau=1, cap=1, weights=None):
    """Path v0-v1-...-v(n-1) with uniform parameters."""
    if weights is None:
        weights = [1] * n
    return build_tree([(i, i + 1, tau, cap) for i in range(n - 1)], weights)


def star_tree(leaves: int, tau=1, cap=1, center_weight=1, leaf_weight=1):
    """Star with center 0 and the given number of leaves."""
    weights = [center_weight] + [leaf_weight] * leaves
    return build_tree([(0, i, tau, cap) for i in range(1, leaves + 1)], weights)
