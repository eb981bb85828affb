"""Shared builders for small and random radial networks."""

from __future__ import annotations

import numpy as np
import pytest

from radial_opf.network import Network, parse_network
from radial_opf.powerflow import InjectionVector, PowerFlowError, solve_nonlinear
from radial_opf.scenario import scale_loads, shipped_path


def make_net(parent, r, x, p, q, v0=1.0, controllable=None, names=None) -> Network:
    """Network from non-root lists (index k describes node k+1)."""
    n = len(parent)
    ctrl = [False] + list(controllable if controllable is not None else [pp < 0 for pp in p])
    return Network(
        names=tuple(names or [str(k) for k in range(n + 1)]),
        parent=np.array([-1] + list(parent)),
        r=np.array([0.0] + list(r)),
        x=np.array([0.0] + list(x)),
        p_nom=np.array([0.0] + list(p)),
        q_nom=np.array([0.0] + list(q)),
        controllable=np.array(ctrl, dtype=bool),
        v0=v0,
    )


def chain(n, r=0.01, x=0.02, p=-0.1, q=-0.05, v0=1.0) -> Network:
    return make_net(list(range(n)), [r] * n, [x] * n, [p] * n, [q] * n, v0)


def random_tree(rng: np.random.Generator, n: int, v0=1.0, load=1.0) -> Network:
    """Random tree with parent[j] < j, random impedances and loads (not yet tuned)."""
    parent = [int(rng.integers(0, j)) for j in range(1, n + 1)]
    r = rng.uniform(0.002, 0.02, n)
    x = rng.uniform(0.002, 0.03, n)
    p = -load * rng.uniform(0.0, 0.05, n)
    q = -load * rng.uniform(0.0, 0.03, n)
    return make_net(parent, r, x, p, q, v0)


def tune_min_voltage(net: Network, target: float) -> Network:
    """Scale the loads so that the nonlinear min voltage magnitude equals ``target``."""

    def min_v(s):
        try:
            return float(np.sqrt(solve_nonlinear(scale_loads(net, s), InjectionVector.nominal(scale_loads(net, s))).v[1:].min()))
        except PowerFlowError:
            return 0.0

    lo, hi = 1e-3, 1.0
    while min_v(hi) > target:
        lo, hi = hi, hi * 2
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if min_v(mid) > target:
            lo = mid
        else:
            hi = mid
    return scale_loads(net, lo)


def shipped(stem: str, scale: float = 1.0) -> Network:
    return scale_loads(parse_network(shipped_path(f"{stem}.json")), scale)


@pytest.fixture(scope="session")
def feeder37():
    return shipped("ieee37_style")


@pytest.fixture(scope="session")
def feeder123():
    return shipped("ieee123_style")
