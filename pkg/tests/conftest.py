"""Shared fixtures.  The expensive problem-2 sector chain is built once per
session and truncated by the tests that need smaller bases."""

from __future__ import annotations

import numpy as np
import pytest

from sectorprop import RunConfig, build_sector_chain, problem2
from sectorprop.mesh import build_mesh


@pytest.fixture(scope="session")
def harmonic_basis_small():
    """8 harmonic-oscillator states on a mid-sized mesh (reused)."""
    from sectorprop.stationary import compute_basis
    mesh = build_mesh(-10.0, 10.0, 100)
    return compute_basis(lambda x: 0.5 * x * x, mesh, 8), mesh


@pytest.fixture(scope="session")
def problem2_chain():
    """Problem-2 sector chain at the table settings (N=30, K=20, dx=0.2).

    N=30 dominates every smaller basis: truncating its overlap and coupling
    blocks reproduces the N<30 sectors exactly, so the temporal-order,
    table-trend and norm tests all share this one build.
    """
    config = RunConfig(problem="problem2", nx=100, t_final=12.0, n_sectors=20,
                       n_basis=30, dt=0.02, order=4)
    chain = build_sector_chain(config)
    return config, chain


def truncate_chain(chain, n):
    """Restrict a sector chain to its first n basis states."""
    import dataclasses
    out = []
    for sec in chain:
        basis = dataclasses.replace(
            sec.basis, pairs=sec.basis.pairs[:n])
        out.append(dataclasses.replace(
            sec, basis=basis,
            overlap=None if sec.overlap is None else sec.overlap[:n, :n],
            coupling_blocks=[w[:n, :n] for w in sec.coupling_blocks],
            _y=sec._y[:n], _dy=sec._dy[:n],
            _generic_weights=None))
    return out
