"""Spatial mesh: equidistant steps carrying 4 Gauss-Lobatto nodes each.

Adjacent steps share their boundary node, so a mesh of n steps has 3n+1
nodes.  Every other module (eigensolver, quadrature, output) reads and writes
function data on these nodes only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

# 4-point Gauss-Lobatto abscissae on [-1, 1].
LOBATTO_NODES = np.array([-1.0, -1.0 / np.sqrt(5.0), 1.0 / np.sqrt(5.0), 1.0])


@dataclass(frozen=True)
class SpatialMesh:
    x_min: float
    x_max: float
    n_steps: int
    dx: float
    nodes: np.ndarray
    step_nodes: np.ndarray = field(repr=False)   # (n_steps, 4) node indices
    step_of_node: np.ndarray = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.size

    def step_left_edge(self, i: int) -> float:
        return self.x_min + i * self.dx


def build_mesh(x_min: float, x_max: float, n_steps: int) -> SpatialMesh:
    """Build the equidistant 4-Lobatto-nodes-per-step mesh over [x_min, x_max]."""
    if not (np.isfinite(x_min) and np.isfinite(x_max)) or not x_min < x_max:
        raise ConfigError(f"degenerate spatial range [{x_min}, {x_max}]")
    if n_steps < 1:
        raise ConfigError(f"n_steps must be >= 1, got {n_steps}")

    dx = (x_max - x_min) / n_steps
    n_nodes = 3 * n_steps + 1
    nodes = np.empty(n_nodes)
    base = x_min + np.arange(n_steps) * dx
    # Each node placed from the exact reference abscissa, never accumulated.
    for local, ref in enumerate(LOBATTO_NODES[:3]):
        nodes[local:3 * n_steps:3] = base + (ref + 1.0) * (dx / 2.0)
    nodes[-1] = x_max
    nodes[0] = x_min

    step_nodes = 3 * np.arange(n_steps)[:, None] + np.arange(4)[None, :]
    step_of_node = np.minimum(np.arange(n_nodes) // 3, n_steps - 1)
    return SpatialMesh(float(x_min), float(x_max), int(n_steps), float(dx),
                       nodes, step_nodes, step_of_node)
