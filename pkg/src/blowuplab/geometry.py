"""Domains and boundary-layer meshes.

Geometry is deliberately one-dimensional: open intervals (a, b) and radially
symmetric balls of radius R in dimension N >= 2.  On a ball every field is a
function of the radius r, the boundary is the single sphere r = R, and the
diffusion operator carries the metric weight r**(N-1).  This is enough to
expose every boundary and initial rate the package verifies, while keeping
each solve a tridiagonal problem.

Meshes are graded so that the distance of the j-th node from the boundary
scales like (j/M)**gamma: blow-up layers behave like powers of the boundary
distance, and power grading resolves them with a fixed number of cells per
octave of distance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class Domain:
    """An open interval (a, b) or a ball of radius R in dimension N (radial)."""

    kind: str  # "interval" | "ball"
    a: float = 0.0
    b: float = 1.0
    radius: float = 1.0
    dimension: int = 1

    def __post_init__(self):
        if self.kind == "interval":
            if not self.b > self.a:
                raise DomainError(f"interval needs b > a, got ({self.a:g}, {self.b:g})")
        elif self.kind == "ball":
            if not self.radius > 0.0:
                raise DomainError(f"ball radius must be positive, got {self.radius:g}")
            if self.dimension < 2:
                raise DomainError(f"ball dimension must be >= 2, got {self.dimension}")
        else:
            raise DomainError(f"unknown domain kind {self.kind!r}")

    @property
    def diameter(self) -> float:
        if self.kind == "interval":
            return self.b - self.a
        return 2.0 * self.radius

    @property
    def metric_power(self) -> int:
        """Exponent of the radial metric weight r**nu (0 for intervals)."""
        return 0 if self.kind == "interval" else self.dimension - 1

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "interval":
            return (x >= self.a) & (x <= self.b)
        return (x >= 0.0) & (x <= self.radius)


def interval(a: float, b: float) -> Domain:
    return Domain(kind="interval", a=a, b=b)


def ball(radius: float, dimension: int) -> Domain:
    return Domain(kind="ball", radius=radius, dimension=dimension)


def distance_to_boundary(domain: Domain, x):
    """Distance from x (a coordinate, or radius for balls) to the boundary.

    Zero exactly on the boundary; raises for points outside the closed domain.
    """
    arr = np.asarray(x, dtype=float)
    inside = domain.contains(arr)
    if not np.all(inside):
        bad = np.atleast_1d(arr)[~np.atleast_1d(inside)]
        raise DomainError(f"point {bad.flat[0]:g} lies outside the closed domain")
    if domain.kind == "interval":
        d = np.minimum(arr - domain.a, domain.b - arr)
    else:
        d = domain.radius - arr
    if np.isscalar(x) or arr.ndim == 0:
        return float(d)
    return d


def _two_sided_warp(s: np.ndarray, gamma: float) -> np.ndarray:
    # cumulative grading map on [0,1]: distance to the nearest endpoint ~ s**gamma
    out = np.empty_like(s)
    left = s <= 0.5
    out[left] = 0.5 * (2.0 * s[left]) ** gamma
    out[~left] = 1.0 - 0.5 * (2.0 * (1.0 - s[~left])) ** gamma
    return out


@dataclass(frozen=True)
class Mesh:
    """Ordered nodes on a domain with boundary metadata.

    ``boundary_idx`` are the node indices sitting on the true boundary:
    both endpoints for an interval, only r = R for a ball (r = 0 is an
    interior symmetry point).
    """

    domain: Domain
    nodes: np.ndarray
    grading: float
    boundary_idx: tuple[int, ...] = field(default=())

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        if nodes.ndim != 1 or nodes.size < 2:
            raise DomainError("mesh needs at least two nodes")
        if np.any(np.diff(nodes) <= 0.0):
            raise DomainError("mesh nodes must be strictly increasing")
        if self.domain.kind == "interval":
            if not (np.isclose(nodes[0], self.domain.a) and np.isclose(nodes[-1], self.domain.b)):
                raise DomainError("interval mesh must span [a, b]")
            if not self.boundary_idx:
                object.__setattr__(self, "boundary_idx", (0, nodes.size - 1))
        else:
            if not (np.isclose(nodes[0], 0.0) and np.isclose(nodes[-1], self.domain.radius)):
                raise DomainError("ball mesh must span [0, R]")
            if not self.boundary_idx:
                object.__setattr__(self, "boundary_idx", (nodes.size - 1,))

    @property
    def n_cells(self) -> int:
        return self.nodes.size - 1

    @property
    def h_min(self) -> float:
        return float(np.min(np.diff(self.nodes)))

    @property
    def interior_idx(self) -> np.ndarray:
        mask = np.ones(self.nodes.size, dtype=bool)
        mask[list(self.boundary_idx)] = False
        return np.nonzero(mask)[0]

    def boundary_distance(self) -> np.ndarray:
        return np.asarray(distance_to_boundary(self.domain, self.nodes))


def build_graded_mesh(domain: Domain, n_cells: int, grading: float = 1.0) -> Mesh:
    """Mesh whose node density increases toward the boundary like d**(1/grading).

    grading = 1 gives a uniform mesh.  Intervals are graded symmetrically
    toward both endpoints; balls toward r = R only.
    """
    if n_cells < 4:
        raise DomainError(f"need at least 4 cells, got {n_cells}")
    if grading < 1.0:
        raise DomainError(f"grading exponent must be >= 1, got {grading:g}")
    s = np.linspace(0.0, 1.0, n_cells + 1)
    if domain.kind == "interval":
        nodes = domain.a + (domain.b - domain.a) * _two_sided_warp(s, grading)
        nodes[0], nodes[-1] = domain.a, domain.b
    else:
        nodes = domain.radius * (1.0 - (1.0 - s) ** grading)
        nodes[0], nodes[-1] = 0.0, domain.radius
    return Mesh(domain=domain, nodes=nodes, grading=grading)
