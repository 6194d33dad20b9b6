"""Uniform-grid discretization of balls and boxes.

Interior nodes are lattice points ``center + h * index`` lying inside the
domain (at distance more than ``gap * h`` from the boundary).  Every
interior node gets a three-point second difference along each stencil
direction ``e_i`` and ``e_i +- e_j``.  When the lattice neighbour along a
direction is not an interior node, the stencil arm is cut at the exact
point where the ray leaves the domain; that point becomes a boundary node
carrying Dirichlet data.  The non-uniform three-point formula is exact on
quadratics, so the discrete Hessian is exact for quadratic ``u`` up to and
including the boundary layer.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import symfun
from .errors import AssemblyError, DomainError, ResolutionError

__all__ = [
    "Ball",
    "Box",
    "GridDomain",
    "GridField",
    "HessianField",
    "AdmissibilityReport",
    "build_domain",
    "fd_hessian",
    "discrete_sigma",
    "admissibility_mask",
    "sup_second",
    "weighted_interior_sup",
    "spectral_norms",
    "write_dump",
    "read_dump",
    "DUMP_HEADER_DOC",
]


@dataclass(frozen=True)
class Ball:
    radius: float
    n: int = 2
    center: tuple | None = None

    @property
    def origin(self) -> np.ndarray:
        return np.zeros(self.n) if self.center is None else np.asarray(self.center, dtype=float)

    @property
    def circumradius(self) -> float:
        return float(self.radius)

    @property
    def width(self) -> float:
        return 2.0 * self.radius

    def distance(self, x: np.ndarray) -> np.ndarray:
        return self.radius - np.linalg.norm(x - self.origin, axis=-1)

    def exit_param(self, x: np.ndarray, step: np.ndarray) -> np.ndarray:
        """Positive ``t`` with ``|x + t*step - c| = R`` for points strictly inside."""
        y = x - self.origin
        a = np.sum(step * step, axis=-1)
        b = 2.0 * np.sum(y * step, axis=-1)
        c = np.sum(y * y, axis=-1) - self.radius**2
        disc = np.sqrt(np.maximum(b * b - 4.0 * a * c, 0.0))
        # c < 0 inside; this root form avoids cancellation
        return np.where(b >= 0.0, -2.0 * c / (b + disc), (disc - b) / (2.0 * a))

    def describe(self) -> str:
        return f"ball(radius={self.radius:g}, n={self.n})"


@dataclass(frozen=True)
class Box:
    halfwidths: tuple
    center: tuple | None = None

    @property
    def n(self) -> int:
        return len(self.halfwidths)

    @property
    def origin(self) -> np.ndarray:
        return np.zeros(self.n) if self.center is None else np.asarray(self.center, dtype=float)

    @property
    def circumradius(self) -> float:
        return float(np.linalg.norm(self.halfwidths))

    @property
    def width(self) -> float:
        return 2.0 * min(self.halfwidths)

    def distance(self, x: np.ndarray) -> np.ndarray:
        hw = np.asarray(self.halfwidths, dtype=float)
        return np.min(hw - np.abs(x - self.origin), axis=-1)

    def exit_param(self, x: np.ndarray, step: np.ndarray) -> np.ndarray:
        hw = np.asarray(self.halfwidths, dtype=float)
        y = x - self.origin
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(step > 0, (hw - y) / step, np.where(step < 0, (-hw - y) / step, np.inf))
        return np.min(t, axis=-1)

    def describe(self) -> str:
        return f"box(halfwidths={tuple(float(w) for w in self.halfwidths)})"


def stencil_directions(n: int) -> list[np.ndarray]:
    """Axis directions first, then ``e_i + e_j`` and ``e_i - e_j`` for i < j."""
    eye = np.eye(n, dtype=int)
    dirs = [eye[i] for i in range(n)]
    for i, j in itertools.combinations(range(n), 2):
        dirs.append(eye[i] + eye[j])
        dirs.append(eye[i] - eye[j])
    return dirs


@dataclass(eq=False)
class GridDomain:
    shape: Ball | Box
    h: float
    interior_index: np.ndarray  # (N_int, n) integer lattice coordinates
    interior_points: np.ndarray
    boundary_points: np.ndarray
    distance: np.ndarray  # per node, interior first; 0 on boundary nodes
    stencils: list  # one sparse (N_int x N_tot) second-difference matrix per direction
    directions: list
    axis_neighbors: np.ndarray  # (N_int, n, 2): interior neighbour along -e_i / +e_i or -1
    boundary_links: np.ndarray  # (m, 2) interior node, boundary node (global index)
    link_lengths: np.ndarray

    @property
    def n(self) -> int:
        return self.shape.n

    @property
    def n_interior(self) -> int:
        return len(self.interior_points)

    @property
    def n_boundary(self) -> int:
        return len(self.boundary_points)

    @property
    def n_nodes(self) -> int:
        return self.n_interior + self.n_boundary

    @cached_property
    def points(self) -> np.ndarray:
        return np.vstack([self.interior_points, self.boundary_points])

    @cached_property
    def hessian_ops(self) -> dict:
        """Sparse maps from nodal values to each Hessian entry (i <= j)."""
        n = self.n
        ops = {}
        for i in range(n):
            ops[i, i] = self.stencils[i]
        pos = n
        for i, j in itertools.combinations(range(n), 2):
            ops[i, j] = (0.25 * (self.stencils[pos] - self.stencils[pos + 1])).tocsr()
            pos += 2
        return ops

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        return sum(self.stencils[: self.n]).tocsr()

    def split(self, op: sp.csr_matrix):
        """(interior block, boundary block) column split of an operator."""
        return op[:, : self.n_interior].tocsr(), op[:, self.n_interior:].tocsr()

    def field(self, values) -> "GridField":
        return GridField(self, np.asarray(values, dtype=float))

    def sample(self, fn) -> "GridField":
        """Evaluate a callable on every node."""
        return GridField(self, np.asarray(fn(self.points), dtype=float))

    def describe(self) -> str:
        return f"{self.shape.describe()}, h={self.h:g}, {self.n_interior} interior, {self.n_boundary} boundary"


def build_domain(shape: Ball | Box, h: float, gap: float = 0.1) -> GridDomain:
    """Classify lattice nodes and assemble the second-difference stencils.

    ``gap`` is the minimum distance to the boundary, in units of ``h``, for a
    lattice point to count as interior.
    """
    if not h > 0.0:
        raise ResolutionError(f"mesh width must be positive, got {h}")
    if isinstance(shape, Ball) and not shape.radius > 0.0:
        raise DomainError("ball radius must be positive")
    if isinstance(shape, Box) and not min(shape.halfwidths) > 0.0:
        raise DomainError("box halfwidths must be positive")
    if h >= shape.width:
        raise ResolutionError(f"mesh width {h} is not smaller than domain width {shape.width}")
    n = shape.n
    c = shape.origin
    reach = int(math.ceil(shape.circumradius / h)) + 1
    axes = [np.arange(-reach, reach + 1)] * n
    lattice = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=-1)
    pts = c + h * lattice
    d = shape.distance(pts)
    inside = d > gap * h
    if not np.any(inside):
        raise ResolutionError(f"no interior nodes at h={h} for {shape.describe()}")
    idx = lattice[inside]
    ipts = pts[inside]
    n_int = len(idx)

    lookup = -np.ones((2 * reach + 1,) * n, dtype=np.int64)
    lookup[tuple((idx + reach).T)] = np.arange(n_int)

    def interior_id(q):
        ok = np.all((q >= -reach) & (q <= reach), axis=-1)
        out = -np.ones(len(q), dtype=np.int64)
        out[ok] = lookup[tuple((q[ok] + reach).T)]
        return out

    directions = stencil_directions(n)
    # arms[(dir, sign)] = (neighbour id or -1, exit point, step fraction)
    arms = {}
    bpts = []
    for di, v in enumerate(directions):
        for sgn in (1, -1):
            step = sgn * h * v.astype(float)
            nb = interior_id(idx + sgn * v)
            t = np.ones(n_int)
            cut = nb < 0
            if np.any(cut):
                tc = shape.exit_param(ipts[cut], np.broadcast_to(step, (np.count_nonzero(cut), n)))
                if np.any(~(tc > 0.0)) or np.any(~np.isfinite(tc)):
                    bad = np.flatnonzero(cut)[np.argmax(~(tc > 0.0) | ~np.isfinite(tc))]
                    raise AssemblyError(f"stencil arm of node {idx[bad].tolist()} has no boundary exit")
                t[cut] = tc
                bpts.append(ipts[cut] + tc[:, None] * step)
            arms[di, sgn] = (nb, t)

    if bpts:
        allb = np.vstack(bpts)
        keys = np.round((allb - c) / h * 1e9).astype(np.int64)
        _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
        # order boundary nodes by first appearance for a stable numbering
        order = np.argsort(first, kind="stable")
        rank = np.empty_like(order)
        rank[order] = np.arange(len(order))
        bnodes = allb[first[order]]
        bid_all = rank[inverse.ravel()]
    else:
        bnodes = np.zeros((0, n))
        bid_all = np.zeros(0, dtype=np.int64)
    n_tot = n_int + len(bnodes)

    stencils = []
    links = []
    link_len = []
    cursor = 0
    rows = np.arange(n_int)
    for di, v in enumerate(directions):
        cols_list, vals_list, rows_list = [], [], []
        ids = {}
        frac = {}
        for sgn in (1, -1):
            nb, t = arms[di, sgn]
            gid = nb.copy()
            cut = nb < 0
            m = np.count_nonzero(cut)
            gid[cut] = n_int + bid_all[cursor:cursor + m]
            if m:
                links.append(np.stack([rows[cut], gid[cut]], axis=-1))
                link_len.append(t[cut] * h * np.linalg.norm(v))
            cursor += m
            ids[sgn] = gid
            frac[sgn] = t
        a, b = frac[1], frac[-1]
        wa = 2.0 / (a * (a + b) * h * h)
        wb = 2.0 / (b * (a + b) * h * h)
        rows_list += [rows, rows, rows]
        cols_list += [ids[1], ids[-1], rows]
        vals_list += [wa, wb, -(wa + wb)]
        S = sp.csr_matrix((np.concatenate(vals_list), (np.concatenate(rows_list), np.concatenate(cols_list))),
                          shape=(n_int, n_tot))
        stencils.append(S)

    axis_nb = np.stack([np.stack([arms[i, -1][0], arms[i, 1][0]], axis=-1) for i in range(n)], axis=1)
    dist = np.concatenate([d[inside], np.zeros(len(bnodes))])
    return GridDomain(
        shape=shape, h=float(h), interior_index=idx, interior_points=ipts,
        boundary_points=bnodes, distance=dist, stencils=stencils, directions=directions,
        axis_neighbors=axis_nb,
        boundary_links=np.vstack(links) if links else np.zeros((0, 2), dtype=np.int64),
        link_lengths=np.concatenate(link_len) if link_len else np.zeros(0),
    )


@dataclass(eq=False)
class GridField:
    """Nodal values: interior nodes first, then boundary nodes.

    An interior-only field has exactly ``n_interior`` values.
    """

    domain: GridDomain
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if len(self.values) not in (self.domain.n_nodes, self.domain.n_interior):
            raise DomainError(f"field has {len(self.values)} values; domain has "
                              f"{self.domain.n_interior} interior / {self.domain.n_nodes} total nodes")

    @property
    def interior_only(self) -> bool:
        return len(self.values) == self.domain.n_interior and self.domain.n_boundary > 0

    @property
    def interior(self) -> np.ndarray:
        return self.values[: self.domain.n_interior]

    @property
    def boundary(self) -> np.ndarray:
        if self.interior_only:
            raise DomainError("interior-only field has no boundary values")
        return self.values[self.domain.n_interior:]

    def with_interior(self, interior) -> "GridField":
        vals = self.values.copy()
        vals[: self.domain.n_interior] = interior
        return GridField(self.domain, vals)

    def __add__(self, other):
        if isinstance(other, GridField):
            other = other.values
        return GridField(self.domain, self.values + other)

    def __sub__(self, other):
        if isinstance(other, GridField):
            other = other.values
        return GridField(self.domain, self.values - other)

    def __mul__(self, s):
        return GridField(self.domain, self.values * s)

    __rmul__ = __mul__

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(eq=False)
class HessianField:
    domain: GridDomain
    matrices: np.ndarray  # (N_int, n, n), exactly symmetric

    def __getitem__(self, node):
        return self.matrices[node]


def _hessian_array(domain: GridDomain, values: np.ndarray) -> np.ndarray:
    n = domain.n
    H = np.empty((domain.n_interior, n, n))
    for (i, j), op in domain.hessian_ops.items():
        col = op @ values
        H[:, i, j] = col
        H[:, j, i] = col
    return H


def fd_hessian(u: GridField) -> HessianField:
    """Central second differences at every interior node."""
    if u.interior_only:
        raise AssemblyError("fd_hessian needs boundary values; got an interior-only field")
    if not np.all(np.isfinite(u.values)):
        bad = int(np.argmax(~np.isfinite(u.values)))
        raise AssemblyError(f"non-finite value at stencil node {bad} ({u.domain.points[bad].tolist()})")
    return HessianField(u.domain, _hessian_array(u.domain, u.values))


def discrete_sigma(u: GridField, k: int) -> GridField:
    H = fd_hessian(u).matrices
    return GridField(u.domain, np.atleast_1d(symfun.sigma_minor(H, k)))


def spectral_norms(H: np.ndarray) -> np.ndarray:
    return np.max(np.abs(np.linalg.eigvalsh(H)), axis=-1)


@dataclass(frozen=True)
class AdmissibilityReport:
    mask: np.ndarray
    admissible: bool
    worst_node: int
    worst_verdict: symfun.ConeVerdict

    def __bool__(self):
        return self.admissible


def admissibility_mask(u: GridField, k: int, margin: float = 0.0) -> AdmissibilityReport:
    """Node-wise strict cone test of ``lambda(D^2 u_h) - margin``."""
    if margin < 0.0:
        raise DomainError("margin must be nonnegative")
    lam = np.linalg.eigvalsh(fd_hessian(u).matrices) - margin
    return _mask_from_spectra(lam, k)


def _mask_from_spectra(lam: np.ndarray, k: int) -> AdmissibilityReport:
    member, first = symfun.batch_cone_member(lam, k)
    sig = symfun._esf_all(lam, k)[..., 1:]
    if np.all(member):
        worst = int(np.argmin(sig[:, k - 1]))
    else:
        bad = np.flatnonzero(~member)
        fj = first[bad]
        level = sig[bad, fj - 1]
        worst = int(bad[np.lexsort((level, fj))[0]])
    return AdmissibilityReport(member, bool(np.all(member)), worst, symfun.in_gamma(lam[worst], k))


def sup_second(u: GridField) -> float:
    """Max over interior nodes of the spectral norm of the discrete Hessian."""
    return float(np.max(spectral_norms(fd_hessian(u).matrices)))


def weighted_interior_sup(u: GridField) -> float:
    """Max over interior nodes of ``dist(x, boundary) * |D^2 u_h(x)|``."""
    norms = spectral_norms(fd_hessian(u).matrices)
    return float(np.max(u.domain.distance[: u.domain.n_interior] * norms))


# ---------------------------------------------------------------------------
# node dump

DUMP_HEADER_DOC = (
    "node: global node number (interior nodes first); kind: interior|boundary; "
    "i0..i{n-1}: lattice index (boundary nodes: nearest lattice point); "
    "x0..x{n-1}: position; value: nodal value"
)


def dump_header(n: int) -> list[str]:
    return (["node", "kind"] + [f"i{a}" for a in range(n)]
            + [f"x{a}" for a in range(n)] + ["value"])


def write_dump(u: GridField, path_or_buffer) -> None:
    """Write one CSV record per node (see ``DUMP_HEADER_DOC``)."""
    dom = u.domain
    n = dom.n
    own = isinstance(path_or_buffer, (str, bytes)) or hasattr(path_or_buffer, "__fspath__")
    fh = open(path_or_buffer, "w", newline="") if own else path_or_buffer
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(dump_header(n))
        c = dom.shape.origin
        bidx = np.rint((dom.boundary_points - c) / dom.h).astype(int)
        for node in range(len(u.values)):
            interior = node < dom.n_interior
            ix = dom.interior_index[node] if interior else bidx[node - dom.n_interior]
            x = dom.points[node]
            w.writerow([node, "interior" if interior else "boundary"]
                       + [int(a) for a in ix] + [repr(float(a)) for a in x]
                       + [repr(float(u.values[node]))])
    finally:
        if own:
            fh.close()


def read_dump(path_or_text, domain: GridDomain) -> GridField:
    """Load a node dump onto ``domain``; node positions must match."""
    if isinstance(path_or_text, str) and "\n" in path_or_text:
        fh = io.StringIO(path_or_text)
    else:
        fh = open(path_or_text, newline="")
    with fh:
        rows = list(csv.reader(fh))
    n = domain.n
    if not rows or rows[0] != dump_header(n):
        raise DomainError(f"dump header does not match a {n}-d grid")
    body = rows[1:]
    if len(body) != domain.n_nodes:
        raise DomainError(f"dump has {len(body)} nodes, domain has {domain.n_nodes}")
    vals = np.empty(domain.n_nodes)
    pts = np.empty((domain.n_nodes, n))
    for r in body:
        node = int(r[0])
        pts[node] = [float(a) for a in r[2 + n: 2 + 2 * n]]
        vals[node] = float(r[-1])
    if np.max(np.abs(pts - domain.points)) > 1e-9 * max(1.0, domain.shape.circumradius):
        raise DomainError("dump node positions do not match the configured domain")
    return GridField(domain, vals)
