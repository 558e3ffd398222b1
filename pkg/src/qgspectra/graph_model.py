"""Metric graphs with piecewise-constant edge potentials.

A graph is a set of vertices joined by edges that carry a positive length
and a constant real potential.  Each vertex holds a pair of complex
matrices (A, B) encoding the matching conditions

    A phi(0) + B phi'(0) = 0

where phi collects the wavefunction values on the adjacent edges and the
derivative is taken *outward* from the vertex (the local coordinate is 0 at
the vertex and increases away from it).  Self-adjointness requires A B† to
be Hermitian and (A, B) to have full rank.

Directed edges are indexed 0..2*N_E-1: edge ``i`` owns indices ``2i``
(from -> to) and ``2i + 1`` (to -> from), so the direction-swap permutation
is ``j ^ 1``.

Loops are split eagerly at build time: a loop at v of length L becomes two
half-length edges v--w and w--v through an auxiliary continuity vertex w,
so the star of v still counts the loop twice.

Multi-mode graphs (a vector wavefunction with per-mode threshold
potentials on each edge) are expanded into ordinary graphs with parallel
edges; see :func:`expand_multimode`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DisconnectedGraph,
    MalformedMatching,
    NonPositiveLength,
    UnsupportedDegree,
)

# Scale-aware tolerances for the self-adjointness checks.
TOL_MATCH = 1e-10
TOL_RANK = 1e-10

STANDARD_KINDS = ("dirichlet", "neumann", "robin", "kirchhoff", "continuity_step")


@dataclass(frozen=True)
class ValidationReport:
    hermiticity_residual: float
    rank: int
    degree: int

    @property
    def accepted(self) -> bool:
        scale = max(1.0, self.hermiticity_residual_scale)
        return (
            self.hermiticity_residual < TOL_MATCH * scale
            and self.rank == self.degree
        )

    # kept on the report so callers can re-check with a different scale
    hermiticity_residual_scale: float = 1.0


def validate_matching(A, B, degree):
    """Report on the self-adjointness conditions for a matching pair.

    Returns a :class:`ValidationReport` with the max-norm residual of
    ``A B† - B A†`` and the numerical rank of the d x 2d matrix (A, B).
    Callers reject on ``report.accepted``.
    """
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    if A.shape != (degree, degree) or B.shape != (degree, degree):
        raise MalformedMatching(
            f"expected {degree}x{degree} matrices, got {A.shape} and {B.shape}"
        )
    herm = A @ B.conj().T - B @ A.conj().T
    residual = float(np.max(np.abs(herm))) if degree else 0.0
    AB = np.hstack([A, B])
    svals = np.linalg.svd(AB, compute_uv=False)
    smax = svals[0] if len(svals) else 0.0
    rank = int(np.sum(svals > TOL_RANK * max(smax, 1e-300)))
    scale = max(1.0, float(np.max(np.abs(A))), float(np.max(np.abs(B))))
    return ValidationReport(
        hermiticity_residual=residual,
        rank=rank,
        degree=degree,
        hermiticity_residual_scale=scale,
    )


@dataclass(frozen=True)
class MatchingConditions:
    """The (A, B) pair at one vertex.

    ``ordering`` lists the adjacent *outgoing* directed-edge indices fixing
    the meaning of rows and columns; it is None for free-standing pairs not
    yet attached to a graph.
    """

    A: np.ndarray
    B: np.ndarray
    ordering: tuple | None = None
    kind: str = "custom"

    @property
    def degree(self) -> int:
        return self.A.shape[0]

    def validate(self) -> ValidationReport:
        return validate_matching(self.A, self.B, self.degree)


def standard_conditions(kind, degree, lam=None):
    """Build a standard matching pair of the given kind.

    Derivatives are outward from the vertex.  ``robin`` encodes
    phi' = lam * phi on every adjacent edge independently (lam -> infinity
    is the separate kind ``dirichlet``).  ``kirchhoff`` is continuity plus
    a vanishing sum of outward derivatives; ``continuity_step`` is the
    degree-2 case (wavefunction and derivative continuous through the
    vertex).
    """
    if degree < 1:
        raise UnsupportedDegree(f"degree must be >= 1, got {degree}")
    eye = np.eye(degree, dtype=complex)
    zero = np.zeros((degree, degree), dtype=complex)
    if kind == "dirichlet":
        return MatchingConditions(eye, zero, kind=kind)
    if kind == "neumann":
        return MatchingConditions(zero, eye, kind=kind)
    if kind == "robin":
        if lam is None:
            raise MalformedMatching("robin conditions require a lambda value")
        return MatchingConditions(-float(lam) * eye, eye, kind=kind)
    if kind == "continuity_step":
        if degree != 2:
            raise UnsupportedDegree("continuity_step requires degree exactly 2")
        kind = "kirchhoff"
    if kind == "kirchhoff":
        if degree < 2:
            raise UnsupportedDegree("kirchhoff requires degree >= 2")
        A = zero.copy()
        B = zero.copy()
        for i in range(degree - 1):
            A[i, i] = 1.0
            A[i, i + 1] = -1.0
        B[degree - 1, :] = 1.0
        return MatchingConditions(A, B, kind="kirchhoff")
    raise MalformedMatching(f"unknown matching kind {kind!r}")


@dataclass(frozen=True)
class EdgeRecord:
    id: object
    endpoints: tuple  # (tail vertex index, head vertex index)
    length: float
    potential: float


@dataclass(frozen=True)
class VertexRecord:
    id: object
    matching: MatchingConditions


@dataclass(frozen=True)
class MetricGraph:
    vertices: tuple  # of VertexRecord
    edges: tuple  # of EdgeRecord
    # carried along after multi-mode expansion: (edge position, mode) -> edge position
    mode_map: dict | None = None

    @property
    def N_V(self):
        return len(self.vertices)

    @property
    def N_E(self):
        return len(self.edges)

    @property
    def n_directed(self):
        return 2 * len(self.edges)

    # -- directed-edge bookkeeping ------------------------------------
    @staticmethod
    def reverse(j):
        return j ^ 1

    def edge_of(self, j):
        return j // 2

    def tail(self, j):
        u, v = self.edges[j // 2].endpoints
        return u if j % 2 == 0 else v

    def head(self, j):
        u, v = self.edges[j // 2].endpoints
        return v if j % 2 == 0 else u

    def star_out(self, v):
        """Sorted outgoing directed-edge indices at vertex v."""
        out = []
        for i, e in enumerate(self.edges):
            if e.endpoints[0] == v:
                out.append(2 * i)
            if e.endpoints[1] == v:
                out.append(2 * i + 1)
        return out

    def degree(self, v):
        return len(self.star_out(v))

    # -- per-edge arrays ----------------------------------------------
    def lengths_directed(self):
        return np.repeat([e.length for e in self.edges], 2)

    def potentials_directed(self):
        return np.repeat([e.potential for e in self.edges], 2)

    def potentials(self):
        return np.array([e.potential for e in self.edges], dtype=float)

    def thresholds(self):
        return sorted(set(e.potential for e in self.edges))


@dataclass(frozen=True)
class MultiModeEdge:
    id: object
    endpoints: tuple
    length: float
    mode_potentials: tuple


@dataclass(frozen=True)
class MultiModeGraph:
    vertices: tuple  # of VertexRecord; matching at size d~_v, (edge, mode) ordered
    edges: tuple  # of MultiModeEdge


def _complexify(x):
    if isinstance(x, (list, tuple)) and len(x) == 2:
        return complex(x[0], x[1])
    return complex(x)


def _parse_matrix(rows, d, name):
    try:
        M = np.array([[_complexify(x) for x in row] for row in rows], dtype=complex)
    except (TypeError, ValueError) as exc:
        raise MalformedMatching(f"cannot parse matrix {name}: {exc}") from None
    if M.shape != (d, d):
        raise MalformedMatching(f"matrix {name} has shape {M.shape}, expected {(d, d)}")
    return M


def _check_connected(n_vertices, endpoint_pairs):
    if n_vertices == 0:
        raise DisconnectedGraph("graph has no vertices")
    adj = {v: set() for v in range(n_vertices)}
    for u, v in endpoint_pairs:
        adj[u].add(v)
        adj[v].add(u)
    seen = {0}
    stack = [0]
    while stack:
        for w in adj[stack.pop()]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    if len(seen) != n_vertices:
        raise DisconnectedGraph(
            f"graph is disconnected ({len(seen)} of {n_vertices} vertices reachable)"
        )


def _attach_matching(vertex_specs, edges, vid_to_idx, aux_vertices):
    """Build VertexRecords with validated, ordering-annotated matching."""
    # provisional graph to compute stars
    g = MetricGraph(
        vertices=tuple(VertexRecord(i, None) for i in range(len(vid_to_idx) + len(aux_vertices))),
        edges=tuple(edges),
    )
    records = []
    for vid, idx in vid_to_idx.items():
        spec = vertex_specs[vid]
        star = g.star_out(idx)
        d = len(star)
        kind = spec.get("kind")
        if kind in ("dirichlet", "neumann", "robin", "kirchhoff", "continuity_step"):
            mc = standard_conditions(kind, d, lam=spec.get("lambda"))
        elif kind == "custom" or ("A" in spec and "B" in spec):
            A = _parse_matrix(spec["A"], d, f"A at vertex {vid}")
            B = _parse_matrix(spec["B"], d, f"B at vertex {vid}")
            mc = MatchingConditions(A, B, kind="custom")
        else:
            raise MalformedMatching(f"vertex {vid}: unknown matching spec {spec!r}")
        report = validate_matching(mc.A, mc.B, d)
        if not report.accepted:
            raise MalformedMatching(
                f"vertex {vid}: matching rejected "
                f"(hermiticity residual {report.hermiticity_residual:.3e}, "
                f"rank {report.rank} of {d})"
            )
        records.append(
            (idx, VertexRecord(vid, MatchingConditions(mc.A, mc.B, tuple(star), mc.kind)))
        )
    for idx, vid in aux_vertices:
        star = g.star_out(idx)
        mc = standard_conditions("continuity_step", 2)
        records.append(
            (idx, VertexRecord(vid, MatchingConditions(mc.A, mc.B, tuple(star), mc.kind)))
        )
    records.sort(key=lambda t: t[0])
    return tuple(rec for _, rec in records)


def build_graph(spec):
    """Build a validated MetricGraph from a parsed description.

    ``spec`` is a dict with keys ``vertices`` and ``edges`` following the
    JSON file format (see the package README).  The presence of a ``modes``
    key on any edge triggers multi-mode expansion.
    """
    if any("modes" in e for e in spec.get("edges", [])):
        return expand_multimode(build_multimode(spec))

    vertex_specs = {}
    vid_to_idx = {}
    for v in spec["vertices"]:
        vid = v["id"]
        if vid in vid_to_idx:
            raise MalformedMatching(f"duplicate vertex id {vid!r}")
        vid_to_idx[vid] = len(vid_to_idx)
        vertex_specs[vid] = v.get("matching", {})

    edges = []
    aux_vertices = []
    next_idx = len(vid_to_idx)
    for e in spec["edges"]:
        L = float(e["length"])
        if not (L > 0):
            raise NonPositiveLength(f"edge {e.get('id')!r} has length {L}")
        V = float(e["potential"])
        if not np.isfinite(V):
            raise MalformedMatching(f"edge {e.get('id')!r} has non-finite potential")
        try:
            u = vid_to_idx[e["from"]]
            v = vid_to_idx[e["to"]]
        except KeyError as exc:
            raise MalformedMatching(f"edge {e.get('id')!r} references unknown vertex {exc}")
        if u == v:
            # split the loop through an auxiliary continuity vertex
            w = next_idx
            next_idx += 1
            aux_id = f"_aux_{e.get('id')}"
            aux_vertices.append((w, aux_id))
            edges.append(EdgeRecord(e.get("id"), (u, w), L / 2.0, V))
            edges.append(EdgeRecord(f"{e.get('id')}_b", (w, v), L / 2.0, V))
        else:
            edges.append(EdgeRecord(e.get("id"), (u, v), L, V))

    _check_connected(next_idx, [e.endpoints for e in edges])
    vertices = _attach_matching(vertex_specs, edges, vid_to_idx, aux_vertices)
    return MetricGraph(vertices=vertices, edges=tuple(edges))


def build_multimode(spec):
    """Parse a multi-mode description into a MultiModeGraph."""
    vid_to_idx = {}
    vertex_specs = {}
    for v in spec["vertices"]:
        vid_to_idx[v["id"]] = len(vid_to_idx)
        vertex_specs[v["id"]] = v.get("matching", {})

    edges = []
    for e in spec["edges"]:
        L = float(e["length"])
        if not (L > 0):
            raise NonPositiveLength(f"edge {e.get('id')!r} has length {L}")
        modes = tuple(float(p) for p in e.get("modes", [e.get("potential")]))
        if len(modes) < 1:
            raise MalformedMatching(f"edge {e.get('id')!r} has no modes")
        u, v = vid_to_idx[e["from"]], vid_to_idx[e["to"]]
        if u == v:
            raise MalformedMatching("loops are not supported in multi-mode input")
        edges.append(MultiModeEdge(e.get("id"), (u, v), L, modes))

    _check_connected(len(vid_to_idx), [e.endpoints for e in edges])

    vertices = []
    for vid, idx in vid_to_idx.items():
        # d~_v = sum of mode counts over adjacent edges, loops twice
        dt = sum(
            len(e.mode_potentials)
            for e in edges
            for end in e.endpoints
            if end == idx
        )
        mspec = vertex_specs[vid]
        kind = mspec.get("kind")
        if kind in STANDARD_KINDS:
            mc = standard_conditions(kind, dt, lam=mspec.get("lambda"))
        else:
            A = _parse_matrix(mspec["A"], dt, f"A at vertex {vid}")
            B = _parse_matrix(mspec["B"], dt, f"B at vertex {vid}")
            mc = MatchingConditions(A, B, kind="custom")
        report = validate_matching(mc.A, mc.B, dt)
        if not report.accepted:
            raise MalformedMatching(f"vertex {vid}: multi-mode matching rejected")
        vertices.append(VertexRecord(vid, mc))
    return MultiModeGraph(vertices=tuple(vertices), edges=tuple(edges))


def expand_multimode(mm):
    """Expand a multi-mode graph into a graph with parallel edges.

    Each edge with mu modes becomes mu parallel edges of the same length
    whose potentials are the mode potentials.  Vertex (A, B) matrices carry
    over under the (edge, mode) -> single-edge re-indexing: rows/columns of
    the multi-mode matrices are ordered by (edge position ascending, mode
    ascending), which is exactly the expanded-star ordering, so the carry
    over is direct.  The returned graph records the index mapping in
    ``mode_map``.
    """
    edges = []
    mode_map = {}
    for pos, e in enumerate(mm.edges):
        for m, V in enumerate(e.mode_potentials):
            mode_map[(pos, m)] = len(edges)
            eid = e.id if len(e.mode_potentials) == 1 else f"{e.id}.m{m}"
            edges.append(EdgeRecord(eid, e.endpoints, e.length, float(V)))

    g = MetricGraph(vertices=tuple(VertexRecord(i, None) for i in range(len(mm.vertices))),
                    edges=tuple(edges))
    vertices = []
    for idx, vrec in enumerate(mm.vertices):
        star = g.star_out(idx)
        mc = vrec.matching
        if mc.degree != len(star):
            raise MalformedMatching(
                f"vertex {vrec.id}: matching size {mc.degree} != expanded degree {len(star)}"
            )
        vertices.append(
            VertexRecord(vrec.id, MatchingConditions(mc.A, mc.B, tuple(star), mc.kind))
        )
    return MetricGraph(vertices=tuple(vertices), edges=tuple(edges), mode_map=mode_map)


def load_graph(path):
    """Read a graph description file (UTF-8 JSON) and build the graph."""
    with open(path, encoding="utf-8") as fh:
        spec = json.load(fh)
    return build_graph(spec)
