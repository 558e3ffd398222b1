"""Assembly of the global quantum map U(E) and its unitary reduction.

U(E) = T(E) P Sigma(K) acts on directed-edge amplitudes: Sigma is the
block-diagonal collection of vertex scattering matrices, P swaps the two
directions of every edge and T = e^{iKL} transports along the edges.  U is
unitary only above all thresholds; for energies below some potentials the
directed edges split into an oscillatory and an evanescent block and the
Schur-type reduction

    U_red = U_oo + U_oe (I - U_ee)^{-1} U_eo

is generically unitary and carries the quantization condition
det(I - U_red) = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NotAStar, TrappedStateSuspected
from .scattering import vertex_scattering, wavenumbers

TOL_TRAP = 1e-8


@dataclass
class QuantumMapBundle:
    graph: object
    E: float
    eps: float
    K: object  # WavenumberSet
    S: np.ndarray  # 2N_E x 2N_E graph scattering matrix, S = P Sigma
    T: np.ndarray  # transport phases, diagonal entries
    U: np.ndarray
    osc: np.ndarray  # oscillatory directed-edge indices (ascending)
    ev: np.ndarray  # evanescent directed-edge indices (ascending)
    vertex_scatterings: list = field(default_factory=list)
    min_sv_trap: float = np.inf  # smallest singular value of I - U_ee
    _U_red: np.ndarray | None = None

    @property
    def n(self):
        return self.U.shape[0]

    def block(self, rows, cols):
        return self.U[np.ix_(rows, cols)]

    @property
    def U_oo(self):
        return self.block(self.osc, self.osc)

    @property
    def U_oe(self):
        return self.block(self.osc, self.ev)

    @property
    def U_eo(self):
        return self.block(self.ev, self.osc)

    @property
    def U_ee(self):
        return self.block(self.ev, self.ev)


def direction_swap(n_directed):
    """The direction-swap permutation as an index array."""
    return np.arange(n_directed) ^ 1


def assemble(graph, E, eps=0.0, fixed_partition_below=None):
    """Assemble the quantum map bundle at energy E (+ i*eps).

    By default the oscillatory/evanescent partition is recomputed from the
    sign of E - V_e.  With ``fixed_partition_below=E0`` the partition is
    frozen to the one valid just above E0 (edges with V_e > E0 are treated
    as the "evanescent" block at every energy), which stays a valid
    reduction for all E > max potential of the retained block.
    """
    kset = wavenumbers(E, graph, eps=eps)
    n = graph.n_directed
    Ldir = graph.lengths_directed()
    T = np.exp(1j * kset.K * Ldir)

    S = np.zeros((n, n), dtype=complex)
    vss = []
    for v in range(graph.N_V):
        mc = graph.vertices[v].matching
        star = mc.ordering
        Kstar = kset.K[list(star)]
        vs = vertex_scattering(mc, Kstar)
        vss.append(vs)
        for a, out_a in enumerate(star):
            for b, out_b in enumerate(star):
                # incoming directed edge = reversal of the outgoing one
                S[out_a, out_b ^ 1] = vs.sigma[a, b]
    U = T[:, None] * S

    if fixed_partition_below is None:
        osc, ev = kset.osc, kset.ev
    else:
        V = graph.potentials_directed()
        idx = np.arange(n)
        osc = idx[V <= fixed_partition_below]
        ev = idx[V > fixed_partition_below]

    bundle = QuantumMapBundle(
        graph=graph, E=float(np.real(E)), eps=eps, K=kset,
        S=S, T=T, U=U, osc=osc, ev=ev, vertex_scatterings=vss,
    )
    if ev.size:
        I_ee = np.eye(ev.size, dtype=complex) - bundle.U_ee
        bundle.min_sv_trap = float(np.linalg.svd(I_ee, compute_uv=False)[-1])
    return bundle


def partition(bundle):
    """(osc, ev) directed-edge index sets of the bundle."""
    return bundle.osc, bundle.ev


def trapped_state_check(bundle):
    """Smallest singular value of I - U_ee and the trapped-state flag."""
    flag = bundle.ev.size > 0 and bundle.min_sv_trap < TOL_TRAP
    return {"min_singular_value": bundle.min_sv_trap, "flag": bool(flag)}


def reduce(bundle):
    """The reduced quantum map over the oscillatory block.

    Raises TrappedStateSuspected when I - U_ee is numerically singular
    (a state confined to the evanescent subgraph would escape the reduced
    quantization condition).
    """
    if bundle._U_red is not None:
        return bundle._U_red
    if bundle.ev.size == 0:
        bundle._U_red = bundle.U
        return bundle.U
    if bundle.min_sv_trap < TOL_TRAP:
        raise TrappedStateSuspected(bundle.E, bundle.min_sv_trap)
    I_ee = np.eye(bundle.ev.size, dtype=complex) - bundle.U_ee
    X = np.linalg.solve(I_ee, bundle.U_eo)
    bundle._U_red = bundle.U_oo + bundle.U_oe @ X
    return bundle._U_red


def unitarity_residual(M):
    n = M.shape[0]
    if n == 0:
        return 0.0
    return float(np.max(np.abs(M.conj().T @ M - np.eye(n))))


def logdet(M):
    """log det M as a (log|det|, principal arg) pair."""
    n = M.shape[0]
    if n == 0:
        return 0.0, 0.0
    sign, logabs = np.linalg.slogdet(M)
    return float(logabs), float(np.angle(sign))


def inverse_ee_schur(bundle):
    """The ev-ev block of U^{-1} and the (log|det|, arg) of I - (U^{-1})_ee.

    (U^{-1})_ee = (U_ee - U_eo U_oo^{-1} U_oe)^{-1}; its entries grow like
    e^{|K|L}, so det(I - (U^{-1})_ee) is evaluated through the Schur
    complement W = U_ee - U_eo U_oo^{-1} U_oe using
    I - W^{-1} = -W^{-1} (I - W), i.e.
    logdet(I - (U^{-1})_ee) = logdet(I - W) - logdet(-W).
    """
    m = bundle.ev.size
    if m == 0:
        return np.zeros((0, 0), dtype=complex), (0.0, 0.0)
    W = bundle.U_ee - bundle.U_eo @ np.linalg.solve(bundle.U_oo, bundle.U_oe)
    Minv_logabs, Minv_arg = logdet(np.eye(m, dtype=complex) - W)
    negW_logabs, negW_arg = logdet(-W)
    logabs = Minv_logabs - negW_logabs
    arg = np.angle(np.exp(1j * (Minv_arg - negW_arg)))
    Uinv_ee = np.linalg.inv(W)
    return Uinv_ee, (float(logabs), float(arg))


def det_identities_residuals(bundle):
    """Relative residuals of the two determinant identities.

    identity 1: det U_red / det U = det(I - (U^{-1})_ee) / det(I - U_ee)
    identity 2: det(I - U) = det(I - U_ee) det(I - U_red)
    """
    m = bundle.ev.size
    if m == 0:
        return {"id1_residual": 0.0, "id2_residual": 0.0}
    U_red = reduce(bundle)
    n_o = bundle.osc.size

    ld_red = logdet(U_red)
    ld_U = logdet(bundle.U)
    ld_IU = logdet(np.eye(bundle.n, dtype=complex) - bundle.U)
    ld_Iee = logdet(np.eye(m, dtype=complex) - bundle.U_ee)
    ld_Ired = logdet(np.eye(n_o, dtype=complex) - U_red)
    _, ld_Iinv = inverse_ee_schur(bundle)

    def rel(lhs, rhs):
        d_log = lhs[0] - rhs[0]
        d_arg = lhs[1] - rhs[1]
        return float(np.abs(np.exp(d_log + 1j * d_arg) - 1.0))

    lhs1 = (ld_red[0] - ld_U[0], ld_red[1] - ld_U[1])
    rhs1 = (ld_Iinv[0] - ld_Iee[0], ld_Iinv[1] - ld_Iee[1])
    lhs2 = ld_IU
    rhs2 = (ld_Iee[0] + ld_Ired[0], ld_Iee[1] + ld_Ired[1])
    return {"id1_residual": rel(lhs1, rhs1), "id2_residual": rel(lhs2, rhs2)}


def quantum_map_symmetry_residuals(bundle):
    """Max-norm residuals of the four block symmetries of U.

    (a) U_oo† U_oo = I
    (b) i U_oe† U_oo = P_ee T_ee^{-1} U_eo
    (c) i U_oo U_eo† = U_oe P_ee T_ee
    (d) i U_oe† U_oe = P_ee T_ee^{-1} U_ee - U_ee† P_ee T_ee^{-1}
    """
    osc, ev = bundle.osc, bundle.ev
    U_oo, U_oe, U_eo, U_ee = bundle.U_oo, bundle.U_oe, bundle.U_eo, bundle.U_ee
    swap = direction_swap(bundle.n)
    # P restricted to the ev block (both directions of an edge share a block)
    pos = {j: i for i, j in enumerate(ev)}
    P_ee = np.zeros((ev.size, ev.size))
    for i, j in enumerate(ev):
        P_ee[pos[swap[j]], i] = 1.0
    T_ee = np.diag(bundle.T[ev])

    def mx(M):
        return float(np.max(np.abs(M))) if M.size else 0.0

    PTinv = P_ee @ np.linalg.inv(T_ee) if ev.size else T_ee
    r1 = mx(U_oo.conj().T @ U_oo - np.eye(osc.size))
    r2 = mx(1j * U_oe.conj().T @ U_oo - PTinv @ U_eo)
    r3 = mx(1j * U_oo @ U_eo.conj().T - U_oe @ P_ee @ T_ee)
    r4 = mx(1j * U_oe.conj().T @ U_oe - (PTinv @ U_ee - U_ee.conj().T @ PTinv))
    return {"r1": r1, "r2": r2, "r3": r3, "r4": r4}


def star_center(graph):
    """The center vertex index of a star graph, or None."""
    if graph.N_V != graph.N_E + 1:
        return None
    degrees = [graph.degree(v) for v in range(graph.N_V)]
    leaves = [v for v, d in enumerate(degrees) if d == 1]
    centers = [v for v, d in enumerate(degrees) if d > 1]
    if graph.N_E == 1 and len(leaves) == 2:
        return 0
    if len(centers) != 1 or len(leaves) != graph.N_V - 1:
        return None
    return centers[0]


def star_reduce(bundle):
    """The N_E x N_E undirected-edge quantum map of a star graph.

    U~ = sigma~ T~^2 sigma_center, where sigma~ holds the scalar dangling
    reflections and T~ = diag(e^{i K_e L_e}).  det(I - U) = det(I - U~).
    """
    graph = bundle.graph
    center = star_center(graph)
    if center is None:
        raise NotAStar("star reduction requires one center and degree-1 leaves")
    n_e = graph.N_E
    mc = graph.vertices[center].matching
    # center star slots are in edge order because every edge meets the
    # center exactly once
    Kedge = bundle.K.K[::2]
    Ledge = np.array([e.length for e in graph.edges])
    sigma_c = bundle.vertex_scatterings[center].sigma
    edge_order = [o // 2 for o in mc.ordering]
    perm = np.argsort(edge_order)
    sigma_c = sigma_c[np.ix_(perm, perm)]

    refl = np.zeros(n_e, dtype=complex)
    for i, e in enumerate(graph.edges):
        leaf = e.endpoints[0] if e.endpoints[0] != center else e.endpoints[1]
        vs = bundle.vertex_scatterings[leaf]
        if vs.sigma.shape != (1, 1):
            raise NotAStar(f"vertex {graph.vertices[leaf].id} is not a leaf")
        refl[i] = vs.sigma[0, 0]
    T2 = np.exp(2j * Kedge * Ledge)
    return (refl * T2)[:, None] * sigma_c
