"""Energy-dependent vertex scattering matrices.

At energy E each edge carries the wavenumber K_e = sqrt(E - V_e) with the
branch Im K_e >= 0 (K_e = i|K_e| on evanescent edges, consistent with the
E + i*eps limit from above).  The vertex scattering matrix is

    sigma(K) = -I + 2i K^{1/2} (A + iBK)^{-1} B K^{1/2}

which is unitary when all adjacent K_e are real.  The energy-independent
base unitary is S = sigma(I); sigma decomposes through per-edge potential
barriers as sigma = R + T (I + S R)^{-1} S T with diagonal
R = (K - I)/(K + I) and T = 2 K^{1/2}/(K + I).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AtThreshold, SingularVertexMatrix

COND_MAX = 1e12


def threshold_tol(E):
    return 1e-9 * (1.0 + abs(E))


@dataclass(frozen=True)
class WavenumberSet:
    """Wavenumbers per directed edge at a fixed energy."""

    E: complex
    K: np.ndarray  # per directed edge
    osc: np.ndarray  # directed-edge indices with Re(E) > V_e
    ev: np.ndarray  # directed-edge indices with Re(E) < V_e


def wavenumbers(E, graph, eps=0.0):
    """Evaluate K_e = sqrt(E - V_e) on all directed edges of a graph.

    The principal square root of E + i*eps - V_e gives Re K_e >= 0 and
    Im K_e >= 0, i.e. exactly i|K_e| below threshold in the eps -> 0 limit.
    Raises AtThreshold when E sits on a potential.
    """
    V = graph.potentials_directed()
    tol = threshold_tol(np.real(E))
    hit = np.nonzero(np.abs(np.real(E) - V) < tol)[0]
    if hit.size:
        raise AtThreshold(graph.edges[hit[0] // 2].id, E)
    K = np.sqrt(np.asarray(E + 1j * eps - V, dtype=complex))
    idx = np.arange(2 * graph.N_E)
    osc = idx[np.real(E) > V]
    ev = idx[np.real(E) < V]
    return WavenumberSet(E=complex(E), K=K, osc=osc, ev=ev)


@dataclass(frozen=True)
class VertexScattering:
    sigma: np.ndarray
    base: np.ndarray  # S = sigma(I), always unitary
    barrier_R: np.ndarray  # diagonal entries
    barrier_T: np.ndarray  # diagonal entries
    K: np.ndarray  # diagonal entries (restriction to the star)
    condition_number: float


def vertex_scattering(mc, K):
    """Vertex scattering matrix for matching conditions ``mc`` at
    star-restricted wavenumbers ``K`` (1-d array, one entry per slot).

    sigma is computed by linear solves against (A + iBK); the barrier
    decomposition pieces are retained for cross-checks.
    """
    A, B = mc.A, mc.B
    K = np.asarray(K, dtype=complex)
    d = A.shape[0]
    sqrtK = np.sqrt(K)
    M = A + 1j * B * K[np.newaxis, :]
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > COND_MAX:
        raise SingularVertexMatrix(
            f"A + iBK has condition number {cond:.3e} (degree {d})"
        )
    # sigma = -I + 2i K^{1/2} (A+iBK)^{-1} B K^{1/2}
    X = np.linalg.solve(M, B)
    sigma = -np.eye(d, dtype=complex) + 2j * sqrtK[:, None] * X * sqrtK[None, :]

    Mb = A + 1j * B
    base = -np.eye(d, dtype=complex) + 2j * np.linalg.solve(Mb, B)
    R = (K - 1.0) / (K + 1.0)
    T = 2.0 * sqrtK / (K + 1.0)
    return VertexScattering(
        sigma=sigma,
        base=base,
        barrier_R=R,
        barrier_T=T,
        K=K,
        condition_number=float(cond),
    )


def barrier_form(vs):
    """Recompose sigma from the barrier pieces: R + T (I + S R)^{-1} S T."""
    d = vs.base.shape[0]
    SR = vs.base * vs.barrier_R[np.newaxis, :]
    inner = np.linalg.solve(np.eye(d, dtype=complex) + SR, vs.base)
    return np.diag(vs.barrier_R) + vs.barrier_T[:, None] * inner * vs.barrier_T[None, :]


def _split(sigma, osc_mask):
    o = np.nonzero(osc_mask)[0]
    e = np.nonzero(~osc_mask)[0]
    return sigma[np.ix_(o, o)], sigma[np.ix_(o, e)], sigma[np.ix_(e, o)], sigma[np.ix_(e, e)]


def vertex_symmetry_residuals(vs, osc_mask):
    """Max-norm residuals of the four flux-conservation block relations.

    ``osc_mask`` is a boolean array over the star slots (True where the
    adjacent edge is oscillatory at the evaluation energy).  Size-0 blocks
    give vacuous zero residuals.
    """
    osc_mask = np.asarray(osc_mask, dtype=bool)
    s_oo, s_oe, s_eo, s_ee = _split(vs.sigma, osc_mask)
    n_o = s_oo.shape[0]

    def mx(M):
        return float(np.max(np.abs(M))) if M.size else 0.0

    r1 = mx(s_oo.conj().T @ s_oo - np.eye(n_o, dtype=complex))
    r2 = mx(1j * s_oe.conj().T @ s_oo - s_eo)
    r3 = mx(1j * s_oo @ s_eo.conj().T - s_oe)
    r4 = mx(1j * s_oe.conj().T @ s_oe - (s_ee - s_ee.conj().T))
    return {"r1": r1, "r2": r2, "r3": r3, "r4": r4}


def vertex_flux(vs, b_in, osc_mask):
    """Total outgoing flux sum I_e for incoming amplitudes b_in.

    On oscillatory slots I_e = |b_out|^2 - |b_in|^2; on evanescent slots
    I_e = 2 Im(b_out^* b_in) (the cross term of the decaying and growing
    exponentials).  Flux conservation gives 0 for any b_in.
    """
    osc_mask = np.asarray(osc_mask, dtype=bool)
    b_in = np.asarray(b_in, dtype=complex)
    b_out = vs.sigma @ b_in
    flux_osc = np.abs(b_out[osc_mask]) ** 2 - np.abs(b_in[osc_mask]) ** 2
    flux_ev = 2.0 * np.imag(np.conj(b_out[~osc_mask]) * b_in[~osc_mask])
    return float(np.sum(flux_osc) + np.sum(flux_ev))
