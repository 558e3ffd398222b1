"""Secular functions, eigenvalue finding and the exact counting staircase.

Eigenvalues are zeros of the reduced secular function
xi_red(E) = det(I - U_red(E)).  Counting is done by tracking the winding
function

    F(E) = arg det U_red(E + i eps) / 2pi + N_osc(E)

along an energy grid, where N_osc sums per-eigenvalue principal branches
-(1/pi) arg(1 - lambda_j).  Away from eigenvalues F is constant up to
O(eps); at an eigenvalue of multiplicity m it jumps by m.  Jumps are
localized by bisection with an eps that shrinks with the bracket, which
handles degenerate eigenvalues without root-cluster heuristics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GridTooCoarse, TrappedStateSuspected
from .quantum_map import assemble, logdet, reduce
from .scattering import threshold_tol

DEFAULT_GRID_N = 4000
MAX_REFINE_DEPTH = 60


def default_eps(E):
    return 1e-8 * (1.0 + abs(E))


def secular(bundle):
    """xi(E) = det(I - U(E)), returned as (value, (log|.|, arg))."""
    M = np.eye(bundle.n, dtype=complex) - bundle.U
    value = np.linalg.det(M)
    return value, logdet(M)


def secular_red(bundle):
    """xi_red(E) = det(I - U_red(E)), returned as (value, (log|.|, arg))."""
    U_red = reduce(bundle)
    M = np.eye(U_red.shape[0], dtype=complex) - U_red
    value = np.linalg.det(M)
    return value, logdet(M)


def nudge_off_thresholds(E, graph, direction=1.0):
    """Shift E off any potential threshold by a bit more than the
    exclusion tolerance."""
    thresholds = graph.thresholds()
    tol = threshold_tol(E)
    for V in thresholds:
        if abs(E - V) < tol:
            return V + direction * 2.0 * tol
    return E


@dataclass(frozen=True)
class PointData:
    E: float
    det_sign: complex  # unimodular phase factor of det U_red
    n_osc: float
    flagged: bool = False


def eval_point(graph, E, eps, fixed_partition_below=None):
    """Winding data of U_red at one energy, with trapped-state handling."""
    E = nudge_off_thresholds(E, graph)
    try:
        bundle = assemble(graph, E, eps=eps,
                          fixed_partition_below=fixed_partition_below)
        U_red = reduce(bundle)
    except TrappedStateSuspected:
        return PointData(E=E, det_sign=1.0 + 0j, n_osc=0.0, flagged=True)
    if U_red.shape[0] == 0:
        return PointData(E=E, det_sign=1.0 + 0j, n_osc=0.0)
    sign, _ = np.linalg.slogdet(U_red)
    lam = np.linalg.eigvals(U_red)
    n_osc = -np.sum(np.angle(1.0 - lam)) / np.pi
    return PointData(E=E, det_sign=complex(sign), n_osc=float(n_osc))


def _f_delta(graph, pa, pb, eps, fixed_partition_below=None, depth=0):
    """F(pb) - F(pa) for two points inside one inter-threshold window."""
    dtheta = np.angle(pb.det_sign * np.conj(pa.det_sign))
    if abs(dtheta) > 1.5:
        if depth >= MAX_REFINE_DEPTH:
            raise GridTooCoarse(
                f"cannot resolve winding between E={pa.E} and E={pb.E}"
            )
        pm = eval_point(graph, 0.5 * (pa.E + pb.E), eps, fixed_partition_below)
        return (
            _f_delta(graph, pa, pm, eps, fixed_partition_below, depth + 1)
            + _f_delta(graph, pm, pb, eps, fixed_partition_below, depth + 1)
        )
    return dtheta / (2.0 * np.pi) + pb.n_osc - pa.n_osc


@dataclass(frozen=True)
class SpectralResult:
    eigenvalues: tuple  # of (E_n, multiplicity, residual)
    range: tuple
    grid_n: int
    flags: dict = field(default_factory=dict)

    def energies(self, with_multiplicity=True):
        out = []
        for E, m, _ in self.eigenvalues:
            out.extend([E] * (m if with_multiplicity else 1))
        return np.array(out)

    def count_below(self, E):
        return int(np.searchsorted(self.energies(), E, side="left"))


def _window_grid(graph, E_lo, E_hi, grid_n):
    """Grid over [E_lo, E_hi] split at thresholds, with points pushed
    close to each threshold so the bridged sliver is tiny."""
    # keep the endpoints inside their windows so later nudges stay put
    E_lo = nudge_off_thresholds(E_lo, graph, direction=1.0)
    E_hi = nudge_off_thresholds(E_hi, graph, direction=-1.0)
    thresholds = [V for V in graph.thresholds() if E_lo < V < E_hi]
    bounds = [E_lo] + thresholds + [E_hi]
    windows = []
    base = np.linspace(E_lo, E_hi, grid_n)
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        pad_lo = 2.0 * threshold_tol(lo) if lo in thresholds else 0.0
        pad_hi = 2.0 * threshold_tol(hi) if hi in thresholds else 0.0
        inner = base[(base > lo + pad_lo) & (base < hi - pad_hi)]
        grid = np.unique(np.concatenate([[lo + max(pad_lo, 1e-15 * (1 + abs(lo)))],
                                         inner,
                                         [hi - max(pad_hi, 1e-15 * (1 + abs(hi)))]]))
        windows.append(grid)
    return windows


def _locate_jumps(graph, a, b, m, tol, fixed_partition_below, found, depth=0):
    """Bisect the (a, b) bracket containing m counting-function jumps."""
    width = b - a
    if width < tol or depth >= MAX_REFINE_DEPTH:
        found.append((0.5 * (a + b), m, width))
        return
    eps = max(width * 1e-3, 1e-300)
    pa = eval_point(graph, a, eps, fixed_partition_below)
    mid = 0.5 * (a + b)
    for attempt in range(8):
        pm = eval_point(graph, mid, eps, fixed_partition_below)
        d_left = _f_delta(graph, pa, pm, eps, fixed_partition_below)
        if abs(d_left - round(d_left)) < 0.3 and not pm.flagged:
            break
        mid = a + width * (0.5 + 0.04 * (attempt + 1))  # step off the eigenvalue
    m_left = int(round(d_left))
    m_left = min(max(m_left, 0), m)
    m_right = m - m_left
    if m_left:
        _locate_jumps(graph, a, mid, m_left, tol, fixed_partition_below,
                      found, depth + 1)
    if m_right:
        _locate_jumps(graph, mid, b, m_right, tol, fixed_partition_below,
                      found, depth + 1)


def find_eigenvalues(graph, E_lo, E_hi, grid_n=DEFAULT_GRID_N, eps=None,
                     fixed_partition_below=None):
    """All zeros of xi_red in (E_lo, E_hi) with multiplicities.

    Multiplicity is the local jump of the exact counting function, obtained
    from the winding of det U_red plus the per-eigenphase terms; every
    eigenvalue is refined to a bracket of width 1e-12 * (1 + E).
    """
    minV = min(graph.potentials())
    if not E_lo > minV:
        raise ValueError(f"E_lo must exceed the minimum potential {minV}")
    flags = {"trapped": [], "thresholds": [V for V in graph.thresholds()
                                           if E_lo < V < E_hi]}
    eigenvalues = []
    for grid in _window_grid(graph, E_lo, E_hi, grid_n):
        e = eps if eps is not None else default_eps(grid[-1])
        points = [eval_point(graph, E, e, fixed_partition_below) for E in grid]
        for p in points:
            if p.flagged:
                flags["trapped"].append(p.E)
        for pa, pb in zip(points[:-1], points[1:]):
            if pa.flagged or pb.flagged:
                continue
            d = _f_delta(graph, pa, pb, e, fixed_partition_below)
            m = int(round(d))
            if m <= 0:
                continue
            tol = 1e-12 * (1.0 + abs(pb.E))
            found = []
            _locate_jumps(graph, pa.E, pb.E, m, tol, fixed_partition_below, found)
            for E_star, mult, width in found:
                bundle = assemble(graph, nudge_off_thresholds(E_star, graph),
                                  eps=0.0,
                                  fixed_partition_below=fixed_partition_below)
                try:
                    _, (logabs, _) = secular_red(bundle)
                    residual = float(np.exp(logabs))
                except TrappedStateSuspected:
                    residual = np.nan
                    flags["trapped"].append(E_star)
                eigenvalues.append((E_star, mult, residual))
    eigenvalues.sort()
    return SpectralResult(
        eigenvalues=tuple(eigenvalues),
        range=(E_lo, E_hi),
        grid_n=grid_n,
        flags=flags,
    )


def default_floor(graph):
    """Calibration floor just above the minimum edge potential."""
    minV = min(graph.potentials())
    return minV + 1e-6 * (1.0 + abs(minV))


def counting_exact(graph, E, E_floor=None, floor_count=0, grid_n=DEFAULT_GRID_N,
                   _cache=None):
    """Number of eigenvalues in (E_floor, E) plus the user floor offset."""
    if E_floor is None:
        E_floor = default_floor(graph)
    result = _cache if _cache is not None else find_eigenvalues(
        graph, E_floor, E * (1 + 1e-12) + 1e-12, grid_n=grid_n)
    return result.count_below(E) + floor_count


def secular_sweep(graph, energies, eps=0.0):
    """xi and xi_red on a grid; rows of (E, xi, xi_red) with E nudged off
    thresholds.  Trapped energies give xi_red = nan."""
    rows = []
    for E in np.asarray(energies, dtype=float):
        E = nudge_off_thresholds(E, graph)
        bundle = assemble(graph, E, eps=eps)
        xi, _ = secular(bundle)
        try:
            xi_red, _ = secular_red(bundle)
        except TrappedStateSuspected:
            xi_red = complex(np.nan, np.nan)
        rows.append((E, xi, xi_red))
    return rows
