"""Mean and oscillatory parts of the counting function, periodic orbits,
and the evanescent correction series.

The counting function splits as N(E) = N_mean(E) + N_osc(E) with

    N_mean = sum_e theta(E - V_e) L_e sqrt(E - V_e)/pi
             + (1/2pi) Im log det S
             + (1/2pi) Im log det(I - (U^{-1})_ee)
             - (1/2pi) Im log det(I - U_ee)  + c

    N_osc  = -(1/pi) Im log det(I - U_red(E + i eps))

where the block choice is the recomputed-at-every-E partition (reduced
mode), a frozen partition (fixed_partition mode) or the empty evanescent
block (above_threshold mode); only the sum N_mean + N_osc is independent
of the choice.  Im log terms are 2pi-ambiguous pointwise, so sweeps unwrap
them by continuity; N_osc uses per-eigenvalue principal branches, which
are unambiguous for eps > 0.

tr U^n expands into periodic orbits: closed head-to-tail sequences of
directed edges, each carrying A_p (product of scattering amplitudes) and
phase W_p = sum K_e L_e.  Purely evanescent orbits live in the two
evanescent log-det terms of the mean part and are excluded from the
primed orbit sum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    GridTooCoarse,
    InconsistentCalibration,
    OrbitBudgetExceeded,
    SeriesNotConverged,
    TrappedStateSuspected,
)
from .quantum_map import assemble, inverse_ee_schur, logdet, reduce
from .scattering import threshold_tol
from .spectra import (
    default_eps,
    default_floor,
    find_eigenvalues,
    nudge_off_thresholds,
)

ORBIT_CAP = 10**6
MODES = ("reduced", "above_threshold", "fixed_partition")


def _principal_down(a):
    """Map an angle into [-pi, pi) (det S = -1 counts as -1/2 turns)."""
    a = float(np.angle(np.exp(1j * a)))
    if a >= np.pi - 1e-12:
        a -= 2.0 * np.pi
    return a


def weyl_term(graph, E):
    V = graph.potentials()
    L = np.array([e.length for e in graph.edges])
    mask = E > V
    return float(np.sum(L[mask] * np.sqrt(E - V[mask])) / np.pi)


def _point_terms(graph, E, eps, fixed_partition_below):
    """Raw (principal-branch) term values at one energy."""
    bundle = assemble(graph, E, eps=eps,
                      fixed_partition_below=fixed_partition_below)
    det_sigma_args = [
        _principal_down(np.angle(np.linalg.slogdet(vs.sigma)[0]))
        for vs in bundle.vertex_scatterings
    ]
    m = bundle.ev.size
    if m:
        _, (t3_logabs, t3_arg) = inverse_ee_schur(bundle)
        _, t4_arg = logdet(np.eye(m, dtype=complex) - bundle.U_ee)
    else:
        t3_arg, t4_arg = 0.0, 0.0
    flagged = False
    try:
        U_red = reduce(bundle)
        lam = np.linalg.eigvals(U_red) if U_red.size else np.array([])
        n_osc = float(-np.sum(np.angle(1.0 - lam)) / np.pi)
    except TrappedStateSuspected:
        flagged = True
        n_osc = np.nan
    return {
        "weyl": weyl_term(graph, E),
        "det_sigma_args": det_sigma_args,
        "t3_arg": t3_arg,
        "t4_arg": t4_arg,
        "n_osc": n_osc,
        "flagged": flagged,
        "bundle": bundle,
    }


def mean_counting(bundle, c=0.0):
    """Pointwise mean part N_mean(E) with principal branches.

    Sweeps should use :func:`trace_sweep`, which unwraps the log phases by
    continuity; pointwise values may differ by integers from the unwrapped
    ones.
    """
    graph = bundle.graph
    det_s = sum(
        np.angle(np.linalg.slogdet(vs.sigma)[0])
        for vs in bundle.vertex_scatterings
    )
    det_s += np.pi * (graph.N_E % 2)  # arg det P
    det_s = _principal_down(det_s)  # principal arg of the full product det S
    m = bundle.ev.size
    if m:
        _, (_, t3_arg) = inverse_ee_schur(bundle)
        _, t4_arg = logdet(np.eye(m, dtype=complex) - bundle.U_ee)
    else:
        t3_arg, t4_arg = 0.0, 0.0
    return (
        weyl_term(graph, bundle.E)
        + det_s / (2.0 * np.pi)
        + t3_arg / (2.0 * np.pi)
        - t4_arg / (2.0 * np.pi)
        + c
    )


def oscillatory_counting(bundle):
    """Pointwise N_osc(E) from per-eigenvalue principal branches."""
    U_red = reduce(bundle)
    if U_red.size == 0:
        return 0.0
    lam = np.linalg.eigvals(U_red)
    return float(-np.sum(np.angle(1.0 - lam)) / np.pi)


_BRIDGE_GAP = 1.0  # max principal-branch phase step trusted by unwrap (rad)
_BRIDGE_DEPTH = 60


def _phase_gap(pa, pb):
    """Largest principal-branch step among the unwrapped phase series."""
    def w(x, y):
        return abs(float(np.angle(np.exp(1j * (y - x)))))

    gap = max(w(pa["t3_arg"], pb["t3_arg"]), w(pa["t4_arg"], pb["t4_arg"]))
    for x, y in zip(pa["det_sigma_args"], pb["det_sigma_args"]):
        gap = max(gap, w(x, y))
    return gap


def _bridge(graph, E_a, E_b, p_a, p_b, eps, fpb, depth=0):
    """Auxiliary points between two sweep energies so unwrap can follow fast
    phase winding (e.g. the evanescent log-det near a below-threshold
    eigenvalue).  Returns a list of (E, point) pairs, exclusive of the ends.
    """
    if _phase_gap(p_a, p_b) <= _BRIDGE_GAP:
        return []
    if depth >= _BRIDGE_DEPTH or (E_b - E_a) <= 1e-13 * (1.0 + abs(E_b)):
        raise GridTooCoarse(
            f"cannot track phase branch between E={E_a!r} and E={E_b!r}")
    E_m = 0.5 * (E_a + E_b)
    e_m = eps if eps is not None else default_eps(E_m)
    p_m = _point_terms(graph, E_m, e_m, fpb)
    return (_bridge(graph, E_a, E_m, p_a, p_m, eps, fpb, depth + 1)
            + [(E_m, p_m)]
            + _bridge(graph, E_m, E_b, p_m, p_b, eps, fpb, depth + 1))


@dataclass(frozen=True)
class CountingReport:
    E: float
    N_mean: float
    N_osc: float
    N_total: float
    N_exact: int | None
    c: float
    mode: str
    weyl: float
    det_s_phase: float
    ev_term_inverse: float
    ev_term_direct: float
    flagged: bool


def trace_sweep(graph, energies, mode="reduced", eps=None,
                fixed_partition_below=None, c=None, floor_count=0,
                spectral=None):
    """Evaluate the counting-function decomposition along an energy sweep.

    ``energies`` must be ascending.  Phases are unwrapped by continuity
    within each inter-threshold window (reduced mode; the other modes have
    fixed block sizes and form a single window) and windows are joined by
    requiring integer continuity of the total, which theory guarantees off
    eigenvalues.  If ``c`` is None it is calibrated against the exact
    staircase (``spectral``, computed on demand).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    energies = np.asarray(energies, dtype=float)
    if mode == "above_threshold":
        fpb = np.inf
    elif mode == "fixed_partition":
        if fixed_partition_below is None:
            raise ValueError("fixed_partition mode needs fixed_partition_below")
        fpb = fixed_partition_below
    else:
        fpb = None

    energies = np.array([nudge_off_thresholds(E, graph) for E in energies])
    pts = []
    for E in energies:
        e = eps if eps is not None else default_eps(E)
        pts.append(_point_terms(graph, E, e, fpb))

    n_pts = len(pts)
    weyl = np.array([p["weyl"] for p in pts])
    n_osc = np.array([p["n_osc"] for p in pts])
    flagged = np.array([p["flagged"] for p in pts])

    # inter-threshold windows (reduced mode; the others are one window)
    if mode == "reduced":
        thresholds = [V for V in graph.thresholds()
                      if energies[0] < V < energies[-1]]
    else:
        thresholds = []
    win_id = np.searchsorted(thresholds, energies)

    # augment the sweep with bridge points wherever adjacent grid points
    # (within the same window) are too far apart for reliable unwrapping;
    # bridge points feed the unwrap only and are dropped afterwards
    aug_E, aug_pts, orig_idx = [], [], []
    for i in range(n_pts):
        if i > 0 and win_id[i] == win_id[i - 1]:
            for E_m, p_m in _bridge(graph, energies[i - 1], energies[i],
                                    pts[i - 1], pts[i], eps, fpb):
                aug_E.append(E_m)
                aug_pts.append(p_m)
        orig_idx.append(len(aug_pts))
        aug_E.append(energies[i])
        aug_pts.append(pts[i])
    orig_idx = np.array(orig_idx)

    # per-vertex det sigma phases, unwrapped along the whole sweep; the
    # overall branch is anchored to the principal arg of the full product
    # det S = det P * prod_v det sigma_v at the first point
    sig = np.array([p["det_sigma_args"] for p in aug_pts])  # (n_aug, N_V)
    sig = np.unwrap(sig, axis=0)
    det_p_arg = -np.pi * (graph.N_E % 2)
    raw = sig.sum(axis=1) + det_p_arg
    det_s = (raw + (_principal_down(raw[0]) - raw[0]))[orig_idx] / (2.0 * np.pi)

    # evanescent log-det phases, unwrapped per inter-threshold window
    aug_win = np.searchsorted(thresholds, np.array(aug_E))
    t3 = np.array([p["t3_arg"] for p in aug_pts])
    t4 = np.array([p["t4_arg"] for p in aug_pts])
    aug_slices = []
    start = 0
    for w in list(np.searchsorted(aug_win, np.arange(1, len(thresholds) + 1),
                                  side="left")) + [len(aug_pts)]:
        if w > start:
            aug_slices.append(slice(start, w))
        start = w
    for sl in aug_slices:
        t3[sl] = np.unwrap(t3[sl])
        t4[sl] = np.unwrap(t4[sl])
    t3 = t3[orig_idx] / (2.0 * np.pi)
    t4 = -t4[orig_idx] / (2.0 * np.pi)

    window_slices = []
    start = 0
    for w in list(np.searchsorted(win_id, np.arange(1, len(thresholds) + 1),
                                  side="left")) + [n_pts]:
        if w > start:
            window_slices.append(slice(start, w))
        start = w

    n0 = weyl + det_s + t3 + t4 + n_osc

    n_exact = None
    if c is None or spectral is not None:
        if spectral is None:
            spectral = find_eigenvalues(graph, default_floor(graph),
                                        energies[-1] + 1.0)
        levels = spectral.energies()
        n_exact = np.searchsorted(levels, energies, side="left") + floor_count

    # join windows: the total minus the exact staircase is continuous across
    # a threshold, so any residual jump is an integer branch offset (without
    # the staircase this requires no eigenvalue inside the bridged gap)
    stair = n_exact if n_exact is not None else np.zeros(n_pts)
    for prev, sl in zip(window_slices[:-1], window_slices[1:]):
        a, b = prev.stop - 1, sl.start
        if flagged[a] or flagged[b]:
            continue
        offset = np.round((n0[a] - stair[a]) - (n0[b] - stair[b]))
        n0[sl.start:] += offset
        t3[sl.start:] += offset  # attribute the branch offset to the ev term
    if c is None:
        good = ~flagged & ~np.isnan(n0)
        # calibrate above all thresholds when possible: there every mode's
        # decomposition is exact, so c is mode-independent up to the window
        # joining offsets already folded into n0
        v_max = max(graph.potentials())
        high = good & (energies > v_max)
        sel = high if np.count_nonzero(high) >= 10 else good
        est = (n_exact - n0)[sel]
        m = np.median(est)
        near = est[np.abs(est - m) < 1e-3]
        c = float(np.mean(near)) if near.size else float(m)

    reports = []
    for i in range(n_pts):
        N_mean = weyl[i] + det_s[i] + t3[i] + t4[i] + c
        reports.append(CountingReport(
            E=float(energies[i]),
            N_mean=float(N_mean),
            N_osc=float(n_osc[i]),
            N_total=float(N_mean + n_osc[i]),
            N_exact=int(n_exact[i]) if n_exact is not None else None,
            c=float(c),
            mode=mode,
            weyl=float(weyl[i]),
            det_s_phase=float(det_s[i]),
            ev_term_inverse=float(t3[i]),
            ev_term_direct=float(t4[i]),
            flagged=bool(flagged[i]),
        ))
    return reports


def calibrate_constant(graph, E_ref, mode="reduced", fixed_partition_below=None,
                       eps=None, grid_n=801, floor_count=0):
    """The calibration constant c fixed by the exact staircase.

    c = N_exact(E_ref) - (N_mean(c=0) + N_osc)(E_ref), cross-checked at
    three reference energies spread over (floor, E_ref); the estimates must
    agree to 0.1 or InconsistentCalibration is raised.
    """
    lo = default_floor(graph)
    energies = np.linspace(lo, E_ref, grid_n)
    reports = trace_sweep(graph, energies, mode=mode, eps=eps,
                          fixed_partition_below=fixed_partition_below,
                          c=0.0, floor_count=floor_count,
                          spectral=find_eigenvalues(graph, lo, E_ref + 1.0))

    # reference energies must sit where the decomposition is exact: in
    # reduced mode anywhere, otherwise above the potentials of the edges
    # kept in the oscillatory block
    if mode == "reduced":
        first = 0
    else:
        E0 = np.inf if mode == "above_threshold" else fixed_partition_below
        v_lim = max([V for V in graph.potentials() if V <= E0], default=lo)
        first = int(np.searchsorted(energies, v_lim + threshold_tol(v_lim)))
        if first >= len(reports) - 2:
            raise InconsistentCalibration(
                f"E_ref={E_ref} leaves no room above the validity limit {v_lim}"
            )

    def local_c(frac):
        i = first + min(int(frac * (len(reports) - 1 - first)),
                        len(reports) - 1 - first)
        window = [r.N_exact - r.N_total for r in reports[max(0, i - 10):i + 11]
                  if not r.flagged]
        return float(np.median(window))

    estimates = [local_c(f) for f in (0.25, 0.6, 1.0)]
    if max(estimates) - min(estimates) > 0.1:
        raise InconsistentCalibration(
            f"calibration estimates disagree: {estimates}"
        )
    return float(np.mean(estimates))


# ---------------------------------------------------------------------
# periodic orbits


@dataclass(frozen=True)
class PeriodicOrbit:
    """A primitive periodic orbit: canonical (lexicographically smallest
    rotation) cyclic sequence of directed-edge indices."""

    sequence: tuple
    n_p: int


@dataclass(frozen=True)
class OrbitContribution:
    orbit: PeriodicOrbit
    A_p: complex
    W_p: complex
    classification: str  # pure_osc | pure_ev | mixed

    @property
    def factor(self):
        return self.A_p * np.exp(1j * self.W_p)


def _min_rotation(seq):
    n = len(seq)
    doubled = seq + seq
    best = seq
    for i in range(1, n):
        cand = doubled[i:i + n]
        if cand < best:
            best = cand
    return best


def _is_primitive(seq):
    n = len(seq)
    for d in range(1, n):
        if n % d == 0 and seq == seq[:d] * (n // d):
            return False
    return True


def enumerate_primitive_orbits(graph, n_max, cap=ORBIT_CAP):
    """All primitive periodic orbits up to length n_max.

    Orbits are closed head-to-tail walks over directed edges (edges may
    repeat), deduplicated by canonical rotation.  Adjacency is the
    structural head-to-tail relation of the graph.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    n_dir = graph.n_directed
    succ = [graph.star_out(graph.head(j)) for j in range(n_dir)]
    orbits = []
    budget = [0]

    def extend(path, start):
        budget[0] += 1
        if budget[0] > cap:
            raise OrbitBudgetExceeded(f"orbit enumeration exceeded {cap} records")
        last = path[-1]
        if start in succ[last]:
            seq = tuple(path)
            if _is_primitive(seq) and seq == _min_rotation(seq):
                orbits.append(PeriodicOrbit(sequence=seq, n_p=len(seq)))
        if len(path) < n_max:
            for nxt in succ[last]:
                if nxt >= start:
                    path.append(nxt)
                    extend(path, start)
                    path.pop()

    for s in range(n_dir):
        extend([s], s)
    orbits.sort(key=lambda o: (o.n_p, o.sequence))
    return orbits


def orbit_contributions(graph, bundle, orbits):
    """Energy-dependent amplitude/phase records for orbit skeletons."""
    V = graph.potentials_directed()
    Ldir = graph.lengths_directed()
    K = bundle.K.K
    E = bundle.E
    out = []
    for o in orbits:
        A = 1.0 + 0j
        W = 0.0 + 0j
        n_ev = 0
        for j, cur in enumerate(o.sequence):
            nxt = o.sequence[(j + 1) % o.n_p]
            A *= bundle.S[nxt, cur]
            W += K[cur] * Ldir[cur]
            if E < V[cur]:
                n_ev += 1
        if n_ev == 0:
            cls = "pure_osc"
        elif n_ev == o.n_p:
            cls = "pure_ev"
        else:
            cls = "mixed"
        out.append(OrbitContribution(orbit=o, A_p=A, W_p=complex(W),
                                     classification=cls))
    return out


def orbit_sum(graph, E, n_max, r_max=50, eps=0.0, cap=ORBIT_CAP):
    """Orbit expansion of the traces and the truncated oscillatory sum.

    Returns per-n residuals |sum_orbits - tr U^n| and
    |primed sum - (tr U^n - tr U_ee^n)| plus the truncated N_osc built
    from primitive orbits with at least one oscillatory edge.
    """
    orbits = enumerate_primitive_orbits(graph, n_max, cap=cap)
    bundle = assemble(graph, E, eps=eps)
    contribs = orbit_contributions(graph, bundle, orbits)

    tr_U = []
    tr_Uee = []
    M = np.eye(bundle.n, dtype=complex)
    ev = bundle.ev
    Mee = np.eye(ev.size, dtype=complex)
    U_ee = bundle.U_ee
    for _ in range(n_max):
        M = M @ bundle.U
        tr_U.append(np.trace(M))
        Mee = Mee @ U_ee if ev.size else Mee
        tr_Uee.append(np.trace(Mee) if ev.size else 0.0 + 0j)

    residuals = []
    for n in range(1, n_max + 1):
        total = 0.0 + 0j
        total_ev = 0.0 + 0j
        primed = 0.0 + 0j
        for oc in contribs:
            if n % oc.orbit.n_p:
                continue
            term = oc.orbit.n_p * oc.factor ** (n // oc.orbit.n_p)
            total += term
            if oc.classification == "pure_ev":
                total_ev += term
            else:
                primed += term
        residuals.append({
            "n": n,
            "full_residual": float(abs(total - tr_U[n - 1])),
            "ev_residual": float(abs(total_ev - tr_Uee[n - 1])),
            "primed_residual": float(abs(primed - (tr_U[n - 1] - tr_Uee[n - 1]))),
        })

    n_osc_trunc = 0.0
    for oc in contribs:
        if oc.classification == "pure_ev":
            continue
        f = oc.factor
        for r in range(1, r_max + 1):
            term = (f ** r) / r
            n_osc_trunc += float(np.imag(term)) / np.pi
            if abs(term) < 1e-16:
                break
    return {"residuals": residuals, "n_osc_truncated": n_osc_trunc,
            "orbits": contribs}


def evanescent_correction_series(bundle, r_max=20, tol=1e-8):
    """Expansion of the two evanescent log-det terms of the mean part.

    Returns the leading term (1/2pi) Im log det(-(U^{-1})_ee), the series
    terms (1/2pi r)(tr U_ee^r - tr (U^{-1})_ee^{-r}), their partial sums and
    the exact log-det pair difference.  Raises SeriesNotConverged when the
    r_max partial sum misses the exact value by more than ``tol``.
    """
    m = bundle.ev.size
    if m == 0:
        return {"leading": 0.0, "terms": [], "partial_sums": [], "exact": 0.0}
    # W = ((U^{-1})_ee)^{-1}, the Schur complement: small entries below threshold
    W = bundle.U_ee - bundle.U_eo @ np.linalg.solve(bundle.U_oo, bundle.U_oe)
    sW, _ = np.linalg.slogdet(W)
    leading = float(np.angle((-1.0) ** m * np.conj(sW))) / (2.0 * np.pi)

    terms = []
    Wp = np.eye(m, dtype=complex)
    Ep = np.eye(m, dtype=complex)
    for r in range(1, r_max + 1):
        Wp = Wp @ W
        Ep = Ep @ bundle.U_ee
        terms.append(float(np.imag(np.trace(Ep) - np.trace(Wp))) / (2.0 * np.pi * r))
    partial = leading + np.cumsum(terms)

    _, t4_arg = logdet(np.eye(m, dtype=complex) - bundle.U_ee)
    _, tW_arg = logdet(np.eye(m, dtype=complex) - W)
    exact = leading + (tW_arg - t4_arg) / (2.0 * np.pi)
    if abs(partial[-1] - exact) > tol:
        raise SeriesNotConverged(
            f"series off by {abs(partial[-1] - exact):.3e} at r_max={r_max}"
        )
    return {"leading": leading, "terms": terms,
            "partial_sums": list(partial), "exact": float(exact)}
