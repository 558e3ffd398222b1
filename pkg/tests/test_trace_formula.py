import numpy as np
import pytest

from qgspectra import (
    OrbitBudgetExceeded,
    SeriesNotConverged,
    assemble,
    build_graph,
    enumerate_primitive_orbits,
    evanescent_correction_series,
    find_eigenvalues,
    mean_counting,
    orbit_sum,
    oscillatory_counting,
    star_reduce,
)
from qgspectra.spectra import default_floor, nudge_off_thresholds
from qgspectra.trace_formula import (
    calibrate_constant,
    orbit_contributions,
    trace_sweep,
)

from conftest import step_interval_spec

V_STEP = 213.0
L2 = np.sqrt(3.0)


@pytest.fixture(scope="module")
def interval_spectral(interval_graph):
    return find_eigenvalues(interval_graph, default_floor(interval_graph), 420.0)


def test_calibration_constant_is_zero_both_modes(interval_graph):
    # with the principal-product branch of det S the interval needs no offset
    assert abs(calibrate_constant(interval_graph, 400.0, mode="above_threshold")) < 1e-3
    assert abs(calibrate_constant(interval_graph, 400.0, mode="reduced")) < 1e-3


def test_mean_at_closed_form(interval_graph, interval_spectral):
    # above threshold: N_mean = L1 sqrt(E)/pi + L2 sqrt(E-V)/pi - 1/2
    energies = np.linspace(220.0, 400.0, 50)
    reps = trace_sweep(interval_graph, energies, mode="above_threshold",
                       spectral=interval_spectral)
    for r in reps:
        pred = (np.sqrt(r.E) + L2 * np.sqrt(r.E - V_STEP)) / np.pi - 0.5
        assert abs(r.N_mean - pred - r.c) < 1e-6


def test_mean_term_far_below_threshold(interval_graph):
    # the evanescent log-det pair reduces to a single arctan-type term
    for E in [5.0, 20.0, 60.0]:
        b = assemble(interval_graph, E)
        nm = mean_counting(b)
        k1, kap = np.sqrt(E), np.sqrt(V_STEP - E)
        extra = np.angle((kap + 1j * k1) / (kap - 1j * k1)) / (2 * np.pi)
        assert 0.0 <= extra <= 0.5
        weyl = k1 / np.pi
        # det S phase contributes -1/2 on this graph
        assert abs(nm - (weyl - 0.5 + extra)) < 1e-6


def test_osc_split_moves_to_mean(interval_graph):
    # N_red,osc - N_at,osc = (1/pi) Im log(1 - U22) of the 2x2 edge map
    for E in [10.0, 80.0, 170.0]:
        eps = 1e-8 * (1 + E)
        b_red = assemble(interval_graph, E, eps=eps)
        b_at = assemble(interval_graph, E, eps=eps,
                        fixed_partition_below=np.inf)
        Ut = star_reduce(assemble(interval_graph, E))
        diff = oscillatory_counting(b_red) - oscillatory_counting(b_at)
        pred = np.angle(1 - Ut[1, 1]) / np.pi
        assert abs(diff - pred) < 1e-6


def test_staircase_200_random_energies(interval_graph, star2_graph,
                                       star3_l005_graph):
    rng = np.random.default_rng(99)
    for g, hi in [(interval_graph, 400.0), (star2_graph, 400.0),
                  (star3_l005_graph, 60.0)]:
        spectral = find_eigenvalues(g, default_floor(g), hi + 5.0)
        levels = spectral.energies()
        energies = []
        while len(energies) < 200:
            E = rng.uniform(default_floor(g) + 0.5, hi)
            if np.min(np.abs(levels - E)) > 1e-3:
                energies.append(E)
        reps = trace_sweep(g, np.sort(energies), mode="reduced",
                           spectral=spectral)
        for r in reps:
            assert not r.flagged
            assert round(r.N_total) == r.N_exact
            assert abs(r.N_total - r.N_exact) < 0.5


def test_total_sum_invariance_across_modes(star2_graph):
    spectral = find_eigenvalues(star2_graph, default_floor(star2_graph), 420.0)
    rng = np.random.default_rng(17)
    energies = np.sort(rng.uniform(200.0, 400.0, 40))
    grid = np.unique(np.concatenate([np.linspace(199.0, 400.0, 150), energies]))
    mask = np.isin(grid, energies)
    totals, means = {}, {}
    for name, mode, E0 in [("red", "reduced", None),
                           ("at", "above_threshold", None),
                           ("fp2", "fixed_partition", 1.0),
                           ("fp4", "fixed_partition", 150.0)]:
        reps = trace_sweep(star2_graph, grid, mode=mode,
                           fixed_partition_below=E0, eps=1e-10,
                           spectral=spectral)
        totals[name] = np.array([r.N_total for r in reps])[mask]
        means[name] = np.array([r.N_mean for r in reps])[mask]
    for name in ["at", "fp2", "fp4"]:
        assert np.max(np.abs(totals[name] - totals["red"])) < 1e-8
    # the splits genuinely differ
    assert np.max(np.abs(means["fp2"] - means["red"])) > 1e-2


def test_eps_insensitivity_away_from_eigenvalues(interval_graph,
                                                 interval_spectral):
    levels = interval_spectral.energies()
    rng = np.random.default_rng(3)
    energies = []
    while len(energies) < 20:
        E = rng.uniform(5.0, 400.0)
        if np.min(np.abs(levels - E)) > 10.0:
            energies.append(E)
    energies = np.sort(energies)
    totals = []
    for scale in [1e-9, 1e-8, 1e-7]:
        reps = [trace_sweep(interval_graph, np.array([E]), mode="reduced",
                            eps=scale * (1 + E), c=0.0,
                            spectral=interval_spectral)[0] for E in energies]
        totals.append(np.array([r.N_total for r in reps]))
    assert np.max(np.abs(totals[0] - totals[2])) < 1e-6


# ---------------------------------------------------------------- orbits


def test_interval_orbit_skeletons(interval_graph):
    seqs = [o.sequence for o in enumerate_primitive_orbits(interval_graph, 4)]
    assert seqs == [(0, 1), (2, 3), (0, 2, 3, 1)]


def test_single_edge_orbits():
    spec = step_interval_spec(1.0, 1.0, 5.0)
    spec["edges"] = [spec["edges"][0]]
    spec["vertices"] = [spec["vertices"][0],
                        {"id": "m", "matching": {"kind": "dirichlet"}}]
    g = build_graph(spec)
    orbits = enumerate_primitive_orbits(g, 8)
    assert [o.sequence for o in orbits] == [(0, 1)]


def test_orbit_canonical_and_connected(star2_graph):
    orbits = enumerate_primitive_orbits(star2_graph, 6)
    for o in orbits:
        seq = o.sequence
        rotations = [seq[i:] + seq[:i] for i in range(len(seq))]
        assert seq == min(rotations)
        for j, cur in enumerate(seq):
            nxt = seq[(j + 1) % len(seq)]
            assert star2_graph.tail(nxt) == star2_graph.head(cur)


def test_orbit_amplitude_matches_map_entries(star2_graph):
    E = nudge_off_thresholds(57.0, star2_graph)
    b = assemble(star2_graph, E)
    orbits = enumerate_primitive_orbits(star2_graph, 6)
    for oc in orbit_contributions(star2_graph, b, orbits):
        prod = 1.0 + 0j
        seq = oc.orbit.sequence
        for j, cur in enumerate(seq):
            prod *= b.U[seq[(j + 1) % len(seq)], cur]
        assert abs(oc.factor - prod) < 1e-12 * (1 + abs(prod))
        # damping of evanescent traversals
        im_w = sum(abs(b.K.K[cur].imag) * star2_graph.lengths_directed()[cur]
                   for cur in seq if cur in set(b.ev))
        assert abs(oc.W_p.imag - im_w) < 1e-12
        if oc.classification == "pure_osc":
            assert abs(oc.W_p.imag) < 1e-12


def test_orbit_sum_trace_oracle(interval_graph, star2_graph):
    for g, E in [(interval_graph, 57.3), (star2_graph, 160.7)]:
        res = orbit_sum(g, E, 8)
        for row in res["residuals"]:
            assert row["full_residual"] < 1e-9
            assert row["primed_residual"] < 1e-9
            assert row["ev_residual"] < 1e-9


def test_orbit_budget():
    # 2 vertices, 4 parallel edges: the walk tree blows past a small cap
    spec = {"vertices": [{"id": "a", "matching": {"kind": "neumann"}},
                         {"id": "b", "matching": {"kind": "neumann"}}],
            "edges": [{"id": i, "from": "a", "to": "b",
                       "length": 1.0 + 0.1 * i, "potential": 0.0}
                      for i in range(4)]}
    g = build_graph(spec)
    with pytest.raises(OrbitBudgetExceeded):
        enumerate_primitive_orbits(g, 12, cap=2000)


# ----------------------------------------------------------- ev series


def test_series_interval_e50(interval_graph):
    b = assemble(interval_graph, 50.0)
    out = evanescent_correction_series(b, r_max=20, tol=1e-10)
    assert abs(out["partial_sums"][-1] - out["exact"]) < 1e-10
    # terms decay like e^{-2 r sqrt(V-E) L2}
    t = np.abs(np.array(out["terms"]))
    t = t[t > 0]
    if len(t) > 2:
        assert t[1] < t[0]


def test_series_not_converged_near_threshold(interval_graph):
    b = assemble(interval_graph, 212.5)
    with pytest.raises(SeriesNotConverged):
        evanescent_correction_series(b, r_max=1)


def test_series_empty_above_threshold(interval_graph):
    b = assemble(interval_graph, 300.0)
    out = evanescent_correction_series(b, r_max=5)
    assert out["terms"] == [] and out["leading"] == 0.0
