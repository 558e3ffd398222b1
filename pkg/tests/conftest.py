"""Shared fixtures: paper configurations, random graph generators and the
closed-form oracle for an interval with a potential step."""

import importlib.resources

import numpy as np
import pytest
from scipy.optimize import brentq

from qgspectra import build_graph, load_graph


def config_path(name):
    return str(importlib.resources.files("qgspectra") / "configs" / f"{name}.json")


@pytest.fixture(scope="session")
def interval_graph():
    return load_graph(config_path("interval_fig1"))


@pytest.fixture(scope="session")
def star2_graph():
    return load_graph(config_path("star3_fig2"))


@pytest.fixture(scope="session")
def star3_l005_graph():
    return load_graph(config_path("star3_fig3_l005"))


@pytest.fixture(scope="session")
def star3_l002_graph():
    return load_graph(config_path("star3_fig3_l002"))


def rand_unitary(rng, d):
    X = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    Q, R = np.linalg.qr(X)
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def matching_from_unitary(S):
    """A = i(I - S), B = I + S is always a valid self-adjoint pair with
    sigma(I) = S exactly."""
    d = S.shape[0]
    return 1j * (np.eye(d) - S), np.eye(d) + S


def cplx(M):
    return [[[z.real, z.imag] for z in row] for row in np.asarray(M, dtype=complex)]


def random_graph(rng, n_v_max=5, n_e_max=8, v_max=30.0):
    """Connected random multigraph with random unitary-generated matchings."""
    n_v = int(rng.integers(2, n_v_max + 1))
    n_e = int(rng.integers(n_v - 1, n_e_max + 1))
    edges = [(int(rng.integers(0, v)), v) for v in range(1, n_v)]
    while len(edges) < n_e:
        u, v = rng.integers(0, n_v, 2)
        if u != v:
            edges.append((int(u), int(v)))
    deg = [0] * n_v
    for u, v in edges:
        deg[u] += 1
        deg[v] += 1
    verts = []
    for v in range(n_v):
        A, B = matching_from_unitary(rand_unitary(rng, deg[v]))
        verts.append({"id": v, "matching": {"A": cplx(A), "B": cplx(B)}})
    espec = [
        {"id": i, "from": u, "to": v,
         "length": float(rng.uniform(0.3, 2.0)),
         "potential": float(rng.uniform(0.0, v_max))}
        for i, (u, v) in enumerate(edges)
    ]
    return build_graph({"vertices": verts, "edges": espec})


def step_interval_spec(L1, L2, V):
    return {
        "vertices": [
            {"id": "a", "matching": {"kind": "dirichlet"}},
            {"id": "m", "matching": {"kind": "continuity_step"}},
            {"id": "b", "matching": {"kind": "dirichlet"}},
        ],
        "edges": [
            {"id": "e1", "from": "a", "to": "m", "length": float(L1), "potential": 0.0},
            {"id": "e2", "from": "m", "to": "b", "length": float(L2), "potential": float(V)},
        ],
    }


def step_interval_oracle(L1, L2, V, E_lo, E_hi, n_scan=20000):
    """Eigenvalues of -phi'' + V*theta(x - L1) phi on [0, L1+L2] with
    Dirichlet ends, from the transcendental secular equation by bisection."""

    def f(E):
        k1 = np.sqrt(E)
        if E > V:
            k2 = np.sqrt(E - V)
            return (k1 * np.cos(k1 * L1) * np.sin(k2 * L2)
                    + k2 * np.sin(k1 * L1) * np.cos(k2 * L2))
        kap = np.sqrt(V - E)
        return (k1 * np.cos(k1 * L1) * np.sinh(kap * L2)
                + kap * np.sin(k1 * L1) * np.cosh(kap * L2))

    Es = np.linspace(E_lo, E_hi, n_scan)
    Es = Es[np.abs(Es - V) > 1e-6 * (1 + V)]
    vals = np.array([f(E) for E in Es])
    roots = []
    for a, b, fa, fb in zip(Es[:-1], Es[1:], vals[:-1], vals[1:]):
        if fa * fb < 0 and not (a < V < b):
            roots.append(brentq(f, a, b, xtol=1e-14, rtol=8.9e-16))
    return np.array(roots)
