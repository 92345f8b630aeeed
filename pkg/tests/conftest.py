"""Shared fixtures: standard model triples and pre-solved populations.

Session-scoped populations are expensive to build; tests must treat them
as read-only (copy before mutating).
"""

from __future__ import annotations

import numpy as np
import pytest

from sparsespike import analytic, ensembles, graphgen, popdyn
from sparsespike.cli import derive_rng


@pytest.fixture(scope="session")
def poisson_models():
    return (
        ensembles.truncated_poisson(4.0, 20),
        ensembles.constant_weight(1.0),
        ensembles.gaussian_spike(1.0),
    )


@pytest.fixture(scope="session")
def rr_models():
    return (
        ensembles.regular(4),
        ensembles.constant_weight(1.0),
        ensembles.gaussian_spike(1.0),
    )


@pytest.fixture(scope="session")
def poisson_solved(poisson_models):
    """Poisson c=4, k_max=20, theta=6 population, warm-started from the
    resolvent route; moderate size for unit-test speed."""
    dm, wm, sm = poisson_models
    theta = 6.0
    lam = analytic.lambda_signal(theta, dm, wm, sm)
    q = float(np.sqrt(analytic.overlap_sq(theta, dm, wm, sm)))
    config = popdyn.PopDynConfig(n_pop=50_000, alpha_samples=400_000)
    pop, q_out, lam_out, diag = popdyn.solve(
        theta, dm, wm, sm, config, np.random.default_rng(1234), warm_start=(lam, q)
    )
    return {"pop": pop, "lambda_analytic": lam, "q_analytic": q, "diag": diag, "theta": theta}


@pytest.fixture(scope="session")
def rr_solved(rr_models):
    """Random-regular c=4, theta=4 population at the closed-form parameters."""
    dm, wm, sm = rr_models
    rep = analytic.rr_report(4, 1.0, 4.0)
    config = popdyn.PopDynConfig(n_pop=20_000, alpha_samples=200_000)
    pop, q_out, lam_out, diag = popdyn.solve(
        4.0, dm, wm, sm, config, np.random.default_rng(77),
        warm_start=(rep.lambda_top, float(np.sqrt(rep.overlap_sq))),
    )
    return {"pop": pop, "report": rep, "diag": diag}


def make_instance(degree_model, weight_model, spike_model, n, theta, seed, index=0):
    """Full instance build with the production seed-derivation scheme."""
    degrees = ensembles.sample_degree_sequence(degree_model, n, derive_rng(seed, index, "degrees"))
    graph = graphgen.configuration_model(degrees, derive_rng(seed, index, "graph"))
    graph = graphgen.assign_weights(graph, weight_model, derive_rng(seed, index, "weights"))
    return graphgen.assemble_spiked(graph, spike_model, theta, derive_rng(seed, index, "spike"))


@pytest.fixture(scope="session")
def instance_factory():
    return make_instance
