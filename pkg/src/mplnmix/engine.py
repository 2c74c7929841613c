"""Variational EM orchestration: initialization, outer loop, model selection.

One outer iteration runs three coordinate-ascent passes in order:
responsibilities (E-step), per-site variational optimization, then the M-step
for weights, means, and constrained covariances. The approximate mixture
log-likelihood sum_i log sum_g pi_g exp(F_ig) is recorded once per iteration
(right after the E-step) and drives both Aitken-based convergence and BIC.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import covariance, variational
from .exceptions import (
    ComponentCollapseError,
    GridFailureError,
    InitializationError,
    InvalidParameterError,
    MplnError,
    NumericalFailureError,
)
from .model import Component, CountMatrix, MixtureParams, count_free_params, COVARIANCE_MODELS

_COLLAPSE_REL = 1e-10


@dataclass
class FitConfig:
    """Knobs for a grid search; defaults follow the reference setup."""

    g_values: tuple = (1, 2, 3)
    models: tuple = COVARIANCE_MODELS
    epsilon: float = 0.001
    max_outer: int = 500
    inner_tol: float = 1e-6
    small_em_starts: int = 20
    small_em_iters: int = 20
    seed: int = 0

    def __post_init__(self):
        self.g_values = tuple(int(g) for g in self.g_values)
        self.models = tuple(self.models)
        if not self.g_values or any(g < 1 for g in self.g_values):
            raise InvalidParameterError("g_values must be non-empty positive integers")
        if self.epsilon <= 0:
            raise InvalidParameterError("epsilon must be > 0")
        if self.small_em_starts < 1:
            raise InvalidParameterError("small_em_starts must be >= 1")
        for m in self.models:
            if m not in COVARIANCE_MODELS:
                raise InvalidParameterError(f"unknown covariance model {m!r}")


@dataclass
class FitResult:
    params: MixtureParams
    state: variational.VariationalState
    labels: np.ndarray
    elbo_trace: list
    bic: float
    converged: bool
    iterations: int


@dataclass
class GridCell:
    G: int
    model: str
    bic: float | None
    loglik: float | None
    iterations: int | None
    converged: bool | None
    error: str | None = None
    result: FitResult | None = None


def aitken_stop(l_prev2, l_prev, l_curr, epsilon, linf_prev=None):
    """Aitken-accelerated convergence decision.

    Returns (stop, linf_curr). The extrapolated limit is
    linf = l_prev + (l_curr - l_prev) / (1 - a) with
    a = (l_curr - l_prev) / (l_prev - l_prev2); convergence holds when
    0 <= linf_curr - linf_prev < epsilon. Degenerate denominators or a >= 1
    fall back to the plain difference criterion l_curr - l_prev < epsilon.
    """
    denom = l_prev - l_prev2
    if abs(denom) < 1e-12:
        return (l_curr - l_prev < epsilon), linf_prev
    a = (l_curr - l_prev) / denom
    if a >= 1.0:
        return (l_curr - l_prev < epsilon), linf_prev
    linf_curr = l_prev + (l_curr - l_prev) / (1.0 - a)
    if linf_prev is None:
        return False, linf_curr
    diff = linf_curr - linf_prev
    return (0.0 <= diff < epsilon), linf_curr


def bic(loglik: float, psi: int, n: int) -> float:
    """BIC = -2 loglik + psi log(n); smaller is better."""
    return -2.0 * loglik + psi * math.log(n)


def _counts(Y) -> np.ndarray:
    return Y.values if isinstance(Y, CountMatrix) else CountMatrix(np.asarray(Y)).values


def _component_elbos(Yv, params, state):
    n, G = Yv.shape[0], params.G
    F = np.empty((n, G))
    for g, comp in enumerate(params.components):
        F[:, g] = variational.elbo_batch(Yv, state.m[:, g], state.S[:, g], comp.mu, comp.sigma)
    return F


def _m_step(Yv, resp, state, model, iteration, prev_sigmas=None):
    n, G = resp.shape
    n_g = resp.sum(axis=0)
    collapsed = np.flatnonzero(n_g < _COLLAPSE_REL * n)
    if collapsed.size:
        raise ComponentCollapseError(int(collapsed[0]), iteration)
    weights = n_g / n
    mus = np.einsum("ng,ngd->gd", resp, state.m) / n_g[:, None]
    scatters = [
        covariance.sample_cov(resp[:, g], state.m[:, g], state.S[:, g], mus[g])
        for g in range(G)
    ]
    sigmas = covariance.mstep_cov(model, scatters, prev_sigmas=prev_sigmas)
    comps = tuple(Component(mus[g], sigmas[g]) for g in range(G))
    return MixtureParams(weights, comps, model)


def _em_loop(Yv, params, state, model, max_iters, epsilon, inner_tol, use_aitken=True):
    """Shared outer loop; returns (params, state, trace, converged, iterations)."""
    trace: list[float] = []
    linf_prev = None
    converged = False
    iterations = 0
    for it in range(max_iters):
        F = _component_elbos(Yv, params, state)
        resp = variational.responsibilities_from_elbo(F, params.weights)
        ll = variational.mixture_loglik(F, params.weights)
        if not np.isfinite(ll):
            raise NumericalFailureError(
                f"non-finite approximate log-likelihood at outer iteration {it}", it
            )
        trace.append(ll)
        state.resp = resp
        if use_aitken and len(trace) >= 3:
            stop, linf_prev = aitken_stop(trace[-3], trace[-2], trace[-1], epsilon, linf_prev)
            if stop:
                converged = True
                break
        iterations = it + 1
        for g, comp in enumerate(params.components):
            M, S, _, _, _ = variational.optimize_sites(
                Yv, comp.mu, comp.sigma, state.m[:, g], state.S[:, g], tol=inner_tol
            )
            state.m[:, g] = M
            state.S[:, g] = S
        params = _m_step(Yv, resp, state, model, it, prev_sigmas=params.sigmas)
    else:
        # Ran out of iterations: refresh responsibilities for the final params.
        F = _component_elbos(Yv, params, state)
        state.resp = variational.responsibilities_from_elbo(F, params.weights)
        trace.append(variational.mixture_loglik(F, params.weights))
    return params, state, trace, converged, iterations


def fit(Y, G: int, model: str, init, config: FitConfig | None = None) -> FitResult:
    """Run variational EM to convergence for one (G, model) cell.

    ``init`` is a (MixtureParams, VariationalState) pair, typically from
    small_em_init. The state is copied, not mutated.
    """
    config = config or FitConfig(g_values=(G,), models=(model,))
    Yv = _counts(Y)
    params, state = init
    if params.G != G or state.G != G or params.d != Yv.shape[1]:
        raise InvalidParameterError("init dimensions do not match (Y, G)")
    state = state.copy()
    params = MixtureParams(params.weights, params.components, model)
    params, state, trace, converged, iterations = _em_loop(
        Yv, params, state, model, config.max_outer, config.epsilon, config.inner_tol
    )
    labels = np.argmax(state.resp, axis=1)
    psi = count_free_params(model, Yv.shape[1], G)[1]
    return FitResult(
        params=params,
        state=state,
        labels=labels,
        elbo_trace=trace,
        bic=bic(trace[-1], psi, Yv.shape[0]),
        converged=converged,
        iterations=iterations,
    )


def _draw_partition(n, G, rng):
    for _ in range(100):
        labels = rng.integers(0, G, size=n)
        if len(np.unique(labels)) == G:
            return labels
    raise InitializationError(f"could not draw a partition of {n} items into {G} non-empty groups")


def _params_from_partition(Yv, labels, state, G):
    n = Yv.shape[0]
    resp = np.zeros((n, G))
    resp[np.arange(n), labels] = 1.0
    return _m_step(Yv, resp, state, "EII", iteration=-1)


def small_em_init(Y, G: int, rng, config: FitConfig | None = None):
    """Best-of-many short EII runs from random partitions.

    Draws ``small_em_starts`` random partitions (one when G == 1), runs
    ``small_em_iters`` outer iterations each, and returns the
    (MixtureParams, VariationalState) pair with the largest approximate
    log-likelihood. Deterministic given the rng state.
    """
    config = config or FitConfig(g_values=(G,))
    Yv = _counts(Y)
    n = Yv.shape[0]
    if G > n:
        raise InvalidParameterError("G cannot exceed the number of observations")
    starts = 1 if G == 1 else config.small_em_starts
    best = None
    failures = []
    for _ in range(starts):
        labels = np.zeros(n, dtype=int) if G == 1 else _draw_partition(n, G, rng)
        state = variational.init_state(Yv, G)
        try:
            params = _params_from_partition(Yv, labels, state, G)
            params, state, trace, _, _ = _em_loop(
                Yv, params, state, "EII", config.small_em_iters,
                config.epsilon, config.inner_tol, use_aitken=False,
            )
        except MplnError as exc:
            # A start whose partition collapses is discarded, not fatal.
            failures.append(str(exc))
            continue
        if best is None or trace[-1] > best[0]:
            best = (trace[-1], params, state)
    if best is None:
        raise InitializationError(
            f"all {starts} small-EM starts failed for G={G}: {failures[-1]}"
        )
    return best[1], best[2]


def _fit_cell(args):
    Yv, G, model, params, state, config = args
    try:
        res = fit(Yv, G, model, (params, state), config)
        return GridCell(G, model, res.bic, res.elbo_trace[-1], res.iterations,
                        res.converged, None, res)
    except MplnError as exc:
        return GridCell(G, model, None, None, None, None, f"{type(exc).__name__}: {exc}")


def grid_search(Y, config: FitConfig, threads: int = 1):
    """Fit every (G, model) cell and pick the smallest BIC.

    One small-EM initialization is computed per G (EII-based) and shared by
    all models at that G. Returns (best FitResult, list of GridCell records
    in grid order). Deterministic given config.seed, regardless of threads.
    """
    Yv = _counts(Y)
    inits = {}
    init_errors = {}
    for G in config.g_values:
        rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed, spawn_key=(G,)))
        try:
            inits[G] = small_em_init(Yv, G, rng, config)
        except MplnError as exc:
            init_errors[G] = f"{type(exc).__name__}: {exc}"
    jobs = [
        (Yv, G, model, inits[G][0], inits[G][1], config)
        for G in config.g_values if G in inits
        for model in config.models
    ]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            fitted = list(pool.map(_fit_cell, jobs))
    else:
        fitted = [_fit_cell(job) for job in jobs]
    by_key = {(c.G, c.model): c for c in fitted}
    cells = [
        by_key[(G, model)] if G in inits
        else GridCell(G, model, None, None, None, None, init_errors[G])
        for G in config.g_values
        for model in config.models
    ]
    ok = [c for c in cells if c.error is None]
    if not ok:
        raise GridFailureError({f"G={c.G},{c.model}": c.error for c in cells})
    best = min(ok, key=lambda c: c.bic)
    return best.result, cells
