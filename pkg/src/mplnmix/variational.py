"""Per-observation variational Gaussian approximation.

Each observation i and component g carries a Gaussian site q(theta_ig) =
N(m_ig, S_ig). The ELBO for one observation is maximized by alternating a
fixed-point update for S with a safeguarded Newton update for m; both steps
have closed forms because the Poisson term is coordinate-wise.

The module exposes a scalar API (one site at a time) plus batch routines that
the fitting engine uses to process all observations of a component at once.
The batch path special-cases diagonal latent covariances, where every update
is coordinate-wise and no matrix inversion is needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .exceptions import DegenerateObservationError, InvalidParameterError
from .model import Component, CountMatrix, MixtureParams, check_spd

_EXP_CLIP = 700.0  # exp argument beyond which doubles overflow
_GRAD_TOL = 1e-6
_MAX_BACKTRACK = 10


@dataclass
class VariationalSite:
    """Gaussian approximation N(m, S) for one (observation, component) pair."""

    m: np.ndarray
    S: np.ndarray

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=float).ravel()
        self.S = np.asarray(self.S, dtype=float)
        if self.S.shape != (self.m.size, self.m.size):
            raise InvalidParameterError("site m and S dimensions disagree")


@dataclass
class VariationalState:
    """All n x G sites plus the responsibility matrix."""

    m: np.ndarray  # (n, G, d)
    S: np.ndarray  # (n, G, d, d)
    resp: np.ndarray  # (n, G)

    @property
    def n(self) -> int:
        return self.m.shape[0]

    @property
    def G(self) -> int:
        return self.m.shape[1]

    def site(self, i: int, g: int) -> VariationalSite:
        return VariationalSite(self.m[i, g].copy(), self.S[i, g].copy())

    def copy(self) -> "VariationalState":
        return VariationalState(self.m.copy(), self.S.copy(), self.resp.copy())


@dataclass
class InnerResult:
    site: VariationalSite
    converged: bool
    iterations: int


def elbo_batch(Y, M, S, mu, sigma, sigma_inv=None, logdet_sigma=None):
    """ELBO F(q_ig, y_i) for a batch of observations against one component.

    Y, M: (n, d); S: (n, d, d); mu: (d,); sigma: (d, d). Returns (n,).
    """
    Y = np.asarray(Y, dtype=float)
    d = mu.shape[0]
    if sigma_inv is None:
        sigma_inv = np.linalg.inv(sigma)
    if logdet_sigma is None:
        logdet_sigma = np.linalg.slogdet(sigma)[1]
    dM = M - mu
    quad = np.einsum("ni,ij,nj->n", dM, sigma_inv, dM)
    trace = np.einsum("ij,nji->n", sigma_inv, S)
    sign, logdet_S = np.linalg.slogdet(S)
    logdet_S = np.where(sign > 0, logdet_S, -np.inf)
    Sd = np.einsum("nii->ni", S)
    with np.errstate(over="ignore"):
        pois = np.exp(M + 0.5 * Sd)
    # The +d/2 constant comes from the Gaussian entropy/cross-entropy pair:
    # -E_q[log q] contributes +d/2 log(2*pi) + 1/2 log|S| + d/2 while
    # E_q[log prior] contributes -d/2 log(2*pi) - ... Without it the bound
    # sits exactly d/2 below log f(y) at the optimum.
    return (
        0.5 * logdet_S
        - 0.5 * quad
        - 0.5 * trace
        - 0.5 * logdet_sigma
        + 0.5 * d
        + np.sum(M * Y, axis=1)
        - np.sum(pois + gammaln(Y + 1.0), axis=1)
    )


def elbo_obs(y, site: VariationalSite, comp: Component) -> float:
    """ELBO for a single observation; validates SPD preconditions."""
    check_spd(site.S, "S")
    check_spd(comp.sigma, "sigma")
    y = np.asarray(y, dtype=float).ravel()
    return float(
        elbo_batch(y[None, :], site.m[None, :], site.S[None, :, :], comp.mu, comp.sigma)[0]
    )


def update_S(site: VariationalSite, comp: Component) -> np.ndarray:
    """Fixed-point update S' = (Sigma^-1 + Diag(exp(m + diag(S)/2)))^-1."""
    check_spd(site.S, "S")
    sigma = check_spd(comp.sigma, "sigma")
    rate = np.exp(np.clip(site.m + 0.5 * np.diag(site.S), None, _EXP_CLIP))
    prec = np.linalg.inv(sigma) + np.diag(rate)
    S_new = np.linalg.inv(prec)
    return 0.5 * (S_new + S_new.T)


def update_m(site: VariationalSite, S_new: np.ndarray, comp: Component, y) -> np.ndarray:
    """Newton update m' = m - S'[exp(m + diag(S')/2) + Sigma^-1(m - mu) - y]."""
    S_new = check_spd(S_new, "S_new")
    sigma = check_spd(comp.sigma, "sigma")
    y = np.asarray(y, dtype=float).ravel()
    bracket = (
        np.exp(np.clip(site.m + 0.5 * np.diag(S_new), None, _EXP_CLIP))
        + np.linalg.solve(sigma, site.m - comp.mu)
        - y
    )
    return site.m - S_new @ bracket


def _elbo_m_part_dense(Y, M, Sd, mu, sigma_inv):
    # Terms of the ELBO that depend on m, with S held fixed.
    dM = M - mu
    quad = np.einsum("ni,ij,nj->n", dM, sigma_inv, dM)
    with np.errstate(over="ignore"):
        pois = np.exp(M + 0.5 * Sd)
    return -0.5 * quad + np.sum(M * Y, axis=1) - np.sum(pois, axis=1)


def _elbo_m_part_diag(Y, M, Sd, mu, prec_diag):
    dM = M - mu
    quad = np.sum(dM * dM * prec_diag, axis=1)
    with np.errstate(over="ignore"):
        pois = np.exp(M + 0.5 * Sd)
    return -0.5 * quad + np.sum(M * Y, axis=1) - np.sum(pois, axis=1)


def _is_diagonal(sigma: np.ndarray) -> bool:
    return np.count_nonzero(sigma - np.diag(np.diag(sigma))) == 0


def optimize_sites(Y, mu, sigma, M0, S0, tol=_GRAD_TOL, max_iter=50):
    """Optimize all sites of one component in a batch.

    Y: (n, d) counts; mu, sigma: component parameters; M0: (n, d) initial
    means; S0: (n, d, d) initial covariances. Alternates the S fixed point and
    a backtracking Newton step on m, freezing rows once their gradient
    residual and last step both fall below ``tol``.

    Returns (M, S, elbo, iterations, converged) where elbo is the per-row
    ELBO at the returned sites and converged is a boolean row mask.
    """
    Y = np.asarray(Y, dtype=float)
    n, d = Y.shape
    diagonal = _is_diagonal(sigma)
    sigma_inv = np.linalg.inv(sigma)
    logdet_sigma = np.linalg.slogdet(sigma)[1]
    prec_diag = np.diag(sigma_inv) if diagonal else None

    M = np.array(M0, dtype=float)
    Sd = np.einsum("nii->ni", np.asarray(S0, dtype=float)).copy()
    S_full = np.array(S0, dtype=float) if not diagonal else None

    converged = np.zeros(n, dtype=bool)
    iterations = 0
    for it in range(max_iter):
        active = ~converged
        if not active.any():
            break
        iterations = it + 1
        Ma, Sda, Ya = M[active], Sd[active], Y[active]

        rate = np.exp(np.clip(Ma + 0.5 * Sda, None, _EXP_CLIP))
        if diagonal:
            Sd_new = 1.0 / (prec_diag + rate)
            grad = Ya - np.exp(np.clip(Ma + 0.5 * Sd_new, None, _EXP_CLIP)) - (Ma - mu) * prec_diag
            step = Sd_new * grad
            f_old = _elbo_m_part_diag(Ya, Ma, Sd_new, mu, prec_diag)
        else:
            prec = sigma_inv[None, :, :] + rate[:, None, :] * np.eye(d)
            S_new = np.linalg.inv(prec)
            S_new = 0.5 * (S_new + np.transpose(S_new, (0, 2, 1)))
            Sd_new = np.einsum("nii->ni", S_new)
            grad = Ya - np.exp(np.clip(Ma + 0.5 * Sd_new, None, _EXP_CLIP)) - (Ma - mu) @ sigma_inv
            step = np.einsum("nij,nj->ni", S_new, grad)
            f_old = _elbo_m_part_dense(Ya, Ma, Sd_new, mu, sigma_inv)

        # Backtracking Newton: halve any row whose step decreases the ELBO.
        alpha = np.ones(len(Ma))
        M_new = Ma + step
        for _ in range(_MAX_BACKTRACK):
            if diagonal:
                f_new = _elbo_m_part_diag(Ya, M_new, Sd_new, mu, prec_diag)
            else:
                f_new = _elbo_m_part_dense(Ya, M_new, Sd_new, mu, sigma_inv)
            bad = f_new < f_old
            if not bad.any():
                break
            alpha[bad] *= 0.5
            M_new[bad] = Ma[bad] + alpha[bad, None] * step[bad]

        resid = np.abs(
            np.exp(np.clip(M_new + 0.5 * Sd_new, None, _EXP_CLIP))
            + ((M_new - mu) * prec_diag if diagonal else (M_new - mu) @ sigma_inv)
            - Ya
        ).max(axis=1)
        delta = np.maximum(
            np.abs(M_new - Ma).max(axis=1), np.abs(Sd_new - Sda).max(axis=1)
        )

        M[active] = M_new
        Sd[active] = Sd_new
        if not diagonal:
            S_full[active] = S_new
        done = (resid < tol) & (delta < tol)
        idx = np.flatnonzero(active)
        converged[idx[done]] = True

    if diagonal:
        S_full = np.zeros((n, d, d))
        ii = np.arange(d)
        S_full[:, ii, ii] = Sd

    elbo = elbo_batch(Y, M, S_full, mu, sigma, sigma_inv, logdet_sigma)
    return M, S_full, elbo, iterations, converged


def inner_optimize(y, comp: Component, init: VariationalSite, tol=_GRAD_TOL, max_iter=50) -> InnerResult:
    """Optimize a single site to stationarity of its ELBO."""
    check_spd(init.S, "S")
    check_spd(comp.sigma, "sigma")
    y = np.asarray(y, dtype=float).ravel()
    M, S, _, iters, conv = optimize_sites(
        y[None, :], comp.mu, comp.sigma, init.m[None, :], init.S[None, :, :],
        tol=tol, max_iter=max_iter,
    )
    return InnerResult(VariationalSite(M[0], S[0]), bool(conv[0]), iters)


def log_mixture_weights(F: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """log(pi_g) + F_ig with shape (n, G)."""
    return np.log(weights)[None, :] + F


def responsibilities_from_elbo(F: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Responsibilities via max-subtraction log-sum-exp; rows sum to 1."""
    logw = log_mixture_weights(F, weights)
    m = logw.max(axis=1)
    bad = ~np.isfinite(m)
    if bad.any():
        raise DegenerateObservationError(int(np.flatnonzero(bad)[0]))
    z = np.exp(logw - m[:, None])
    return z / z.sum(axis=1, keepdims=True)


def mixture_loglik(F: np.ndarray, weights: np.ndarray) -> float:
    """Approximate mixture log-likelihood sum_i log sum_g pi_g exp(F_ig)."""
    logw = log_mixture_weights(F, weights)
    m = logw.max(axis=1)
    return float(np.sum(m + np.log(np.sum(np.exp(logw - m[:, None]), axis=1))))


def responsibilities(Y: CountMatrix, params: MixtureParams, state: VariationalState) -> np.ndarray:
    """E-step: zhat_ig = pi_g exp(F_ig) / sum_h pi_h exp(F_ih)."""
    Yv = Y.values if isinstance(Y, CountMatrix) else np.asarray(Y)
    n = Yv.shape[0]
    F = np.empty((n, params.G))
    for g, comp in enumerate(params.components):
        F[:, g] = elbo_batch(Yv, state.m[:, g], state.S[:, g], comp.mu, comp.sigma)
    return responsibilities_from_elbo(F, params.weights)


def init_state(Y, G: int) -> VariationalState:
    """Fresh-fit site initialization: m = log(y + 0.5), S = 0.1 I."""
    Yv = Y.values if isinstance(Y, CountMatrix) else np.asarray(Y)
    n, d = Yv.shape
    m = np.log(Yv + 0.5)
    M = np.repeat(m[:, None, :], G, axis=1)
    S = np.zeros((n, G, d, d))
    ii = np.arange(d)
    S[:, :, ii, ii] = 0.1
    resp = np.full((n, G), 1.0 / G)
    return VariationalState(M, S, resp)
