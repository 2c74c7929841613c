"""Constrained M-step estimation of component covariances.

Covariances of the latent Gaussian are eigen-decomposed as
sigma_g = lambda_g D_g A_g D_g' (volume, shape, orientation) and constrained
across components into eight structures: EII, VII, EEI, VVI, EEE, VVE, EEV,
VVV. Each structure's weighted Gaussian criterion

    sum_g n_g [ log|sigma_g| + tr(sigma_g^-1 scatter_g) ]

is minimized in closed form, except VVE (shared orientation) which uses an
iterative majorization-minimization step over the orthogonal orientation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateScatterError, InvalidParameterError
from .model import check_spd, validate_covariance_model

_VVE_TOL = 1e-8
_VVE_MAX_ITER = 100
_JITTER_REL = 1e-6
_DEGENERATE_REL = 1e-8


@dataclass
class GroupScatter:
    """Effective size and responsibility-weighted scatter for one group."""

    n_g: float
    sample_cov: np.ndarray

    def __post_init__(self):
        self.sample_cov = np.asarray(self.sample_cov, dtype=float)
        if self.n_g < 0:
            raise InvalidParameterError("effective group size must be >= 0")


@dataclass
class EigenDecomposition:
    """sigma = lambda * D A D' with det(A) = 1, D orthogonal, lambda > 0."""

    lam: float
    A: np.ndarray
    D: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return self.lam * (self.D @ self.A @ self.D.T)


def sample_cov(resp_col, m_sites, S_sites, mu_g) -> GroupScatter:
    """Responsibility-weighted scatter for one group.

    Returns [sum_i z_ig ((m_ig - mu_g)(m_ig - mu_g)' + S_ig)] / sum_i z_ig.
    The site covariance enters with a plus sign: the expected second moment
    of the latent variable under the site is (m - mu)(m - mu)' + S, and a
    minus would not even be positive semi-definite.
    """
    z = np.asarray(resp_col, dtype=float).ravel()
    m = np.atleast_2d(np.asarray(m_sites, dtype=float))
    S = np.asarray(S_sites, dtype=float)
    if S.ndim == 2:
        S = S[None, :, :]
    n_g = z.sum()
    if n_g <= 0:
        raise DegenerateScatterError("group has zero effective size")
    dm = m - np.asarray(mu_g, dtype=float)
    outer = np.einsum("n,ni,nj->ij", z, dm, dm)
    smear = np.einsum("n,nij->ij", z, S)
    cov = (outer + smear) / n_g
    return GroupScatter(n_g, 0.5 * (cov + cov.T))


def decompose(sigma) -> EigenDecomposition:
    """Volume/shape/orientation decomposition of an SPD matrix.

    lambda = det(sigma)^(1/d); A holds the eigenvalues divided by lambda in
    descending order (det A = 1); D the matching orthonormal eigenvectors.
    """
    sigma = check_spd(sigma)
    evals, evecs = np.linalg.eigh(sigma)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    lam = float(np.exp(np.mean(np.log(evals))))
    return EigenDecomposition(lam, np.diag(evals / lam), evecs)


def gaussian_criterion(sigmas, scatters) -> float:
    """Weighted criterion sum_g n_g [log|sigma_g| + tr(sigma_g^-1 scatter_g)]."""
    total = 0.0
    for sigma, sc in zip(sigmas, scatters):
        sign, logdet = np.linalg.slogdet(sigma)
        if sign <= 0:
            return np.inf
        total += sc.n_g * (logdet + np.trace(np.linalg.solve(sigma, sc.sample_cov)))
    return float(total)


def _eigh_desc(mat):
    evals, evecs = np.linalg.eigh(mat)
    order = np.argsort(evals)[::-1]
    return evals[order], evecs[:, order]


def _mstep_vve(scatters, n_total, d, D0=None, trace_out=None):
    """Shared-orientation MM solver.

    Starts from ``D0`` when given (the previous EM iteration's orientation,
    which keeps the outer loop monotone), otherwise from the EEE orientation.
    """
    if D0 is None:
        pooled = sum(sc.n_g * sc.sample_cov for sc in scatters) / n_total
        _, D = _eigh_desc(pooled)
    else:
        D = np.asarray(D0, dtype=float)

    def groups_given_D(D):
        # For fixed D the per-group optimum is sigma_g = D diag(w_g) D'.
        W = [np.diag(D.T @ sc.sample_cov @ D).copy() for sc in scatters]
        return [np.maximum(w, 1e-300) for w in W]

    def crit(D, W):
        return sum(
            sc.n_g * (np.sum(np.log(w)) + np.sum(np.diag(D.T @ sc.sample_cov @ D) / w))
            for sc, w in zip(scatters, W)
        )

    W = groups_given_D(D)
    prev = crit(D, W)
    if trace_out is not None:
        trace_out.append(prev)
    for _ in range(_VVE_MAX_ITER):
        # MM update of D at fixed per-group diagonals: maximize tr(D'F) over
        # orthogonal D, where F majorizes the trace objective.
        F = np.zeros((d, d))
        for sc, w in zip(scatters, W):
            Wg = sc.n_g * sc.sample_cov
            alpha = np.linalg.eigvalsh(Wg).max()
            F += (alpha * np.eye(d) - Wg) @ D @ np.diag(1.0 / w)
        U, _, Vt = np.linalg.svd(F)
        D = U @ Vt
        W = groups_given_D(D)
        cur = crit(D, W)
        if trace_out is not None:
            trace_out.append(cur)
        if prev - cur < _VVE_TOL:
            prev = cur
            break
        prev = cur
    return [D @ np.diag(w) @ D.T for w in W]


def vve_mm_trace(scatters) -> list[float]:
    """Criterion values across VVE MM iterations (for descent diagnostics)."""
    scatters = list(scatters)
    trace: list[float] = []
    _mstep_vve(scatters, sum(sc.n_g for sc in scatters),
               scatters[0].sample_cov.shape[0], trace_out=trace)
    return trace


def _apply_jitter(sigmas):
    out = []
    for sigma in sigmas:
        evals = np.linalg.eigvalsh(sigma)
        if evals.min() < _DEGENERATE_REL * max(evals.max(), 0.0):
            jit = _JITTER_REL * np.mean(np.diag(sigma))
            if not np.isfinite(jit) or jit <= 0:
                raise DegenerateScatterError("scatter produced a non-recoverable singular estimate")
            sigma = sigma + jit * np.eye(sigma.shape[0])
            evals = np.linalg.eigvalsh(sigma)
            if evals.min() <= 0:
                raise DegenerateScatterError("scatter remained singular after jitter")
        out.append(0.5 * (sigma + sigma.T))
    return out


def mstep_cov(model: str, scatters, prev_sigmas=None) -> list[np.ndarray]:
    """Constrained covariance M-step for all eight structures.

    Returns one SPD matrix per group minimizing the weighted Gaussian
    criterion within the structure class. Near-singular estimates receive a
    diagonal jitter of 1e-6 x the mean diagonal entry. ``prev_sigmas`` (the
    current covariance estimates) warm-starts the VVE orientation search so
    the iterative step never undoes progress; the closed-form models ignore it.
    """
    validate_covariance_model(model)
    scatters = list(scatters)
    G = len(scatters)
    d = scatters[0].sample_cov.shape[0]
    n_total = sum(sc.n_g for sc in scatters)
    if any(sc.n_g <= 0 for sc in scatters):
        raise DegenerateScatterError("every group needs positive effective size")

    if model == "EII":
        lam = sum(sc.n_g * np.trace(sc.sample_cov) for sc in scatters) / (n_total * d)
        sigmas = [lam * np.eye(d)] * G
    elif model == "VII":
        sigmas = [np.trace(sc.sample_cov) / d * np.eye(d) for sc in scatters]
    elif model == "EEI":
        diag = sum(sc.n_g * np.diag(sc.sample_cov) for sc in scatters) / n_total
        sigmas = [np.diag(diag)] * G
    elif model == "VVI":
        sigmas = [np.diag(np.diag(sc.sample_cov)) for sc in scatters]
    elif model == "EEE":
        pooled = sum(sc.n_g * sc.sample_cov for sc in scatters) / n_total
        sigmas = [pooled] * G
    elif model == "VVV":
        sigmas = [sc.sample_cov for sc in scatters]
    elif model == "EEV":
        # Per-group orientations, pooled eigenvalues (descending alignment).
        omegas, vecs = [], []
        for sc in scatters:
            w, v = _eigh_desc(sc.n_g * sc.sample_cov)
            omegas.append(w)
            vecs.append(v)
        shared = sum(omegas) / n_total
        sigmas = [v @ np.diag(shared) @ v.T for v in vecs]
    else:  # VVE
        sigmas = _mstep_vve(scatters, n_total, d)
        if prev_sigmas is not None:
            # Also descend from the current orientation; keeping the better of
            # the two starts can only improve on the previous estimate, which
            # keeps the surrounding EM iteration monotone.
            _, D0 = _eigh_desc(np.asarray(prev_sigmas[0], dtype=float))
            warm = _mstep_vve(scatters, n_total, d, D0=D0)
            if gaussian_criterion(warm, scatters) < gaussian_criterion(sigmas, scatters):
                sigmas = warm

    return _apply_jitter([np.array(s, dtype=float) for s in sigmas])
