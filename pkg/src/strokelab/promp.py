"""Probabilistic movement primitives over joint trajectories.

A primitive is a Gaussian over basis weights w ~ N(mu_w, sigma_w) plus white
observation noise sigma_y, inducing a distribution over joint trajectories
q_z = Phi_z w + eps.  Supports fitting from demonstrations, Gaussian
conditioning on a via-point, sampling, and likelihood evaluation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

DEFAULT_PHASE_GRID = 100
DEFAULT_COV_FLOOR = 1e-6
DEFAULT_SIGMA_Y_FLOOR = 1e-8
DEFAULT_RIDGE = 1e-6

PARAMS_SCHEMA_VERSION = 1


def default_centers(n_basis: int) -> np.ndarray:
    """Uniform centers over phase with a small margin outside [0, 1]."""
    return np.linspace(-0.05, 1.05, n_basis)


def default_bandwidth(n_basis: int) -> float:
    return (1.0 / (n_basis - 1)) ** 2 * 0.5


@dataclass(frozen=True)
class BasisConfig:
    """Normalized radial basis layout shared by all DoFs of a primitive."""

    n_basis: int
    n_dof: int
    centers: np.ndarray = None  # type: ignore[assignment]
    bandwidth: float = None  # type: ignore[assignment]
    phase_duration: float = 1.0
    n_phase: int = DEFAULT_PHASE_GRID

    def __post_init__(self):
        if self.n_basis < 2:
            raise ValueError("need at least 2 basis functions")
        if self.centers is None:
            object.__setattr__(self, "centers", default_centers(self.n_basis))
        else:
            object.__setattr__(self, "centers", np.asarray(self.centers, dtype=float))
        if self.bandwidth is None:
            object.__setattr__(self, "bandwidth", default_bandwidth(self.n_basis))
        if self.n_basis < 2:
            raise ValueError("need at least 2 basis functions")
        if self.centers.shape != (self.n_basis,):
            raise ValueError("centers length must equal n_basis")
        if np.any(np.diff(self.centers) <= 0):
            raise ValueError("centers must be strictly increasing")
        if self.centers[0] < -0.1 or self.centers[-1] > 1.1:
            raise ValueError("centers must lie in [-0.1, 1.1]")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.phase_duration <= 0:
            raise ValueError("phase_duration must be positive")
        if self.n_dof < 1:
            raise ValueError("n_dof must be at least 1")
        self.centers.setflags(write=False)

    @property
    def n_weights(self) -> int:
        return self.n_basis * self.n_dof

    def phase_grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_phase)


def basis_row(z: float, cfg: BasisConfig) -> np.ndarray:
    """Normalized radial-basis activations at phase z (any real z allowed)."""
    d = z - cfg.centers
    e = np.exp(-(d * d) / (2.0 * cfg.bandwidth))
    return e / e.sum()


def basis_matrix(z: np.ndarray, cfg: BasisConfig) -> np.ndarray:
    """(T, K) matrix of basis rows for a vector of phases."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    d = z[:, None] - cfg.centers[None, :]
    e = np.exp(-(d * d) / (2.0 * cfg.bandwidth))
    return e / e.sum(axis=1, keepdims=True)


def block_phi(z: float, cfg: BasisConfig) -> np.ndarray:
    """Block-diagonal (D, D*K) observation matrix at phase z.

    Weight layout is DoF-major: w = [w_dof0, w_dof1, ...].
    """
    row = basis_row(z, cfg)
    phi = np.zeros((cfg.n_dof, cfg.n_weights))
    for d in range(cfg.n_dof):
        phi[d, d * cfg.n_basis:(d + 1) * cfg.n_basis] = row
    return phi


@dataclass(frozen=True)
class Trajectory:
    """Time-stamped joint-state sequence."""

    timestamps: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=float)
        q = np.asarray(self.positions, dtype=float)
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "positions", q)
        if self.velocities is not None:
            object.__setattr__(self, "velocities", np.asarray(self.velocities, dtype=float))
        if t.ndim != 1 or q.ndim != 2:
            raise ValueError("timestamps must be 1-D and positions 2-D")
        if len(t) < 2:
            raise ValueError("trajectory needs at least 2 samples")
        if q.shape[0] != len(t):
            raise ValueError("positions row count must match timestamps")
        if np.any(np.diff(t) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if self.velocities is not None and self.velocities.shape != q.shape:
            raise ValueError("velocities shape must match positions")

    @property
    def n_dof(self) -> int:
        return self.positions.shape[1]

    @property
    def duration(self) -> float:
        return float(self.timestamps[-1] - self.timestamps[0])

    def phases(self) -> np.ndarray:
        t = self.timestamps
        return (t - t[0]) / (t[-1] - t[0])


def resample_to_phase(tau: Trajectory, n_phase: int) -> np.ndarray:
    """Linear-interpolate positions onto a uniform phase grid; returns (n, D)."""
    z = np.linspace(0.0, 1.0, n_phase)
    src = tau.phases()
    out = np.empty((n_phase, tau.n_dof))
    for d in range(tau.n_dof):
        out[:, d] = np.interp(z, src, tau.positions[:, d])
    return out


@dataclass(frozen=True)
class PrimitiveParams:
    """The primitive parameter triple (mu_w, sigma_w, sigma_y) plus basis."""

    basis: BasisConfig
    mu_w: np.ndarray
    sigma_w: np.ndarray
    sigma_y: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu_w, dtype=float)
        sw = np.asarray(self.sigma_w, dtype=float)
        sy = np.asarray(self.sigma_y, dtype=float)
        object.__setattr__(self, "mu_w", mu)
        object.__setattr__(self, "sigma_w", sw)
        object.__setattr__(self, "sigma_y", sy)
        dk, d = self.basis.n_weights, self.basis.n_dof
        if mu.shape != (dk,):
            raise ValueError(f"mu_w must have length {dk}")
        if sw.shape != (dk, dk):
            raise ValueError(f"sigma_w must be {dk}x{dk}")
        if sy.shape != (d, d):
            raise ValueError(f"sigma_y must be {d}x{d}")
        if not np.allclose(sw, sw.T, atol=1e-9):
            raise ValueError("sigma_w must be symmetric")
        if not np.allclose(sy, sy.T, atol=1e-9):
            raise ValueError("sigma_y must be symmetric")
        if np.linalg.eigvalsh(sw).min() < -1e-9:
            raise ValueError("sigma_w must be positive semidefinite")
        if np.linalg.eigvalsh(sy).min() <= 0:
            raise ValueError("sigma_y must be positive definite")

    @property
    def n_dof(self) -> int:
        return self.basis.n_dof


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def fit_from_demos(
    demos: list[Trajectory],
    ridge: float = DEFAULT_RIDGE,
    cov_floor: float = DEFAULT_COV_FLOOR,
    basis: BasisConfig | None = None,
) -> PrimitiveParams:
    """Maximum-likelihood initialization from demonstrations.

    Each demo is resampled to the uniform phase grid, per-demo weights are
    obtained by ridge least squares, and the weight distribution is the
    sample mean/covariance (with a covariance floor).  Observation noise is
    the pooled residual covariance with a floored diagonal.
    """
    if len(demos) < 2:
        raise ValueError("need at least 2 demonstrations")
    n_dof = demos[0].n_dof
    if any(d.n_dof != n_dof for d in demos):
        raise ValueError("all demonstrations must share the same DoF count")
    if basis is None:
        basis = BasisConfig(
            n_basis=8, n_dof=n_dof,
            phase_duration=float(np.mean([d.duration for d in demos])),
        )
    if basis.n_dof != n_dof:
        raise ValueError("basis n_dof does not match demonstrations")

    z = basis.phase_grid()
    phi = basis_matrix(z, basis)  # (T, K)
    gram = phi.T @ phi + ridge * np.eye(basis.n_basis)
    gram_cho = cho_factor(gram)

    weights = []
    residuals = []
    for demo in demos:
        q = resample_to_phase(demo, basis.n_phase)  # (T, D)
        w_per_dof = cho_solve(gram_cho, phi.T @ q)  # (K, D)
        weights.append(w_per_dof.T.reshape(-1))  # DoF-major flatten
        residuals.append(q - phi @ w_per_dof)
    w_stack = np.array(weights)

    mu_w = w_stack.mean(axis=0)
    dev = w_stack - mu_w
    sigma_w = _symmetrize(dev.T @ dev / (len(demos) - 1)) + cov_floor * np.eye(basis.n_weights)

    res = np.concatenate(residuals, axis=0)  # (N*T, D)
    sigma_y = _symmetrize(res.T @ res / res.shape[0])
    idx = np.arange(n_dof)
    sigma_y[idx, idx] = np.maximum(sigma_y[idx, idx], DEFAULT_SIGMA_Y_FLOOR)
    # keep it PD even when off-diagonal residual correlation is near-perfect
    w_eig, v_eig = np.linalg.eigh(sigma_y)
    if w_eig.min() < DEFAULT_SIGMA_Y_FLOOR:
        sigma_y = _symmetrize(v_eig @ np.diag(np.maximum(w_eig, DEFAULT_SIGMA_Y_FLOOR)) @ v_eig.T)

    return PrimitiveParams(basis=basis, mu_w=mu_w, sigma_w=sigma_w, sigma_y=sigma_y)


def condition(
    p: PrimitiveParams,
    z_star: float,
    q_star: np.ndarray,
    obs_noise: np.ndarray | float = 1e-8,
) -> PrimitiveParams:
    """Gaussian posterior update forcing the primitive through q_star at z_star."""
    d = p.n_dof
    q_star = np.asarray(q_star, dtype=float)
    if q_star.shape != (d,):
        raise ValueError(f"q_star must have length {d}")
    if np.isscalar(obs_noise):
        obs_noise = float(obs_noise) * np.eye(d)
    obs_noise = np.asarray(obs_noise, dtype=float)

    phi = block_phi(z_star, p.basis)
    s_phi = p.sigma_w @ phi.T
    innov_cov = obs_noise + phi @ s_phi
    try:
        cho = cho_factor(_symmetrize(innov_cov))
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            "singular innovation covariance in conditioning"
        ) from exc
    gain = cho_solve(cho, s_phi.T).T  # sigma_w Phi^T (S)^-1
    mu_post = p.mu_w + gain @ (q_star - phi @ p.mu_w)
    sigma_post = _symmetrize(p.sigma_w - gain @ phi @ p.sigma_w)
    return replace(p, mu_w=mu_post, sigma_w=sigma_post)


def mean_trajectory(p: PrimitiveParams, n_samples: int | None = None) -> Trajectory:
    """Deterministic mean trajectory on a uniform phase grid."""
    n = p.basis.n_phase if n_samples is None else int(n_samples)
    if n < 2:
        raise ValueError("need at least 2 samples")
    z = np.linspace(0.0, 1.0, n)
    phi = basis_matrix(z, p.basis)  # (n, K)
    w = p.mu_w.reshape(p.n_dof, p.basis.n_basis)  # DoF-major
    positions = phi @ w.T  # (n, D)
    return Trajectory(timestamps=z * p.basis.phase_duration, positions=positions)


def sample_trajectory(p: PrimitiveParams, seed: int, n_samples: int | None = None) -> Trajectory:
    """Seeded draw: w ~ N(mu_w, sigma_w), observations get N(0, sigma_y) noise."""
    n = p.basis.n_phase if n_samples is None else int(n_samples)
    rng = np.random.default_rng(seed)
    w = rng.multivariate_normal(p.mu_w, p.sigma_w, method="svd")
    z = np.linspace(0.0, 1.0, n)
    phi = basis_matrix(z, p.basis)
    positions = phi @ w.reshape(p.n_dof, p.basis.n_basis).T
    noise = rng.multivariate_normal(np.zeros(p.n_dof), p.sigma_y, size=n, method="svd")
    return Trajectory(timestamps=z * p.basis.phase_duration, positions=positions + noise)


def stacked_psi(basis: BasisConfig) -> np.ndarray:
    """(T*D, D*K) stacked observation matrix over the phase grid."""
    phi = basis_matrix(basis.phase_grid(), basis)  # (T, K)
    t, k, d = basis.n_phase, basis.n_basis, basis.n_dof
    psi = np.zeros((t * d, d * k))
    for i in range(t):
        for j in range(d):
            psi[i * d + j, j * k:(j + 1) * k] = phi[i]
    return psi


def log_likelihood_batch(p: PrimitiveParams, taus) -> np.ndarray:
    """Log densities of several trajectories under p.

    All trajectories share the phase grid, so the total covariance is
    factored once for the whole batch.
    """
    t, d = p.basis.n_phase, p.n_dof
    psi = stacked_psi(p.basis)
    mean = psi @ p.mu_w
    cov = psi @ p.sigma_w @ psi.T
    for i in range(t):
        cov[i * d:(i + 1) * d, i * d:(i + 1) * d] += p.sigma_y
    try:
        cho = cho_factor(_symmetrize(cov))
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("total trajectory covariance not PD") from exc
    logdet = 2.0 * np.sum(np.log(np.diag(cho[0])))
    n = t * d
    out = np.empty(len(taus))
    for j, tau in enumerate(taus):
        y = resample_to_phase(tau, t).reshape(-1) - mean
        maha = float(y @ cho_solve(cho, y))
        out[j] = -0.5 * (n * np.log(2.0 * np.pi) + logdet + maha)
    return out


def log_likelihood(p: PrimitiveParams, tau: Trajectory) -> float:
    """Log density of a trajectory (resampled to the phase grid) under p."""
    return float(log_likelihood_batch(p, [tau])[0])


def save_params(p: PrimitiveParams, path) -> None:
    """Write the parameter file; floats keep full round-trip precision."""
    doc = {
        "schema_version": PARAMS_SCHEMA_VERSION,
        "basis": {
            "K": p.basis.n_basis,
            "h": p.basis.bandwidth,
            "centers": p.basis.centers.tolist(),
            "phase_duration": p.basis.phase_duration,
            "D": p.basis.n_dof,
            "n_phase": p.basis.n_phase,
        },
        "mu_w": p.mu_w.tolist(),
        "sigma_w_rowmajor": p.sigma_w.reshape(-1).tolist(),
        "sigma_y_rowmajor": p.sigma_y.reshape(-1).tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_params(path) -> PrimitiveParams:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != PARAMS_SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {doc.get('schema_version')!r}")
    b = doc["basis"]
    basis = BasisConfig(
        n_basis=int(b["K"]),
        n_dof=int(b["D"]),
        centers=np.array(b["centers"], dtype=float),
        bandwidth=float(b["h"]),
        phase_duration=float(b["phase_duration"]),
        n_phase=int(b.get("n_phase", DEFAULT_PHASE_GRID)),
    )
    dk, d = basis.n_weights, basis.n_dof
    return PrimitiveParams(
        basis=basis,
        mu_w=np.array(doc["mu_w"], dtype=float),
        sigma_w=np.array(doc["sigma_w_rowmajor"], dtype=float).reshape(dk, dk),
        sigma_y=np.array(doc["sigma_y_rowmajor"], dtype=float).reshape(d, d),
    )
