"""Feedback-weighted EM refinement of primitive parameters.

Scalar human rewards are turned into softmax importance weights; EM then
maximizes the weighted log-likelihood of the executed trajectories, with the
M-step taking the importance-weighted average of per-trajectory posterior
statistics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .promp import (
    DEFAULT_COV_FLOOR,
    DEFAULT_SIGMA_Y_FLOOR,
    BasisConfig,
    PrimitiveParams,
    Trajectory,
    basis_matrix,
    log_likelihood_batch,
    resample_to_phase,
)

REWARD_VALUES = (0.0, 0.25, 0.5, 1.0, 2.0)


def validate_reward(reward: float) -> float:
    r = float(reward)
    if not any(abs(r - v) < 1e-12 for v in REWARD_VALUES):
        raise ValueError(f"reward {reward!r} not in {REWARD_VALUES}")
    return r


@dataclass(frozen=True)
class FeedbackRecord:
    trajectory_id: str
    reward: float

    def __post_init__(self):
        object.__setattr__(self, "reward", validate_reward(self.reward))


@dataclass(frozen=True)
class WeightedDataset:
    trajectories: tuple[Trajectory, ...]
    alphas: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "trajectories", tuple(self.trajectories))
        a = np.asarray(self.alphas, dtype=float)
        object.__setattr__(self, "alphas", a)
        if len(self.trajectories) != len(a):
            raise ValueError("trajectory and weight counts differ")
        if np.any(a <= 0):
            raise ValueError("importance weights must be strictly positive")
        if abs(a.sum() - 1.0) > 1e-12:
            raise ValueError("importance weights must sum to 1")


def importance_weights(rewards: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Softmax over rewards with max-subtraction for numerical stability."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    r = np.asarray(rewards, dtype=float) / temperature
    if r.size < 1:
        raise ValueError("need at least one reward")
    e = np.exp(r - r.max())
    return e / e.sum()


def _phi_blocks(basis: BasisConfig) -> np.ndarray:
    """(T, K) basis activations on the phase grid; shared across DoFs."""
    return basis_matrix(basis.phase_grid(), basis)


def e_step(p: PrimitiveParams, tau: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and covariance of the weight vector given one trajectory.

    Exploits the block-diagonal structure of Phi_t: with shared basis row
    b_t per DoF, sum_t Phi_t^T Sy^-1 Phi_t = Sy^-1 (kron) (B^T B) under the
    DoF-major weight layout.
    """
    basis = p.basis
    t, k, d = basis.n_phase, basis.n_basis, basis.n_dof
    q = resample_to_phase(tau, t)  # (T, D)
    b = _phi_blocks(basis)  # (T, K)

    sy_inv = np.linalg.inv(p.sigma_y)
    btb = b.T @ b  # (K, K)
    info_data = np.kron(sy_inv, btb)  # (DK, DK), DoF-major layout
    rhs_data = (sy_inv @ (b.T @ q).T).reshape(-1)  # sum_t Phi^T Sy^-1 q_t

    try:
        sw_cho = cho_factor(p.sigma_w)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("sigma_w singular in E-step") from exc
    sw_inv = cho_solve(sw_cho, np.eye(d * k))

    precision = sw_inv + info_data
    try:
        prec_cho = cho_factor(0.5 * (precision + precision.T))
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("posterior precision singular in E-step") from exc
    s_n = cho_solve(prec_cho, np.eye(d * k))
    s_n = 0.5 * (s_n + s_n.T)
    m_n = cho_solve(prec_cho, sw_inv @ p.mu_w + rhs_data)
    return m_n, s_n


def m_step_weighted(
    posteriors: list[tuple[np.ndarray, np.ndarray]],
    alphas: np.ndarray,
    trajectories: list[Trajectory],
    basis: BasisConfig,
    cov_floor: float = DEFAULT_COV_FLOOR,
    sigma_y_floor: float = DEFAULT_SIGMA_Y_FLOOR,
    update_sigma_y: bool = True,
    prev_sigma_y: np.ndarray | None = None,
) -> PrimitiveParams:
    """Importance-weighted M-step over per-trajectory posterior statistics."""
    alphas = np.asarray(alphas, dtype=float)
    if len(posteriors) != len(alphas) or len(trajectories) != len(alphas):
        raise ValueError("posteriors, weights, and trajectories must align")
    if abs(alphas.sum() - 1.0) > 1e-9:
        raise ValueError("weights must sum to 1")

    t, k, d = basis.n_phase, basis.n_basis, basis.n_dof
    b = _phi_blocks(basis)

    mu_w = np.zeros(d * k)
    for alpha, (m_n, _) in zip(alphas, posteriors):
        mu_w += alpha * m_n

    sigma_w = np.zeros((d * k, d * k))
    for alpha, (m_n, s_n) in zip(alphas, posteriors):
        dev = m_n - mu_w
        sigma_w += alpha * (s_n + np.outer(dev, dev))
    sigma_w = 0.5 * (sigma_w + sigma_w.T) + cov_floor * np.eye(d * k)

    if update_sigma_y:
        sigma_y = np.zeros((d, d))
        for alpha, (m_n, s_n), tau in zip(alphas, posteriors, trajectories):
            q = resample_to_phase(tau, t)  # (T, D)
            w_mat = m_n.reshape(d, k)
            res = q - b @ w_mat.T  # (T, D)
            acc = res.T @ res
            # sum_t Phi_t S_n Phi_t^T: entry (i,j) = b_t^T S_n[i-block, j-block] b_t
            for i in range(d):
                for j in range(d):
                    blk = s_n[i * k:(i + 1) * k, j * k:(j + 1) * k]
                    acc[i, j] += np.einsum("tk,kl,tl->", b, blk, b)
            sigma_y += (alpha / t) * acc
        sigma_y = 0.5 * (sigma_y + sigma_y.T)
        idx = np.arange(d)
        sigma_y[idx, idx] = np.maximum(sigma_y[idx, idx], sigma_y_floor)
        w_eig, v_eig = np.linalg.eigh(sigma_y)
        if w_eig.min() < sigma_y_floor:
            sigma_y = v_eig @ np.diag(np.maximum(w_eig, sigma_y_floor)) @ v_eig.T
            sigma_y = 0.5 * (sigma_y + sigma_y.T)
    else:
        if prev_sigma_y is None:
            raise ValueError("prev_sigma_y required when update_sigma_y=False")
        sigma_y = prev_sigma_y

    return PrimitiveParams(basis=basis, mu_w=mu_w, sigma_w=sigma_w, sigma_y=sigma_y)


def weighted_log_likelihood(p: PrimitiveParams, dataset: WeightedDataset) -> float:
    logliks = log_likelihood_batch(p, dataset.trajectories)
    return float(dataset.alphas @ logliks)


def em_weighted(
    p_init: PrimitiveParams,
    dataset: WeightedDataset,
    max_iters: int = 100,
    rel_tol: float = 1e-8,
    update_sigma_y: bool = True,
) -> tuple[PrimitiveParams, list[float]]:
    """Alternate E/M steps until the weighted log-likelihood plateaus.

    Returns the refined parameters and the WLL trace (initial value first).
    """
    p = p_init
    trace = [weighted_log_likelihood(p, dataset)]
    for it in range(max_iters):
        try:
            posteriors = [e_step(p, tau) for tau in dataset.trajectories]
            p = m_step_weighted(
                posteriors,
                dataset.alphas,
                list(dataset.trajectories),
                p.basis,
                update_sigma_y=update_sigma_y,
                prev_sigma_y=p.sigma_y,
            )
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(f"EM failed at iteration {it}: {exc}") from exc
        wll = weighted_log_likelihood(p, dataset)
        trace.append(wll)
        prev = trace[-2]
        if abs(wll - prev) < rel_tol * max(1.0, abs(prev)):
            break
    return p, trace


def refinement_round(
    p: PrimitiveParams,
    executed: list[Trajectory],
    rewards: np.ndarray,
    temperature: float = 1.0,
    max_iters: int = 100,
    rel_tol: float = 1e-8,
    update_sigma_y: bool = True,
) -> PrimitiveParams:
    """One outer refinement step: softmax weights, then weighted EM from p."""
    rewards = np.asarray(rewards, dtype=float)
    if len(executed) != len(rewards) or len(rewards) < 1:
        raise ValueError("need equally many executed trajectories and rewards")
    for r in rewards:
        validate_reward(r)
    alphas = importance_weights(rewards, temperature)
    dataset = WeightedDataset(trajectories=tuple(executed), alphas=alphas)
    refined, _ = em_weighted(
        p, dataset, max_iters=max_iters, rel_tol=rel_tol, update_sigma_y=update_sigma_y
    )
    return refined


def load_feedback_file(path) -> list[FeedbackRecord]:
    """Parse `trajectory_id,reward` lines; rewards must be from the value set."""
    records = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 2:
                raise ValueError(f"{path}:{line_no}: expected 'trajectory_id,reward'")
            records.append(FeedbackRecord(trajectory_id=parts[0], reward=float(parts[1])))
    return records


def save_feedback_file(records: list[FeedbackRecord], path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(f"{rec.trajectory_id},{format_reward(rec.reward)}\n")


def format_reward(r: float) -> str:
    """Serialize rewards exactly as 0, 0.25, 0.5, 1, 2."""
    r = validate_reward(r)
    return str(int(r)) if r == int(r) else str(r)
