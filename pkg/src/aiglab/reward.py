"""Reward fields, direct reward finetuning (DRaFT-K) and its regularizers.

Finetuning trains only the LoRA group of an :class:`MlpScoreNet` by
backpropagating a differentiable reward through the last ``k_grad`` DDIM
steps.  The earlier steps run without gradient tracking.  The KL variant adds
``lam * sum_k |eps_theta(x_tk) - eps_base(x_tk)|^2`` over those same steps.

Also here: small exact oracles for the non-parametric optimum of expected
reward, for mask-averaged (dropout) rewards, and for LoRA scaling viewed as a
Hessian-weighted Tikhonov penalty on a quadratic objective.
"""

import itertools
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from aiglab.diffusion import ddim_step, ddim_step_jacobian_eps, initial_noise
from aiglab.errors import NumericalDivergenceError, TooLargeError
from aiglab.linalg import SeededRng, sym_eigen
from aiglab.scorenet import Adam

MAX_DROPOUT_UNITS = 12


class RewardField:
    """``r(x)`` with its analytic gradient; both act on batches ``(n, d)``."""

    def __init__(self, fn, grad, name=""):
        self.fn = fn
        self.grad_fn = grad
        self.name = name

    def __call__(self, x):
        return self.fn(np.atleast_2d(x))

    def grad(self, x):
        return self.grad_fn(np.atleast_2d(x))


def constant_reward(value=1.0):
    return RewardField(lambda x: np.full(x.shape[0], float(value)), np.zeros_like, name="constant")


class BumpReward(RewardField):
    """``r(x) = sum_i h_i exp(-|x - c_i|^2 / (2 s^2))``."""

    def __init__(self, centers, heights, width):
        centers = np.asarray(centers, dtype=np.float64)
        self.centers = centers[:, None] if centers.ndim == 1 else centers
        self.heights = np.asarray(heights, dtype=np.float64).ravel()
        self.width = float(width)
        if self.heights.size != self.centers.shape[0]:
            raise ValueError("one height per center required")
        if np.any(self.heights <= 0) or self.width <= 0:
            raise ValueError("heights and width must be positive")
        super().__init__(self._value, self._grad, name="bump")

    @classmethod
    def from_config(cls, cfg, dim, prefix="reward."):
        c = [float(v) for v in cfg[prefix + "centers"].split(",")]
        h = [float(v) for v in cfg[prefix + "heights"].split(",")]
        return cls(np.array(c).reshape(len(h), dim), h, float(cfg[prefix + "width"]))

    def _kernel(self, x):
        diff = x[:, None, :] - self.centers[None, :, :]
        return diff, self.heights * np.exp(-0.5 * np.sum(diff**2, axis=-1) / self.width**2)

    def _value(self, x):
        return self._kernel(x)[1].sum(axis=1)

    def _grad(self, x):
        diff, k = self._kernel(x)
        return -np.einsum("nk,nkd->nd", k, diff) / self.width**2


# -- finetuning ------------------------------------------------------------


def _finetune(net, reward, schedule, n_steps, cfg, k_grad, base_net=None, lam=0.0):
    if k_grad < 1:
        raise ValueError("k_grad must be >= 1")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    steps = schedule.strided_steps(n_steps)
    pairs = list(zip(steps[:-1], steps[1:]))
    if k_grad > len(pairs):
        raise ValueError("k_grad exceeds the number of sampler steps")
    frozen, tracked = pairs[: len(pairs) - k_grad], pairs[len(pairs) - k_grad :]

    ft = net.copy()
    rng = SeededRng(cfg.seed)
    opt = Adam.from_config(cfg)
    bsz = cfg.batch_size
    rewards = np.empty(cfg.steps)
    kls = np.empty(cfg.steps)
    use_kl = base_net is not None and lam > 0
    for it in range(cfg.steps):
        x = initial_noise(rng, bsz, ft.dim)
        for t, tn in frozen:
            x = ddim_step(x, ft.forward(x, t), t, tn, schedule)
        tape = []
        kl = np.zeros(bsz)
        for t, tn in tracked:
            eps, cache = ft.forward(x, t, return_cache=True)
            cache_b = eps_b = None
            if base_net is not None:
                eps_b, cache_b = base_net.forward(x, t, return_cache=True)
                kl += np.sum((eps - eps_b) ** 2, axis=1)
            tape.append((t, tn, cache, eps, eps_b, cache_b))
            x = ddim_step(x, eps, t, tn, schedule)
        r = reward(x)
        rewards[it] = float(np.mean(r))
        kls[it] = float(np.mean(kl))
        if not np.isfinite(rewards[it]) or not np.all(np.isfinite(x)):
            raise NumericalDivergenceError("non-finite sample or reward during finetuning", step=it)

        # loss = mean(-r) + lam * mean(kl)
        gx = -reward.grad(x) / bsz
        grads = {}
        for j in reversed(range(len(tape))):
            t, tn, cache, eps, eps_b, cache_b = tape[j]
            g_eps = ddim_step_jacobian_eps(t, tn, schedule) * gx
            if use_kl:
                g_eps = g_eps + (2.0 * lam / bsz) * (eps - eps_b)
            g, dx = ft.backward(cache, g_eps, wrt="lora")
            for k, v in g.items():
                grads[k] = grads[k] + v if k in grads else v
            if j:
                gx = schedule.sqrt_alpha_bar[tn] / schedule.sqrt_alpha_bar[t] * gx + dx
                if use_kl:
                    gx = gx - base_net._dx(cache_b, (2.0 * lam / bsz) * (eps - eps_b))
        if not all(np.all(np.isfinite(v)) for v in grads.values()):
            raise NumericalDivergenceError("non-finite gradient during finetuning", step=it)
        opt.step(ft.params, grads)
    return ft, rewards, kls


def draft_finetune(net, reward, schedule, n_steps, cfg, k_grad=1):
    """Unregularized DRaFT-K.  Returns ``(finetuned_net, mean_reward_trace)``."""
    ft, rewards, _ = _finetune(net, reward, schedule, n_steps, cfg, k_grad)
    return ft, rewards


def kl_regularized_finetune(net, base_net, reward, schedule, n_steps, cfg, lam, k_grad=1):
    """DRaFT-K with the per-step eps-space KL surrogate.

    Returns ``(finetuned_net, reward_trace, kl_surrogate_trace)``.  With
    ``lam == 0`` the parameter trajectory equals :func:`draft_finetune`.
    """
    return _finetune(net, reward, schedule, n_steps, cfg, k_grad, base_net=base_net, lam=float(lam))


def lora_scale(net, alpha_prime):
    """Scale the LoRA delta by ``alpha_prime`` in ``[0, 1]`` (base untouched)."""
    if not 0.0 <= alpha_prime <= 1.0:
        raise ValueError("alpha_prime must lie in [0, 1]")
    return net.with_lora_scale(net.lora_scale * alpha_prime)


def write_trace(path, rewards, kls=None):
    with open(path, "w") as fh:
        fh.write("iteration,reward,kl_surrogate\n")
        for i, r in enumerate(rewards):
            k = 0.0 if kls is None else kls[i]
            fh.write(f"{i},{float(r)!r},{float(k)!r}\n")


# -- LoRA scaling as Tikhonov regularization ---------------------------------


@dataclass
class QuadraticTestProblem:
    """``f(theta) = (theta - theta*)^T H (theta - theta*)`` with ``theta* = base + lora``."""

    theta_base: np.ndarray
    theta_lora: np.ndarray
    H: np.ndarray

    @property
    def optimum(self):
        return self.theta_base + self.theta_lora

    def f(self, theta):
        d = theta - self.optimum
        return float(d @ self.H @ d)

    @classmethod
    def random(cls, rng, dim, ridge=0.1):
        L = rng.normal((dim, dim))
        return cls(rng.normal(dim), rng.normal(dim), L @ L.T / dim + ridge * np.eye(dim))


def lemma2_check(problem, alpha, tol=1e-14, max_iter=500_000):
    """Minimise ``f(theta) + alpha (theta - base)^T H (theta - base)`` by gradient descent."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    H = np.asarray(problem.H, dtype=np.float64)
    lam_max = sym_eigen(H).eigenvalues[0]
    if lam_max <= 0:
        return problem.theta_base.copy()
    lr = 1.0 / (2.0 * (1.0 + alpha) * lam_max)
    theta = problem.theta_base.astype(np.float64).copy()
    star, base = problem.optimum, problem.theta_base
    for _ in range(max_iter):
        g = 2.0 * H @ (theta - star) + 2.0 * alpha * H @ (theta - base)
        step = lr * g
        theta -= step
        if np.linalg.norm(step) <= tol * (1.0 + np.linalg.norm(theta)):
            return theta
    raise RuntimeError(f"gradient descent did not converge in {max_iter} iterations")


# -- non-parametric optimum ------------------------------------------------


def nonparametric_optimum(rewards):
    """Expected-reward maximiser over a finite table ``{point: reward}``.

    A point mass on the argmax; exact ties share the mass uniformly.
    """
    if not rewards:
        raise ValueError("empty reward table")
    best = max(rewards.values())
    winners = [k for k, v in rewards.items() if v == best]
    return {k: 1.0 / len(winners) for k in winners}


# -- dropout-averaged reward -----------------------------------------------


class DropoutCheck(NamedTuple):
    exact: float
    mc_mean: float
    mc_stderr: float


class DropoutRewardNet:
    """``r(x) = softplus(c + sum_j m_j v_j tanh(w_j . x + b_j))`` with unit masks ``m``.

    A unit is dropped (``m_j = 0``) when its uniform draw ``u_j < xi``; there
    is no rescaling of the surviving units.
    """

    def __init__(self, w, b, v, c, xi):
        self.w = np.atleast_2d(np.asarray(w, dtype=np.float64))
        self.b = np.asarray(b, dtype=np.float64)
        self.v = np.asarray(v, dtype=np.float64)
        self.c = float(c)
        self.xi = float(xi)
        if not 0.0 <= self.xi <= 1.0:
            raise ValueError("xi must lie in [0, 1]")

    @property
    def n_units(self):
        return self.v.size

    @classmethod
    def random(cls, rng, n_units, dim, xi):
        return cls(rng.normal((n_units, dim)), rng.normal(n_units), rng.normal(n_units), 0.1, xi)

    def masked(self, x, masks):
        h = np.tanh(self.w @ np.asarray(x, dtype=np.float64) + self.b)
        z = self.c + np.asarray(masks, dtype=np.float64) @ (self.v * h)
        return np.logaddexp(0.0, z)

    def plain(self, x):
        return float(self.masked(x, np.ones((1, self.n_units)))[0])


def dropout_reward_equivalence(net, x, n_mc=10**6, rng=None, chunk=100_000):
    """Exact mask-averaged reward (all ``2^N`` masks) alongside a Monte-Carlo estimate."""
    n = net.n_units
    if n > MAX_DROPOUT_UNITS:
        raise TooLargeError(f"{n} units exceeds the enumeration limit of {MAX_DROPOUT_UNITS}")
    masks = np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.float64)
    kept = masks.sum(axis=1)
    prob = (1.0 - net.xi) ** kept * net.xi ** (n - kept)
    exact = float(prob @ net.masked(x, masks))

    rng = rng or SeededRng(0)
    total = total_sq = 0.0
    done = 0
    while done < n_mc:
        m = min(chunk, n_mc - done)
        draws = net.masked(x, rng.uniform((m, n)) >= net.xi)
        total += draws.sum()
        total_sq += np.sum(draws**2)
        done += m
    mean = total / n_mc
    var = max(total_sq / n_mc - mean**2, 0.0)
    return DropoutCheck(exact, float(mean), float(np.sqrt(var / n_mc)))
