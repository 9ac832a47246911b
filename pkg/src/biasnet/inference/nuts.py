"""No-U-Turn Hamiltonian sampler with multinomial trajectory sampling.

Warmup adapts the step size by dual averaging toward ``target_accept`` and a
diagonal inverse mass matrix over doubling windows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from biasnet.errors import SamplingError

MAX_ENERGY_ERROR = 1000.0


@dataclass
class ChainResult:
    draws: np.ndarray  # (post-warmup iterations, dim), sampler coordinates
    step_size: float
    inv_mass: np.ndarray
    accept_stat: np.ndarray
    tree_depth: np.ndarray
    divergent: np.ndarray


class _State:
    __slots__ = ("q", "p", "g", "lp")

    def __init__(self, q, p, g, lp):
        self.q, self.p, self.g, self.lp = q, p, g, lp


class _Tree:
    __slots__ = ("left", "right", "proposal", "log_w", "rho", "stop", "diverged", "accept_sum", "n_steps")


class _DualAveraging:
    def __init__(self, step_size, target, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = math.log(10.0 * step_size)
        self.target, self.gamma, self.t0, self.kappa = target, gamma, t0, kappa
        self.t = 0
        self.h_bar = 0.0
        self.log_eps_bar = 0.0

    def update(self, accept):
        self.t += 1
        eta = 1.0 / (self.t + self.t0)
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept)
        log_eps = self.mu - math.sqrt(self.t) / self.gamma * self.h_bar
        w = self.t ** (-self.kappa)
        self.log_eps_bar = w * log_eps + (1.0 - w) * self.log_eps_bar
        return math.exp(log_eps)

    @property
    def final(self):
        return math.exp(self.log_eps_bar)


def _window_ends(warmup):
    """Iteration indices (exclusive) at which the mass matrix is re-estimated."""
    if warmup < 20:
        return []
    init, term, base = 75, 50, 25
    if init + term + base > warmup:
        init, term = int(0.15 * warmup), int(0.1 * warmup)
        base = warmup - init - term
    ends = []
    start, size = init, base
    while True:
        end = start + size
        if end + 2 * size > warmup - term:
            ends.append(warmup - term)
            break
        ends.append(end)
        start, size = end, 2 * size
    return ends, init


class NutsSampler:
    def __init__(self, logp_grad, dim, rng, target_accept=0.8, max_depth=10):
        self.logp_grad = logp_grad
        self.dim = dim
        self.rng = rng
        self.target_accept = target_accept
        self.max_depth = max_depth
        self.inv_mass = np.ones(dim)
        self.step_size = 1.0

    # dynamics ---------------------------------------------------------------
    def _evaluate(self, q):
        lp, g = self.logp_grad(q)
        if not math.isfinite(lp):
            return -math.inf, g
        return lp, g

    def _leapfrog(self, s, eps):
        p = s.p + 0.5 * eps * s.g
        q = s.q + eps * self.inv_mass * p
        lp, g = self._evaluate(q)
        if math.isfinite(lp):
            p = p + 0.5 * eps * g
        return _State(q, p, g, lp)

    def _kinetic(self, p):
        return 0.5 * float(np.dot(p, self.inv_mass * p))

    def _draw_momentum(self):
        return self.rng.standard_normal(self.dim) / np.sqrt(self.inv_mass)

    def _turning(self, left, right, rho):
        return (np.dot(self.inv_mass * left.p, rho) <= 0) or (np.dot(self.inv_mass * right.p, rho) <= 0)

    def _build(self, s, direction, depth, eps, h0):
        if depth == 0:
            new = self._leapfrog(s, direction * eps)
            t = _Tree()
            h = -new.lp + self._kinetic(new.p) if math.isfinite(new.lp) else math.inf
            delta = h - h0
            if not math.isfinite(delta):
                delta = math.inf
            t.left = t.right = t.proposal = new
            t.log_w = -delta
            t.rho = new.p.copy()
            t.diverged = delta > MAX_ENERGY_ERROR
            t.stop = t.diverged
            t.accept_sum = min(1.0, math.exp(-delta)) if delta > -700 else 1.0
            t.n_steps = 1
            return t
        inner = self._build(s, direction, depth - 1, eps, h0)
        if inner.stop:
            return inner
        edge = inner.right if direction > 0 else inner.left
        outer = self._build(edge, direction, depth - 1, eps, h0)
        t = _Tree()
        t.accept_sum = inner.accept_sum + outer.accept_sum
        t.n_steps = inner.n_steps + outer.n_steps
        t.diverged = outer.diverged
        if outer.stop:
            t.left, t.right, t.proposal = inner.left, inner.right, inner.proposal
            t.log_w, t.rho, t.stop = inner.log_w, inner.rho, True
            return t
        if direction > 0:
            t.left, t.right = inner.left, outer.right
        else:
            t.left, t.right = outer.left, inner.right
        t.log_w = np.logaddexp(inner.log_w, outer.log_w)
        if math.log(self.rng.random()) < outer.log_w - t.log_w:
            t.proposal = outer.proposal
        else:
            t.proposal = inner.proposal
        t.rho = inner.rho + outer.rho
        t.stop = self._turning(t.left, t.right, t.rho)
        return t

    def transition(self, state, eps):
        """One NUTS iteration from ``state``; returns (state, accept, depth, divergent)."""
        p0 = self._draw_momentum()
        start = _State(state.q, p0, state.g, state.lp)
        h0 = -state.lp + self._kinetic(p0)
        left = right = start
        proposal = start
        log_w = 0.0
        rho = p0.copy()
        accept_sum, n_steps, depth, divergent = 0.0, 0, 0, False
        while depth < self.max_depth:
            direction = 1 if self.rng.random() < 0.5 else -1
            edge = right if direction > 0 else left
            sub = self._build(edge, direction, depth, eps, h0)
            accept_sum += sub.accept_sum
            n_steps += sub.n_steps
            depth += 1
            if sub.stop:
                divergent = sub.diverged
                break
            if direction > 0:
                right = sub.right
            else:
                left = sub.left
            if math.log(self.rng.random()) < sub.log_w - log_w:
                proposal = sub.proposal
            log_w = np.logaddexp(log_w, sub.log_w)
            rho = rho + sub.rho
            if self._turning(left, right, rho):
                break
        return proposal, accept_sum / max(n_steps, 1), depth, divergent

    def _find_step_size(self, state):
        eps = self.step_size
        p = self._draw_momentum()
        s = _State(state.q, p, state.g, state.lp)
        h0 = -state.lp + self._kinetic(p)

        def log_ratio(e):
            new = self._leapfrog(s, e)
            if not math.isfinite(new.lp):
                return -math.inf
            return h0 - (-new.lp + self._kinetic(new.p))

        direction = 1 if log_ratio(eps) > math.log(0.8) else -1
        for _ in range(100):
            eps_next = eps * (2.0 ** direction)
            r = log_ratio(eps_next)
            if (direction == 1 and not r > math.log(0.8)) or (direction == -1 and r > math.log(0.8)):
                return eps_next if direction == -1 else eps
            eps = eps_next
        return eps

    # driver -----------------------------------------------------------------
    def sample(self, q0, iterations, warmup) -> ChainResult:
        lp, g = self._evaluate(np.asarray(q0, dtype=float))
        if not math.isfinite(lp):
            raise SamplingError("non-finite log density at the initial point")
        state = _State(np.asarray(q0, dtype=float), None, g, lp)
        self.step_size = self._find_step_size(state)
        adapter = _DualAveraging(self.step_size, self.target_accept)
        schedule = _window_ends(warmup)
        ends, window_start = (schedule if schedule else ([], warmup))
        window = []
        keep = iterations - warmup
        draws = np.empty((keep, self.dim))
        accept = np.empty(keep)
        depths = np.empty(keep, dtype=int)
        divergent = np.zeros(keep, dtype=bool)
        eps = self.step_size
        for it in range(iterations):
            state, acc, depth, div = self.transition(state, eps)
            if not math.isfinite(state.lp):
                raise SamplingError(f"non-finite log density at iteration {it}")
            if it < warmup:
                eps = adapter.update(acc)
                if it >= window_start and ends:
                    window.append(state.q)
                    if it + 1 == ends[0]:
                        w = np.array(window)
                        n = len(w)
                        var = w.var(axis=0, ddof=1) if n > 1 else np.ones(self.dim)
                        self.inv_mass = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
                        ends = ends[1:]
                        window = []
                        self.step_size = eps
                        self.step_size = self._find_step_size(state)
                        adapter = _DualAveraging(self.step_size, self.target_accept)
                        eps = self.step_size
                if it + 1 == warmup:
                    eps = adapter.final
            else:
                j = it - warmup
                draws[j] = state.q
                accept[j], depths[j], divergent[j] = acc, depth, div
        self.step_size = eps
        return ChainResult(draws, eps, self.inv_mass.copy(), accept, depths, divergent)
