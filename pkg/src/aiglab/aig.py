"""Annealed Importance Guidance: time-varying blend of base and finetuned scores.

The blended field is ``gamma(t) * base(x, t) + (1 - gamma(t)) * finetuned(x, t)``
with ``gamma(0) = 0`` and ``gamma(T) = 1``, so the base model steers the
high-noise part of the reverse chain and the finetuned model the end of it.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from aiglab.diffusion import ScoreField, reverse_sample

#: power-family exponents used for sweeps
SWEEP_POWERS = (1.0, 1.25, 1.5, 2.0, 3.0, 4.0, 5.0)
#: sigmoid endpoints must be within this of 0 and 1
SATURATION_TOL = 1e-6


@dataclass(frozen=True)
class GammaSchedule:
    """``kind`` is 'power' (``1 - ((T - t)/T)^p``), 'heaviside' (``H(t/T - switch)``)
    or 'sigmoid' (``expit(kappa (t - T/2))``)."""

    kind: str = "power"
    p: float = 2.0
    T: int = 1000
    kappa: float = 0.05
    switch: float = 0.5

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.kind == "power":
            if self.p <= 0:
                raise ValueError("power schedule needs p > 0")
        elif self.kind == "heaviside":
            if not 0.0 < self.switch <= 1.0:
                raise ValueError("heaviside switch must lie in (0, 1]")
        elif self.kind == "sigmoid":
            # expit(-kappa T / 2) <= SATURATION_TOL keeps the endpoints within tolerance
            if self.kappa * self.T / 2 < np.log(1.0 / SATURATION_TOL - 1.0):
                raise ValueError("sigmoid kappa too small to saturate at t=0 and t=T")
        else:
            raise ValueError(f"unknown gamma kind {self.kind!r}")

    @classmethod
    def from_config(cls, cfg, T, p=None):
        """Read ``gamma.kind``, ``gamma.p``, ``gamma.kappa``, ``gamma.switch``."""
        kind = cfg.get("gamma.kind", "power")
        if p is None:
            p = float(str(cfg.get("gamma.p", "2")).split(",")[0])
        return cls(kind=kind, p=float(p), T=int(T),
                   kappa=float(cfg.get("gamma.kappa", 0.05)),
                   switch=float(cfg.get("gamma.switch", 0.5)))

    def __call__(self, t):
        if not 0 <= t <= self.T:
            raise ValueError(f"step {t} outside [0, {self.T}]")
        if self.kind == "power":
            return 1.0 - ((self.T - t) / self.T) ** self.p
        if self.kind == "heaviside":
            return 1.0 if t / self.T - self.switch >= 0 else 0.0
        return float(expit(self.kappa * (t - self.T / 2)))


def gamma_eval(schedule, t):
    return schedule(t)


class AigScoreField(ScoreField):
    def __init__(self, base, finetuned, gamma):
        self.base = base
        self.finetuned = finetuned
        self.gamma = gamma
        super().__init__(self._blend, analytic=base.analytic and finetuned.analytic, name="aig")

    def _blend(self, x, t):
        g = self.gamma(t)
        return g * self.base(x, t) + (1.0 - g) * self.finetuned(x, t)


def aig_score(field, x, t):
    return field(x, t)


def aig_sample(base, finetuned, gamma, schedule, n_steps, n_samples, rng, dim=1, x_T=None):
    """Reverse sampling driven by the blended score (gamma taken at the true step)."""
    field = AigScoreField(base, finetuned, gamma)
    return reverse_sample(field, schedule, n_steps, rng, n_samples, dim=dim, x_T=x_T, origin="aig")
