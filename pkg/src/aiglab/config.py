"""Flat ``key = value`` run configuration with dotted section names.

Lines are ``key = value``; ``#`` starts a comment; blank lines are ignored;
later keys override earlier ones.  Lists are comma-separated.  See the README
for the full key reference.
"""

from dataclasses import dataclass, field

import numpy as np

from aiglab.aig import SWEEP_POWERS, GammaSchedule
from aiglab.diffusion import NoiseSchedule
from aiglab.gmm import GmmDistribution
from aiglab.reward import BumpReward
from aiglab.scorenet import TrainConfig

REGULARIZERS = ("none", "kl", "lora_scale", "aig")

DEFAULTS = {
    "seed": "0",
    "gmm.dim": "2",
    "gmm.weights": "0.25,0.25,0.25,0.25",
    "gmm.means": "1,1,-1,1,-1,-1,1,-1",
    "gmm.stddevs": "0.15",
    "schedule.T": "1000",
    "schedule.beta_start": "1e-4",
    "schedule.beta_end": "0.02",
    "net.hidden": "64,64,64",
    "net.time_frequencies": "8",
    "net.rank": "4",
    "train.lr": "1e-3",
    "train.batch_size": "256",
    "train.steps": "20000",
    "train.beta1": "0.9",
    "train.beta2": "0.999",
    "train.clip": "0.1",
    "train.lr_decay": "cosine",
    "finetune.lr": "1e-3",
    "finetune.batch_size": "256",
    "finetune.steps": "500",
    "finetune.clip": "0.1",
    "finetune.k_grad": "1",
    "reward.centers": "1,1,-1,1,-1,-1,1,-1",
    "reward.heights": "1.0,0.15,0.15,0.15",
    "reward.width": "0.5",
    "regularizer": "none",
    "kl.lambda": "0.1,2,10",
    "lora.alpha": "0.2,0.4,0.6,0.8,1.0",
    "gamma.kind": "power",
    "gamma.p": ",".join(repr(p) for p in SWEEP_POWERS),
    "gamma.kappa": "0.05",
    "gamma.switch": "0.5",
    "sampler.steps": "25",
    "samples.n": "2000",
    "metrics.k": "10",
    "output.dir": "runs/default",
    "output.plots": "false",
    "toy.times": "0,250,500,750,1000",
    "toy.langevin_times": "100,300,500,700,900",
    "toy.chains": "2000",
    "toy.inner_steps": "1",
    "toy.step_scale": "0.05",
}


def parse_text(text):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        out[key.strip()] = value.strip()
    return out


def dump_text(entries):
    return "".join(f"{k} = {v}\n" for k, v in entries.items())


def floats(value):
    vals = [float(v) for v in str(value).split(",") if v.strip()]
    if not vals:
        raise ValueError(f"empty list {value!r}")
    return vals


def ints(value):
    return [int(v) for v in floats(value)]


def truthy(value):
    return str(value).strip().lower() in ("1", "true", "yes", "on")


@dataclass
class RunConfig:
    entries: dict = field(default_factory=dict)

    def __post_init__(self):
        merged = dict(DEFAULTS)
        merged.update({k: str(v) for k, v in self.entries.items()})
        self.entries = merged
        if self.regularizer not in REGULARIZERS:
            raise ValueError(f"regularizer must be one of {REGULARIZERS}, got {self.regularizer!r}")
        self.hyperparams()  # list must parse and be nonempty

    @classmethod
    def from_file(cls, path, **overrides):
        with open(path) as fh:
            entries = parse_text(fh.read())
        entries.update({k: str(v) for k, v in overrides.items() if v is not None})
        return cls(entries)

    def replace(self, **overrides):
        entries = dict(self.entries)
        entries.update({k.replace("__", "."): str(v) for k, v in overrides.items()})
        return RunConfig(entries)

    def __getitem__(self, key):
        return self.entries[key]

    def get(self, key, default=None):
        return self.entries.get(key, default)

    @property
    def seed(self):
        return int(self["seed"])

    @property
    def regularizer(self):
        return self["regularizer"]

    @property
    def out_dir(self):
        return self["output.dir"]

    def gmm(self):
        return GmmDistribution.from_config(self.entries)

    def schedule(self):
        return NoiseSchedule(int(self["schedule.T"]), float(self["schedule.beta_start"]),
                             float(self["schedule.beta_end"]))

    def reward(self):
        return BumpReward.from_config(self.entries, int(self["gmm.dim"]))

    def net_kwargs(self):
        return dict(hidden=tuple(ints(self["net.hidden"])),
                    time_frequencies=int(self["net.time_frequencies"]),
                    rank=int(self["net.rank"]), T=int(self["schedule.T"]))

    def _train(self, section, seed):
        return TrainConfig(
            lr=float(self[f"{section}.lr"]),
            batch_size=int(self[f"{section}.batch_size"]),
            steps=int(self[f"{section}.steps"]),
            beta1=float(self.get(f"{section}.beta1", self["train.beta1"])),
            beta2=float(self.get(f"{section}.beta2", self["train.beta2"])),
            clip=float(self[f"{section}.clip"]),
            lr_decay=self.get(f"{section}.lr_decay", "constant"),
            seed=seed,
        )

    # derived seeds: base training s+1, finetuning s+2, sampling latents s+3
    def train_config(self):
        return self._train("train", self.seed + 1)

    def finetune_config(self):
        return self._train("finetune", self.seed + 2)

    @property
    def sample_seed(self):
        return self.seed + 3

    def hyperparams(self):
        reg = self.regularizer
        if reg == "none":
            return [None]
        if reg == "kl":
            vals = floats(self["kl.lambda"])
        elif reg == "lora_scale":
            vals = floats(self["lora.alpha"])
        else:
            kind = self["gamma.kind"]
            if kind == "power":
                vals = floats(self["gamma.p"])
            elif kind == "sigmoid":
                vals = floats(self["gamma.kappa"])
            else:
                vals = floats(self["gamma.switch"])
        return vals

    def gamma(self, value):
        kind = self["gamma.kind"]
        T = int(self["schedule.T"])
        if kind == "power":
            return GammaSchedule("power", p=value, T=T)
        if kind == "sigmoid":
            return GammaSchedule("sigmoid", T=T, kappa=value)
        return GammaSchedule("heaviside", T=T, switch=value)

    def lists(self, key):
        return np.array(floats(self[key]))
