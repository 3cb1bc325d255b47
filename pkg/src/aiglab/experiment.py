"""Sweep orchestration: train base, DRaFT-finetune, regularize, sample, measure.

Every sweep point is sampled from the same initial latents as the base model,
so rows differ only through the model/guidance being evaluated.
"""

import logging
import math
import os
from dataclasses import dataclass

import numpy as np

from aiglab.aig import aig_sample
from aiglab.diffusion import SampleSet, forward_diffuse, langevin_transition, reverse_sample
from aiglab.linalg import SeededRng
from aiglab.metrics import CoverageReport, coverage_report, pareto_mask
from aiglab.reward import draft_finetune, kl_regularized_finetune, lora_scale, write_trace
from aiglab.scorenet import MlpScoreNet, train_dsm

log = logging.getLogger(__name__)

RESULTS_HEADER = "run_id,regularizer,hyperparam,mean_reward,fid,recall,scd,lscd"
PARETO_AXES = ("fid", "1-recall", "scd", "lscd")


class SweepError(RuntimeError):
    def __init__(self, key, cause):
        super().__init__(f"sweep point {key!r} failed: {cause}")
        self.key = key


# -- results ---------------------------------------------------------------


@dataclass
class ResultRow:
    run_id: str
    regularizer: str
    hyperparam: float | None
    report: CoverageReport

    def csv(self):
        hp = "" if self.hyperparam is None else repr(float(self.hyperparam))
        r = self.report
        vals = (r.mean_reward, r.fid, r.recall, r.scd, r.lscd)
        return ",".join([self.run_id, self.regularizer, hp, *(repr(float(v)) for v in vals)])


class ResultsTable:
    def __init__(self, rows=()):
        self.rows = []
        for row in rows:
            self.add(row)

    def add(self, row):
        if any(r.run_id == row.run_id for r in self.rows):
            raise ValueError(f"duplicate run id {row.run_id!r}")
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def __getitem__(self, run_id):
        for r in self.rows:
            if r.run_id == run_id:
                return r
        raise KeyError(run_id)

    def to_csv(self):
        return RESULTS_HEADER + "\n" + "".join(r.csv() + "\n" for r in self.rows)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_csv())

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            header = fh.readline().strip()
            if header != RESULTS_HEADER:
                raise ValueError(f"{path}: unexpected header {header!r}")
            rows = []
            for line in fh:
                if not line.strip():
                    continue
                rid, reg, hp, *vals = line.strip().split(",")
                mr, f, rc, s, ls = map(float, vals)
                rows.append(ResultRow(rid, reg, float(hp) if hp else None,
                                      CoverageReport(rid, mr, f, rc, s, ls)))
        return cls(rows)


def cost(report, axis):
    if axis == "fid":
        return report.fid
    if axis in ("1-recall", "recall"):
        return 1.0 - report.recall
    if axis == "scd":
        return report.scd
    if axis == "lscd":
        return report.lscd
    raise ValueError(f"unknown diversity axis {axis!r}; expected one of {PARETO_AXES}")


def emit_pareto(table, axis, out_dir=None):
    """Mark non-dominated rows on (mean_reward up, diversity cost down).

    Writes ``pareto_<axis>.csv`` when ``out_dir`` is given and returns the
    non-dominated rows ordered by reward descending.
    """
    if axis == "recall":
        axis = "1-recall"
    rows = list(table)
    if not rows:
        raise ValueError("empty results table")
    pts = [(r.report.mean_reward, cost(r.report, axis)) for r in rows]
    keep = pareto_mask(pts)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, f"pareto_{axis}.csv"), "w") as fh:
            fh.write(f"run_id,regularizer,hyperparam,mean_reward,{axis},dominated\n")
            for r, (rew, c), k in zip(rows, pts, keep):
                hp = "" if r.hyperparam is None else repr(float(r.hyperparam))
                fh.write(f"{r.run_id},{r.regularizer},{hp},{float(rew)!r},{float(c)!r},{str(not k).lower()}\n")
    front = [r for r, k in zip(rows, keep) if k]
    return sorted(front, key=lambda r: -r.report.mean_reward)


# -- pipeline -------------------------------------------------------------


@dataclass
class Models:
    """Shared stages of a sweep: base net, DRaFT net, base samples, latents."""

    schedule: object
    gmm: object
    reward: object
    base: MlpScoreNet
    draft: MlpScoreNet
    latents: np.ndarray
    base_samples: SampleSet
    base_losses: np.ndarray
    draft_rewards: np.ndarray

    @property
    def base_reward(self):
        return float(np.mean(self.reward(self.base_samples.points)))


def train_base(cfg):
    schedule, gmm = cfg.schedule(), cfg.gmm()
    net = MlpScoreNet(gmm.dim, seed=cfg.seed, **cfg.net_kwargs())
    return train_dsm(net, gmm, schedule, cfg.train_config())


def sample_net(net, cfg, latents, origin):
    schedule = cfg.schedule()
    return reverse_sample(net.score_field(schedule), schedule, int(cfg["sampler.steps"]),
                          SeededRng(cfg.sample_seed), latents.shape[0], dim=latents.shape[1],
                          x_T=latents, origin=origin)


def prepare_models(cfg, base=None, base_losses=None):
    schedule, gmm, reward = cfg.schedule(), cfg.gmm(), cfg.reward()
    if base is None:
        log.info("training base score net")
        base, base_losses = train_base(cfg)
    log.info("DRaFT finetuning")
    fcfg = cfg.finetune_config()
    draft, rewards = draft_finetune(base, reward, schedule, int(cfg["sampler.steps"]), fcfg,
                                    k_grad=int(cfg["finetune.k_grad"]))
    latents = SeededRng(cfg.sample_seed).normal((int(cfg["samples.n"]), gmm.dim))
    base_samples = sample_net(base, cfg, latents, "base")
    return Models(schedule, gmm, reward, base, draft, latents, base_samples,
                  np.asarray(base_losses if base_losses is not None else []), rewards)


def _point_samples(cfg, models, reg, value):
    steps = int(cfg["sampler.steps"])
    if reg == "none":
        return sample_net(models.draft, cfg, models.latents, "finetuned")
    if reg == "lora_scale":
        return sample_net(lora_scale(models.draft, value), cfg, models.latents, "finetuned")
    if reg == "kl":
        net, _, _ = kl_regularized_finetune(models.base, models.base, models.reward, models.schedule,
                                            steps, cfg.finetune_config(), value,
                                            k_grad=int(cfg["finetune.k_grad"]))
        return sample_net(net, cfg, models.latents, "finetuned")
    if reg == "aig":
        sch = models.schedule
        return aig_sample(models.base.score_field(sch), models.draft.score_field(sch), cfg.gamma(value),
                          sch, steps, models.latents.shape[0], SeededRng(cfg.sample_seed),
                          dim=models.latents.shape[1], x_T=models.latents)
    raise ValueError(f"unknown regularizer {reg!r}")


def run_id(reg, value, gamma_kind="power"):
    if value is None:
        return reg
    aig_tag = {"power": "p", "sigmoid": "kappa", "heaviside": "switch"}[gamma_kind]
    tag = {"kl": "lambda", "lora_scale": "alpha", "aig": aig_tag}[reg]
    return f"{reg}-{tag}{float(value):g}"


def run_sweep(cfg, models=None, write=True):
    """One row per hyperparameter of the configured regularizer family."""
    models = models or prepare_models(cfg)
    out = cfg.out_dir
    if write:
        os.makedirs(out, exist_ok=True)
        models.base_samples.save(os.path.join(out, "samples_base.csv"))
    reg = cfg.regularizer
    table = ResultsTable()
    for value in cfg.hyperparams():
        key = run_id(reg, value, cfg["gamma.kind"])
        try:
            samples = _point_samples(cfg, models, reg, value)
            report = coverage_report(key, models.base_samples.points, samples.points, models.reward,
                                     k=int(cfg["metrics.k"]))
        except Exception as exc:
            raise SweepError(key, exc) from exc
        log.info("%s: reward=%.4f recall=%.3f fid=%.4f", key, report.mean_reward, report.recall, report.fid)
        table.add(ResultRow(key, reg, value, report))
        if write:
            samples.save(os.path.join(out, f"samples_{key}.csv"))
    if write:
        table.save(os.path.join(out, "results.csv"))
        if cfg.get("output.plots", "false").lower() == "true":
            for axis in PARETO_AXES:
                write_svg_scatter(os.path.join(out, f"pareto_{axis}.svg"),
                                  [(cost(r.report, axis), r.report.mean_reward) for r in table],
                                  [r.run_id for r in table], axis, "mean reward")
    return table


# -- toy mixing figure ------------------------------------------------------


def nearest_scaled_mode(x, gmm, t, schedule):
    mu_t, _ = gmm.diffused(t, schedule)
    d = np.sum((x[:, None, :] - mu_t[None, :, :]) ** 2, axis=-1)
    return np.argmin(d, axis=1)


def toy_mixing_figure(cfg, out_dir=None):
    """Forward mixing, one-hop Langevin and terminal Langevin ensembles on a 1D GMM.

    Writes ``toy_forward.csv`` (t,mode,x), ``toy_langevin.csv`` (t,chain,x;
    all chains share one start point per t) and ``toy_terminal.csv``
    (t,chain,origin_mode,x; independent starts), returning summary statistics.
    """
    gmm, schedule = cfg.gmm(), cfg.schedule()
    if gmm.dim != 1:
        raise ValueError("toy mixing figure needs a 1D GMM")
    out_dir = out_dir or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    rng = SeededRng(cfg.seed)
    n = int(cfg["toy.chains"])
    inner = int(cfg["toy.inner_steps"])
    scale = float(cfg["toy.step_scale"])
    score = gmm.score_field(schedule)
    stats = {"overlap": {}, "langevin_std": {}, "terminal_origin_share": {}, "terminal_mode_share": {}}

    fig_times = [int(v) for v in cfg.lists("toy.times")]
    lv_times = [int(v) for v in cfg.lists("toy.langevin_times")]
    with open(os.path.join(out_dir, "toy_forward.csv"), "w") as fh:
        fh.write("t,mode,x\n")
        # overlap is also reported at the Langevin start levels; only figure times are written
        for t in sorted(set(fig_times) | set(lv_times)):
            x0, modes = gmm.sample(rng.derive(1000 + t), n, return_modes=True)
            xt = forward_diffuse(x0.points, t, schedule, rng.derive(2000 + t))
            near = nearest_scaled_mode(xt, gmm, t, schedule)
            stats["overlap"][t] = float(np.mean(near != modes))
            if t in fig_times:
                for m, x in zip(modes, xt[:, 0]):
                    fh.write(f"{t},{m},{float(x)!r}\n")

    with open(os.path.join(out_dir, "toy_langevin.csv"), "w") as fh, \
         open(os.path.join(out_dir, "toy_terminal.csv"), "w") as ft:
        fh.write("t,chain,x\n")
        ft.write("t,chain,origin_mode,x\n")
        for t in lv_times:
            r = rng.derive(3000 + t)
            x0 = gmm.sample(r, 1).points
            start = forward_diffuse(x0, t, schedule, r)
            hop = langevin_transition(np.repeat(start, n, axis=0), t, max(t - 10, 0), score, schedule,
                                      inner, scale, r)
            stats["langevin_std"][t] = float(hop.std())
            for i, x in enumerate(hop[:, 0]):
                fh.write(f"{t},{i},{float(x)!r}\n")

            x0, modes = gmm.sample(r, n, return_modes=True)
            xt = forward_diffuse(x0.points, t, schedule, r)
            x_end = langevin_transition(xt, t, 0, score, schedule, inner, scale, r)
            end_mode = nearest_scaled_mode(x_end, gmm, 0, schedule)
            stats["terminal_origin_share"][t] = float(np.mean(end_mode == modes))
            stats["terminal_mode_share"][t] = np.bincount(end_mode, minlength=gmm.n_modes) / n
            for i, (m, x) in enumerate(zip(modes, x_end[:, 0])):
                ft.write(f"{t},{i},{m},{float(x)!r}\n")
    if cfg.get("output.plots", "false").lower() == "true":
        times = sorted(stats["overlap"])
        write_svg_scatter(os.path.join(out_dir, "toy_overlap.svg"),
                          [(t, stats["overlap"][t]) for t in times], [str(t) for t in times],
                          "t", "mode overlap")
    return stats


# -- minimal SVG ------------------------------------------------------------


def write_svg_scatter(path, points, labels, xlabel, ylabel, size=360, pad=40):
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    inner = size - 2 * pad

    def xy(p):
        u = (p - lo) / span
        return pad + u[0] * inner, size - pad - u[1] * inner

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">',
             f'<line x1="{pad}" y1="{size - pad}" x2="{size - pad}" y2="{size - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{size - pad}" stroke="black"/>',
             f'<text x="{size / 2}" y="{size - 8}" text-anchor="middle" font-size="12">{xlabel}</text>',
             f'<text x="12" y="{size / 2}" font-size="12" transform="rotate(-90 12 {size / 2})">{ylabel}</text>']
    for p, lab in zip(pts, labels):
        x, y = xy(p)
        if math.isfinite(x) and math.isfinite(y):
            parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="steelblue"><title>{lab}</title></circle>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def write_loss_trace(path, losses):
    with open(path, "w") as fh:
        fh.write("step,loss\n")
        for i, v in enumerate(losses):
            fh.write(f"{i},{float(v)!r}\n")


__all__ = ["Models", "ResultsTable", "ResultRow", "emit_pareto", "prepare_models", "run_sweep",
           "toy_mixing_figure", "train_base", "write_trace", "write_loss_trace"]
