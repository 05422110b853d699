"""Training loops for the scorer, the trajectory proposal cVAE and the actionability head."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch

from prior_engine.config import PerceptionSettings, settings
from prior_engine.errors import DatasetError
from prior_engine.perception.bundle import PerceptionBundle, _repeat
from prior_engine.perception.data import PerceptionSample, collate
from prior_engine.perception.losses import (
    actionability_target,
    kl_divergence,
    kl_weight,
    position_l1,
    rotation_6d_loss,
    scorer_bce,
)
from prior_engine.perception.networks import LATENT_DIM, ActionabilityNet, ProposalNet, ScorerNet
from prior_engine.utils.seeding import torch_generator

log = logging.getLogger("prior_engine.perception")


@dataclass
class EpochLog:
    head: str
    epoch: int
    loss: float
    terms: Dict[str, float] = field(default_factory=dict)

    def row(self) -> Dict[str, float]:
        return {"head": self.head, "epoch": self.epoch, "loss": self.loss, **self.terms}


def balanced_batches(labels: np.ndarray, batch_size: int, rng: np.random.Generator) -> List[np.ndarray]:
    """Batches holding equal numbers of positives and negatives (one epoch)."""
    pos = np.flatnonzero(labels > 0.5)
    neg = np.flatnonzero(labels <= 0.5)
    if pos.size == 0 or neg.size == 0:
        raise DatasetError(f"scorer training needs both labels, got {pos.size} positive / {neg.size} negative")
    half = max(1, batch_size // 2)
    n_batches = max(1, int(np.ceil(max(pos.size, neg.size) / half)))
    pos_order = np.concatenate([rng.permutation(pos) for _ in range(int(np.ceil(n_batches * half / pos.size)))])
    neg_order = np.concatenate([rng.permutation(neg) for _ in range(int(np.ceil(n_batches * half / neg.size)))])
    return [
        np.concatenate([pos_order[i * half:(i + 1) * half], neg_order[i * half:(i + 1) * half]])
        for i in range(n_batches)
    ]


def _batches(n: int, batch_size: int, rng: np.random.Generator) -> List[np.ndarray]:
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def train_scorer(net: ScorerNet, samples: Sequence[PerceptionSample], epochs: int,
                 cfg: Optional[PerceptionSettings] = None, seed: int = 0,
                 optimizer: Optional[torch.optim.Optimizer] = None) -> List[EpochLog]:
    cfg = cfg or settings.perception
    labels = np.array([s.label for s in samples])
    rng = np.random.default_rng(seed)
    opt = optimizer or torch.optim.Adam(net.parameters(), lr=cfg.lr)
    logs = []
    net.train()
    for epoch in range(epochs):
        losses = []
        for idx in balanced_batches(labels, cfg.batch_size, rng):
            b = collate([samples[i] for i in idx])
            loss = scorer_bce(net.logits(b["points"], b["point_index"], b["contact"], b["theta"], b["traj"]), b["label"])
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.item()))
        logs.append(EpochLog("scorer", epoch, float(np.mean(losses))))
        log.info("scorer_epoch epoch=%d loss=%.5f", epoch, logs[-1].loss)
    return logs


def proposal_losses(net: ProposalNet, batch: Dict[str, torch.Tensor], beta: float, cfg: PerceptionSettings,
                    generator: Optional[torch.Generator] = None) -> Dict[str, torch.Tensor]:
    recon, mu, logvar = net(batch["points"], batch["point_index"], batch["contact"], batch["theta"],
                            batch["traj"], generator)
    l1 = position_l1(recon, batch["traj"])
    rot = rotation_6d_loss(recon, batch["traj"])
    kl = kl_divergence(mu, logvar)
    total = cfg.l1_weight * l1 + cfg.rot_weight * rot + beta * kl
    return {"total": total, "l1": l1, "rot6d": rot, "kl": kl}


def train_proposal(net: ProposalNet, positives: Sequence[PerceptionSample], epochs: int,
                   cfg: Optional[PerceptionSettings] = None, seed: int = 0,
                   optimizer: Optional[torch.optim.Optimizer] = None) -> List[EpochLog]:
    cfg = cfg or settings.perception
    if not positives:
        raise DatasetError("proposal training needs successful trajectories")
    if any(s.label < 0.5 for s in positives):
        raise DatasetError("proposal training takes positives only")
    rng = np.random.default_rng(seed)
    gen = torch_generator(seed)
    opt = optimizer or torch.optim.Adam(net.parameters(), lr=cfg.lr)
    logs = []
    net.train()
    for epoch in range(epochs):
        beta = kl_weight(epoch, epochs, cfg.kl_beta, cfg.kl_warmup_frac)
        sums = {"total": 0.0, "l1": 0.0, "rot6d": 0.0, "kl": 0.0}
        batches = _batches(len(positives), cfg.batch_size, rng)
        for idx in batches:
            terms = proposal_losses(net, collate([positives[i] for i in idx]), beta, cfg, gen)
            opt.zero_grad()
            terms["total"].backward()
            opt.step()
            for k in sums:
                sums[k] += float(terms[k].item())
        means = {k: v / len(batches) for k, v in sums.items()}
        logs.append(EpochLog("proposal", epoch, means.pop("total"), {**means, "beta": beta}))
        log.info("proposal_epoch epoch=%d loss=%.5f kl=%.5f beta=%.3f", epoch, logs[-1].loss, means["kl"], beta)
    return logs


@torch.no_grad()
def actionability_targets(batch: Dict[str, torch.Tensor], proposal: ProposalNet, scorer: ScorerNet,
                          n_proposals: int, top_k: int, generator: torch.Generator) -> torch.Tensor:
    """Per sample: score `n_proposals` decoded trajectories and average the top k."""
    p_feats = proposal.cond(batch["points"], batch["point_index"], batch["contact"], batch["theta"])
    s_feats = scorer.cond(batch["points"], batch["point_index"], batch["contact"], batch["theta"])
    targets = []
    for i in range(batch["points"].shape[0]):
        one = lambda f: type(f)(f.f_s[i:i + 1], f.f_p[i:i + 1], f.f_theta[i:i + 1])  # noqa: E731
        z = torch.randn((n_proposals, LATENT_DIM), generator=generator)
        trajs = proposal.decode(z, _repeat(one(p_feats), n_proposals))
        scores = torch.sigmoid(scorer.logits_features(_repeat(one(s_feats), n_proposals), trajs))
        targets.append(actionability_target(scores, top_k))
    return torch.stack(targets)


def with_random_points(samples: Sequence[PerceptionSample], rng: np.random.Generator) -> List[PerceptionSample]:
    """Recorded contacts plus one uniformly drawn point per sample from the same cloud."""
    out = list(samples)
    for s in samples:
        out.append(PerceptionSample(s.points, int(rng.integers(len(s.points))), s.theta, s.trajectory,
                                    s.label, s.interaction_type))
    return out


def train_actionability(net: ActionabilityNet, samples: Sequence[PerceptionSample], proposal: ProposalNet,
                        scorer: ScorerNet, epochs: int, cfg: Optional[PerceptionSettings] = None, seed: int = 0,
                        optimizer: Optional[torch.optim.Optimizer] = None) -> List[EpochLog]:
    cfg = cfg or settings.perception
    rng = np.random.default_rng(seed)
    gen = torch_generator(seed)
    pool = with_random_points(samples, rng)
    opt = optimizer or torch.optim.Adam(net.parameters(), lr=cfg.lr)
    proposal.eval()
    scorer.eval()
    net.train()
    logs = []
    for epoch in range(epochs):
        losses = []
        for idx in _batches(len(pool), cfg.batch_size, rng):
            b = collate([pool[i] for i in idx])
            target = actionability_targets(b, proposal, scorer, cfg.proposals_per_point, cfg.top_k, gen)
            pred = net(b["points"], b["point_index"], b["contact"], b["theta"])
            loss = (pred - target).abs().mean()
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.item()))
        logs.append(EpochLog("actionability", epoch, float(np.mean(losses))))
        log.info("actionability_epoch epoch=%d loss=%.5f", epoch, logs[-1].loss)
    return logs


def train_bundle(bundle: PerceptionBundle, samples: Sequence[PerceptionSample], seed: int = 0,
                 cfg: Optional[PerceptionSettings] = None) -> List[EpochLog]:
    """Full perception training in the configured order."""
    cfg = cfg or bundle.cfg
    positives = [s for s in samples if s.label > 0.5]
    logs = train_scorer(bundle.scorer, samples, cfg.scorer_epochs, cfg, seed)
    if cfg.training_order == "scorer-joint":
        logs += finetune_all(bundle, samples, max(cfg.proposal_epochs, cfg.actionability_epochs), seed + 1, cfg)
    else:
        logs += train_proposal(bundle.proposal, positives, cfg.proposal_epochs, cfg, seed + 1)
        logs += train_actionability(bundle.actionability, samples, bundle.proposal, bundle.scorer,
                                    cfg.actionability_epochs, cfg, seed + 2)
    bundle.eval()
    return logs


def finetune_all(bundle: PerceptionBundle, samples: Sequence[PerceptionSample], epochs: int, seed: int = 0,
                 cfg: Optional[PerceptionSettings] = None) -> List[EpochLog]:
    """Interleave one epoch per head, scorer then proposal then actionability."""
    cfg = cfg or bundle.cfg
    positives = [s for s in samples if s.label > 0.5]
    opts = {
        "scorer": torch.optim.Adam(bundle.scorer.parameters(), lr=cfg.lr),
        "proposal": torch.optim.Adam(bundle.proposal.parameters(), lr=cfg.lr),
        "actionability": torch.optim.Adam(bundle.actionability.parameters(), lr=cfg.lr),
    }
    logs: List[EpochLog] = []
    for epoch in range(epochs):
        s = seed + 3 * epoch
        for entry in train_scorer(bundle.scorer, samples, 1, cfg, s, opts["scorer"]):
            logs.append(EpochLog("scorer", epoch, entry.loss))
        for entry in train_proposal(bundle.proposal, positives, 1, cfg, s + 1, opts["proposal"]):
            logs.append(EpochLog("proposal", epoch, entry.loss, entry.terms))
        for entry in train_actionability(bundle.actionability, samples, bundle.proposal, bundle.scorer, 1, cfg,
                                         s + 2, opts["actionability"]):
            logs.append(EpochLog("actionability", epoch, entry.loss))
    bundle.eval()
    return logs
