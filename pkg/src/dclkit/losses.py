"""Training objectives: adversarial loss, the two contrastive terms, the
combined objective, and the distance-preservation / weight-anchoring
baseline regularizers.

Contrastive terms operate on pooled (N, C) feature matrices; every pairing
is scored as exp(CosSim / tau) and the losses are computed in log space
with logsumexp, which is exactly equal to the exponential form but stable
at small tau. All losses are averaged (not summed) over anchors so weight
defaults transfer across batch sizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .errors import ConfigurationError, DegenerateInputError, InputError
from .types import LatentBatch

DEFAULT_TAU = 0.07
DEFAULT_LAMBDA1 = 2.0
DEFAULT_LAMBDA2 = 0.5


@dataclass
class LossBundle:
    """One iteration's loss terms; total = adv + l1*cl1 + l2*cl2 + aux."""

    adv: torch.Tensor
    cl1: torch.Tensor
    cl2: torch.Tensor
    aux: torch.Tensor
    total: torch.Tensor
    lambda1: float
    lambda2: float

    def detached(self) -> dict[str, float]:
        return {
            "adv": float(self.adv),
            "cl1": float(self.cl1),
            "cl2": float(self.cl2),
            "aux": float(self.aux),
            "total": float(self.total),
        }


def _unit_rows(mat: torch.Tensor, name: str) -> torch.Tensor:
    if mat.ndim != 2:
        raise InputError(f"{name} must be a (N, C) matrix, got {tuple(mat.shape)}")
    norms = mat.norm(dim=1, keepdim=True)
    if (norms == 0).any():
        raise DegenerateInputError(f"zero-norm row in {name}")
    return mat / norms


def adversarial_loss(real_logits, fake_logits, side: str) -> torch.Tensor:
    """Non-saturating GAN loss.

    discriminator side: mean BCE pushing real logits to 1 and fake to 0,
    averaged over the two terms; generator side: mean BCE pushing fake
    logits to 1. Patch-logit maps are averaged over all patches.
    """
    if side == "discriminator":
        if real_logits is None or fake_logits is None or real_logits.numel() == 0 or fake_logits.numel() == 0:
            raise InputError("discriminator loss needs non-empty real and fake logits")
        return 0.5 * (F.softplus(-real_logits).mean() + F.softplus(fake_logits).mean())
    if side == "generator":
        if fake_logits is None or fake_logits.numel() == 0:
            raise InputError("generator loss needs non-empty fake logits")
        return F.softplus(-fake_logits).mean()
    raise ConfigurationError(f"side must be 'generator' or 'discriminator', got {side!r}")


def temperature_similarity(u: torch.Tensor, v: torch.Tensor, tau: float) -> torch.Tensor:
    """exp(CosSim(u, v) / tau) for a single pair of feature vectors."""
    if tau <= 0:
        raise ConfigurationError(f"temperature must be positive, got {tau}")
    nu, nv = u.norm(), v.norm()
    if nu == 0 or nv == 0:
        raise DegenerateInputError("zero-norm vector in temperature similarity")
    return torch.exp((u @ v) / (nu * nv) / tau)


def similarity_matrix(a: torch.Tensor, b: torch.Tensor, tau: float) -> torch.Tensor:
    """All-pairs exp(CosSim/tau) matrix (N, K); every entry lies in
    [exp(-1/tau), exp(1/tau)].

    The loss functions below work on the same pairings in log space; this
    explicit form exists for inspection and bound checks.
    """
    if tau <= 0:
        raise ConfigurationError(f"temperature must be positive, got {tau}")
    a_hat = _unit_rows(a, "left features")
    b_hat = _unit_rows(b, "right features")
    return torch.exp((a_hat @ b_hat.T).clamp(-1.0, 1.0) / tau)


def generator_contrastive_loss(
    f_target: torch.Tensor,
    f_source: torch.Tensor,
    tau: float = DEFAULT_TAU,
    negatives: str = "source",
) -> torch.Tensor:
    """N-way cross-entropy classifying the same-noise pair as positive.

    Anchor i is the target feature row i; the positive is source row i. With
    negatives="source" (Setup A) the denominator runs over all N source rows
    including the positive; with negatives="target" (Setup B) it is the
    positive plus the other N-1 target rows.
    """
    if f_target.shape != f_source.shape:
        raise InputError(f"shape mismatch {tuple(f_target.shape)} vs {tuple(f_source.shape)}")
    if tau <= 0:
        raise ConfigurationError(f"temperature must be positive, got {tau}")
    t_hat = _unit_rows(f_target, "target features")
    s_hat = _unit_rows(f_source, "source features")
    pos = (t_hat * s_hat).sum(dim=1) / tau
    if negatives == "source":
        logits = (t_hat @ s_hat.T) / tau
    elif negatives == "target":
        n = f_target.shape[0]
        tt = (t_hat @ t_hat.T) / tau
        logits = tt.clone()
        eye = torch.eye(n, dtype=torch.bool, device=tt.device)
        logits[eye] = pos
    else:
        raise ConfigurationError(f"negatives must be 'source' or 'target', got {negatives!r}")
    return (torch.logsumexp(logits, dim=1) - pos).mean()


def discriminator_contrastive_loss(
    f_target_fake: torch.Tensor,
    f_source_fake: torch.Tensor,
    f_real: torch.Tensor,
    tau: float = DEFAULT_TAU,
) -> torch.Tensor:
    """Same-noise positive pair in discriminator feature space, pushed away
    from the M real-target feature rows."""
    if f_target_fake.shape != f_source_fake.shape:
        raise InputError(
            f"shape mismatch {tuple(f_target_fake.shape)} vs {tuple(f_source_fake.shape)}"
        )
    if f_real.ndim != 2 or f_real.shape[0] == 0:
        raise ConfigurationError("discriminator CL needs at least one real feature row")
    if f_real.shape[1] != f_target_fake.shape[1]:
        raise InputError(
            f"real feature width {f_real.shape[1]} != fake feature width {f_target_fake.shape[1]}"
        )
    if tau <= 0:
        raise ConfigurationError(f"temperature must be positive, got {tau}")
    t_hat = _unit_rows(f_target_fake, "target-fake features")
    s_hat = _unit_rows(f_source_fake, "source-fake features")
    r_hat = _unit_rows(f_real, "real features")
    pos = (t_hat * s_hat).sum(dim=1, keepdim=True) / tau
    neg = (t_hat @ r_hat.T) / tau
    logits = torch.cat([pos, neg], dim=1)
    return (torch.logsumexp(logits, dim=1) - pos.squeeze(1)).mean()


def dcl_objective(adv, cl1, cl2, lambda1: float, lambda2: float, aux=None) -> LossBundle:
    """Combine the adversarial and contrastive terms into one bundle."""
    if lambda1 < 0 or lambda2 < 0:
        raise ConfigurationError(f"loss weights must be non-negative, got {lambda1}, {lambda2}")
    zero = torch.zeros_like(adv)
    cl1 = zero if cl1 is None else cl1
    cl2 = zero if cl2 is None else cl2
    aux = zero if aux is None else aux
    for name, term in (("adv", adv), ("cl1", cl1), ("cl2", cl2), ("aux", aux)):
        if not torch.isfinite(term).all():
            raise InputError(f"non-finite {name} component")
    total = adv + lambda1 * cl1 + lambda2 * cl2 + aux
    return LossBundle(adv=adv, cl1=cl1, cl2=cl2, aux=aux, total=total,
                      lambda1=lambda1, lambda2=lambda2)


def cdc_distance_loss(f_target: torch.Tensor, f_source: torch.Tensor, tau: float = 0.5) -> torch.Tensor:
    """Distance-preservation baseline: KL between the source and target
    batches' softmax-normalized pairwise-similarity distributions
    (self-pairs excluded), averaged over anchors.

    The source distribution is the reference; gradients flow through the
    target rows.
    """
    if f_target.shape != f_source.shape:
        raise InputError(f"shape mismatch {tuple(f_target.shape)} vs {tuple(f_source.shape)}")
    n = f_target.shape[0]
    if n < 2:
        raise InputError(f"distance preservation needs N >= 2, got {n}")
    t_hat = _unit_rows(f_target, "target features")
    s_hat = _unit_rows(f_source, "source features")
    sim_t = (t_hat @ t_hat.T) / tau
    sim_s = (s_hat @ s_hat.T) / tau
    mask = ~torch.eye(n, dtype=torch.bool, device=sim_t.device)
    rows_t = sim_t[mask].view(n, n - 1)
    rows_s = sim_s[mask].view(n, n - 1)
    log_p_s = F.log_softmax(rows_s, dim=1)
    log_p_t = F.log_softmax(rows_t, dim=1)
    return (log_p_s.exp() * (log_p_s - log_p_t)).sum(dim=1).mean()


def estimate_fisher(g, d, z_batch: LatentBatch) -> dict[str, torch.Tensor]:
    """Diagonal Fisher approximation for the generator: per-parameter mean
    squared gradient of the generator-side adversarial loss, one backward
    pass per z sample."""
    if z_batch.n == 0:
        raise InputError("fisher estimation needs a non-empty z batch")
    named = [(k, p) for k, p in g.named_parameters() if p.requires_grad]
    acc = [torch.zeros_like(p) for _, p in named]
    for i in range(z_batch.n):
        img, _ = g(z_batch.data[i : i + 1])
        logits, _ = d(img)
        loss = F.softplus(-logits).mean()
        grads = torch.autograd.grad(loss, [p for _, p in named], allow_unused=True)
        for slot, grad in zip(acc, grads):
            if grad is not None:
                slot += grad.detach().pow(2)
    return {k: slot / z_batch.n for (k, _), slot in zip(named, acc)}


def ewc_penalty(
    params_t: dict[str, torch.Tensor],
    params_s: dict[str, torch.Tensor],
    fisher: dict[str, torch.Tensor],
    lambda_ewc: float,
) -> torch.Tensor:
    """lambda * sum_i fisher_i * (theta_t,i - theta_s,i)^2 over aligned params."""
    if set(params_t) != set(params_s) or set(params_t) != set(fisher):
        raise InputError("parameter sets for EWC penalty are not aligned")
    total = None
    for name in sorted(params_t):
        if params_t[name].shape != params_s[name].shape or params_t[name].shape != fisher[name].shape:
            raise InputError(f"shape mismatch in EWC penalty at {name!r}")
        term = (fisher[name] * (params_t[name] - params_s[name]).pow(2)).sum()
        total = term if total is None else total + term
    return lambda_ewc * total
