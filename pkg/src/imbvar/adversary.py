"""Latent-space GAN: a generator maps noise to latent codes imitating the
encoder's minority-class outputs, and a discriminator tells them apart.
Generated codes feed the classifier head as weighted label-1 terms.

All losses use stable logit forms: log D(z) = -softplus(-a) and
log(1 - D(z)) = -softplus(a) for discriminator logit a.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import MLP, Tape


class AdversaryError(Exception):
    pass


@dataclass
class AdvConfig:
    d_steps_per_g_step: int = 1
    adv_lr: float | None = None  # default: half the classifier lr
    n_aug_per_batch: int = 16
    generator_loss: str = "nonsaturating"  # or "minimax"
    hidden: int = 32
    ema_decay: float = 0.995  # weight averaging for the sampling generator

    def __post_init__(self):
        if self.d_steps_per_g_step < 1:
            raise AdversaryError("d_steps_per_g_step must be >= 1")
        if self.n_aug_per_batch < 0:
            raise AdversaryError("n_aug_per_batch must be >= 0")
        if self.generator_loss not in ("nonsaturating", "minimax"):
            raise AdversaryError(f"unknown generator_loss {self.generator_loss!r}")
        if not 0.0 <= self.ema_decay < 1.0:
            raise AdversaryError("ema_decay must be in [0, 1)")


def adversarial_losses(disc: MLP, real_z: np.ndarray, fake_z: np.ndarray,
                       generator_loss: str = "nonsaturating") -> tuple[float, float]:
    """(d_loss, g_loss) as scalars, no gradients.

    d_loss = -mean log D(real) - mean log(1 - D(fake)).
    g_loss = -mean log D(fake) (nonsaturating) or mean log(1 - D(fake)).
    """
    if len(real_z) == 0 or len(fake_z) == 0:
        raise AdversaryError("adversarial_losses needs nonempty batches")
    a_real = disc.forward_np(np.atleast_2d(real_z))[:, 0]
    a_fake = disc.forward_np(np.atleast_2d(fake_z))[:, 0]
    d_loss = float(np.mean(np.logaddexp(0.0, -a_real)) + np.mean(np.logaddexp(0.0, a_fake)))
    if generator_loss == "nonsaturating":
        g_loss = float(np.mean(np.logaddexp(0.0, -a_fake)))
    else:
        g_loss = float(-np.mean(np.logaddexp(0.0, a_fake)))
    return d_loss, g_loss


def discriminator_accuracy(disc: MLP, real_z: np.ndarray, fake_z: np.ndarray) -> float:
    """Fraction of real scored positive plus fake scored negative."""
    a_real = disc.forward_np(np.atleast_2d(real_z))[:, 0]
    a_fake = disc.forward_np(np.atleast_2d(fake_z))[:, 0]
    correct = int(np.sum(a_real >= 0.0)) + int(np.sum(a_fake < 0.0))
    return correct / (len(a_real) + len(a_fake))


def d_train_step(disc: MLP, opt: ad.AdamState, real_z: np.ndarray,
                 fake_z: np.ndarray) -> float:
    """One discriminator Adam step; fake codes enter as constants."""
    if len(real_z) == 0 or len(fake_z) == 0:
        raise AdversaryError("d_train_step needs nonempty batches")
    tape = Tape()
    a_real = disc.forward(tape, tape.const(np.atleast_2d(real_z)))
    a_fake = disc.forward(tape, tape.const(np.atleast_2d(fake_z)))
    loss = ad.add(ad.vmean(ad.softplus(ad.scalar_mul(a_real, -1.0))),
                  ad.vmean(ad.softplus(a_fake)))
    ad.backward(loss)
    ad.adam_step(opt, disc.parameters(), disc.gradients())
    return float(loss.data)


def g_train_step(gen: MLP, disc: MLP, opt: ad.AdamState, noise: np.ndarray,
                 generator_loss: str = "nonsaturating") -> float:
    """One generator Adam step through a frozen discriminator."""
    tape = Tape()
    z = gen.forward(tape, tape.const(noise))
    a = disc.forward(tape, z)
    if generator_loss == "nonsaturating":
        loss = ad.vmean(ad.softplus(ad.scalar_mul(a, -1.0)))
    else:
        loss = ad.scalar_mul(ad.vmean(ad.softplus(a)), -1.0)
    ad.backward(loss)
    # discriminator leaves receive adjoints too; only the generator steps
    ad.adam_step(opt, gen.parameters(), gen.gradients())
    return float(loss.data)


def synth_minority_latents(gen: MLP, n: int, seed: int) -> np.ndarray:
    """n generated latent codes from seeded standard-normal noise."""
    if n < 1:
        raise AdversaryError("n must be >= 1")
    m = gen.layers[0].weights.shape[1]
    rng = np.random.default_rng(seed)
    return gen.forward_np(rng.standard_normal((n, m)))


class AdversaryState:
    """Generator + discriminator + their optimizers, on a dedicated RNG
    stream so the classifier's draws are untouched."""

    def __init__(self, gen: MLP, disc: MLP, config: AdvConfig,
                 latent_dim: int, rng: np.random.Generator, lr: float):
        self.gen = gen
        self.disc = disc
        self.config = config
        self.latent_dim = latent_dim
        self.rng = rng
        self.g_opt = ad.AdamState(gen.parameters(), lr=lr)
        self.d_opt = ad.AdamState(disc.parameters(), lr=lr)
        self.skipped_batches = 0
        # GAN means oscillate around the equilibrium; sampling goes through
        # an exponential moving average of the generator weights instead
        from .autodiff import DenseLayer
        self.ema_gen = MLP([DenseLayer(l.weights.copy(), l.bias.copy(), l.activation)
                            for l in gen.layers])

    @classmethod
    def init(cls, latent_dim: int, config: AdvConfig, model_config,
             seed: int) -> "AdversaryState":
        rng = np.random.default_rng(seed)
        gen = MLP.init(rng, [latent_dim, config.hidden, latent_dim], "relu")
        disc = MLP.init(rng, [latent_dim, config.hidden, 1], "relu")
        lr = config.adv_lr if config.adv_lr is not None else model_config.lr / 2.0
        return cls(gen, disc, config, latent_dim, rng, lr)

    def generate(self, n: int) -> np.ndarray:
        noise = self.rng.standard_normal((n, self.latent_dim))
        return self.ema_gen.forward_np(noise)

    def _generate_raw(self, n: int) -> np.ndarray:
        noise = self.rng.standard_normal((n, self.latent_dim))
        return self.gen.forward_np(noise)

    def update(self, real_latents: np.ndarray) -> None:
        """d_steps discriminator updates against fresh fakes, then one
        generator update, then the EMA refresh."""
        n_real = real_latents.shape[0]
        for _ in range(self.config.d_steps_per_g_step):
            fake = self._generate_raw(max(n_real, 1))
            d_train_step(self.disc, self.d_opt, real_latents, fake)
        noise = self.rng.standard_normal((max(n_real, 1), self.latent_dim))
        g_train_step(self.gen, self.disc, self.g_opt, noise,
                     self.config.generator_loss)
        decay = self.config.ema_decay
        for avg, cur in zip(self.ema_gen.parameters(), self.gen.parameters()):
            avg *= decay
            avg += (1.0 - decay) * cur

    def to_doc(self) -> dict:
        from .model import _mlp_doc
        return {
            "config": asdict(self.config),
            "generator": _mlp_doc(self.ema_gen),
            "generator_raw": _mlp_doc(self.gen),
            "discriminator": _mlp_doc(self.disc),
        }
