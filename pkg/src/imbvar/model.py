"""Variational latent-variable classifier with a class-weighted ELBO loss.

The encoder maps x to a diagonal Gaussian q(z|x) = N(mu(x), diag(sigma^2(x)));
a classifier head reads the latent code; an optional decoder reconstructs x.
Training minimizes the negated weighted ELBO with reparameterized samples.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import MLP, Tape, Value
from .data import Dataset
from .resampling import ClassWeights, class_weights, weight_vector

LOGVAR_CLAMP = 10.0


class ModelError(Exception):
    pass


class DivergenceError(ModelError):
    """Raised when the training loss goes non-finite; carries the last
    checkpoint recorded before the blow-up."""

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint


@dataclass
class ModelConfig:
    latent_dim: int = 8
    hidden_sizes: list[int] = field(default_factory=lambda: [64, 32])
    head_hidden: list[int] = field(default_factory=lambda: [16])
    mc_samples_train: int = 1
    beta_rec: float = 0.0
    weight_mode: str = "ratio"  # none | ratio | custom
    custom_weight: float | None = None
    lr: float = 1e-3
    epochs: int = 10
    batch_size: int = 128
    seed: int = 0
    eval_every: int | None = None

    def __post_init__(self):
        if self.weight_mode not in ("none", "ratio", "custom"):
            raise ModelError(f"unknown weight_mode {self.weight_mode!r}")
        if self.weight_mode == "custom" and self.custom_weight is None:
            raise ModelError("weight_mode=custom requires custom_weight")
        if self.mc_samples_train < 1:
            raise ModelError("mc_samples_train must be >= 1")
        if self.beta_rec < 0:
            raise ModelError("beta_rec must be >= 0")


@dataclass
class TrainTrace:
    iterations: list[int] = field(default_factory=list)
    train_losses: list[float] = field(default_factory=list)
    test_losses: list[float] = field(default_factory=list)

    def record(self, iteration: int, train_loss: float, test_loss: float):
        if self.iterations and iteration <= self.iterations[-1]:
            raise ModelError("trace iterations must strictly increase")
        self.iterations.append(iteration)
        self.train_losses.append(train_loss)
        self.test_losses.append(test_loss)

    def __len__(self):
        return len(self.iterations)


class VariationalClassifier:
    """Encoder trunk + (mu, logvar) heads + classifier head (+ optional decoder)."""

    def __init__(self, trunk: MLP, mu_head: MLP, logvar_head: MLP,
                 cls_head: MLP, decoder: MLP | None, config: ModelConfig,
                 input_dim: int):
        self.trunk = trunk
        self.mu_head = mu_head
        self.logvar_head = logvar_head
        self.cls_head = cls_head
        self.decoder = decoder
        self.config = config
        self.input_dim = input_dim

    @classmethod
    def init(cls, input_dim: int, config: ModelConfig,
             rng: np.random.Generator) -> "VariationalClassifier":
        m = config.latent_dim
        hidden = list(config.hidden_sizes)
        trunk = MLP.init(rng, [input_dim] + hidden, "relu", out_activation="relu")
        trunk_out = hidden[-1] if hidden else input_dim
        mu_head = MLP.init(rng, [trunk_out, m])
        logvar_head = MLP.init(rng, [trunk_out, m])
        cls_head = MLP.init(rng, [m] + list(config.head_hidden) + [1], "relu")
        decoder = None
        if config.beta_rec > 0:
            decoder = MLP.init(rng, [m] + hidden[::-1] + [input_dim], "relu")
        return cls(trunk, mu_head, logvar_head, cls_head, decoder, config, input_dim)

    # -- parameter plumbing --------------------------------------------------

    def _parts(self) -> list[MLP]:
        parts = [self.trunk, self.mu_head, self.logvar_head, self.cls_head]
        if self.decoder is not None:
            parts.append(self.decoder)
        return parts

    def parameters(self) -> list[np.ndarray]:
        out = []
        for part in self._parts():
            out.extend(part.parameters())
        return out

    def gradients(self) -> list[np.ndarray]:
        out = []
        for part in self._parts():
            out.extend(part.gradients())
        return out

    # -- tape (training) path ------------------------------------------------

    def encode_t(self, tape: Tape, x: Value) -> tuple[Value, Value]:
        h = self.trunk.forward(tape, x)
        mu = self.mu_head.forward(tape, h)
        logvar = ad.clip(self.logvar_head.forward(tape, h), -LOGVAR_CLAMP, LOGVAR_CLAMP)
        return mu, logvar

    def loss_on_batch(self, tape: Tape, x: np.ndarray, y: np.ndarray,
                      w_vec: np.ndarray, eps: np.ndarray,
                      aux_latents: np.ndarray | None = None,
                      aux_weight: float = 1.0) -> Value:
        """Negated weighted ELBO, mean over the batch.

        eps has shape (mc, batch, latent_dim) and is drawn by the caller so
        it can be frozen for gradient checks.  aux_latents, when given, are
        generator codes appended as weighted label-1 BCE terms.
        """
        if x.shape[0] == 0:
            raise ModelError("empty batch")
        cfg = self.config
        batch = x.shape[0]
        xv = tape.const(x)
        mu, logvar = self.encode_t(tape, xv)
        std = ad.exp(ad.scalar_mul(logvar, 0.5))

        targets = y.reshape(-1, 1).astype(np.float64)
        bce_acc = None
        rec_acc = None
        for s in range(eps.shape[0]):
            z = ad.add(mu, ad.mul(std, tape.const(eps[s])))
            logits = self.cls_head.forward(tape, z)
            bce_s = ad.rowsum(ad.bce_with_logits(logits, targets))
            bce_acc = bce_s if bce_acc is None else ad.add(bce_acc, bce_s)
            if self.decoder is not None and cfg.beta_rec > 0:
                xhat = self.decoder.forward(tape, z)
                diff = ad.sub(xhat, xv)
                rec_s = ad.scalar_mul(ad.rowsum(ad.mul(diff, diff)), 1.0 / self.input_dim)
                rec_acc = rec_s if rec_acc is None else ad.add(rec_acc, rec_s)
        bce = ad.scalar_mul(bce_acc, 1.0 / eps.shape[0])

        # KL(q||N(0,I)) = 0.5 * sum(mu^2 + sigma^2 - 1 - logvar)
        ones = tape.const(np.ones_like(mu.data))
        kl_inner = ad.add(ad.sub(ad.add(ad.mul(mu, mu), ad.exp(logvar)), ones),
                          ad.scalar_mul(logvar, -1.0))
        kl = ad.scalar_mul(ad.rowsum(kl_inner), 0.5)

        per_sample = ad.add(bce, kl)
        if rec_acc is not None:
            rec = ad.scalar_mul(rec_acc, cfg.beta_rec / eps.shape[0])
            per_sample = ad.add(per_sample, rec)
        loss = ad.vmean(ad.mul(tape.const(w_vec), per_sample))

        if aux_latents is not None and aux_latents.shape[0] > 0:
            aux_logits = self.cls_head.forward(tape, tape.const(aux_latents))
            aux_targets = np.ones((aux_latents.shape[0], 1))
            aux = ad.scalar_mul(ad.vmean(ad.bce_with_logits(aux_logits, aux_targets)),
                                aux_weight)
            loss = ad.add(loss, aux)
        return loss

    # -- numpy (evaluation) path --------------------------------------------

    def encode(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(mu, logvar) for a batch; logvar clamped."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.input_dim:
            raise ModelError(f"expected input dim {self.input_dim}, got {x.shape[1]}")
        h = self.trunk.forward_np(x)
        mu = self.mu_head.forward_np(h)
        logvar = np.clip(self.logvar_head.forward_np(h), -LOGVAR_CLAMP, LOGVAR_CLAMP)
        return mu, logvar

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        """p(y=1|x) at the deterministic latent z = mu(x); no sampling."""
        mu, _ = self.encode(x)
        logits = self.cls_head.forward_np(mu)[:, 0]
        return ad._expit(logits)

    def per_sample_losses(self, x: np.ndarray, y: np.ndarray,
                          eps: np.ndarray) -> np.ndarray:
        """Unweighted per-sample ELBO losses (BCE over mc draws + KL [+ rec]).

        The weighted batch loss is mean(w * these), so weighting is exactly
        multiplicative per sample.
        """
        mu, logvar = self.encode(x)
        std = np.exp(0.5 * logvar)
        y = np.asarray(y, dtype=np.float64)
        bce = np.zeros(x.shape[0])
        rec = np.zeros(x.shape[0])
        for s in range(eps.shape[0]):
            z = mu + std * eps[s]
            a = self.cls_head.forward_np(z)[:, 0]
            bce += np.maximum(a, 0.0) - a * y + np.log1p(np.exp(-np.abs(a)))
            if self.decoder is not None and self.config.beta_rec > 0:
                xhat = self.decoder.forward_np(z)
                rec += np.sum((xhat - x) ** 2, axis=1) / self.input_dim
        bce /= eps.shape[0]
        rec *= self.config.beta_rec / eps.shape[0]
        kl = 0.5 * np.sum(mu ** 2 + np.exp(logvar) - 1.0 - logvar, axis=1)
        return bce + kl + rec

    def eval_loss(self, ds: Dataset, w_vec: np.ndarray) -> float:
        """Deterministic loss (eps = 0, so z = mu) for trace recording."""
        eps = np.zeros((1, ds.n, self.config.latent_dim))
        per = self.per_sample_losses(ds.features, ds.labels, eps)
        return float(np.mean(w_vec * per))


def sample_latent(mu: np.ndarray, logvar: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """Reparameterization: z = mu + exp(logvar/2) * eps."""
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if mu.shape != logvar.shape or mu.shape != eps.shape:
        raise ModelError("sample_latent: shape mismatch")
    return mu + np.exp(0.5 * logvar) * eps


def kl_diag_gaussian(mu, logvar) -> float:
    """KL(N(mu, diag(exp(logvar))) || N(0, I)), closed form, nonnegative."""
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    return float(0.5 * np.sum(mu ** 2 + np.exp(logvar) - 1.0 - logvar))


def resolve_weights(labels: np.ndarray, config: ModelConfig) -> tuple[ClassWeights | None, np.ndarray]:
    """(ClassWeights or None, per-sample weight vector) per weight_mode."""
    if config.weight_mode == "none":
        return None, np.ones(len(labels))
    cw = class_weights(labels)
    if config.weight_mode == "custom":
        cw = ClassWeights(w_minority=float(config.custom_weight), w_majority=1.0,
                          n_major=cw.n_major, n_minor=cw.n_minor,
                          minority_label=cw.minority_label)
    return cw, weight_vector(labels, cw)


def fit(train: Dataset, val: Dataset, config: ModelConfig,
        adv_config=None):
    """Seeded minibatch Adam on the weighted ELBO loss.

    Returns (model, trace, adversary-or-None).  Deterministic given the
    seed: the adversary draws from its own RNG stream so enabling it with
    n_aug_per_batch=0 leaves the classifier updates bit-identical.
    """
    from . import adversary as adv_mod

    cfg = config
    rng = np.random.default_rng(cfg.seed)
    model = VariationalClassifier.init(train.d, cfg, rng)
    cw, w_train = resolve_weights(train.labels, cfg)
    w_val = (np.ones(val.n) if cw is None
             else weight_vector(val.labels, cw))

    trace = TrainTrace()
    if cfg.epochs == 0:
        return model, trace, None

    adv = None
    if adv_config is not None:
        adv = adv_mod.AdversaryState.init(cfg.latent_dim, adv_config, cfg, seed=cfg.seed + 1)

    params = model.parameters()
    opt = ad.AdamState(params, lr=cfg.lr)
    n = train.n
    steps_per_epoch = (n + cfg.batch_size - 1) // cfg.batch_size
    total_iters = cfg.epochs * steps_per_epoch
    eval_every = cfg.eval_every or max(1, total_iters // 20)

    aux_w = 1.0 if cw is None else cw.w_minority
    minority_label = train.minority_label()
    last_good = None
    iteration = 0
    trace.record(0, model.eval_loss(train, w_train), model.eval_loss(val, w_val))
    last_good = save_checkpoint_doc(model, adv)

    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            xb = train.features[idx]
            yb = train.labels[idx]
            wb = w_train[idx]
            eps = rng.standard_normal((cfg.mc_samples_train, len(idx), cfg.latent_dim))

            aux_latents = None
            if adv is not None:
                minority_mask = yb == minority_label
                if minority_mask.any():
                    real_mu, _ = model.encode(xb[minority_mask])
                    adv.update(real_mu)
                else:
                    adv.skipped_batches += 1
                if adv.config.n_aug_per_batch > 0:
                    aux_latents = adv.generate(adv.config.n_aug_per_batch)

            tape = Tape()
            loss = model.loss_on_batch(tape, xb, yb, wb, eps,
                                       aux_latents=aux_latents, aux_weight=aux_w)
            if not np.isfinite(loss.data):
                raise DivergenceError(
                    f"training loss became non-finite at iteration {iteration}",
                    checkpoint=last_good)
            ad.backward(loss)
            try:
                ad.adam_step(opt, params, model.gradients())
            except ad.AutodiffError as e:
                raise DivergenceError(
                    f"non-finite gradient at iteration {iteration}: {e}",
                    checkpoint=last_good) from e
            iteration += 1
            if iteration % eval_every == 0 and iteration < total_iters:
                trace.record(iteration, model.eval_loss(train, w_train),
                             model.eval_loss(val, w_val))
                last_good = save_checkpoint_doc(model, adv)

    if trace.iterations[-1] != total_iters:
        trace.record(total_iters, model.eval_loss(train, w_train),
                     model.eval_loss(val, w_val))
    return model, trace, adv


# ---------------------------------------------------------------------------
# checkpoint serialization: decimal strings keep full double precision

def _mlp_doc(mlp: MLP) -> list[dict]:
    return [
        {
            "weights": [[repr(float(v)) for v in row] for row in layer.weights],
            "bias": [repr(float(v)) for v in layer.bias],
            "activation": layer.activation,
        }
        for layer in mlp.layers
    ]


def _mlp_from_doc(doc: list[dict]) -> MLP:
    layers = []
    for entry in doc:
        w = np.array([[float(v) for v in row] for row in entry["weights"]])
        b = np.array([float(v) for v in entry["bias"]])
        layers.append(ad.DenseLayer(w, b, entry["activation"]))
    return MLP(layers)


def save_checkpoint_doc(model: VariationalClassifier, adv=None,
                        norm_stats_path: str | None = None) -> dict:
    cfg = asdict(model.config)
    doc = {
        "config": cfg,
        "input_dim": model.input_dim,
        "trunk": _mlp_doc(model.trunk),
        "mu_head": _mlp_doc(model.mu_head),
        "logvar_head": _mlp_doc(model.logvar_head),
        "cls_head": _mlp_doc(model.cls_head),
    }
    if model.decoder is not None:
        doc["decoder"] = _mlp_doc(model.decoder)
    if norm_stats_path is not None:
        doc["norm_stats"] = norm_stats_path
    if adv is not None:
        doc["adversary"] = adv.to_doc()
    return doc


def load_checkpoint_doc(doc: dict) -> VariationalClassifier:
    config = ModelConfig(**doc["config"])
    model = VariationalClassifier(
        trunk=_mlp_from_doc(doc["trunk"]),
        mu_head=_mlp_from_doc(doc["mu_head"]),
        logvar_head=_mlp_from_doc(doc["logvar_head"]),
        cls_head=_mlp_from_doc(doc["cls_head"]),
        decoder=_mlp_from_doc(doc["decoder"]) if "decoder" in doc else None,
        config=config,
        input_dim=int(doc["input_dim"]),
    )
    return model


def save_checkpoint(path: str, model: VariationalClassifier, adv=None,
                    norm_stats_path: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(save_checkpoint_doc(model, adv, norm_stats_path), fh,
                  indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path: str) -> VariationalClassifier:
    with open(path, "r", encoding="utf-8") as fh:
        return load_checkpoint_doc(json.load(fh))
