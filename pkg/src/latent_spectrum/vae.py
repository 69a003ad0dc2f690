"""Dense VAE with a diagonal-Gaussian posterior and unit-variance Gaussian
decoder, plus probes for degenerate or collapsed posteriors."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .datagen import Dataset
from .errors import ConfigError, ContractError, TrainingError
from .nn import ACTIVATIONS, DenseNetwork, OptimizerState, format_network, parse_network, step


@dataclass(frozen=True)
class VaeConfig:
    input_dim: int = 20
    encoder_hidden: tuple[int, ...] = (64, 64)
    latent_dim: int = 2
    decoder_hidden: tuple[int, ...] = (64, 64)
    epochs: int = 60
    batch_size: int = 64
    lr: float = 1e-3
    beta: float = 1.0
    seed: int = 0
    activation: str = "tanh"

    def validate(self) -> "VaeConfig":
        if self.input_dim < 1:
            raise ConfigError("input_dim must be positive", "input_dim")
        if self.latent_dim < 1:
            raise ConfigError("latent_dim must be >= 1", "latent_dim")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1", "epochs")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1", "batch_size")
        if not self.lr > 0:
            raise ConfigError("lr must be positive", "lr")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}", "activation")
        if not self.beta > 0:
            raise ConfigError("beta must be positive", "beta")
        if any(h < 1 for h in (*self.encoder_hidden, *self.decoder_hidden)):
            raise ConfigError("hidden sizes must be positive", "encoder_hidden")
        return self


class VAE:
    def __init__(self, encoder: DenseNetwork, decoder: DenseNetwork, config: VaeConfig):
        if encoder.n_out != 2 * decoder.n_in:
            raise ContractError("encoder must emit 2 * latent_dim values")
        self.encoder = encoder
        self.decoder = decoder
        self.config = config

    @classmethod
    def create(cls, cfg: VaeConfig, rng) -> "VAE":
        enc = DenseNetwork.create([cfg.input_dim, *cfg.encoder_hidden, 2 * cfg.latent_dim], rng, hidden=cfg.activation)
        dec = DenseNetwork.create([cfg.latent_dim, *cfg.decoder_hidden, cfg.input_dim], rng, hidden=cfg.activation)
        return cls(enc, dec, cfg)

    @property
    def latent_dim(self) -> int:
        return self.decoder.n_in

    def parameters(self) -> list[np.ndarray]:
        return self.encoder.parameters() + self.decoder.parameters()

    def encode(self, x):
        out = self.encoder.forward(x)
        d = self.latent_dim
        return out[:, :d], out[:, d:]

    def decode(self, z):
        return self.decoder.forward(z)


def reparametrize(mu, logvar, noise):
    mu, logvar, noise = (np.asarray(a, dtype=np.float64) for a in (mu, logvar, noise))
    if not mu.shape == logvar.shape == noise.shape:
        raise ContractError(f"shape mismatch: mu {mu.shape}, logvar {logvar.shape}, noise {noise.shape}")
    return mu + np.exp(0.5 * logvar) * noise


def elbo_loss(x, recon, mu, logvar, beta=1.0):
    """Negative ELBO as ``(total, recon_term, kl_term)``, all batch means."""
    x, recon, mu, logvar = (np.atleast_2d(np.asarray(a, dtype=np.float64)) for a in (x, recon, mu, logvar))
    if x.shape != recon.shape or mu.shape != logvar.shape or x.shape[0] != mu.shape[0]:
        raise ContractError("shape mismatch in elbo_loss")
    for name, a in (("x", x), ("recon", recon), ("mu", mu), ("logvar", logvar)):
        if not np.all(np.isfinite(a)):
            raise TrainingError(f"non-finite values in {name}")
    recon_term = float(np.mean(np.sum((recon - x) ** 2, axis=1)))
    kl_term = float(np.mean(0.5 * np.sum(np.exp(logvar) + mu**2 - 1.0 - logvar, axis=1)))
    return recon_term + beta * kl_term, recon_term, kl_term


def loss_and_grads(model: VAE, x, noise, beta=None):
    """Loss terms and gradients (aligned with ``model.parameters()``) for a fixed noise draw."""
    beta = model.config.beta if beta is None else beta
    B = x.shape[0]
    d = model.latent_dim
    enc_out, enc_cache = model.encoder.forward_cache(x)
    mu, logvar = enc_out[:, :d], enc_out[:, d:]
    sigma = np.exp(0.5 * logvar)
    z = mu + sigma * noise
    recon, dec_cache = model.decoder.forward_cache(z)
    total, rec, kl = elbo_loss(x, recon, mu, logvar, beta)

    g_recon = 2.0 * (recon - x) / B
    dec_grads, g_z = model.decoder.backward(z, g_recon, dec_cache)
    g_mu = g_z + beta * mu / B
    g_logvar = g_z * noise * 0.5 * sigma + beta * 0.5 * (np.exp(logvar) - 1.0) / B
    enc_grads, _ = model.encoder.backward(x, np.hstack([g_mu, g_logvar]), enc_cache)
    return (total, rec, kl), enc_grads + dec_grads


def _check_standardized(X):
    if X.shape[0] > 1 and (np.max(np.abs(X.mean(axis=0))) > 1e-6 or np.max(X.std(axis=0)) > 1 + 1e-6):
        raise ContractError("train_vae expects standardized features (see datagen.standardize)")


def train_vae(ds: Dataset, cfg: VaeConfig):
    """Train with Adam on shuffled mini-batches.

    Returns ``(model, trace)``; each trace row holds the epoch-averaged
    ``total``, ``recon`` and ``kl`` terms.
    """
    cfg.validate()
    X = ds.features
    if X.shape[1] != cfg.input_dim:
        raise ContractError(f"dataset has {X.shape[1]} features, config expects {cfg.input_dim}")
    _check_standardized(X)
    rng = np.random.default_rng(cfg.seed)
    model = VAE.create(cfg, rng)
    opt = OptimizerState(lr=cfg.lr, kind="adam")
    N = X.shape[0]
    trace = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(N)
        sums = np.zeros(3)
        for start in range(0, N, cfg.batch_size):
            xb = X[order[start:start + cfg.batch_size]]
            noise = rng.standard_normal((xb.shape[0], cfg.latent_dim))
            try:
                terms, grads = loss_and_grads(model, xb, noise)
                step(model, grads, opt)
            except TrainingError as exc:
                raise TrainingError(f"VAE diverged at epoch {epoch}: {exc}", epoch=epoch, layer=exc.layer) from exc
            sums += np.array(terms) * xb.shape[0]
        total, rec, kl = sums / N
        if not np.isfinite(total):
            raise TrainingError(f"VAE loss became non-finite at epoch {epoch}", epoch=epoch)
        trace.append({"epoch": epoch, "total": float(total), "recon": float(rec), "kl": float(kl)})
    return model, trace


@dataclass
class LatentEmbedding:
    mu: np.ndarray
    logvar: np.ndarray
    samples: np.ndarray
    noise: np.ndarray
    labels: np.ndarray

    @property
    def latent_dim(self) -> int:
        return self.mu.shape[1]


def encode_dataset(model: VAE, ds: Dataset, seed: int) -> LatentEmbedding:
    mu, logvar = model.encode(ds.features)
    noise = np.random.default_rng(seed).standard_normal(mu.shape)
    return LatentEmbedding(mu=mu, logvar=logvar, samples=reparametrize(mu, logvar, noise),
                           noise=noise, labels=ds.labels.copy())


def covariance_rank(emb_or_mu, tol=1e-8):
    """Numerical rank of the empirical covariance of the posterior means.

    Counts eigenvalues above ``tol`` times the largest one. Returns
    ``(rank, eigenvalues)`` with eigenvalues sorted descending.
    """
    mu = emb_or_mu.mu if isinstance(emb_or_mu, LatentEmbedding) else np.asarray(emb_or_mu, dtype=np.float64)
    if mu.ndim != 2 or mu.shape[0] < 2:
        raise ContractError("covariance_rank needs at least two latent rows")
    cov = np.atleast_2d(np.cov(mu, rowvar=False))
    eig = np.sort(np.linalg.eigvalsh(cov))[::-1]
    # below this, the "spread" is summation rounding on identical rows
    noise_floor = 64 * np.finfo(np.float64).eps ** 2 * max(1.0, float(np.mean(mu**2)))
    top = eig[0]
    if top <= noise_floor:
        return 0, eig
    return int(np.sum(eig > tol * top)), eig


def collapsed_dims(emb: LatentEmbedding, mu_tol=1e-2, var_tol=0.1) -> list[int]:
    """Latent dimensions whose posterior has reverted to the prior."""
    mu_spread = emb.mu.std(axis=0)
    mean_var = np.exp(emb.logvar).mean(axis=0)
    return [int(j) for j in np.flatnonzero((mu_spread < mu_tol) & (np.abs(mean_var - 1.0) <= var_tol))]


def write_embedding_csv(emb: LatentEmbedding, path) -> None:
    d = emb.latent_dim
    header = ["id"] + [f"mu{j}" for j in range(d)] + [f"logvar{j}" for j in range(d)] + [f"z{j}" for j in range(d)] + ["label"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(emb.mu.shape[0]):
            vals = np.concatenate([emb.mu[i], emb.logvar[i], emb.samples[i]])
            w.writerow([i] + [repr(float(v)) for v in vals] + [int(emb.labels[i])])


def read_embedding_csv(path) -> LatentEmbedding:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    d = sum(1 for h in header if h.startswith("mu"))
    arr = np.array([[float(v) for v in r[1:-1]] for r in rows], dtype=np.float64).reshape(len(rows), 3 * d)
    mu, logvar, z = arr[:, :d], arr[:, d:2 * d], arr[:, 2 * d:]
    sigma = np.exp(0.5 * logvar)
    noise = (z - mu) / sigma
    labels = np.array([int(r[-1]) for r in rows], dtype=np.int64)
    return LatentEmbedding(mu=mu, logvar=logvar, samples=z, noise=noise, labels=labels)


def save_vae(model: VAE, path) -> None:
    cfg = asdict(model.config)
    text = "vae_config: " + json.dumps(cfg, sort_keys=True) + "\n"
    text += "[encoder]\n" + format_network(model.encoder)
    text += "[decoder]\n" + format_network(model.decoder)
    Path(path).write_text(text)


def load_vae(path) -> VAE:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("vae_config:"):
        raise ContractError(f"{path}: missing vae_config header")
    raw = json.loads(lines[0].split(":", 1)[1])
    raw["encoder_hidden"] = tuple(raw["encoder_hidden"])
    raw["decoder_hidden"] = tuple(raw["decoder_hidden"])
    cfg = VaeConfig(**raw)
    i_dec = lines.index("[decoder]")
    enc = parse_network(lines[2:i_dec])
    dec = parse_network(lines[i_dec + 1:])
    return VAE(enc, dec, cfg)
