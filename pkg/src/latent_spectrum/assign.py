"""Energy-minimising assignment of latent codes to box wavefunction values.

A small network maps each posterior mean to a scalar ``psi``. The sample's
latent position is projected to a box coordinate ``z_box``, the pair
``(psi, z_box)`` is inverted to a continuous quantum number ``n`` and the
network is trained to minimise ``alpha n^2 + E1(n)`` plus a normalisation
penalty that rules out the trivial ``psi = 0`` solution.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .boxspectrum import BoxSpec, e1_closed, e1_slope
from .errors import ConfigError, ContractError, TrainingError
from .nn import ACTIVATIONS, DenseNetwork, OptimizerState, step
from .vae import LatentEmbedding

N_MIN = 1e-3
INVERSIONS = ("corrected", "literal")
PROJECTIONS = ("pca", "mean")


@dataclass(frozen=True)
class AssignConfig:
    hidden: tuple[int, ...] = (32, 32)
    epochs: int = 60
    batch_size: int = 64
    lr: float = 1e-3
    spec: BoxSpec = field(default_factory=BoxSpec)
    lambda_norm: float = 1.0
    inversion: str = "corrected"
    projection: str = "pca"
    margin_frac: float = 0.01
    seed: int = 0
    activation: str = "tanh"

    @property
    def alpha(self) -> float:
        return self.spec.alpha

    @property
    def margin(self) -> float:
        return self.margin_frac * self.spec.L

    def validate(self) -> "AssignConfig":
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1", "epochs")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1", "batch_size")
        if not self.lr > 0:
            raise ConfigError("lr must be positive", "lr")
        if self.lambda_norm < 0:
            raise ConfigError("lambda_norm must be non-negative", "lambda_norm")
        if self.inversion not in INVERSIONS:
            raise ConfigError(f"inversion must be one of {INVERSIONS}", "inversion")
        if self.projection not in PROJECTIONS:
            raise ConfigError(f"projection must be one of {PROJECTIONS}", "projection")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}", "activation")
        if not 0 < self.margin_frac < 0.5:
            raise ConfigError("margin_frac must lie in (0, 0.5)", "margin_frac")
        return self


@dataclass(frozen=True)
class LatentProjection:
    """Fitted scalarisation of latent means plus its min-max box map.

    In ``pca`` mode the direction is the top covariance eigenvector, signed
    so the projected training values have non-negative skewness.
    """

    mode: str
    direction: np.ndarray | None
    lo: float
    hi: float
    spec: BoxSpec
    margin: float

    def raw(self, mu) -> np.ndarray:
        mu = np.atleast_2d(np.asarray(mu, dtype=np.float64))
        if self.mode == "pca":
            return mu @ self.direction
        return mu.mean(axis=1)

    def to_box(self, mu) -> np.ndarray:
        """Box coordinates for (possibly unseen) latent rows, clipped into the box."""
        r = self.raw(mu)
        L, eps = self.spec.L, self.margin
        if self.hi == self.lo:
            return np.full(r.shape, L / 2)
        zb = eps + (r - self.lo) / (self.hi - self.lo) * (L - 2 * eps)
        return np.clip(zb, eps, L - eps)


def fit_projection(mu, mode="pca", spec: BoxSpec | None = None, margin=None) -> LatentProjection:
    spec = spec or BoxSpec()
    mu = np.atleast_2d(np.asarray(mu, dtype=np.float64))
    if mu.shape[0] == 0:
        raise ContractError("cannot project an empty embedding")
    margin = 0.01 * spec.L if margin is None else margin
    direction = None
    if mode == "pca":
        if mu.shape[0] < 2:
            direction = np.eye(mu.shape[1])[0]
        else:
            cov = np.atleast_2d(np.cov(mu, rowvar=False))
            _, vecs = np.linalg.eigh(cov)
            direction = vecs[:, -1].copy()
        proj = mu @ direction
        centred = proj - proj.mean()
        if np.mean(centred**3) < 0:
            direction = -direction
    elif mode != "mean":
        raise ContractError(f"unknown projection mode {mode!r}")
    p = LatentProjection(mode, direction, 0.0, 0.0, spec, margin)
    r = p.raw(mu)
    return LatentProjection(mode, direction, float(r.min()), float(r.max()), spec, margin)


def project_latent(emb: LatentEmbedding | np.ndarray, cfg: AssignConfig) -> np.ndarray:
    """Scalar box coordinate in ``[margin, L - margin]`` for every sample."""
    mu = emb.mu if isinstance(emb, LatentEmbedding) else emb
    return fit_projection(mu, cfg.projection, cfg.spec, cfg.margin).to_box(mu)


def _quantum_number(psi, z_box, spec: BoxSpec, mode: str, margin: float):
    psi = np.asarray(psi, dtype=np.float64)
    z_box = np.asarray(z_box, dtype=np.float64)
    if np.any(z_box < margin * (1 - 1e-12)):
        raise ContractError(f"z_box below box margin {margin}")
    L = spec.L
    scale = L / (np.pi * z_box)
    if mode == "corrected":
        root = np.sqrt(L / 2.0)
        s = root * np.abs(psi)
        ds = root * np.sign(psi)
    elif mode == "literal":
        s = 0.5 * L * psi**2
        ds = L * psi
    else:
        raise ContractError(f"unknown inversion mode {mode!r}")
    clamped = s >= 1.0
    s_c = np.clip(s, 0.0, 1.0)
    n_raw = scale * np.arcsin(s_c)
    with np.errstate(divide="ignore", invalid="ignore"):
        dn = np.where(clamped, 0.0, scale * ds / np.sqrt(1.0 - np.where(clamped, 0.0, s_c) ** 2))
    floored = n_raw < N_MIN
    n = np.where(floored, N_MIN, n_raw)
    dn = np.where(floored, 0.0, dn)
    return n, dn, clamped


def quantum_number(psi, z_box, spec: BoxSpec, mode="corrected", margin=None):
    """Continuous mode number whose eigenfunction takes value ``psi`` at ``z_box``.

    ``corrected`` inverts ``phi_n`` exactly on the principal branch;
    ``literal`` uses ``arcsin(L psi^2 / 2)``. Both clamp the arcsin argument
    to ``[0, 1]`` and floor the result at ``N_MIN``.
    """
    margin = 0.01 * spec.L if margin is None else margin
    return _quantum_number(psi, z_box, spec, mode, margin)[0]


def energy_loss_and_grad(psi, z_box, cfg: AssignConfig):
    """``(loss, E, n, dloss/dpsi, clamp_rate)`` for one batch."""
    psi = np.asarray(psi, dtype=np.float64).reshape(-1)
    z_box = np.asarray(z_box, dtype=np.float64).reshape(-1)
    if psi.size == 0 or psi.shape != z_box.shape:
        raise ContractError("energy_loss needs matching, non-empty psi and z_box")
    if not np.all(np.isfinite(psi)):
        raise TrainingError("non-finite psi values")
    spec = cfg.spec
    n, dn, clamped = _quantum_number(psi, z_box, spec, cfg.inversion, cfg.margin)
    E = cfg.alpha * n**2 + e1_closed(n, spec)
    B = psi.size
    norm_gap = spec.L * np.mean(psi**2) - 1.0
    loss = float(np.mean(E) + cfg.lambda_norm * norm_gap**2)
    dE = (2.0 * cfg.alpha * n + e1_slope(n, spec)) * dn
    grad = dE / B + cfg.lambda_norm * 2.0 * norm_gap * spec.L * 2.0 * psi / B
    return loss, E, n, grad, float(np.mean(clamped))


def energy_loss(psi, z_box, cfg: AssignConfig):
    loss, E, n, _, _ = energy_loss_and_grad(psi, z_box, cfg)
    return loss, E, n


def assigner_loss_and_grads(net: DenseNetwork, batch, cfg: AssignConfig):
    """Loss and network-parameter gradients; ``batch`` is ``(mu, z_box)``."""
    mu, z_box = batch
    out, cache = net.forward_cache(mu)
    loss, _, _, g, _ = energy_loss_and_grad(out[:, 0], z_box, cfg)
    grads, _ = net.backward(mu, g[:, None], cache)
    return loss, grads


def train_assigner(emb: LatentEmbedding, cfg: AssignConfig):
    """Train the psi network on the embedding's posterior means.

    Returns ``(network, trace)`` with one trace row per epoch.
    """
    cfg.validate()
    mu = emb.mu
    proj = fit_projection(mu, cfg.projection, cfg.spec, cfg.margin)
    if proj.hi == proj.lo:
        raise ContractError("projected latent values are all equal; nothing to assign")
    z_box = proj.to_box(mu)
    rng = np.random.default_rng(cfg.seed)
    net = DenseNetwork.create([mu.shape[1], *cfg.hidden, 1], rng, hidden=cfg.activation)
    opt = OptimizerState(lr=cfg.lr, kind="adam")
    N = mu.shape[0]
    trace = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(N)
        acc = np.zeros(4)
        for start in range(0, N, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            out, cache = net.forward_cache(mu[idx])
            try:
                loss, E, n, g, clamp = energy_loss_and_grad(out[:, 0], z_box[idx], cfg)
                grads, _ = net.backward(mu[idx], g[:, None], cache)
                step(net, grads, opt)
            except TrainingError as exc:
                raise TrainingError(f"assigner diverged at epoch {epoch}: {exc}", epoch=epoch, layer=exc.layer) from exc
            acc += len(idx) * np.array([loss, n.mean(), E.mean(), clamp])
        loss, mean_n, mean_E, clamp = acc / N
        if not np.isfinite(loss):
            raise TrainingError(f"assigner loss became non-finite at epoch {epoch}", epoch=epoch)
        trace.append({"epoch": epoch, "loss": float(loss), "mean_n": float(mean_n),
                      "mean_E": float(mean_E), "clamp_rate": float(clamp)})
    return net, trace


@dataclass
class EnergyAssignment:
    psi: np.ndarray
    z_box: np.ndarray
    n: np.ndarray
    E: np.ndarray
    labels: np.ndarray
    class_stats: dict[int, dict[str, float]]

    def class_means(self) -> np.ndarray:
        return np.array([self.class_stats[c]["mean_E"] for c in sorted(self.class_stats)])


def _class_stats(E, n, labels):
    stats = {}
    for c in np.unique(labels):
        m = labels == c
        stats[int(c)] = {
            "count": int(m.sum()),
            "mean_E": float(E[m].mean()),
            "std_E": float(E[m].std()),
            "mean_n": float(n[m].mean()),
            "std_n": float(n[m].std()),
        }
    return stats


def assign_energies(net: DenseNetwork, emb: LatentEmbedding, cfg: AssignConfig) -> EnergyAssignment:
    """Per-sample psi, n and E; labels only feed the per-class aggregates."""
    z_box = project_latent(emb, cfg)
    psi = net.forward(emb.mu)[:, 0]
    n = quantum_number(psi, z_box, cfg.spec, cfg.inversion, cfg.margin)
    E = cfg.alpha * n**2 + e1_closed(n, cfg.spec)
    return EnergyAssignment(psi=psi, z_box=z_box, n=n, E=E, labels=emb.labels.copy(),
                            class_stats=_class_stats(E, n, emb.labels))


def relabel(assign: EnergyAssignment, labels) -> EnergyAssignment:
    """Same per-sample values aggregated under different labels."""
    labels = np.asarray(labels)
    return EnergyAssignment(assign.psi, assign.z_box, assign.n, assign.E, labels.copy(),
                            _class_stats(assign.E, assign.n, labels))


def spectrum_gap(assign: EnergyAssignment) -> np.ndarray:
    """Consecutive differences of the sorted class-mean energies."""
    return np.diff(np.sort(assign.class_means()))


def variance_ratio(assign: EnergyAssignment) -> float:
    """One-way ANOVA F statistic of per-sample energies grouped by class."""
    E, labels = assign.E, assign.labels
    classes = np.unique(labels)
    k, N = len(classes), len(E)
    grand = E.mean()
    between = sum((labels == c).sum() * (E[labels == c].mean() - grand) ** 2 for c in classes) / (k - 1)
    within = sum(((E[labels == c] - E[labels == c].mean()) ** 2).sum() for c in classes) / (N - k)
    if within == 0:
        return float("inf") if between > 0 else 0.0
    return float(between / within)


def write_assignment_csv(assign: EnergyAssignment, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "psi", "z_box", "n", "E", "label"])
        for i in range(len(assign.E)):
            w.writerow([i, repr(float(assign.psi[i])), repr(float(assign.z_box[i])),
                        repr(float(assign.n[i])), repr(float(assign.E[i])), int(assign.labels[i])])


def read_assignment_csv(path) -> EnergyAssignment:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    col = lambda k: np.array([float(r[k]) for r in rows], dtype=np.float64)
    labels = np.array([int(r["label"]) for r in rows], dtype=np.int64)
    E, n = col("E"), col("n")
    return EnergyAssignment(col("psi"), col("z_box"), n, E, labels, _class_stats(E, n, labels))


def write_trace_csv(trace, path, columns) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in trace:
            w.writerow([row[c] if c == "epoch" else repr(float(row[c])) for c in columns])


def read_trace_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: (int(v) if k == "epoch" else float(v)) for k, v in r.items()} for r in csv.DictReader(fh)]
