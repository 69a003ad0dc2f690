"""Replica experiments: do independently trained pipelines agree?

Raw embeddings are compared with an orthogonal-Procrustes alignment score;
energy spectra with a distance between min-max normalised, sorted class-mean
energy vectors. A label-shuffled control gives the chance level for the
spectrum distance.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from itertools import combinations

import numpy as np

from .assign import AssignConfig, EnergyAssignment, assign_energies, relabel, train_assigner
from .datagen import Dataset
from .errors import ContractError, LatentSpectrumError
from .vae import LatentEmbedding, VaeConfig, collapsed_dims, covariance_rank, encode_dataset, train_vae

log = logging.getLogger(__name__)


def config_digest(cfg) -> str:
    payload = json.dumps(asdict(cfg), sort_keys=True, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass
class ReplicaResult:
    seed: int
    vae_digest: str
    embedding: LatentEmbedding | None = None
    assignment: EnergyAssignment | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _run_one(ds: Dataset, vae_cfg: VaeConfig, assign_cfg: AssignConfig, seed: int) -> ReplicaResult:
    vcfg = replace(vae_cfg, seed=seed)
    result = ReplicaResult(seed=seed, vae_digest=config_digest(vcfg))
    try:
        model, _ = train_vae(ds, vcfg)
        emb = encode_dataset(model, ds, seed)
        acfg = replace(assign_cfg, seed=seed)
        net, _ = train_assigner(emb, acfg)
        result.embedding = emb
        result.assignment = assign_energies(net, emb, acfg)
    except (LatentSpectrumError, FloatingPointError, np.linalg.LinAlgError) as exc:
        log.warning("replica seed=%d failed: %s", seed, exc)
        result.error = f"{type(exc).__name__}: {exc}"
    return result


def run_replicas(ds: Dataset, vae_cfg: VaeConfig, assign_cfg: AssignConfig, seeds, workers=1) -> list[ReplicaResult]:
    """Full train/encode/assign pass per seed. A failing replica records its
    error instead of aborting the batch."""
    seeds = [int(s) for s in seeds]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda s: _run_one(ds, vae_cfg, assign_cfg, s), seeds))
    return [_run_one(ds, vae_cfg, assign_cfg, s) for s in seeds]


def _normalise_cloud(x):
    x = np.asarray(x, dtype=np.float64)
    x = x - x.mean(axis=0)
    norm = np.linalg.norm(x)
    return x / norm if norm > 0 else x


def embedding_alignment(emb_a, emb_b) -> float:
    """Procrustes agreement of two latent-mean clouds, in ``[0, 1]``.

    Both clouds are centred and scaled to unit Frobenius norm; the score is
    ``1 - min_R ||A R - B||^2 / 2`` over orthogonal ``R`` (reflections
    allowed), which equals the sum of singular values of ``A^T B``.
    """
    a = emb_a.mu if isinstance(emb_a, LatentEmbedding) else emb_a
    b = emb_b.mu if isinstance(emb_b, LatentEmbedding) else emb_b
    a, b = _normalise_cloud(a), _normalise_cloud(b)
    if a.shape[0] != b.shape[0]:
        raise ContractError("embeddings must describe the same samples")
    if not a.any() or not b.any():
        return 0.0
    score = np.linalg.svd(a.T @ b, compute_uv=False).sum()
    return float(np.clip(score, 0.0, 1.0))


def _minmax(v):
    v = np.sort(np.asarray(v, dtype=np.float64))
    span = v[-1] - v[0]
    return (v - v[0]) / span if span > 0 else np.zeros_like(v)


def spectrum_distance(spec_a, spec_b) -> float:
    """Mean absolute gap between sorted, min-max normalised energy vectors."""
    a, b = np.asarray(spec_a, dtype=np.float64), np.asarray(spec_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size == 0:
        raise ContractError(f"spectra must be equal-length vectors, got {a.shape} and {b.shape}")
    return float(np.mean(np.abs(_minmax(a) - _minmax(b))))


def shuffled_spectrum(assign: EnergyAssignment, seed: int) -> np.ndarray:
    labels = np.random.default_rng(seed).permutation(assign.labels)
    return np.sort(relabel(assign, labels).class_means())


@dataclass
class ReplicaReport:
    seeds: list[int]
    digests: list[str]
    ranks: list[int]
    collapsed: list[list[int]]
    spectra: list[np.ndarray]
    spectra_std: list[np.ndarray]
    alignment: np.ndarray
    distance: np.ndarray
    control_distances: np.ndarray
    failures: dict[int, str] = field(default_factory=dict)

    def summary(self) -> dict[str, float]:
        iu = np.triu_indices(len(self.seeds), k=1)
        out = {
            "n_replicas": len(self.seeds),
            "n_failed": len(self.failures),
            "median_alignment": float(np.median(self.alignment[iu])) if iu[0].size else float("nan"),
            "median_spectrum_distance": float(np.median(self.distance[iu])) if iu[0].size else float("nan"),
            "median_control_distance": float(np.median(self.control_distances)) if self.control_distances.size else float("nan"),
        }
        return out


def report(results: list[ReplicaResult], rank_tol=1e-8, control_seed=0) -> ReplicaReport:
    ok = [r for r in results if r.ok]
    k = len(ok)
    spectra, stds = [], []
    for r in ok:
        order = np.argsort(r.assignment.class_means())
        stats = [r.assignment.class_stats[c] for c in sorted(r.assignment.class_stats)]
        spectra.append(np.array([stats[i]["mean_E"] for i in order]))
        stds.append(np.array([stats[i]["std_E"] for i in order]))
    align = np.eye(k)
    dist = np.zeros((k, k))
    for i, j in combinations(range(k), 2):
        a = embedding_alignment(ok[i].embedding, ok[j].embedding)
        b = embedding_alignment(ok[j].embedding, ok[i].embedding)
        align[i, j] = align[j, i] = 0.5 * (a + b)
        dist[i, j] = dist[j, i] = spectrum_distance(spectra[i], spectra[j])
    controls = [shuffled_spectrum(r.assignment, control_seed + r.seed) for r in ok]
    control = np.array([spectrum_distance(spectra[i], controls[j]) for i in range(k) for j in range(k)])
    return ReplicaReport(
        seeds=[r.seed for r in ok],
        digests=[r.vae_digest for r in ok],
        ranks=[covariance_rank(r.embedding, rank_tol)[0] for r in ok],
        collapsed=[collapsed_dims(r.embedding) for r in ok],
        spectra=spectra,
        spectra_std=stds,
        alignment=align,
        distance=dist,
        control_distances=control,
        failures={r.seed: r.error for r in results if not r.ok},
    )


def write_report(rep: ReplicaReport, directory) -> None:
    from pathlib import Path

    directory = Path(directory)
    lines = ["[summary]"]
    lines += [f"{k} = {v!r}" for k, v in rep.summary().items()]
    lines.append("alignment_score = procrustes agreement of latent means (artifact construction)")
    lines.append("spectrum_distance = mean |diff| of min-max normalised sorted class energies (artifact construction)")
    for i, seed in enumerate(rep.seeds):
        lines.append("")
        lines.append(f"[replica {seed}]")
        lines.append(f"vae_digest = {rep.digests[i]}")
        lines.append(f"covariance_rank = {rep.ranks[i]}")
        lines.append(f"collapsed_dims = {' '.join(map(str, rep.collapsed[i]))}")
        lines.append(f"spectrum = {' '.join(repr(float(v)) for v in rep.spectra[i])}")
    for seed, err in sorted(rep.failures.items()):
        lines.append("")
        lines.append(f"[failed {seed}]")
        lines.append(f"error = {err}")
    (directory / "replica_report.txt").write_text("\n".join(lines) + "\n")

    with open(directory / "replica_spectra.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "class_rank", "mean_E", "std_E"])
        for seed, spec, std in zip(rep.seeds, rep.spectra, rep.spectra_std):
            for r, (m, s) in enumerate(zip(spec, std)):
                w.writerow([seed, r, repr(float(m)), repr(float(s))])
    with open(directory / "pairwise.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seedA", "seedB", "alignment", "spectrum_distance"])
        for i, j in combinations(range(len(rep.seeds)), 2):
            w.writerow([rep.seeds[i], rep.seeds[j], repr(float(rep.alignment[i, j])), repr(float(rep.distance[i, j]))])


def read_replica_spectra(path) -> dict[int, np.ndarray]:
    out: dict[int, list[float]] = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            out.setdefault(int(r["seed"]), []).append(float(r["mean_E"]))
    return {k: np.array(v) for k, v in out.items()}


def read_pairwise(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{"seedA": int(r["seedA"]), "seedB": int(r["seedB"]), "alignment": float(r["alignment"]),
                 "spectrum_distance": float(r["spectrum_distance"])} for r in csv.DictReader(fh)]
