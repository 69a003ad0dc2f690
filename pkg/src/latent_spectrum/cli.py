"""``latent-spectrum`` command line: staged pipeline over a run directory.

Every stage reads its inputs from the run directory, writes its CSV outputs
there and appends one JSON line to ``manifest.jsonl``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import assign as asg
from . import boxspectrum as box
from . import datagen, degeneracy, vae
from .config import STAGES, RunConfig, default_config_text, load_config
from .errors import ConfigError, ContractError, LatentSpectrumError, MissingArtifactError, TrainingError
from .nn import load_network, save_network

log = logging.getLogger("latent_spectrum")

STAGE_OUTPUTS = {
    "generate": ["dataset.csv"],
    "train-vae": ["vae_model.txt", "vae_trace.csv"],
    "embed": ["embedding.csv"],
    "spectrum": ["spectrum.csv", "coupling.csv"],
    "assign": ["assigner_model.txt", "assign_trace.csv", "assignment.csv", "class_energies.csv"],
    "plotdata": ["psi_curve.csv", "latent2d.csv"],
    "replicas": ["replica_report.txt", "replica_spectra.csv", "pairwise.csv"],
}
PIPELINE_ORDER = ("generate", "train-vae", "embed", "spectrum", "assign", "plotdata", "replicas")


class ArtifactExistsError(LatentSpectrumError):
    def __init__(self, path):
        super().__init__(f"refusing to overwrite {path} (pass --overwrite)")
        self.path = path


def _need(out: Path, name: str) -> Path:
    p = out / name
    if not p.exists():
        raise MissingArtifactError(name)
    return p


def _guard(out: Path, stage: str, overwrite: bool) -> None:
    if overwrite:
        return
    for name in STAGE_OUTPUTS[stage]:
        if (out / name).exists():
            raise ArtifactExistsError(name)


def _standardized_dataset(cfg: RunConfig, out: Path) -> datagen.Dataset:
    return datagen.standardize(datagen.read_csv(_need(out, "dataset.csv"), cfg.dataset))


def stage_generate(cfg: RunConfig, out: Path) -> None:
    datagen.write_csv(datagen.generate(cfg.dataset), out / "dataset.csv")


def stage_train_vae(cfg: RunConfig, out: Path) -> None:
    ds = _standardized_dataset(cfg, out)
    model, trace = vae.train_vae(ds, cfg.vae)
    vae.save_vae(model, out / "vae_model.txt")
    asg.write_trace_csv(trace, out / "vae_trace.csv", ["epoch", "total", "recon", "kl"])


def stage_embed(cfg: RunConfig, out: Path) -> None:
    ds = _standardized_dataset(cfg, out)
    model = vae.load_vae(_need(out, "vae_model.txt"))
    emb = vae.encode_dataset(model, ds, cfg.encode_seed)
    vae.write_embedding_csv(emb, out / "embedding.csv")


def stage_spectrum(cfg: RunConfig, out: Path) -> None:
    box.write_table(box.build_table(cfg.box), out / "spectrum.csv", out / "coupling.csv")


def stage_assign(cfg: RunConfig, out: Path) -> None:
    emb = vae.read_embedding_csv(_need(out, "embedding.csv"))
    net, trace = asg.train_assigner(emb, cfg.assign)
    save_network(net, out / "assigner_model.txt")
    asg.write_trace_csv(trace, out / "assign_trace.csv", ["epoch", "loss", "mean_n", "mean_E", "clamp_rate"])
    result = asg.assign_energies(net, emb, cfg.assign)
    asg.write_assignment_csv(result, out / "assignment.csv")
    with open(out / "class_energies.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "count", "mean_E", "std_E", "mean_n", "std_n"])
        for c, s in sorted(result.class_stats.items()):
            w.writerow([c, s["count"]] + [repr(s[k]) for k in ("mean_E", "std_E", "mean_n", "std_n")])


def stage_plotdata(cfg: RunConfig, out: Path, grid=50) -> None:
    emit_plotdata(out, cfg, grid)


def emit_plotdata(out, cfg: RunConfig, grid=50) -> None:
    """``psi_curve.csv`` (network psi along each class's slice of the box) and
    ``latent2d.csv`` (top two principal components of the latent means)."""
    out = Path(out)
    emb = vae.read_embedding_csv(_need(out, "embedding.csv"))
    net = load_network(_need(out, "assigner_model.txt"))
    result = asg.read_assignment_csv(_need(out, "assignment.csv"))
    acfg = cfg.assign
    proj = asg.fit_projection(emb.mu, acfg.projection, acfg.spec, acfg.margin)

    with open(out / "psi_curve.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "z_box", "psi"])
        for c in np.unique(emb.labels):
            mu_c = emb.mu[emb.labels == c]
            centroid = mu_c.mean(axis=0)
            raw = proj.raw(mu_c)
            s = np.linspace(raw.min(), raw.max(), grid)
            if proj.mode == "pca":
                d = proj.direction
                pts = centroid[None, :] + (s - centroid @ d)[:, None] * d[None, :]
            else:
                # sweep along the all-ones direction, which moves only the mean coordinate
                pts = centroid[None, :] + (s - centroid.mean())[:, None]
            zb = proj.to_box(pts)
            psi = net.forward(pts)[:, 0]
            for z, p in zip(zb, psi):
                w.writerow([int(c), repr(float(z)), repr(float(p))])

    centred = emb.mu - emb.mu.mean(axis=0)
    cov = np.atleast_2d(np.cov(emb.mu, rowvar=False))
    vals, vecs = np.linalg.eigh(cov)
    top = vecs[:, ::-1][:, :2]
    pcs = centred @ top
    if pcs.shape[1] == 1:
        pcs = np.hstack([pcs, np.zeros_like(pcs)])
    with open(out / "latent2d.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "pc1", "pc2", "label", "E"])
        for i in range(len(pcs)):
            w.writerow([i, repr(float(pcs[i, 0])), repr(float(pcs[i, 1])), int(emb.labels[i]), repr(float(result.E[i]))])


def stage_replicas(cfg: RunConfig, out: Path) -> None:
    ds = _standardized_dataset(cfg, out)
    results = degeneracy.run_replicas(ds, cfg.vae, cfg.assign, cfg.replica_seeds, workers=cfg.replica_workers)
    if not any(r.ok for r in results):
        raise TrainingError("every replica failed: " + "; ".join(r.error for r in results))
    degeneracy.write_report(degeneracy.report(results), out)


STAGE_FUNCS = {
    "generate": stage_generate,
    "train-vae": stage_train_vae,
    "embed": stage_embed,
    "spectrum": stage_spectrum,
    "assign": stage_assign,
    "plotdata": stage_plotdata,
    "replicas": stage_replicas,
}


def _stage_seed(cfg: RunConfig, stage: str):
    return {
        "generate": cfg.dataset.seed,
        "train-vae": cfg.vae.seed,
        "embed": cfg.encode_seed,
        "assign": cfg.assign.seed,
        "replicas": list(cfg.replica_seeds),
    }.get(stage)


def run_stage(stage: str, cfg: RunConfig, out, overwrite=False) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _guard(out, stage, overwrite)
    start = time.perf_counter()
    STAGE_FUNCS[stage](cfg, out)
    entry = {
        "command": stage,
        "config_digest": cfg.digest(),
        "seed": _stage_seed(cfg, stage),
        "duration_s": round(time.perf_counter() - start, 3),
    }
    with open(out / "manifest.jsonl", "a") as fh:
        fh.write(json.dumps(entry) + "\n")
    log.info("%s done in %.2fs", stage, entry["duration_s"])


def run_pipeline(cfg: RunConfig, out, overwrite=False) -> None:
    out = Path(out)
    stages = [s for s in PIPELINE_ORDER if s in cfg.stages]
    if not overwrite:
        for s in stages:
            _guard(out, s, False)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.to_text())
    for s in stages:
        run_stage(s, cfg, out, overwrite=True)


def _error_line(kind: str, exc: Exception, **extra) -> str:
    payload = {"error": kind, "message": str(exc), **{k: v for k, v in extra.items() if v is not None}}
    return json.dumps(payload)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="latent-spectrum", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=list(STAGES) + ["pipeline", "default-config"],
                        help="stage to run, 'pipeline' for all configured stages, "
                             "or 'default-config' to print a starter config")
    parser.add_argument("--config", help="run configuration file")
    parser.add_argument("--out", help="run directory (overrides [run] out)")
    parser.add_argument("--seed", type=int, help="override every stage seed")
    parser.add_argument("--overwrite", action="store_true", help="replace existing artifacts")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "default-config":
        sys.stdout.write(default_config_text())
        return 0
    try:
        if not args.config:
            raise ConfigError("--config is required", "config")
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer", "seed")
            cfg = cfg.with_seed(args.seed).validate()
        out = Path(args.out or cfg.out_dir)
        if args.command == "pipeline":
            run_pipeline(cfg, out, args.overwrite)
        else:
            run_stage(args.command, cfg, out, args.overwrite)
    except ConfigError as exc:
        print(_error_line("config", exc, field=exc.field), file=sys.stderr)
        return 2
    except MissingArtifactError as exc:
        print(_error_line("missing_upstream_stage", exc, file=exc.path), file=sys.stderr)
        return 3
    except ArtifactExistsError as exc:
        print(_error_line("artifact_exists", exc, file=exc.path), file=sys.stderr)
        return 4
    except TrainingError as exc:
        print(_error_line("training", exc, epoch=exc.epoch, layer=exc.layer), file=sys.stderr)
        return 5
    except (ContractError, LatentSpectrumError) as exc:
        print(_error_line("contract", exc), file=sys.stderr)
        return 6
    return 0


if __name__ == "__main__":
    sys.exit(main())
