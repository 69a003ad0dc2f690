import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from latent_spectrum import assign as asg
from latent_spectrum import boxspectrum, datagen, degeneracy, vae
from latent_spectrum.cli import main
from latent_spectrum.config import RunConfig, load_config, parse_config
from latent_spectrum.errors import ConfigError

SMALL = """
[dataset]
n_samples = 240
n_features = 6
n_informative = 3
n_redundant = 1
k_classes = 3
seed = 2

[vae]
encoder_hidden = 8
decoder_hidden = 8
epochs = 4
seed = 1
encode_seed = 9

[box]
t = 2
M = 5

[assign]
hidden = 6
epochs = 4

[replicas]
seeds = 0 1
"""

PIPELINE_FILES = [
    "dataset.csv", "embedding.csv", "spectrum.csv", "coupling.csv", "assignment.csv",
    "vae_trace.csv", "assign_trace.csv", "class_energies.csv", "psi_curve.csv", "latent2d.csv",
    "vae_model.txt", "assigner_model.txt", "manifest.jsonl",
]


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text(SMALL)
    return p


def run(*args):
    return main([str(a) for a in args])


def test_default_config_roundtrip():
    cfg = RunConfig()
    assert parse_config(cfg.to_text()) == cfg


def test_parse_small(cfg_path):
    cfg = load_config(cfg_path)
    assert cfg.vae.input_dim == 6
    assert cfg.vae.encoder_hidden == (8,)
    assert cfg.assign.spec == cfg.box and cfg.box.t == 2
    assert cfg.encode_seed == 9 and cfg.replica_seeds == (0, 1)


@pytest.mark.parametrize("text,field", [
    ("[dataset]\nn_samples = lots\n", "dataset.n_samples"),
    ("[dataset]\nbogus = 1\n", "dataset.bogus"),
    ("[box]\nt = 0\n", "box.t"),
    ("[vae]\nbeta = -1\n", "vae.beta"),
    ("[assign]\ninversion = magic\n", "assign.inversion"),
    ("[dataset]\nn_features = 20\n[vae]\ninput_dim = 7\n", "vae.input_dim"),
    ("[run]\nstages = generate teleport\n", "run.stages"),
    ("[nonsense]\nx = 1\n", "nonsense"),
])
def test_field_level_errors(text, field):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.field == field


def test_digest_tracks_every_field():
    base = RunConfig()
    variants = [
        replace(base, dataset=replace(base.dataset, cluster_std=1.01)),
        replace(base, vae=replace(base.vae, lr=2e-3)),
        replace(base, box=replace(base.box, t=4), assign=replace(base.assign, spec=replace(base.box, t=4))),
        replace(base, assign=replace(base.assign, lambda_norm=0.5)),
        replace(base, encode_seed=1),
        replace(base, replica_seeds=(0, 1)),
        replace(base, out_dir="elsewhere"),
    ]
    digests = {base.digest()} | {v.digest() for v in variants}
    assert len(digests) == len(variants) + 1


def test_pipeline_files_and_roundtrips(cfg_path, tmp_path):
    out = tmp_path / "run"
    assert run("pipeline", "--config", cfg_path, "--out", out) == 0
    for name in PIPELINE_FILES:
        assert (out / name).exists(), name
    cfg = load_config(cfg_path)
    ds = datagen.read_csv(out / "dataset.csv", cfg.dataset)
    assert np.array_equal(ds.features, datagen.generate(cfg.dataset).features)
    emb = vae.read_embedding_csv(out / "embedding.csv")
    assert emb.mu.shape == (240, 2)
    table = boxspectrum.read_table(out / "spectrum.csv", out / "coupling.csv")
    assert np.array_equal(table.E1, boxspectrum.build_table(cfg.box).E1)
    result = asg.read_assignment_csv(out / "assignment.csv")
    assert np.all(result.n > 0)
    assert asg.read_trace_csv(out / "assign_trace.csv")[0]["epoch"] == 1
    assert asg.read_trace_csv(out / "vae_trace.csv")[-1]["epoch"] == 4
    manifest = [json.loads(l) for l in (out / "manifest.jsonl").read_text().splitlines()]
    assert [m["command"] for m in manifest] == ["generate", "train-vae", "embed", "spectrum", "assign", "plotdata"]
    assert {m["config_digest"] for m in manifest} == {cfg.digest()}
    psi_curve = (out / "psi_curve.csv").read_text().splitlines()
    assert psi_curve[0] == "label,z_box,psi" and len(psi_curve) == 1 + 3 * 50
    assert (out / "latent2d.csv").read_text().splitlines()[0] == "id,pc1,pc2,label,E"


def test_psi_curve_matches_network(cfg_path, tmp_path):
    out = tmp_path / "run"
    run("pipeline", "--config", cfg_path, "--out", out)
    from latent_spectrum.nn import load_network
    import csv
    net = load_network(out / "assigner_model.txt")
    emb = vae.read_embedding_csv(out / "embedding.csv")
    cfg = load_config(cfg_path)
    proj = asg.fit_projection(emb.mu, "pca", cfg.box, cfg.assign.margin)
    rows = list(csv.DictReader(open(out / "psi_curve.csv")))
    # the first class curve spans that class's own box interval
    zc = proj.to_box(emb.mu[emb.labels == int(rows[0]["label"])])
    first = [float(r["z_box"]) for r in rows if r["label"] == rows[0]["label"]]
    assert min(first) == pytest.approx(zc.min(), abs=1e-12)
    assert max(first) == pytest.approx(zc.max(), abs=1e-12)


def test_spectrum_only(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("")
    out = tmp_path / "s"
    assert run("spectrum", "--config", cfg, "--out", out) == 0
    table = boxspectrum.read_table(out / "spectrum.csv", out / "coupling.csv")
    assert np.all(np.abs(table.E1) <= 1e-9)


def test_rerun_is_bit_identical(cfg_path, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("pipeline", "--config", cfg_path, "--out", a) == 0
    assert run("pipeline", "--config", cfg_path, "--out", b) == 0
    for name in PIPELINE_FILES:
        if name.endswith(".csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_missing_upstream(cfg_path, tmp_path, capsys):
    code = run("embed", "--config", cfg_path, "--out", tmp_path / "empty")
    err = json.loads(capsys.readouterr().err.strip())
    assert code == 3
    assert err["error"] == "missing_upstream_stage" and err["file"] == "dataset.csv"


def test_no_silent_overwrite(cfg_path, tmp_path, capsys):
    out = tmp_path / "o"
    assert run("generate", "--config", cfg_path, "--out", out) == 0
    before = (out / "dataset.csv").read_bytes()
    assert run("generate", "--config", cfg_path, "--out", out, "--seed", 77) == 4
    assert json.loads(capsys.readouterr().err.strip())["error"] == "artifact_exists"
    assert (out / "dataset.csv").read_bytes() == before
    assert run("generate", "--config", cfg_path, "--out", out, "--seed", 77, "--overwrite") == 0
    assert (out / "dataset.csv").read_bytes() != before
    assert run("pipeline", "--config", cfg_path, "--out", out) == 4


def test_config_error_exit(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[box]\nL = -1\n")
    assert run("spectrum", "--config", bad, "--out", tmp_path / "x") == 2
    line = capsys.readouterr().err.strip()
    assert "\n" not in line and json.loads(line)["field"] == "box.L"


def test_seed_override_changes_digest(cfg_path, tmp_path):
    out = tmp_path / "s"
    assert run("generate", "--config", cfg_path, "--out", out, "--seed", 5) == 0
    entry = json.loads((out / "manifest.jsonl").read_text())
    assert entry["seed"] == 5
    assert entry["config_digest"] == load_config(cfg_path).with_seed(5).digest() != load_config(cfg_path).digest()


def test_replicas_command(cfg_path, tmp_path):
    out = tmp_path / "r"
    assert run("generate", "--config", cfg_path, "--out", out) == 0
    assert run("replicas", "--config", cfg_path, "--out", out) == 0
    spectra = degeneracy.read_replica_spectra(out / "replica_spectra.csv")
    assert sorted(spectra) == [0, 1] and all(len(v) == 3 for v in spectra.values())
    assert len(degeneracy.read_pairwise(out / "pairwise.csv")) == 1
    assert "median_spectrum_distance" in (out / "replica_report.txt").read_text()


def test_default_config_command(capsys):
    assert main(["default-config"]) == 0
    assert parse_config(capsys.readouterr().out) == RunConfig()
