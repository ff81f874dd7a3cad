import csv
import json

import numpy as np
import pytest

from pldrec.cli import build_data, main
from pldrec.config import ConfigError, ExperimentConfig, dump_config, load_config, parse_config
from pldrec.dataset import SyntheticData, generate_synthetic
from pldrec.model import ModelState, save_checkpoint

SMALL = """
[experiment]
name = small
seeds = 0
output_dir = {out}

[dataset]
num_users = 60
num_items = 80
latent_dim = 4
per_user = 15
noise_level = {noise}
noise_mode = {mode}

[model]
dim = 8

[train]
denoiser = {denoiser}
tau = 0.05
max_epochs = 4
batch_size = 256

[theory]
n = 9, 20
m = 1
delta = 1.0
sigma = 0.2
k = 1, 5
tau = 1.0
trials = 2000
"""


def write_config(tmp_path, noise=0.3, mode="ratio", denoiser="pld", name="cfg.ini"):
    path = tmp_path / name
    path.write_text(SMALL.format(out=tmp_path / "out", noise=noise, mode=mode,
                                 denoiser=denoiser))
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_config_round_trip(tmp_path):
    cfg = load_config(write_config(tmp_path))
    assert cfg.dataset.num_users == 60 and cfg.theory.n == [9, 20]
    again = parse_config(dump_config(cfg))
    assert again == cfg
    assert parse_config(dump_config(ExperimentConfig())) == ExperimentConfig()


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="learning_rat"):
        parse_config("[train]\nlearning_rat = 0.1\n")
    with pytest.raises(ConfigError):
        parse_config("[optimizer]\nlr = 0.1\n")
    with pytest.raises(ConfigError):
        parse_config("[train]\ndenoiser = dropout\n")


def test_missing_input_path(tmp_path, capsys):
    cfg = tmp_path / "f.ini"
    missing = tmp_path / "nowhere.tsv"
    cfg.write_text(f"[experiment]\noutput_dir = {tmp_path}\n[dataset]\nsource = file\n"
                   f"path = {missing}\n")
    assert main(["prepare", "--config", str(cfg)]) != 0
    assert str(missing) in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    assert main(["train", "--config", str(tmp_path / "no.ini")]) != 0
    assert "no.ini" in capsys.readouterr().err


def test_prepare_deterministic(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["prepare", "--config", str(cfg)]) == 0
    run = tmp_path / "out" / "small" / "seed_0"
    first = {p.name: p.read_bytes() for p in run.glob("*.tsv")}
    assert set(first) == {"train.tsv", "validation.tsv", "test.tsv", "user_ids.tsv",
                          "item_ids.tsv"}
    assert main(["prepare", "--config", str(cfg)]) == 0
    assert first == {p.name: p.read_bytes() for p in run.glob("*.tsv")}
    summary = json.loads((run / "prepare_summary.json").read_text())
    # 30% of the normal training interactions, rounded half up
    assert summary["train_noisy"] == int(np.floor(0.3 * summary["train_normal"] + 0.5))


def test_full_pipeline(tmp_path):
    cfg = write_config(tmp_path)
    for cmd in ("train", "analyze", "eval"):
        assert main([cmd, "--config", str(cfg), "--seed", "0", "--seed", "1"]) == 0
    for seed in (0, 1):
        run = tmp_path / "out" / "small" / f"seed_{seed}"
        epochs = read_csv(run / "epochs.csv")
        assert [int(r["epoch"]) for r in epochs] == list(range(4))
        assert "sampled_noisy" in epochs[0]
        assert (run / "config.ini").exists() and (run / "run.log").exists()
        metrics = read_csv(run / "metrics.csv")
        assert [(r["seed"], r["K"]) for r in metrics] == [(str(seed), "20"), (str(seed), "50")]
        _, noisy, _ = build_data(load_config(cfg), seed)
        assert len(read_csv(run / "losses.csv")) == len(noisy.observed)
        overlap = read_csv(run / "overlap.csv")
        assert [r["scope"] for r in overlap] == ["global", "personal"]
    a = (tmp_path / "out" / "small" / "seed_0" / "model.npz").read_bytes()
    b = (tmp_path / "out" / "small" / "seed_1" / "model.npz").read_bytes()
    assert a != b


def test_train_none_baseline(tmp_path):
    cfg = write_config(tmp_path, denoiser="none")
    assert main(["train", "--config", str(cfg)]) == 0
    rows = read_csv(tmp_path / "out" / "small" / "seed_0" / "epochs.csv")
    assert [int(r["epoch"]) for r in rows] == sorted(int(r["epoch"]) for r in rows)


def test_analyze_noiseless_flags_empty(tmp_path):
    cfg = write_config(tmp_path, noise=0.0, mode="none")
    assert main(["train", "--config", str(cfg)]) == 0
    assert main(["analyze", "--config", str(cfg)]) == 0
    summary = json.loads((tmp_path / "out" / "small" / "seed_0" /
                          "analyze_summary.json").read_text())
    assert summary["noise_side_empty"] is True
    assert summary["users_with_gap"] == 0


def test_analyze_checkpoint_mismatch(tmp_path, capsys):
    cfg = write_config(tmp_path)
    bad = tmp_path / "bad.npz"
    save_checkpoint(bad, ModelState(np.zeros((3, 2)), np.zeros((4, 2))))
    assert main(["analyze", "--config", str(cfg), "--checkpoint", str(bad)]) != 0
    assert "3x4" in capsys.readouterr().err


def test_theory_rows(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["theory", "--config", str(cfg), "--seed", "5"]) == 0
    rows = read_csv(tmp_path / "out" / "small" / "seed_5" / "theory.csv")
    assert list(rows[0]) == ["n", "m", "mu1", "mu2", "sigma", "k", "tau", "closed_form",
                             "mc_estimate", "mc_stderr", "trials", "abs_diff"]
    assert len(rows) == 4
    for r in rows:
        n, m = int(r["n"]), int(r["m"])
        if r["k"] == "1":
            assert float(r["closed_form"]) == (n - m) / (n + m)
        assert float(r["abs_diff"]) == pytest.approx(
            abs(float(r["closed_form"]) - float(r["mc_estimate"])))


def test_theory_invalid_grid(tmp_path):
    cfg = tmp_path / "t.ini"
    cfg.write_text(f"[experiment]\noutput_dir = {tmp_path}\n[theory]\nk = 0\n")
    assert main(["theory", "--config", str(cfg)]) != 0


def _random_recall_expectation(noisy, sp, K):
    # a random ranking of c candidates hits each test item with probability K/c
    seen = noisy.observed.union(sp.validation)
    deg = np.bincount(seen.users, minlength=seen.num_users)
    test_users = np.unique(sp.test.users)
    c = seen.num_items - deg[test_users]
    return float(np.mean(np.minimum(K / c, 1.0)))


def test_eval_random_and_oracle(tmp_path):
    cfg_path = write_config(tmp_path)
    cfg = load_config(cfg_path)
    sp, noisy, _ = build_data(cfg, 0)
    rng = np.random.default_rng(0)
    runs = []
    for s in range(20):
        ck = tmp_path / f"rand{s}.npz"
        save_checkpoint(ck, ModelState(rng.normal(size=(60, 8)), rng.normal(size=(80, 8))))
        assert main(["eval", "--config", str(cfg_path), "--checkpoint", str(ck)]) == 0
        runs.append(float(read_csv(tmp_path / "out" / "small" / "seed_0" / "metrics.csv")[0]["recall"]))
    expected = _random_recall_expectation(noisy, sp, 20)
    assert abs(np.mean(runs) - expected) < 0.05

    latents = generate_synthetic(60, 80, 4, 15, seed=0)
    assert isinstance(latents, SyntheticData)
    oracle = tmp_path / "oracle.npz"
    save_checkpoint(oracle, ModelState(latents.user_latent, latents.item_latent))
    assert main(["eval", "--config", str(cfg_path), "--checkpoint", str(oracle)]) == 0
    recall = float(read_csv(tmp_path / "out" / "small" / "seed_0" / "metrics.csv")[0]["recall"])
    assert recall > expected + 0.2


def test_shipped_configs_parse():
    from pathlib import Path
    configs = sorted((Path(__file__).parent.parent / "configs").glob("*.ini"))
    assert configs
    for path in configs:
        assert load_config(path).experiment.name
