"""Tests for config, metrics, ingestion, and experiment plumbing."""

import numpy as np
import pytest

from restlearn.data import DatasetError
from restlearn.harness.cli import main
from restlearn.harness.config import (
    ConfigError,
    ExperimentConfig,
    build_config,
    load_config_file,
    with_updates,
)
from restlearn.harness.experiments import (
    distort_by_combos,
    ensure_canonical_data,
    get_blackbox,
    ingest_idx,
    run_experiment,
)
from restlearn.harness.metrics import (
    COLUMNS,
    MetricsRow,
    emit_csv,
    emit_summary,
    read_csv,
    summarize,
)
from restlearn.distort import enumerate_rst_combos
from restlearn.harness.synth import synthesize_digits
from restlearn.idx import write_idx_images, write_idx_labels

# Small enough that training runs in seconds while exercising every path.
TINY = dict(
    scale=0.0005,  # 28 train / 5 test images
    families=("R",),
    seeds=(0,),
    bb_epochs=2,
    rest_epochs=1,
    episodes_per_update=8,
    max_episodes_per_epoch=8,
)


def tiny_config(tmp_path, **over):
    kw = dict(TINY)
    kw.update(over)
    return ExperimentConfig(
        data_dir=tmp_path / "data", out_dir=tmp_path / "out", **kw
    )


# ---------------------------------------------------------------- config


def test_config_defaults():
    cfg = ExperimentConfig()
    assert cfg.experiment == "recovery"
    assert cfg.scale == 0.1
    assert cfg.n_train == 5500
    assert cfg.n_test == 1000
    assert cfg.reward == "shaped"


def test_config_scale_counts():
    cfg = ExperimentConfig(scale=1.0)
    assert cfg.n_train == 55000
    assert cfg.n_test == 10000


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(scale=0.0)
    with pytest.raises(ConfigError):
        ExperimentConfig(scale=1.5)
    with pytest.raises(ConfigError):
        ExperimentConfig(experiment="nope")
    with pytest.raises(ConfigError):
        ExperimentConfig(reward="nope")
    with pytest.raises(ConfigError):
        ExperimentConfig(seeds=())
    with pytest.raises(ConfigError):
        ExperimentConfig(threshold=1.0)


def test_config_file_parsing(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text(
        "[run]\n"
        "experiment = reward_ablation\n"
        "scale = 0.02\n"
        "seeds = 3, 4, 5\n"
        "families = RSST R\n"
        "reward = eq1\n"
        "[rest]\n"
        "rest_epochs = 2\n",
        encoding="utf-8",
    )
    values = load_config_file(path)
    assert values["experiment"] == "reward_ablation"
    assert values["seeds"] == (3, 4, 5)
    assert values["families"] == ("RSST", "R")
    assert values["reward"] == "log_ratio"
    assert values["rest_epochs"] == 2


def test_config_file_rejects_unknown_key(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text("[run]\nbogus = 1\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="bogus"):
        load_config_file(path)


def test_build_config_precedence(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text("[run]\nscale = 0.02\nthreshold = 0.8\n", encoding="utf-8")
    env = {"REST_DATA_DIR": str(tmp_path / "envdata")}
    # CLI override beats file; file beats env default.
    cfg = build_config(config_path=path, env=env, scale=0.05)
    assert cfg.scale == 0.05
    assert cfg.threshold == 0.8
    assert str(cfg.data_dir) == str(tmp_path / "envdata")


def test_build_config_ignores_none_overrides():
    cfg = build_config(env={}, scale=None, threshold=None)
    assert cfg.scale == 0.1


def test_build_config_rejects_unknown_override():
    with pytest.raises(ConfigError):
        build_config(env={}, bogus=1)


def test_with_updates():
    cfg = ExperimentConfig()
    cfg2 = with_updates(cfg, families=("RSST",))
    assert cfg2.families == ("RSST",)
    assert cfg.families != cfg2.families


# ---------------------------------------------------------------- metrics


def row(**over):
    base = dict(
        experiment="recovery",
        family="R",
        method="REST+BB",
        accuracy=72.5,
        mean_length=3.25,
        train_seconds=10.0,
        test_seconds=1.0,
        seed=0,
    )
    base.update(over)
    return MetricsRow(**base)


def test_metrics_row_validation():
    with pytest.raises(ValueError):
        row(method="other")
    with pytest.raises(ValueError):
        row(accuracy=101.0)
    with pytest.raises(ValueError):
        row(accuracy=-1.0)
    with pytest.raises(ValueError):
        row(mean_length=0.5)
    with pytest.raises(ValueError):
        row(mean_length=10.5)
    with pytest.raises(ValueError):
        row(train_seconds=-1.0)
    # BB rows run no episodes.
    assert row(method="BB", mean_length=None).mean_length is None


def test_csv_roundtrip_and_determinism(tmp_path):
    rows = [row(seed=0), row(seed=1, accuracy=70.0), row(method="BB", mean_length=None)]
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    emit_csv(rows, p1)
    emit_csv(rows, p2)
    assert p1.read_bytes() == p2.read_bytes()
    loaded = read_csv(p1)
    assert loaded == rows
    header = p1.read_text(encoding="utf-8").splitlines()[0]
    assert header == ",".join(COLUMNS)


def test_read_csv_rejects_foreign_header(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b,c\n1,2,3\n", encoding="utf-8")
    with pytest.raises(ValueError):
        read_csv(p)


def test_summarize_means_across_seeds():
    rows = [
        row(seed=0, accuracy=70.0, mean_length=3.0),
        row(seed=1, accuracy=74.0, mean_length=5.0),
        row(method="BB", mean_length=None, accuracy=50.0),
    ]
    recs = summarize(rows)
    rest = next(r for r in recs if r["method"] == "REST+BB")
    assert rest["accuracy"] == pytest.approx(72.0)
    assert rest["mean_length"] == pytest.approx(4.0)
    assert rest["seeds"] == 2
    bb = next(r for r in recs if r["method"] == "BB")
    assert bb["mean_length"] is None


def test_emit_summary_table():
    text = emit_summary([row(), row(method="BB", mean_length=None, accuracy=51.0)])
    assert "== recovery ==" in text
    assert "REST+BB" in text
    # BB rows render a dash for episode length.
    assert " - " in text or "- " in text


def test_emit_summary_empty():
    assert emit_summary([]) == ""


# ---------------------------------------------------------------- ingestion


def test_ingest_idx_roundtrip(tmp_path):
    images = np.arange(2 * 4 * 4, dtype=np.uint8).reshape(2, 4, 4)
    labels = np.array([3, 7], dtype=np.uint8)
    ipath, lpath = tmp_path / "i.idx", tmp_path / "l.idx"
    write_idx_images(ipath, images)
    write_idx_labels(lpath, labels)
    ds = ingest_idx(ipath, lpath)
    assert ds.images.shape == (2, 4, 4, 1)
    assert np.array_equal(ds.labels, [3, 7])
    assert ds.images.max() <= 1.0
    assert ds.images[1, 0, 0, 0] == pytest.approx(16 / 255)


def test_ingest_idx_count_mismatch(tmp_path):
    images = np.zeros((2, 4, 4), dtype=np.uint8)
    labels = np.array([1, 2, 3], dtype=np.uint8)
    ipath, lpath = tmp_path / "i.idx", tmp_path / "l.idx"
    write_idx_images(ipath, images)
    write_idx_labels(lpath, labels)
    with pytest.raises(DatasetError, match="mismatch"):
        ingest_idx(ipath, lpath)


def test_canonical_data_cached(tmp_path):
    cfg = tiny_config(tmp_path)
    train1, test1 = ensure_canonical_data(cfg)
    files = sorted(p.name for p in (tmp_path / "data").iterdir())
    assert len(files) == 4
    train2, test2 = ensure_canonical_data(cfg)
    assert np.array_equal(train1.images, train2.images)
    assert np.array_equal(test1.labels, test2.labels)
    assert len(train1) == 28 and len(test1) == 5


def test_canonical_train_test_disjoint(tmp_path):
    cfg = tiny_config(tmp_path)
    train, test = ensure_canonical_data(cfg)
    for img in test.images:
        assert not any(np.array_equal(img, t) for t in train.images)


def test_blackbox_cached(tmp_path):
    cfg = tiny_config(tmp_path)
    train, _ = ensure_canonical_data(cfg)
    m1, _ = get_blackbox(cfg, train)
    assert (tmp_path / "data" / "blackbox-28.rstm").exists()
    m2, _ = get_blackbox(cfg, train)
    for a, b in zip(m1.net.params, m2.net.params):
        assert np.array_equal(a, b)


# ---------------------------------------------------------------- combos


def test_distort_by_combos_preserves_labels():
    ds = synthesize_digits(20, seed=0)
    combos = enumerate_rst_combos()[:4]
    out = distort_by_combos(ds, combos, seed=5)
    assert np.array_equal(out.labels, ds.labels)
    assert out.images.shape == ds.images.shape
    assert not np.array_equal(out.images, ds.images)


def test_distort_by_combos_deterministic():
    ds = synthesize_digits(12, seed=1)
    combos = enumerate_rst_combos()[:3]
    a = distort_by_combos(ds, combos, seed=9)
    b = distort_by_combos(ds, combos, seed=9)
    assert np.array_equal(a.images, b.images)
    c = distort_by_combos(ds, combos, seed=10)
    assert not np.array_equal(a.images, c.images)


def test_distort_by_combos_rejects_empty():
    ds = synthesize_digits(4, seed=0)
    with pytest.raises(ValueError):
        distort_by_combos(ds, [], seed=0)


# ---------------------------------------------------------------- experiments


def test_run_recovery_tiny(tmp_path):
    cfg = tiny_config(tmp_path)
    rows = run_experiment(cfg)
    assert (tmp_path / "out" / "recovery.csv").exists()
    assert (tmp_path / "out" / "recovery-summary.txt").exists()
    methods = {r.method for r in rows}
    assert methods == {"BB", "REST+BB"}
    for r in rows:
        assert 0.0 <= r.accuracy <= 100.0
        assert r.train_seconds >= 0.0 and r.test_seconds >= 0.0
        if r.method == "REST+BB":
            assert 1.0 <= r.mean_length <= 10.0


def test_recovery_reproducible_modulo_timing(tmp_path):
    cfg1 = tiny_config(tmp_path / "a")
    cfg2 = tiny_config(tmp_path / "b")
    rows1 = run_experiment(cfg1)
    rows2 = run_experiment(cfg2)

    def key(rows):
        return [
            (r.experiment, r.family, r.method, r.accuracy, r.mean_length, r.seed)
            for r in rows
        ]

    assert key(rows1) == key(rows2)


def test_run_reward_ablation_tiny(tmp_path):
    cfg = tiny_config(tmp_path, experiment="reward_ablation")
    rows = run_experiment(cfg)
    labels = {r.family for r in rows if r.method == "REST+BB"}
    assert labels == {"R:eq1", "R:eq2"}


def test_run_sample_efficiency_tiny(tmp_path):
    # Degenerate 10-sample budget must still complete and report.
    cfg = tiny_config(tmp_path, experiment="sample_efficiency", sample_budget=10)
    rows = run_experiment(cfg)
    assert any(r.method == "REST+BB" for r in rows)


def test_sample_budget_exceeding_pool_rejected(tmp_path):
    cfg = tiny_config(tmp_path, experiment="sample_efficiency", sample_budget=999)
    with pytest.raises(ConfigError):
        run_experiment(cfg)


def test_run_generalization_tiny(tmp_path):
    cfg = tiny_config(tmp_path, experiment="generalization", train_counts=(12,))
    rows = run_experiment(cfg)
    assert {r.family for r in rows} == {"RST-12"}
    assert {r.method for r in rows} == {"BB", "REST+BB"}


def test_run_mi_confidence_tiny(tmp_path):
    cfg = tiny_config(tmp_path, experiment="mi_confidence", mc_samples=4)
    rows = run_experiment(cfg)
    labels = {r.family for r in rows if r.method == "REST+BB"}
    assert labels == {"R:mi", "R:mi_tuned"}


# ---------------------------------------------------------------- CLI


def test_cli_train_blackbox(tmp_path, capsys):
    rc = main(
        [
            "train-blackbox",
            "--scale", "0.0005",
            "--data-dir", str(tmp_path / "data"),
            "--out", str(tmp_path / "out"),
        ]
    )
    assert rc == 0
    out = capsys.readouterr().out
    assert "holdout accuracy" in out


def test_cli_distort_exports_idx(tmp_path):
    rc = main(
        [
            "distort",
            "--family", "RSST",
            "--split", "test",
            "--scale", "0.0005",
            "--data-dir", str(tmp_path / "data"),
            "--out", str(tmp_path / "out"),
        ]
    )
    assert rc == 0
    names = {p.name for p in (tmp_path / "out").iterdir()}
    assert any("RSST-test" in n and "images" in n for n in names)
    assert any("manifest" in n for n in names)


def test_cli_requires_family(tmp_path, capsys):
    rc = main(
        [
            "distort",
            "--scale", "0.0005",
            "--data-dir", str(tmp_path / "data"),
            "--out", str(tmp_path / "out"),
        ]
    )
    assert rc == 2
    assert "family" in capsys.readouterr().err


def test_cli_experiment_with_config_file(tmp_path, capsys):
    ini = tmp_path / "exp.ini"
    ini.write_text(
        "[run]\n"
        "scale = 0.0005\n"
        "families = R\n"
        "seeds = 0\n"
        "bb_epochs = 2\n"
        "rest_epochs = 1\n"
        "episodes_per_update = 8\n"
        "max_episodes_per_epoch = 8\n"
        f"data_dir = {tmp_path / 'data'}\n"
        f"out_dir = {tmp_path / 'out'}\n",
        encoding="utf-8",
    )
    rc = main(["experiment", "recovery", "--config", str(ini)])
    assert rc == 0
    assert (tmp_path / "out" / "recovery.csv").exists()
    assert "== recovery ==" in capsys.readouterr().out


def test_cli_train_rest_and_eval_and_inspect(tmp_path, capsys):
    common = [
        "--scale", "0.0005",
        "--data-dir", str(tmp_path / "data"),
        "--out", str(tmp_path / "out"),
        "--config", str(_tiny_ini(tmp_path)),
    ]
    rc = main(["train-rest", "--family", "R", *common])
    assert rc == 0
    out = capsys.readouterr().out
    assert "saved agent to" in out
    agents = list((tmp_path / "out").glob("agent-*.rstm"))
    assert len(agents) == 1

    rc = main(["eval", "--family", "R", "--agent", str(agents[0]), *common])
    assert rc == 0
    out = capsys.readouterr().out
    assert "BB accuracy" in out and "REST+BB accuracy" in out

    rc = main(["inspect-episode", "--family", "R", "--agent", str(agents[0]),
               "--index", "1", *common])
    assert rc == 0
    out = capsys.readouterr().out
    assert "step 1:" in out
    assert "final: label" in out


def _tiny_ini(tmp_path):
    ini = tmp_path / "tiny.ini"
    ini.write_text(
        "[run]\nbb_epochs = 2\nrest_epochs = 1\n"
        "episodes_per_update = 8\nmax_episodes_per_epoch = 8\n",
        encoding="utf-8",
    )
    return ini


def test_cli_inspect_episode_untrained(tmp_path, capsys):
    rc = main(
        [
            "inspect-episode",
            "--family", "R",
            "--scale", "0.0005",
            "--data-dir", str(tmp_path / "data"),
            "--out", str(tmp_path / "out"),
        ]
    )
    assert rc == 0
    out = capsys.readouterr().out
    assert "untrained policy" in out
    assert "start: label" in out


def test_cli_inspect_episode_bad_index(tmp_path, capsys):
    rc = main(
        [
            "inspect-episode",
            "--family", "R",
            "--index", "99",
            "--scale", "0.0005",
            "--data-dir", str(tmp_path / "data"),
            "--out", str(tmp_path / "out"),
        ]
    )
    assert rc == 2
    assert "out of range" in capsys.readouterr().err
