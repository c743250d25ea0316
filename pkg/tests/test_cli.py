import json

import numpy as np
import pytest

from gcs.cli import main
from gcs.core import CategoricalDistribution
from gcs.distributions import (
    RegionalDistributions,
    SpatialDistributions,
    average_distributions,
    histogram_from_grid,
)
from gcs.formats import (
    dump_json,
    load_json,
    read_stats,
    read_token_grid,
    write_semantic_grid,
    write_token_grid,
    write_stats,
)
from gcs.rng import split_seed
from gcs.world import BenchmarkConfig, LayoutSpec, StyleSpec

from conftest import random_grid, random_semantics
from test_world import small_config


@pytest.fixture(scope="module")
def world(tmp_path_factory):
    """One generated benchmark shared by the pipeline tests."""
    base = tmp_path_factory.mktemp("world")
    config_path = base / "config.json"
    dump_json(config_path, small_config(corpus_size=30, exemplars=3).to_dict())
    out = base / "bench"
    assert main(["gen-world", "--config", str(config_path), "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def trained(world, tmp_path_factory):
    base = tmp_path_factory.mktemp("trained")
    model = base / "model.json"
    stats = base / "dataset.json"
    style = base / "style.json"
    corpus = world / "corpus"
    assert main(["train-prior", "--corpus", str(corpus), "--out", str(model)]) == 0
    assert (
        main(["dataset-stats", "--corpus", str(corpus), "--out", str(stats), "--k", "50"])
        == 0
    )
    exemplar = world / "exemplars" / "low" / "ex_00.tgrd"
    assert main(["style-stats", str(exemplar), "--out", str(style)]) == 0
    return {"model": model, "dataset": stats, "style": style}


class TestGenWorld:
    def test_writes_manifest_and_reports(self, world):
        assert (world / "manifest.json").exists()
        assert (world / "corpus" / "scene_00000.tgrd").exists()

    def test_rerun_is_byte_identical(self, tmp_path):
        config_path = tmp_path / "config.json"
        dump_json(config_path, small_config(corpus_size=4, exemplars=1).to_dict())
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["gen-world", "--config", str(config_path), "--out", str(a)]) == 0
        assert main(["gen-world", "--config", str(config_path), "--out", str(b)]) == 0
        rel = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
        assert rel
        for r in rel:
            assert (a / r).read_bytes() == (b / r).read_bytes()

    def test_malformed_config_syntax(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{oops")
        assert main(["gen-world", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
        assert "invalid JSON" in capsys.readouterr().err

    def test_config_missing_key_is_named(self, tmp_path, capsys):
        payload = small_config().to_dict()
        del payload["corpus_size"]
        bad = tmp_path / "bad.json"
        dump_json(bad, payload)
        assert main(["gen-world", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
        assert "missing key 'corpus_size'" in capsys.readouterr().err

    def test_config_and_preset_are_exclusive(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(
                [
                    "gen-world",
                    "--config",
                    "x.json",
                    "--preset",
                    "landscape-2x4",
                    "--out",
                    str(tmp_path / "o"),
                ]
            )
        assert exc.value.code == 2

    def test_unknown_preset(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["gen-world", "--preset", "nope", "--out", str(tmp_path / "o")])

    def test_unwritable_output_is_io_error(self, tmp_path, capsys):
        blocker = tmp_path / "file.txt"
        blocker.write_text("x")
        out = blocker / "bench"
        assert (
            main(["gen-world", "--preset", "landscape-2x4", "--out", str(out)]) == 3
        )
        assert "I/O error" in capsys.readouterr().err


class TestTrainPrior:
    def test_model_written(self, trained, capsys):
        payload = load_json(trained["model"])
        assert payload["codebook_size"] == 4
        assert payload["conditional"] is False

    def test_retraining_is_byte_identical(self, world, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        corpus = str(world / "corpus")
        assert main(["train-prior", "--corpus", corpus, "--out", str(a)]) == 0
        assert main(["train-prior", "--corpus", corpus, "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_conditional_training(self, world, tmp_path):
        out = tmp_path / "model.json"
        rc = main(
            [
                "train-prior",
                "--corpus",
                str(world / "corpus"),
                "--out",
                str(out),
                "--conditional",
                "--context",
                "left",
            ]
        )
        assert rc == 0
        payload = load_json(out)
        assert payload["conditional"] is True
        assert payload["context"] == [[0, -1]]

    def test_conditional_needs_semantics(self, tmp_path, rng, capsys):
        bare = tmp_path / "corpus"
        bare.mkdir()
        for i in range(3):
            write_token_grid(bare / f"g{i}.tgrd", random_grid(rng, 4, 4, 4))
        out = tmp_path / "model.json"
        rc = main(
            ["train-prior", "--corpus", str(bare), "--out", str(out), "--conditional"]
        )
        assert rc == 2
        assert "semantic map" in capsys.readouterr().err

    def test_unknown_context_offset(self, world, tmp_path, capsys):
        rc = main(
            [
                "train-prior",
                "--corpus",
                str(world / "corpus"),
                "--out",
                str(tmp_path / "m.json"),
                "--context",
                "left,diagonal",
            ]
        )
        assert rc == 2
        assert "unknown context offset" in capsys.readouterr().err

    def test_empty_corpus_dir(self, tmp_path, capsys):
        empty = tmp_path / "corpus"
        empty.mkdir()
        rc = main(
            ["train-prior", "--corpus", str(empty), "--out", str(tmp_path / "m.json")]
        )
        assert rc == 2
        assert "no token grids found" in capsys.readouterr().err


class TestDatasetStats:
    def test_global_stats(self, trained):
        stats = read_stats(trained["dataset"])
        assert isinstance(stats, CategoricalDistribution)
        assert stats.codebook_size == 4

    def test_regional_and_spatial_variants(self, world, tmp_path):
        corpus = str(world / "corpus")
        reg_path = tmp_path / "reg.json"
        spat_path = tmp_path / "spat.json"
        assert (
            main(
                [
                    "dataset-stats",
                    "--corpus",
                    corpus,
                    "--out",
                    str(reg_path),
                    "--k",
                    "20",
                    "--by-region",
                ]
            )
            == 0
        )
        assert isinstance(read_stats(reg_path), RegionalDistributions)
        assert (
            main(
                [
                    "dataset-stats",
                    "--corpus",
                    corpus,
                    "--out",
                    str(spat_path),
                    "--k",
                    "20",
                    "--by-cell",
                    "2x2",
                ]
            )
            == 0
        )
        stats = read_stats(spat_path)
        assert isinstance(stats, SpatialDistributions)
        assert (stats.cell_rows, stats.cell_cols) == (2, 2)

    def test_by_region_needs_semantics(self, tmp_path, rng, capsys):
        bare = tmp_path / "corpus"
        bare.mkdir()
        write_token_grid(bare / "g.tgrd", random_grid(rng, 4, 4, 4))
        rc = main(
            [
                "dataset-stats",
                "--corpus",
                str(bare),
                "--out",
                str(tmp_path / "s.json"),
                "--by-region",
            ]
        )
        assert rc == 2
        assert "semantic map for every corpus grid" in capsys.readouterr().err

    def test_bad_tiling_string(self, world, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(
                [
                    "dataset-stats",
                    "--corpus",
                    str(world / "corpus"),
                    "--out",
                    str(tmp_path / "s.json"),
                    "--by-cell",
                    "2by2",
                ]
            )
        assert exc.value.code == 2

    def test_oversized_k_notes_to_stderr(self, world, tmp_path, capsys):
        rc = main(
            [
                "dataset-stats",
                "--corpus",
                str(world / "corpus"),
                "--out",
                str(tmp_path / "s.json"),
                "--k",
                "500",
            ]
        )
        assert rc == 0
        err = capsys.readouterr().err
        assert "exceeds the corpus size" in err

    def test_seed_precedence(self, world, tmp_path, monkeypatch):
        corpus = str(world / "corpus")

        def run(path, *extra):
            assert (
                main(
                    ["dataset-stats", "--corpus", corpus, "--out", str(path), "--k", "9"]
                    + list(extra)
                )
                == 0
            )
            return path.read_bytes()

        flagged = run(tmp_path / "a.json", "--seed", "9")
        monkeypatch.setenv("GCS_SEED", "9")
        from_env = run(tmp_path / "b.json")
        assert from_env == flagged
        monkeypatch.setenv("GCS_SEED", "3")
        overridden = run(tmp_path / "c.json", "--seed", "9")
        assert overridden == flagged
        default_seed = run(tmp_path / "d.json", "--seed", "0")
        monkeypatch.delenv("GCS_SEED")
        bare = run(tmp_path / "e.json")
        assert bare == default_seed

    def test_invalid_seed_env(self, world, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("GCS_SEED", "t7")
        rc = main(
            [
                "dataset-stats",
                "--corpus",
                str(world / "corpus"),
                "--out",
                str(tmp_path / "s.json"),
            ]
        )
        assert rc == 2
        assert "GCS_SEED must be an integer" in capsys.readouterr().err


class TestStyleStats:
    def test_single_exemplar_matches_library(self, world, trained):
        stats = read_stats(trained["style"])
        grid = read_token_grid(world / "exemplars" / "low" / "ex_00.tgrd")
        direct = histogram_from_grid(grid, 0.5)
        assert np.array_equal(stats.probs, direct.probs)

    def test_multiple_inputs_require_average(self, world, tmp_path, capsys):
        inputs = sorted(str(p) for p in (world / "exemplars" / "low").glob("*.tgrd"))
        assert len(inputs) > 1
        rc = main(["style-stats"] + inputs + ["--out", str(tmp_path / "s.json")])
        assert rc == 2
        assert "--average" in capsys.readouterr().err

    def test_average_combines_uniformly(self, world, tmp_path):
        paths = sorted((world / "exemplars" / "low").glob("*.tgrd"))
        out = tmp_path / "s.json"
        rc = main(
            ["style-stats"] + [str(p) for p in paths] + ["--out", str(out), "--average"]
        )
        assert rc == 0
        expected = average_distributions(
            [histogram_from_grid(read_token_grid(p), 0.5) for p in paths]
        )
        assert np.allclose(read_stats(out).probs, expected.probs, atol=1e-15)

    def test_by_region_reads_sgrd_sibling(self, world, tmp_path):
        exemplar = world / "exemplars" / "low" / "ex_00.tgrd"
        out = tmp_path / "s.json"
        assert main(["style-stats", str(exemplar), "--out", str(out), "--by-region"]) == 0
        assert isinstance(read_stats(out), RegionalDistributions)

    def test_by_region_missing_sibling(self, tmp_path, rng, capsys):
        lone = tmp_path / "g.tgrd"
        write_token_grid(lone, random_grid(rng, 4, 4, 4))
        rc = main(
            ["style-stats", str(lone), "--out", str(tmp_path / "s.json"), "--by-region"]
        )
        assert rc == 2
        assert "semantic map next to each input" in capsys.readouterr().err

    def test_mixed_codebooks_rejected(self, tmp_path, rng, capsys):
        a, b = tmp_path / "a.tgrd", tmp_path / "b.tgrd"
        write_token_grid(a, random_grid(rng, 4, 4, 4))
        write_token_grid(b, random_grid(rng, 4, 4, 6))
        rc = main(
            ["style-stats", str(a), str(b), "--out", str(tmp_path / "s.json"), "--average"]
        )
        assert rc == 2
        assert "codebook size mismatch" in capsys.readouterr().err


class TestSample:
    def test_unguided_baseline(self, trained, tmp_path, capsys):
        out = tmp_path / "samples"
        rc = main(
            [
                "sample",
                "--model",
                str(trained["model"]),
                "--out",
                str(out),
                "--no-guidance",
                "--height",
                "8",
                "--width",
                "8",
                "--n",
                "3",
                "--seed",
                "1",
            ]
        )
        assert rc == 0
        assert "3 unguided samples" in capsys.readouterr().out
        manifest = load_json(out / "manifest.json")
        assert manifest["mode"] is None and manifest["count"] == 3
        assert [e["seed"] for e in manifest["samples"]] == [
            split_seed(1, i) for i in range(3)
        ]
        grids = [read_token_grid(out / e["tokens"]) for e in manifest["samples"]]
        assert all(g.codebook_size == 4 for g in grids)

    def test_default_sample_count_is_four(self, trained, tmp_path):
        out = tmp_path / "samples"
        rc = main(
            [
                "sample",
                "--model",
                str(trained["model"]),
                "--out",
                str(out),
                "--no-guidance",
                "--height",
                "4",
                "--width",
                "4",
            ]
        )
        assert rc == 0
        assert len(list(out.glob("sample_*.tgrd"))) == 4

    def test_guided_run_and_identity_equivalence(self, trained, tmp_path):
        # Style stats == dataset stats means identity guidance: the guided
        # samples must be byte-identical to the unguided baseline.
        guided = tmp_path / "guided"
        plain = tmp_path / "plain"
        common = [
            "--model",
            str(trained["model"]),
            "--height",
            "8",
            "--width",
            "8",
            "--n",
            "2",
            "--seed",
            "3",
        ]
        rc = main(
            [
                "sample",
                "--out",
                str(guided),
                "--style-stats",
                str(trained["dataset"]),
                "--dataset-stats",
                str(trained["dataset"]),
                "--lambda",
                "2.5",
            ]
            + common
        )
        assert rc == 0
        assert main(["sample", "--out", str(plain), "--no-guidance"] + common) == 0
        for i in range(2):
            name = f"sample_{i:03d}.tgrd"
            assert (guided / name).read_bytes() == (plain / name).read_bytes()

    def test_true_guidance_changes_samples(self, trained, tmp_path):
        guided = tmp_path / "guided"
        plain = tmp_path / "plain"
        common = [
            "--model",
            str(trained["model"]),
            "--height",
            "8",
            "--width",
            "8",
            "--n",
            "2",
            "--seed",
            "3",
        ]
        rc = main(
            [
                "sample",
                "--out",
                str(guided),
                "--style-stats",
                str(trained["style"]),
                "--dataset-stats",
                str(trained["dataset"]),
            ]
            + common
        )
        assert rc == 0
        assert main(["sample", "--out", str(plain), "--no-guidance"] + common) == 0
        assert any(
            (guided / f"sample_{i:03d}.tgrd").read_bytes()
            != (plain / f"sample_{i:03d}.tgrd").read_bytes()
            for i in range(2)
        )

    def test_rerun_is_byte_identical(self, trained, tmp_path):
        args = [
            "sample",
            "--model",
            str(trained["model"]),
            "--no-guidance",
            "--height",
            "6",
            "--width",
            "6",
            "--n",
            "2",
            "--seed",
            "8",
        ]
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        for name in ("sample_000.tgrd", "sample_001.tgrd", "manifest.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_guidance_flags_are_exclusive(self, trained, tmp_path, capsys):
        rc = main(
            [
                "sample",
                "--model",
                str(trained["model"]),
                "--out",
                str(tmp_path / "s"),
                "--no-guidance",
                "--style-stats",
                str(trained["style"]),
                "--height",
                "4",
                "--width",
                "4",
            ]
        )
        assert rc == 2
        assert "conflicts" in capsys.readouterr().err

    def test_guidance_needs_both_stats(self, trained, tmp_path, capsys):
        rc = main(
            [
                "sample",
                "--model",
                str(trained["model"]),
                "--out",
                str(tmp_path / "s"),
                "--style-stats",
                str(trained["style"]),
                "--height",
                "4",
                "--width",
                "4",
            ]
        )
        assert rc == 2
        assert "both --style-stats and --dataset-stats" in capsys.readouterr().err

    def test_shape_required_without_semantics(self, trained, tmp_path, capsys):
        rc = main(
            [
                "sample",
                "--model",
                str(trained["model"]),
                "--out",
                str(tmp_path / "s"),
                "--no-guidance",
                "--height",
                "4",
            ]
        )
        assert rc == 2
        assert "--semantics or both --height and --width" in capsys.readouterr().err

    def test_mode_mismatch_between_stats(self, world, trained, tmp_path, capsys):
        reg = tmp_path / "reg.json"
        assert (
            main(
                [
                    "dataset-stats",
                    "--corpus",
                    str(world / "corpus"),
                    "--out",
                    str(reg),
                    "--k",
                    "10",
                    "--by-region",
                ]
            )
            == 0
        )
        rc = main(
            [
                "sample",
                "--model",
                str(trained["model"]),
                "--out",
                str(tmp_path / "s"),
                "--style-stats",
                str(trained["style"]),
                "--dataset-stats",
                str(reg),
                "--height",
                "4",
                "--width",
                "4",
            ]
        )
        assert rc == 2
        assert "style stats are global but dataset stats are regional" in (
            capsys.readouterr().err
        )

    def test_mode_assertion_flag(self, trained, tmp_path, capsys):
        rc = main(
            [
                "sample",
                "--model",
                str(trained["model"]),
                "--out",
                str(tmp_path / "s"),
                "--style-stats",
                str(trained["style"]),
                "--dataset-stats",
                str(trained["dataset"]),
                "--mode",
                "regional",
                "--height",
                "4",
                "--width",
                "4",
            ]
        )
        assert rc == 2
        assert "--mode regional does not match" in capsys.readouterr().err

    def test_semantics_drive_shape(self, world, tmp_path, rng):
        model_path = tmp_path / "cond.json"
        assert (
            main(
                [
                    "train-prior",
                    "--corpus",
                    str(world / "corpus"),
                    "--out",
                    str(model_path),
                    "--conditional",
                ]
            )
            == 0
        )
        sem_path = tmp_path / "map.sgrd"
        write_semantic_grid(sem_path, random_semantics(rng, 8, 8, 2))
        out = tmp_path / "samples"
        rc = main(
            [
                "sample",
                "--model",
                str(model_path),
                "--out",
                str(out),
                "--no-guidance",
                "--semantics",
                str(sem_path),
                "--n",
                "2",
            ]
        )
        assert rc == 0
        grid = read_token_grid(out / "sample_000.tgrd")
        assert (grid.height, grid.width) == (8, 8)

    def test_semantics_shape_conflict(self, trained, tmp_path, rng, capsys):
        sem_path = tmp_path / "map.sgrd"
        write_semantic_grid(sem_path, random_semantics(rng, 8, 8, 2))
        rc = main(
            [
                "sample",
                "--model",
                str(trained["model"]),
                "--out",
                str(tmp_path / "s"),
                "--no-guidance",
                "--semantics",
                str(sem_path),
                "--height",
                "5",
            ]
        )
        assert rc == 2
        assert "disagree" in capsys.readouterr().err


class TestEvaluate:
    @pytest.fixture()
    def sample_dirs(self, trained, tmp_path):
        guided = tmp_path / "guided"
        plain = tmp_path / "plain"
        common = [
            "--model",
            str(trained["model"]),
            "--height",
            "8",
            "--width",
            "8",
            "--n",
            "4",
            "--seed",
            "2",
        ]
        assert (
            main(
                [
                    "sample",
                    "--out",
                    str(guided),
                    "--style-stats",
                    str(trained["style"]),
                    "--dataset-stats",
                    str(trained["dataset"]),
                    "--lambda",
                    "2",
                ]
                + common
            )
            == 0
        )
        assert main(["sample", "--out", str(plain), "--no-guidance"] + common) == 0
        return guided, plain

    def test_full_report(self, trained, sample_dirs, tmp_path, capsys):
        guided, plain = sample_dirs
        out = tmp_path / "report.json"
        rc = main(
            [
                "evaluate",
                "--guided",
                str(guided),
                "--unguided",
                str(plain),
                "--style-stats",
                str(trained["style"]),
                "--out",
                str(out),
            ]
        )
        assert rc == 0
        stdout = capsys.readouterr().out
        assert "relative KL reduction" in stdout
        payload = load_json(out)
        assert payload["target"] == "style"
        assert isinstance(payload["kl_reduction"], float)
        assert len(payload["guided"]["samples"]) == 4
        assert payload["guided"]["samples"][0]["seed"] == split_seed(2, 0)
        assert out.with_suffix(".csv").exists()

    def test_identical_directories_report_zero(self, trained, sample_dirs, tmp_path):
        _, plain = sample_dirs
        out = tmp_path / "report.json"
        rc = main(
            [
                "evaluate",
                "--guided",
                str(plain),
                "--unguided",
                str(plain),
                "--style-stats",
                str(trained["style"]),
                "--out",
                str(out),
            ]
        )
        assert rc == 0
        assert load_json(out)["kl_reduction"] == 0.0

    def test_empty_sample_directory(self, trained, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        rc = main(
            [
                "evaluate",
                "--guided",
                str(empty),
                "--unguided",
                str(empty),
                "--style-stats",
                str(trained["style"]),
                "--out",
                str(tmp_path / "r.json"),
            ]
        )
        assert rc == 2
        assert "no samples found" in capsys.readouterr().err

    def test_spatial_style_stats_collapse(self, world, trained, sample_dirs, tmp_path):
        guided, plain = sample_dirs
        spat = tmp_path / "spat.json"
        assert (
            main(
                [
                    "dataset-stats",
                    "--corpus",
                    str(world / "corpus"),
                    "--out",
                    str(spat),
                    "--k",
                    "10",
                    "--by-cell",
                    "2x2",
                ]
            )
            == 0
        )
        out = tmp_path / "report.json"
        rc = main(
            [
                "evaluate",
                "--guided",
                str(guided),
                "--unguided",
                str(plain),
                "--style-stats",
                str(spat),
                "--out",
                str(out),
            ]
        )
        assert rc == 0
        assert load_json(out)["target"] == "spat"


def test_help_exits_cleanly():
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
