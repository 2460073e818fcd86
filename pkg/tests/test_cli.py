"""End-to-end command-line behavior: exit codes, artifacts, reproducibility."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import pytest

from tabalign.checkpoint import load_checkpoint
from tabalign.cli import main
from tabalign.data import load_csv

pytestmark = pytest.mark.usefixtures("workdir")


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    rc = main(
        [
            "gen-data",
            "--rows", "240",
            "--dims", "8",
            "--classes", "4",
            "--separation", "6.0",
            "--seed", "0",
            "--out", str(root / "synth"),
        ]
    )
    assert rc == 0
    (root / "small.ini").write_text(
        f"""\
[data]
data = {root / 'synth.csv'}
schema = {root / 'synth.schema.yaml'}
split_seed = 0

[pretrain]
out_dir = {root / 'run'}
ratios = 0.2, 0.4
seed = 1
max_epochs = 2
batch_size = 64
patience = 2
hidden_dim = 16
embed_dim = 8
projector_dim = 8

[eval]
k_shot = 1
episodes = 2
seeds = 1
n_query = 3
"""
    )
    (root / "default_ratios.ini").write_text(
        f"""\
[data]
data = {root / 'synth.csv'}
schema = {root / 'synth.schema.yaml'}

[pretrain]
out_dir = {root / 'run5'}
seed = 1
max_epochs = 1
batch_size = 64
hidden_dim = 16
embed_dim = 8
projector_dim = 8

[eval]
k_shot = 1
episodes = 1
seeds = 1
n_query = 3
"""
    )
    return root


def _read_csv(path: Path) -> list[list[str]]:
    with path.open() as handle:
        return list(csv.reader(handle))


class TestGenData:
    def test_files_are_loadable(self, workdir):
        ds = load_csv(workdir / "synth.csv", workdir / "synth.schema.yaml")
        assert ds.n_rows == 240 and ds.d_raw == 8 and ds.n_classes == 4

    def test_categorical_option(self, workdir):
        rc = main(
            [
                "gen-data", "--rows", "100", "--dims", "6", "--classes", "2",
                "--categorical", "2", "--cardinality", "3",
                "--out", str(workdir / "mixed"),
            ]
        )
        assert rc == 0
        ds = load_csv(workdir / "mixed.csv", workdir / "mixed.schema.yaml")
        assert sum(c.kind == "categorical" for c in ds.schema) == 2


class TestPretrainCommand:
    def test_writes_checkpoints_and_reports(self, workdir):
        rc = main(["pretrain", "--config", str(workdir / "small.ini")])
        assert rc == 0
        ckpts = sorted((workdir / "run").glob("*.ckpt"))
        assert [p.name for p in ckpts] == [
            "member-00-ratio-0.20.ckpt",
            "member-01-ratio-0.40.ckpt",
        ]
        assert (workdir / "run" / "pretrain_history.csv").exists()
        assert (workdir / "run" / "pretrain_summary.csv").exists()

    def test_default_ratio_set_gives_five_checkpoints(self, workdir):
        rc = main(["pretrain", "--config", str(workdir / "default_ratios.ini")])
        assert rc == 0
        assert len(list((workdir / "run5").glob("*.ckpt"))) == 5

    def test_rerun_is_byte_identical(self, workdir):
        out_a = workdir / "det-a"
        out_b = workdir / "det-b"
        for out in (out_a, out_b):
            rc = main(
                ["pretrain", "--config", str(workdir / "small.ini"), "--out-dir", str(out)]
            )
            assert rc == 0
        for name in ("member-00-ratio-0.20.ckpt", "member-01-ratio-0.40.ckpt"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_missing_schema_is_usage_error(self, workdir):
        bad = workdir / "bad.ini"
        bad.write_text(
            f"[data]\ndata = {workdir / 'synth.csv'}\nschema = {workdir / 'nope.yaml'}\n"
        )
        assert main(["pretrain", "--config", str(bad)]) == 2

    def test_unknown_config_key_is_usage_error(self, workdir):
        bad = workdir / "bad2.ini"
        bad.write_text(
            f"[data]\ndata = x.csv\nschema = y.yaml\nturbo = yes\n"
        )
        assert main(["pretrain", "--config", str(bad)]) == 2

    def test_missing_config_flag_is_usage_error(self):
        assert main(["pretrain"]) == 2


class TestEvalCommand:
    def test_single_episode_single_row(self, workdir):
        out = workdir / "eval1.csv"
        rc = main(
            [
                "eval", str(workdir / "run"),
                "--config", str(workdir / "small.ini"),
                "--episodes", "1", "--seeds", "1",
                "--out", str(out),
            ]
        )
        assert rc == 0
        rows = _read_csv(out)
        assert len(rows) == 2
        assert rows[0] == ["dataset", "n_way", "k_shot", "head", "seed", "episode", "accuracy"]
        assert rows[1][3] == "proto-cos"

    def test_head_override_in_metadata(self, workdir):
        out = workdir / "eval_knn.csv"
        rc = main(
            [
                "eval", str(workdir / "run"),
                "--config", str(workdir / "small.ini"),
                "--episodes", "1", "--seeds", "1",
                "--head", "knn-eucl",
                "--out", str(out),
            ]
        )
        assert rc == 0
        assert _read_csv(out)[1][3] == "knn-eucl"

    def test_unknown_head_is_usage_error(self, workdir):
        rc = main(
            [
                "eval", str(workdir / "run"),
                "--config", str(workdir / "small.ini"),
                "--head", "banana",
            ]
        )
        assert rc == 2

    def test_rerun_gives_identical_csv(self, workdir):
        outs = []
        for name in ("rep-a.csv", "rep-b.csv"):
            out = workdir / name
            rc = main(
                [
                    "eval", str(workdir / "run"),
                    "--config", str(workdir / "small.ini"),
                    "--out", str(out),
                ]
            )
            assert rc == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_empty_checkpoint_dir_is_usage_error(self, workdir):
        empty = workdir / "empty"
        empty.mkdir(exist_ok=True)
        rc = main(
            ["eval", str(empty), "--config", str(workdir / "small.ini")]
        )
        assert rc == 2


class TestAblateCommand:
    def test_ratio_axis_emits_seven_rows(self, workdir):
        out = workdir / "ab-ratio"
        rc = main(
            [
                "ablate", "--config", str(workdir / "small.ini"),
                "--axis", "ratio", "--out-dir", str(out),
            ]
        )
        assert rc == 0
        rows = _read_csv(out / "ablation_ratio.csv")
        assert [r[1] for r in rows[1:]] == [
            "ratio-0.10",
            "ratio-0.20",
            "ratio-0.30",
            "ratio-0.40",
            "ratio-0.50",
            "ensemble",
            "random",
        ]

    def test_conditioning_axis_projector_widths(self, workdir):
        out = workdir / "ab-cond"
        rc = main(
            [
                "ablate", "--config", str(workdir / "small.ini"),
                "--axis", "conditioning", "--out-dir", str(out),
            ]
        )
        assert rc == 0
        rows = _read_csv(out / "ablation_conditioning.csv")
        assert [r[1] for r in rows[1:]] == ["conditioned", "unconditioned"]
        on, _ = load_checkpoint(sorted((out / "conditioned").glob("*.ckpt"))[0])
        off, _ = load_checkpoint(sorted((out / "unconditioned").glob("*.ckpt"))[0])
        assert on.projector[0].in_dim - off.projector[0].in_dim == on.encoded_dim

    def test_imputation_axis_two_rows(self, workdir):
        out = workdir / "ab-imp"
        rc = main(
            [
                "ablate", "--config", str(workdir / "small.ini"),
                "--axis", "imputation", "--out-dir", str(out),
            ]
        )
        assert rc == 0
        rows = _read_csv(out / "ablation_imputation.csv")
        assert [r[1] for r in rows[1:]] == ["zero", "marginal"]

    def test_normalization_axis_two_rows(self, workdir):
        out = workdir / "ab-norm"
        rc = main(
            [
                "ablate", "--config", str(workdir / "small.ini"),
                "--axis", "normalization", "--out-dir", str(out),
            ]
        )
        assert rc == 0
        rows = _read_csv(out / "ablation_normalization.csv")
        assert [r[1] for r in rows[1:]] == ["normalized", "unnormalized"]

    def test_classifier_axis_six_rows(self, workdir):
        out = workdir / "ab-clf"
        rc = main(
            [
                "ablate", "--config", str(workdir / "small.ini"),
                "--axis", "classifier", "--out-dir", str(out),
            ]
        )
        assert rc == 0
        rows = _read_csv(out / "ablation_classifier.csv")
        assert [r[1] for r in rows[1:]] == [
            "linear", "proto-eucl", "proto-cos", "knn-eucl", "knn-cos", "finetune"
        ]

    def test_invalid_axis_is_usage_error(self, workdir):
        rc = main(
            ["ablate", "--config", str(workdir / "small.ini"), "--axis", "nonsense"]
        )
        assert rc == 2


class TestTheoryCommand:
    def test_zero_separation_grid(self, workdir):
        out = workdir / "th"
        rc = main(
            [
                "theory", "--dim", "10", "--delta-sq-grid", "0",
                "--n-grid", "2,5", "--trials", "20000", "--subsets", "20",
                "--seed", "0", "--out-dir", str(out),
            ]
        )
        assert rc == 0
        rows = _read_csv(out / "theory_cells.csv")
        assert len(rows) == 3
        for row in rows[1:]:
            assert abs(float(row[5]) - 0.5) < 0.02
        bound = _read_csv(out / "theory_bound.csv")
        assert bound[1][1] == "1"

    def test_zero_trials_is_usage_error(self, workdir):
        rc = main(["theory", "--trials", "0", "--out-dir", str(workdir / "x")])
        assert rc == 2


class TestAnalyzeCommand:
    def test_writes_both_csvs(self, workdir):
        out = workdir / "an"
        rc = main(
            [
                "analyze", str(workdir / "run"),
                "--config", str(workdir / "small.ini"),
                "--separations", "3", "--k-max", "5",
                "--out-dir", str(out),
            ]
        )
        assert rc == 0
        curve = _read_csv(out / "neighbor_fraction.csv")
        assert curve[0] == ["k", "mean_fraction"]
        assert len(curve) == 6
        table = _read_csv(out / "latent_consistency.csv")
        assert table[0] == ["input_bucket", "mean_input_count", "mean_latent_count", "bucket_size"]
        assert len(table) == 12
