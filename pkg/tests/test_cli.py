import json
import os

import numpy as np
import pytest
from PIL import Image

from helpers import MetStub
from jigsawlab.cli import main
from jigsawlab.puzzlegen import read_manifest


def run(argv):
    return main([str(a) for a in argv])


def read_records(pred_dir):
    out = {}
    for name in sorted(os.listdir(pred_dir)):
        if name.endswith(".json"):
            with open(os.path.join(pred_dir, name)) as fh:
                out[name] = json.load(fh)
    return out


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli") / "ds"
    rc = run(
        ["generate", "--out", root, "--n", 4, "--k", 2, "--seed", 1, "--masks", "square"]
    )
    assert rc == 0
    return root


@pytest.fixture(scope="module")
def mask_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli-masks") / "masks"
    rc = run(["masks", "--out", out, "--n", 8, "--seed", 3])
    assert rc == 0
    return out


class TestGenerate:
    def test_layout_and_manifests(self, dataset):
        train = dataset / "train"
        dirs = sorted(os.listdir(train))
        assert dirs == [f"puzzle_{i:05d}" for i in range(4)]
        inst = read_manifest(train / dirs[0])
        assert inst.grid.k == 2
        assert sorted(inst.ground_truth.tolist()) == [0, 1, 2, 3]

    def test_bad_ratios_exit_code(self, tmp_path):
        rc = run(
            ["generate", "--out", tmp_path / "x", "--n", 2, "--k", 2, "--seed", 1,
             "--ratios", "0.5,0.4,0.2"]
        )
        assert rc == 2


class TestSolveAndEval:
    def test_greedy_then_eval_is_perfect(self, dataset, tmp_path):
        preds = tmp_path / "preds"
        rc = run(
            ["solve", "--dataset", dataset, "--split", "train", "--solver", "greedy",
             "--out", preds]
        )
        assert rc == 0
        records = read_records(preds)
        assert len(records) == 4
        first = next(iter(records.values()))
        assert first["solver"] == "greedy"
        assert "bbm" in first["diagnostics"]

        out_prefix = tmp_path / "report"
        rc = run(
            ["eval", "--dataset", dataset, "--split", "train",
             "--predictions", preds, "--out", out_prefix]
        )
        assert rc == 0
        with open(str(out_prefix) + ".json") as fh:
            doc = json.load(fh)
        assert doc["greedy"]["pa"] == 100.0
        assert doc["greedy"]["aa"] == 100.0
        assert os.path.exists(str(out_prefix) + ".csv")
        assert os.path.exists(str(out_prefix) + ".svg")

    def test_flow_oracle_then_eval_is_perfect(self, dataset, tmp_path):
        preds = tmp_path / "preds"
        rc = run(
            ["solve", "--dataset", dataset, "--split", "train", "--solver", "flow",
             "--scorer", "oracle", "--seed", 5, "--out", preds]
        )
        assert rc == 0
        rc = run(
            ["eval", "--dataset", dataset, "--split", "train",
             "--predictions", preds, "--out", tmp_path / "report"]
        )
        assert rc == 0
        with open(str(tmp_path / "report") + ".json") as fh:
            doc = json.load(fh)
        assert doc["flow"]["pa"] == 100.0
        assert doc["flow"]["sra"] == 100.0

    def test_ground_truth_predictions_score_perfectly(self, dataset, tmp_path):
        preds = tmp_path / "gt_preds"
        os.makedirs(preds)
        train = dataset / "train"
        for pid in sorted(os.listdir(train)):
            inst = read_manifest(train / pid)
            with open(preds / f"{pid}.json", "w") as fh:
                json.dump(
                    {
                        "puzzle_id": pid,
                        "solver": "reference",
                        "permutation": inst.ground_truth.tolist(),
                    },
                    fh,
                )
        rc = run(
            ["eval", "--dataset", dataset, "--split", "train",
             "--predictions", preds, "--out", tmp_path / "report"]
        )
        assert rc == 0
        with open(str(tmp_path / "report") + ".json") as fh:
            doc = json.load(fh)
        block = doc["reference"]
        assert block["pa"] == 100.0
        assert block["aa"] == 100.0
        assert block["sra"] == 100.0

    def test_ga_solver_is_reproducible(self, dataset, tmp_path):
        records = []
        for sub in ("a", "b"):
            preds = tmp_path / sub
            rc = run(
                ["solve", "--dataset", dataset, "--split", "train", "--solver", "ga",
                 "--seed", 11, "--out", preds]
            )
            assert rc == 0
            batch = read_records(preds)
            for rec in batch.values():
                rec.pop("wall_ms")
            records.append(batch)
        assert records[0] == records[1]

    def test_stochastic_solvers_require_a_seed(self, dataset, tmp_path):
        for solver in ("ga", "flow"):
            rc = run(
                ["solve", "--dataset", dataset, "--split", "train",
                 "--solver", solver, "--out", tmp_path / solver]
            )
            assert rc == 1

    def test_eval_with_no_predictions_is_a_data_error(self, dataset, tmp_path):
        empty = tmp_path / "empty"
        os.makedirs(empty)
        rc = run(
            ["eval", "--dataset", dataset, "--split", "train",
             "--predictions", empty, "--out", tmp_path / "report"]
        )
        assert rc == 2


class TestTraining:
    def test_train_then_solve_linear(self, dataset, tmp_path):
        weights = tmp_path / "weights.json"
        rc = run(
            ["train-scorer", "--dataset", dataset, "--split", "train",
             "--epochs", 2, "--seed", 3, "--out", weights]
        )
        assert rc == 0
        with open(weights) as fh:
            doc = json.load(fh)
        assert len(doc["weights"]) == 7
        assert doc["epochs"] == 2

        preds = tmp_path / "preds"
        rc = run(
            ["solve", "--dataset", dataset, "--split", "train", "--solver", "flow",
             "--scorer", "linear", "--weights", weights, "--seed", 6, "--out", preds]
        )
        assert rc == 0
        for rec in read_records(preds).values():
            assert sorted(rec["permutation"]) == [0, 1, 2, 3]
            assert rec["diagnostics"]["steps"] == 20

    def test_linear_scorer_requires_weights(self, dataset, tmp_path):
        rc = run(
            ["solve", "--dataset", dataset, "--split", "train", "--solver", "flow",
             "--scorer", "linear", "--seed", 6, "--out", tmp_path / "x"]
        )
        assert rc == 1


class TestMaskCommands:
    def test_sampling_writes_pngs(self, mask_dir):
        files = sorted(os.listdir(mask_dir))
        assert files == [f"mask_{i:05d}.png" for i in range(8)]

    def test_sampling_without_seed_fails(self, tmp_path):
        assert run(["masks", "--out", tmp_path / "m", "--n", 1]) == 1

    def test_import_validates(self, mask_dir, tmp_path):
        out = tmp_path / "validated"
        rc = run(["masks", "--out", out, "--import-dir", mask_dir])
        assert rc == 0
        assert len(os.listdir(out)) == 8

    def test_features_csv(self, mask_dir, tmp_path):
        out = tmp_path / "features.csv"
        rc = run(["features", "--masks-dir", mask_dir, "--out", out])
        assert rc == 0
        with open(out) as fh:
            lines = [l for l in fh.read().splitlines() if l]
        assert len(lines) == 9
        assert lines[0].startswith("mask_id,area,")

    def test_stats_compare_outputs(self, mask_dir, tmp_path):
        prefix = tmp_path / "cmp"
        rc = run(
            ["stats-compare", "--real-dir", mask_dir, "--synth-dir", mask_dir,
             "--out", prefix]
        )
        assert rc == 0
        with open(str(prefix) + ".json") as fh:
            doc = json.load(fh)
        assert isinstance(doc, dict) and doc
        assert os.path.exists(str(prefix) + ".svg")


class TestRender:
    def test_writes_side_by_side_png(self, dataset, tmp_path):
        out = tmp_path / "view.png"
        rc = run(
            ["render", "--dataset", dataset, "--split", "train",
             "--puzzle-id", "puzzle_00000", "--out", out]
        )
        assert rc == 0
        with Image.open(out) as img:
            assert img.width == 2 * 256 + 16
            assert img.height == 256

    def test_missing_puzzle_is_a_data_error(self, dataset, tmp_path):
        rc = run(
            ["render", "--dataset", dataset, "--split", "train",
             "--puzzle-id", "nope", "--out", tmp_path / "x.png"]
        )
        assert rc == 2


class TestFetchCommand:
    def test_happy_path_with_stub(self, tmp_path):
        stub = MetStub()
        try:
            for oid in (5, 3, 2):
                stub.add_object(oid)
            out = tmp_path / "corpus"
            rc = run(
                ["fetch", "--out", out, "--n", 2, "--ids", "5,3,2",
                 "--base-url", stub.base]
            )
            assert rc == 0
            files = sorted(os.listdir(out))
            assert "metadata.csv" in files
            assert sum(f.endswith(".png") for f in files) == 2
        finally:
            stub.close()

    def test_unreachable_api_is_a_network_error(self, tmp_path):
        rc = run(
            ["fetch", "--out", tmp_path / "x", "--n", 1,
             "--base-url", "http://127.0.0.1:1"]
        )
        assert rc == 3

    def test_everything_filtered_is_a_data_error(self, tmp_path):
        stub = MetStub()
        try:
            stub.add_object(1, title="Fragment of a cup")
            rc = run(
                ["fetch", "--out", tmp_path / "x", "--n", 1, "--ids", "1",
                 "--base-url", stub.base]
            )
            assert rc == 2
        finally:
            stub.close()


class TestUsageErrors:
    def test_no_subcommand(self, capsys):
        assert run([]) == 1
        assert "subcommand" in capsys.readouterr().err

    def test_unknown_subcommand_suggests_the_closest(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run(["solvee"])
        assert exc.value.code == 1
        assert "did you mean 'solve'" in capsys.readouterr().err

    def test_unknown_flag_suggests_the_closest(self, tmp_path, capsys):
        rc = run(
            ["generate", "--out", tmp_path / "x", "--n", 1, "--k", 2,
             "--seed", 4, "--seeed", 5]
        )
        assert rc == 1
        assert "did you mean '--seed'" in capsys.readouterr().err


class TestConfigFile:
    def test_config_supplies_defaults_and_flags_override(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"k": 2, "masks": "square"}))
        out_a = tmp_path / "a"
        rc = run(["--config", cfg, "generate", "--out", out_a, "--n", 1, "--seed", 9])
        assert rc == 0
        inst = read_manifest(out_a / "train" / "puzzle_00000")
        assert inst.grid.k == 2

        out_b = tmp_path / "b"
        rc = run(
            ["--config", cfg, "generate", "--out", out_b, "--n", 1, "--seed", 9,
             "--k", 3]
        )
        assert rc == 0
        inst = read_manifest(out_b / "train" / "puzzle_00000")
        assert inst.grid.k == 3

    def test_missing_config_is_a_usage_error(self, tmp_path):
        rc = run(
            ["--config", tmp_path / "absent.json", "generate", "--out",
             tmp_path / "x", "--n", 1, "--k", 2, "--seed", 1]
        )
        assert rc == 1
