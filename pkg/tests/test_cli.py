"""End-to-end command-line tests: partitioning, training, dumps, evaluation."""

import json
import subprocess
import sys

import numpy as np
import pytest

from sentsig.checkpoint import load_checkpoint
from sentsig.cli import main
from sentsig.corpus import load_sts, save_definitions, save_nli, save_sts
from sentsig.encoder import load_dump
from sentsig.numstat import make_rng
from sentsig.synth import (
    make_definition_corpus,
    make_nli_corpus,
    make_random_sts,
    make_sts_corpus,
)

WORLD = dict(n_topics=4, words_per_topic=10, sentence_len=4)


@pytest.fixture
def data(tmp_path):
    rng = make_rng(99)
    nli_path = tmp_path / "nli.tsv"
    defs_path = tmp_path / "defs.tsv"
    sts_path = tmp_path / "sts.tsv"
    save_nli(make_nli_corpus(rng, 320, **WORLD), nli_path)
    save_definitions(make_definition_corpus(rng, per_word=1, **WORLD), defs_path)
    save_sts(make_sts_corpus(rng, 60, **WORLD), sts_path)
    return {"nli": nli_path, "defs": defs_path, "sts": sts_path, "root": tmp_path}


def run(argv):
    return main([str(a) for a in argv])


class TestPartitionCommand:
    def test_source_scheme_files_and_sizes(self, tmp_path):
        rng = make_rng(1)
        sts = tmp_path / "input.tsv"
        save_sts(make_random_sts(rng, 60, n_sources=3), sts)
        out = tmp_path / "parts"
        assert run(["partition", sts, "--scheme", "source", "--out", out]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert sum(e["n"] for e in summary["subsets"]) == 60
        for entry in summary["subsets"]:
            subset = load_sts(out / entry["file"])
            assert len(subset) == entry["n"]
            assert {p.source for p in subset} == {entry["label"]}
        assert (out / "manifest.json").exists()

    def test_dice_scheme_equal_fifths(self, tmp_path):
        rng = make_rng(2)
        sts = tmp_path / "input.tsv"
        save_sts(make_random_sts(rng, 100), sts)
        out = tmp_path / "parts"
        assert run(["partition", sts, "--scheme", "dice", "--k", 5, "--out", out]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert [e["n"] for e in summary["subsets"]] == [20] * 5
        boundaries = [(e["min_dice"], e["max_dice"]) for e in summary["subsets"]]
        for (_, hi), (lo, _) in zip(boundaries, boundaries[1:]):
            assert lo >= hi - 1e-12

    def test_rerun_byte_identical(self, tmp_path):
        rng = make_rng(3)
        sts = tmp_path / "input.tsv"
        save_sts(make_random_sts(rng, 40), sts)
        outputs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert run(["partition", sts, "--scheme", "dice", "--out", out]) == 0
            outputs.append({p.name: p.read_bytes() for p in sorted(out.glob("*.tsv"))})
        assert outputs[0] == outputs[1]

    def test_multiple_inputs_pooled_before_sorting(self, tmp_path):
        # e.g. train/dev/test files of one benchmark are Dice-partitioned jointly
        rng = make_rng(9)
        pairs = make_random_sts(rng, 30)
        files = []
        for i, chunk in enumerate((pairs[:10], pairs[10:20], pairs[20:])):
            f = tmp_path / f"part{i}.tsv"
            save_sts(chunk, f)
            files.append(f)
        out_pooled = tmp_path / "pooled"
        assert run(["partition", *files, "--scheme", "dice", "--out", out_pooled]) == 0
        whole = tmp_path / "whole.tsv"
        save_sts(pairs, whole)
        out_whole = tmp_path / "whole"
        assert run(["partition", whole, "--scheme", "dice", "--out", out_whole]) == 0
        for f in sorted(out_pooled.glob("*.tsv")):
            assert f.read_bytes() == (out_whole / f.name).read_bytes()

    def test_parse_error_nonzero_exit_no_manifest(self, tmp_path, capsys):
        bad = tmp_path / "bad.tsv"
        bad.write_text("src\t9.5\ta b\tc d\n")
        out = tmp_path / "parts"
        assert run(["partition", bad, "--scheme", "source", "--out", out]) == 2
        assert "error:" in capsys.readouterr().err
        assert not (out / "manifest.json").exists()


class TestTrainCommand:
    def test_sbert_checkpoint_roundtrip(self, data):
        out = data["root"] / "run"
        code = run(["train", "--method", "sbert", "--seed", 0, "--dim", 8,
                    "--out", out, "--config", _config(data)])
        assert code == 0
        ckpt = load_checkpoint(out / "checkpoint-seed0.json")
        assert ckpt.encoder.dim == 8
        assert ckpt.nli_head is not None
        v = ckpt.encoder.embed("t00w000 t00w001")
        assert v.shape == (8,)

    def test_rerun_byte_identical_checkpoints(self, data):
        blobs = []
        for name in ("r1", "r2"):
            out = data["root"] / name
            assert run(["train", "--method", "defsent", "--seed", 3,
                        "--out", out, "--config", _config(data)]) == 0
            blobs.append((out / "checkpoint-seed3.json").read_bytes())
        assert blobs[0] == blobs[1]

    def test_sequential_method_stage_order(self, data):
        out = data["root"] / "sd"
        assert run(["train", "--method", "s+d", "--seed", 0, "--out", out,
                    "--config", _config(data)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        stages = [s["stage"] for s in manifest["stages"]["seed0"]]
        assert stages == ["sbert", "defsent"]

    def test_multi_pattern_in_manifest(self, data):
        out = data["root"] / "multi"
        assert run(["train", "--method", "multi", "--seed", 0, "--out", out,
                    "--config", _config(data)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        pattern = manifest["stages"]["seed0"][0]["stream_pattern"]
        assert pattern == [["nli", 19], ["def", 1]]  # 320 examples -> one 20-step cycle

    def test_multiple_seeds_produce_artifacts(self, data):
        out = data["root"] / "seeds"
        assert run(["train", "--method", "sbert", "--seeds", "0 1", "--out", out,
                    "--config", _config(data)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert set(manifest["artifacts"]) == {"seed0", "seed1"}

    def test_untrainable_method_rejected(self, data, capsys):
        # argparse blocks --method average, so route it through the config file
        cfg = data["root"] / "avg.ini"
        cfg.write_text(f"[data]\nnli = {data['nli']}\n\n[train]\nmethod = average\n")
        out = data["root"] / "bad"
        assert run(["train", "--out", out, "--config", cfg]) == 2
        assert "not trainable" in capsys.readouterr().err

    def test_missing_dataset_rejected(self, tmp_path, capsys):
        out = tmp_path / "x"
        assert run(["train", "--method", "sbert", "--out", out]) == 2
        assert "NLI" in capsys.readouterr().err


def _config(data):
    path = data["root"] / "exp.ini"
    path.write_text(
        "[data]\n"
        f"nli = {data['nli']}\n"
        f"definitions = {data['defs']}\n"
        "\n"
        "[train]\n"
        "dim = 6\n"
        "epochs = 1\n"
        "base_lr = 0.01\n"
    )
    return path


@pytest.fixture
def trained(data):
    out = data["root"] / "trained"
    assert run(["train", "--method", "sbert", "--seeds", "0 1", "--dim", 6,
                "--out", out, "--config", _config(data)]) == 0
    return {"ckpt0": out / "checkpoint-seed0.json", "ckpt1": out / "checkpoint-seed1.json", **data}


class TestEmbedCommand:
    def test_dump_has_all_sentences(self, trained, tmp_path):
        sentences = tmp_path / "sents.txt"
        sentences.write_text("t00w000 t00w001\nt01w002\nt02w003 t03w004\n")
        out = tmp_path / "emb"
        assert run(["embed", trained["ckpt0"], "--sentences", sentences, "--out", out]) == 0
        store = load_dump(out / "embeddings.txt")
        assert len(store) == 3
        assert store.dim == 6
        out2 = tmp_path / "emb2"
        assert run(["embed", trained["ckpt0"], "--sentences", sentences, "--out", out2]) == 0
        assert (out / "embeddings.txt").read_bytes() == (out2 / "embeddings.txt").read_bytes()

    def test_duplicates_deduplicated_with_warning(self, trained, tmp_path, capsys):
        sentences = tmp_path / "sents.txt"
        sentences.write_text("same line\nsame line\nother\n")
        out = tmp_path / "emb"
        assert run(["embed", trained["ckpt0"], "--sentences", sentences, "--out", out]) == 0
        assert "duplicate" in capsys.readouterr().err
        assert len(load_dump(out / "embeddings.txt")) == 2

    def test_average_combination_is_row_mean(self, trained, tmp_path):
        sentences = tmp_path / "sents.txt"
        sentences.write_text("t00w000 t00w001\nt01w002\n")
        outs = {}
        for tag, ckpt in (("a", trained["ckpt0"]), ("b", trained["ckpt1"])):
            out = tmp_path / tag
            assert run(["embed", ckpt, "--sentences", sentences, "--out", out]) == 0
            outs[tag] = load_dump(out / "embeddings.txt")
        out = tmp_path / "avg"
        assert run(["embed", trained["ckpt0"], trained["ckpt1"], "--combine", "average",
                    "--sentences", sentences, "--out", out]) == 0
        combined = load_dump(out / "embeddings.txt")
        for sentence, vec in combined.items():
            expected = (outs["a"].embed(sentence) + outs["b"].embed(sentence)) / 2
            np.testing.assert_array_equal(vec, expected)


class TestEvalCommand:
    def test_partition_dir_report_shape(self, trained, tmp_path):
        parts = tmp_path / "parts"
        assert run(["partition", trained["sts"], "--scheme", "dice", "--out", parts]) == 0
        out = tmp_path / "eval"
        assert run(["eval", trained["ckpt0"], "--partition-dir", parts, "--out", out]) == 0
        report = json.loads((out / "report.json").read_text())
        labels = [e["label"] for e in report["sts"]["subsets"]]
        assert labels == ["0-20%", "20-40%", "40-60%", "60-80%", "80-100%", "ALL"]

    def test_multiple_checkpoints_mark_seed_mean(self, trained, tmp_path):
        out = tmp_path / "eval"
        assert run(["eval", trained["ckpt0"], trained["ckpt1"],
                    "--sts", trained["sts"], "--out", out]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["sts"]["n_seeds"] == 2
        for subset in report["sts"]["subsets"]:
            assert len(subset["per_seed"]["spearman_x100"]) == 2

    def test_rerun_byte_identical_reports(self, trained, tmp_path):
        blobs = []
        for name in ("e1", "e2"):
            out = tmp_path / name
            assert run(["eval", trained["ckpt0"], "--sts", trained["sts"], "--out", out]) == 0
            blobs.append(((out / "report.json").read_bytes(), (out / "report.md").read_bytes()))
        assert blobs[0] == blobs[1]

    def test_dump_pathway_matches_in_memory(self, trained, tmp_path):
        # write every sentence of the STS file through cmd_embed, then compare reports
        pairs = load_sts(trained["sts"])
        sentences = tmp_path / "sents.txt"
        seen = dict.fromkeys(s for p in pairs for s in (p.sentence1, p.sentence2))
        sentences.write_text("".join(f"{s}\n" for s in seen))
        emb = tmp_path / "emb"
        assert run(["embed", trained["ckpt0"], "--sentences", sentences, "--out", emb]) == 0
        out_mem = tmp_path / "mem"
        out_dump = tmp_path / "dump"
        assert run(["eval", trained["ckpt0"], "--sts", trained["sts"], "--out", out_mem]) == 0
        assert run(["eval", emb / "embeddings.txt", "--sts", trained["sts"], "--out", out_dump]) == 0
        mem = json.loads((out_mem / "report.json").read_text())
        dump = json.loads((out_dump / "report.json").read_text())
        for a, b in zip(mem["sts"]["subsets"], dump["sts"]["subsets"]):
            assert a["spearman_x100"] == b["spearman_x100"]
            assert a["pearson_x100"] == b["pearson_x100"]

    def test_probe_only_eval(self, trained, tmp_path):
        probe = tmp_path / "probe.tsv"
        lines = []
        for i in range(30):
            lines.append(f"first\tt00w{i:03d}")
            lines.append(f"second\tt01w{i:03d}")
        probe.write_text("".join(f"{line}\n" for line in lines))
        out = tmp_path / "eval"
        assert run(["eval", trained["ckpt0"], "--probe", probe, "--out", out]) == 0
        report = json.loads((out / "report.json").read_text())
        assert "probe" in report["probes"]
        assert 0.0 <= report["probes"]["probe"]["accuracy_x100_mean"] <= 100.0

    def test_nothing_to_evaluate_is_error(self, trained, tmp_path, capsys):
        out = tmp_path / "eval"
        assert run(["eval", trained["ckpt0"], "--out", out]) == 2
        assert "nothing to evaluate" in capsys.readouterr().err


class TestCombineEvalCommand:
    def test_average_of_identical_matches_single(self, trained, tmp_path):
        single = tmp_path / "single"
        combined = tmp_path / "combined"
        assert run(["eval", trained["ckpt0"], "--sts", trained["sts"], "--out", single]) == 0
        assert run(["combine-eval", "--a", trained["ckpt0"], "--b", trained["ckpt0"],
                    "--mode", "average", "--sts", trained["sts"], "--out", combined]) == 0
        lhs = json.loads((single / "report.json").read_text())["sts"]["subsets"]
        rhs = json.loads((combined / "report.json").read_text())["sts"]["subsets"]
        assert [e["spearman_x100"] for e in lhs] == [e["spearman_x100"] for e in rhs]

    def test_mismatched_pairing_rejected(self, trained, tmp_path, capsys):
        out = tmp_path / "x"
        assert run(["combine-eval", "--a", trained["ckpt0"], "--a", trained["ckpt1"],
                    "--b", trained["ckpt0"], "--mode", "concat",
                    "--sts", trained["sts"], "--out", out]) == 2
        assert "same number" in capsys.readouterr().err


def test_module_entry_point_version():
    proc = subprocess.run([sys.executable, "-m", "sentsig", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "sentsig" in proc.stdout
