import json
import os

import numpy as np
import pytest

from strandgen import hairio
from strandgen.cli import main
from strandgen.conditioning import read_embedding_file


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """dataset build -> train-vae -> train-diff at desk scale, shared."""
    root = tmp_path_factory.mktemp("pipeline")
    data = root / "data"
    assert main(["dataset", "build", "--synthetic", "3", "--grid-size", "8",
                 "--strand-points", "24", "--variants", "2",
                 "--ctx-dim", "16", "--ctx-tokens", "4",
                 "--out", str(data)]) == 0
    vae = root / "vae"
    assert main(["train-vae", "--data", str(data), "--out", str(vae),
                 "--latent-dim", "6", "--hidden", "32", "--epochs", "30",
                 "--batch", "32", "--seed", "1"]) == 0
    diff = root / "diff"
    assert main(["train-diff", "--data", str(data), "--codec",
                 str(vae / "codec.hvae"), "--out", str(diff),
                 "--image-size", "8", "--model-channels", "16",
                 "--heads", "2", "--iterations", "40", "--batch", "2",
                 "--checkpoint-every", "20", "--seed", "2"]) == 0
    return root


class TestDatasetBuild:
    def test_artifacts(self, pipeline):
        data = pipeline / "data"
        names = sorted(os.listdir(data))
        assert sum(n.endswith(".haar") for n in names) == 6
        assert sum(n.endswith(".hemb") for n in names) == 6
        hm = hairio.read_haar(data / "style_0000.haar")
        assert hm.strand_length == 24
        emb = read_embedding_file(data / "style_0000.hemb")
        assert emb.shape == (4, 16)

    def test_no_input_errors(self, tmp_path, capsys):
        rc = main(["dataset", "build", "--out", str(tmp_path / "x")])
        assert rc == 1
        err = capsys.readouterr().err.strip()
        payload = json.loads(err)
        assert payload["error"] == "ValueError"


class TestTrainArtifacts:
    def test_vae_run_dir(self, pipeline):
        vae = pipeline / "vae"
        for name in ("codec.hvae", "loss.csv", "loss.png", "config.txt"):
            assert (vae / name).exists()

    def test_diff_run_dir(self, pipeline):
        diff = pipeline / "diff"
        for name in ("model.hunt", "loss.csv", "loss.png", "config.txt",
                     "ckpt_000020.hunt", "ckpt_000040.hunt"):
            assert (diff / name).exists()


class TestGenerate:
    def test_deterministic_bit_identical(self, pipeline, tmp_path):
        model = str(pipeline / "diff" / "model.hunt")
        a = tmp_path / "a.hlat"
        b = tmp_path / "b.hlat"
        flags = ["generate", "--model", model, "--prompt", "wavy test hair",
                 "--steps", "8", "--guidance", "1.5", "--seed", "7"]
        assert main(flags + ["--out", str(a)]) == 0
        assert main(flags + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()
        lm = hairio.read_hlat(a)
        assert lm.shape == (8, 8)
        assert lm.channels == 6

    def test_different_seed_differs(self, pipeline, tmp_path):
        model = str(pipeline / "diff" / "model.hunt")
        a = tmp_path / "a.hlat"
        b = tmp_path / "b.hlat"
        main(["generate", "--model", model, "--prompt", "x", "--steps", "5",
              "--seed", "1", "--out", str(a)])
        main(["generate", "--model", model, "--prompt", "x", "--steps", "5",
              "--seed", "2", "--out", str(b)])
        assert a.read_bytes() != b.read_bytes()

    def test_decode_to_haar(self, pipeline, tmp_path):
        model = str(pipeline / "diff" / "model.hunt")
        codec = str(pipeline / "vae" / "codec.hvae")
        out = tmp_path / "g.hlat"
        dec = tmp_path / "g.haar"
        assert main(["generate", "--model", model, "--prompt", "bob",
                     "--steps", "5", "--seed", "3", "--out", str(out),
                     "--decode", str(dec), "--codec", codec]) == 0
        hm = hairio.read_haar(dec)
        assert hm.strand_length == 24

    def test_embedding_file_input(self, pipeline, tmp_path):
        model = str(pipeline / "diff" / "model.hunt")
        emb_path = pipeline / "data" / "style_0000.hemb"
        out = tmp_path / "e.hlat"
        assert main(["generate", "--model", model, "--embedding",
                     str(emb_path), "--steps", "5", "--seed", "4",
                     "--out", str(out)]) == 0


class TestUpsampleExport:
    def test_upsample_and_export(self, pipeline, tmp_path):
        model = str(pipeline / "diff" / "model.hunt")
        codec = str(pipeline / "vae" / "codec.hvae")
        gen = tmp_path / "g.hlat"
        main(["generate", "--model", model, "--prompt", "long", "--steps",
              "5", "--seed", "5", "--out", str(gen)])
        up = tmp_path / "up.hlat"
        assert main(["upsample", "--input", str(gen), "--codec", codec,
                     "--target", "32", "--noise", "on", "--seed", "6",
                     "--out", str(up)]) == 0
        lm = hairio.read_hlat(up)
        assert lm.shape == (32, 32)
        obj = tmp_path / "hair.obj"
        assert main(["export", "--input", str(up), "--codec", codec,
                     "--format", "obj", "--out", str(obj)]) == 0
        assert obj.exists()
        world = hairio.parse_obj_strands(obj)
        assert world.shape[1] == 24

    def test_export_haar_direct(self, pipeline, tmp_path):
        data = pipeline / "data"
        obj = tmp_path / "d.obj"
        assert main(["export", "--input", str(data / "style_0000.haar"),
                     "--out", str(obj)]) == 0
        assert obj.exists()

    def test_bad_format_rejected(self, pipeline, tmp_path, capsys):
        rc = main(["export", "--input",
                   str(pipeline / "data" / "style_0000.haar"),
                   "--format", "usd", "--out", str(tmp_path / "x.usd")])
        assert rc == 1
        assert "usd" in json.loads(capsys.readouterr().err)["message"]


class TestMetricsCommand:
    def test_report_files(self, pipeline, tmp_path, capsys):
        model = str(pipeline / "diff" / "model.hunt")
        gen_dir = tmp_path / "gen"
        ref_dir = tmp_path / "ref"
        gen_dir.mkdir()
        ref_dir.mkdir()
        for i in range(2):
            main(["generate", "--model", model, "--prompt", f"s{i}",
                  "--steps", "4", "--seed", str(i),
                  "--out", str(gen_dir / f"g{i}.hlat")])
            main(["generate", "--model", model, "--prompt", f"r{i}",
                  "--steps", "4", "--seed", str(10 + i),
                  "--out", str(ref_dir / f"r{i}.hlat")])
        rep = tmp_path / "report"
        assert main(["metrics", "--generated", str(gen_dir), "--reference",
                     str(ref_dir), "--out", str(rep)]) == 0
        assert (rep / "metrics.csv").exists()
        assert (rep / "metrics.png").exists()
        text = (rep / "metrics.csv").read_text()
        assert "mmd," in text and "cov," in text and "one_nna," in text
        out = capsys.readouterr().out
        assert "mmd," in out


class TestEditInterp:
    def test_edit_session(self, pipeline, tmp_path):
        model = str(pipeline / "diff" / "model.hunt")
        gen = tmp_path / "in.hlat"
        main(["generate", "--model", model, "--prompt", "base", "--steps",
              "4", "--seed", "8", "--out", str(gen)])
        session = tmp_path / "session"
        assert main(["edit", "--model", model, "--input", str(gen),
                     "--prompt", "target style", "--eta", "0.5",
                     "--invert-steps", "10", "--finetune-steps", "5",
                     "--steps", "4", "--seed", "9",
                     "--out", str(session)]) == 0
        for name in ("e_tgt.hemb", "e_opt.hemb", "params.hunt",
                     "edited_eta0.5.hlat"):
            assert (session / name).exists()

    def test_interp_grid(self, pipeline, tmp_path):
        model = str(pipeline / "diff" / "model.hunt")
        out = tmp_path / "interp"
        assert main(["interp", "--model", model, "--prompt-a", "straight",
                     "--prompt-b", "curly", "--alphas", "0,0.5,1",
                     "--steps", "4", "--seed", "10", "--out", str(out)]) == 0
        files = set(os.listdir(out))
        assert files == {"interp_alpha0.hlat", "interp_alpha0.5.hlat",
                         "interp_alpha1.hlat"}


class TestConfigFile:
    def test_config_overrides_defaults(self, pipeline, tmp_path):
        model = str(pipeline / "diff" / "model.hunt")
        cfg = tmp_path / "gen.cfg"
        cfg.write_text("steps=6\nseed=42\nguidance=1.0\n")
        a = tmp_path / "a.hlat"
        b = tmp_path / "b.hlat"
        assert main(["generate", "--model", model, "--prompt", "x",
                     "--config", str(cfg), "--out", str(a)]) == 0
        assert main(["generate", "--model", model, "--prompt", "x",
                     "--steps", "6", "--seed", "42", "--guidance", "1.0",
                     "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_flag_beats_config(self, pipeline, tmp_path):
        model = str(pipeline / "diff" / "model.hunt")
        cfg = tmp_path / "gen.cfg"
        cfg.write_text("seed=42\n")
        a = tmp_path / "a.hlat"
        b = tmp_path / "b.hlat"
        main(["generate", "--model", model, "--prompt", "x", "--steps", "4",
              "--config", str(cfg), "--seed", "1", "--out", str(a)])
        main(["generate", "--model", model, "--prompt", "x", "--steps", "4",
              "--seed", "1", "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_unknown_command_exit_code(self):
        assert main(["frobnicate"]) == 2

    def test_missing_model_file_error_line(self, tmp_path, capsys):
        rc = main(["generate", "--model", str(tmp_path / "none.hunt"),
                   "--prompt", "x", "--out", str(tmp_path / "o.hlat")])
        assert rc == 1
        payload = json.loads(capsys.readouterr().err.strip())
        assert payload["error"] == "FileNotFoundError"
