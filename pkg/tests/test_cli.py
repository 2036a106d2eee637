import json

import numpy as np
import pytest

from dvecspace.cli import run
from dvecspace.container import read_container
from dvecspace.store import load_embeddings

SMALL = ["--n-utterances", "60", "--n-bilingual-utterances", "240"]


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    assert run(["gen-data", "--out-dir", str(d), "--seed", "7"] + SMALL) == 0
    assert run(["profiles", "--embeddings", str(d / "embeddings.dvec"),
                "--out", str(d / "profiles.dvec"), "--json", str(d / "profiles.json")]) == 0
    assert run(["delta", "--profiles", str(d / "profiles.dvec"), "--out", str(d / "delta.dvec"),
                "--source", "en", "--target", "es"]) == 0
    return d


def snapshot(directory):
    return {p.relative_to(directory).as_posix(): p.read_bytes()
            for p in sorted(directory.rglob("*")) if p.is_file()}


def test_gen_data_is_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(["gen-data", "--out-dir", str(d), "--seed", "7"] + SMALL) == 0
    assert snapshot(a) == snapshot(b)
    assert set(snapshot(a)) == {"manifest.jsonl", "embeddings.dvec", "truth.json"}
    truth = json.loads((a / "truth.json").read_text())
    assert truth["seed"] == 7 and truth["config"]["n_utterances"] == 60


SUBCOMMANDS = {
    "pca": lambda d, o: ["pca", "--embeddings", str(d / "embeddings.dvec"), "--out", str(o / "pca.csv")],
    "lda": lambda d, o: ["lda", "--embeddings", str(d / "embeddings.dvec"), "--out", str(o / "lda.json")],
    "tsne": lambda d, o: ["tsne", "--embeddings", str(d / "embeddings.dvec"), "--out", str(o / "t.csv"),
                          "--speakers", "ref,v1", "--max-points", "120", "--iterations", "300",
                          "--perplexity", "10"],
    "cosine": lambda d, o: ["cosine", "--embeddings", str(d / "embeddings.dvec"), "--out", str(o / "c.csv")],
    "overlap": lambda d, o: ["overlap", "--embeddings", str(d / "embeddings.dvec"), "--out", str(o / "ov.json")],
    "profiles": lambda d, o: ["profiles", "--embeddings", str(d / "embeddings.dvec"), "--out", str(o / "p.dvec")],
    "delta": lambda d, o: ["delta", "--profiles", str(d / "profiles.dvec"), "--out", str(o / "d.dvec"),
                           "--source", "en", "--target", "es"],
    "translate": lambda d, o: ["translate", "--input", str(d / "profiles.dvec"), "--delta",
                               str(d / "delta.dvec"), "--out", str(o / "tr.dvec"), "--epsilon", "0.5"],
    "sweep": lambda d, o: ["sweep", "--input", str(d / "profiles.dvec"), "--delta",
                           str(d / "delta.dvec"), "--out", str(o / "sw.dvec")],
    "transfer-report": lambda d, o: ["transfer-report", "--embeddings", str(d / "embeddings.dvec"),
                                     "--delta", str(d / "delta.dvec"), "--out", str(o / "r.json"),
                                     "--csv", str(o / "r.csv")],
    "export-plot": lambda d, o: ["export-plot", "--embeddings", str(d / "embeddings.dvec"),
                                 "--out-dir", str(o), "--per-voice", "20", "--iterations", "300",
                                 "--perplexity", "10"],
}


@pytest.mark.parametrize("name", sorted(SUBCOMMANDS))
def test_subcommand_is_byte_reproducible_and_leaves_inputs(name, data_dir, tmp_path):
    before = snapshot(data_dir)
    outs = []
    for k in range(2):
        o = tmp_path / f"run{k}"
        o.mkdir()
        assert run(SUBCOMMANDS[name](data_dir, o) + ["--seed", "3"]) == 0
        outs.append(snapshot(o))
    assert outs[0] == outs[1] and outs[0]
    assert snapshot(data_dir) == before


def test_outputs_record_config_and_seed(data_dir, tmp_path):
    assert run(["lda", "--embeddings", str(data_dir / "embeddings.dvec"),
                "--out", str(tmp_path / "l.json"), "--seed", "5", "--split", "0.8"]) == 0
    obj = json.loads((tmp_path / "l.json").read_text())
    assert obj["seed"] == 5 and obj["config"]["split"] == 0.8
    assert run(["pca", "--embeddings", str(data_dir / "embeddings.dvec"),
                "--out", str(tmp_path / "p.csv")]) == 0
    first = (tmp_path / "p.csv").read_text().splitlines()[0]
    assert first.startswith("# ") and json.loads(first[2:])["seed"] == 0
    box = read_container(data_dir / "delta.dvec")
    assert box.header["config"]["source"] == "en" and "seed" in box.header


def test_epsilon_zero_returns_input(data_dir, tmp_path):
    out = tmp_path / "t.dvec"
    assert run(["translate", "--input", str(data_dir / "embeddings.dvec"), "--delta",
                str(data_dir / "delta.dvec"), "--out", str(out), "--epsilon", "0"]) == 0
    src = load_embeddings(data_dir / "embeddings.dvec")
    en = [r for r in src if r.language == "en"]
    box = read_container(out)
    assert box.data.shape[0] == len(en)
    assert box.data.tobytes() == np.vstack([r.embedding.values for r in en]).tobytes()


def test_end_to_end_transfer_pipeline(tmp_path):
    d = tmp_path
    assert run(["gen-data", "--out-dir", str(d)]) == 0
    assert run(["profiles", "--embeddings", str(d / "embeddings.dvec"), "--out", str(d / "p.dvec")]) == 0
    assert run(["delta", "--profiles", str(d / "p.dvec"), "--out", str(d / "d.dvec"),
                "--source", "en", "--target", "es"]) == 0
    assert run(["translate", "--input", str(d / "p.dvec"), "--delta", str(d / "d.dvec"),
                "--out", str(d / "t.dvec"), "--epsilon", "1", "--bidirectional",
                "--monolingual-only"]) == 0
    assert run(["lda", "--embeddings", str(d / "embeddings.dvec"), "--out", str(d / "l.json"),
                "--apply", str(d / "t.dvec")]) == 0
    result = json.loads((d / "l.json").read_text())["result"]
    assert result["applied"]["n"] == 6
    assert result["applied"]["fraction_matching_language"] == 1.0
    assert result["model"]["test_accuracy"] >= 0.99


def test_audio_pipeline(tmp_path):
    d = tmp_path
    assert run(["gen-audio", "--out-dir", str(d / "a"), "--n-speakers", "2",
                "--utterances", "3", "--min-duration", "0.1", "--max-duration", "0.2"]) == 0
    man = d / "a" / "manifest.jsonl"
    assert run(["extract", "--manifest", str(man), "--out", str(d / "f.dvec")]) == 0
    assert run(["train", "--features", str(d / "f.dvec"), "--manifest", str(man),
                "--out", str(d / "m.dvec"), "--steps", "3", "--units", "6", "--dim", "8",
                "--layers", "1", "--batch-size", "2"]) == 0
    assert run(["embed", "--model", str(d / "m.dvec"), "--features", str(d / "f.dvec"),
                "--manifest", str(man), "--out", str(d / "e.dvec")]) == 0
    st = load_embeddings(d / "e.dvec")
    assert len(st) == 6
    assert all(abs(np.linalg.norm(r.embedding.values) - 1) < 1e-6 for r in st)
    header = read_container(d / "m.dvec").header
    assert len(header["losses"]) == 3 and header["seed"] == 0


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n-utterances": 10, "n_bilingual_utterances": 20, "seed": 4}))
    assert run(["gen-data", "--out-dir", str(tmp_path / "a"), "--config", str(cfg)]) == 0
    truth = json.loads((tmp_path / "a" / "truth.json").read_text())
    assert truth["seed"] == 4 and truth["config"]["n_utterances"] == 10
    assert run(["gen-data", "--out-dir", str(tmp_path / "b"), "--config", str(cfg),
                "--seed", "9"]) == 0
    assert json.loads((tmp_path / "b" / "truth.json").read_text())["seed"] == 9
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run(["gen-data", "--out-dir", str(tmp_path / "c"), "--config", str(cfg)]) == 1


def test_unknown_subcommand_and_flag_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        run(["frobnicate"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        run(["gen-data", "--out-dir", "x", "--nope"])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_validation_failures_exit_1(tmp_path, data_dir, capsys):
    assert run(["lda", "--embeddings", str(tmp_path / "missing.dvec"), "--out", str(tmp_path / "o.json")]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("dvecspace: error:")
    assert run(["translate", "--input", str(data_dir / "profiles.dvec"), "--delta",
                str(data_dir / "delta.dvec"), "--out", str(tmp_path / "t.dvec"),
                "--epsilon", "1.5"]) == 1
    assert run(["delta", "--profiles", str(data_dir / "profiles.dvec"), "--out",
                str(tmp_path / "d.dvec"), "--reference", "v1", "--source", "en",
                "--target", "es"]) == 1
    assert not (tmp_path / "d.dvec").exists()
    (tmp_path / "bad.dvec").write_bytes(b"garbage")
    assert run(["profiles", "--embeddings", str(tmp_path / "bad.dvec"), "--out", str(tmp_path / "p.dvec")]) == 1
    assert "unsupported container" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    import subprocess
    import sys
    proc = subprocess.run([sys.executable, "-m", "dvecspace", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "gen-data" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "dvecspace", "lda", "--embeddings",
                           str(tmp_path / "x"), "--out", str(tmp_path / "y")],
                          capture_output=True, text=True)
    assert proc.returncode == 1 and proc.stderr.startswith("dvecspace: error:")
