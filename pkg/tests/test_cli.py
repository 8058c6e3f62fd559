import json

import pytest

from longmatch.cli import load_config_file, main
from longmatch.errors import InputError
from longmatch.evaluation import SyntheticTask, generate_synthetic, write_dataset


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    base = tmp_path_factory.mktemp("data")
    task = SyntheticTask(seed=11, noise_sentence_count=7,
                         sentence_length=(3, 5))
    train_ex, dev_ex = generate_synthetic(task, 24, 8)
    train_path = write_dataset(train_ex, base / "train.jsonl")
    dev_path = write_dataset(dev_ex, base / "dev.jsonl")
    return train_path, dev_path


@pytest.fixture(scope="module")
def match_dataset(tmp_path_factory):
    # Big enough for the trained model to classify held-out pairs reliably.
    base = tmp_path_factory.mktemp("match_data")
    task = SyntheticTask(seed=12, noise_sentence_count=7,
                         sentence_length=(3, 5))
    train_ex, dev_ex = generate_synthetic(task, 160, 16)
    return (write_dataset(train_ex, base / "train.jsonl"),
            write_dataset(dev_ex, base / "dev.jsonl"))


@pytest.fixture(scope="module")
def micro_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "micro.cfg"
    path.write_text(
        "# micro model for CLI tests\n"
        "layers=1\n"
        "heads=2\n"
        "width=16\n"
        "ff_width=32\n"
        "max_len=96\n"
        "epochs=6\n"
        "learning_rate=0.002\n"
        "batch_size=4\n"
        "lambda=5\n")
    return path


@pytest.fixture(scope="module")
def trained_checkpoint(tmp_path_factory, match_dataset, micro_config):
    train_path, dev_path = match_dataset
    out = tmp_path_factory.mktemp("trained")
    code = main(["--config", str(micro_config), "--output-dir", str(out),
                 "train", str(train_path), "--dev", str(dev_path)])
    assert code == 0
    return out / "model.ckpt"


# ---------------------------------------------------------------------------
# config file
# ---------------------------------------------------------------------------

def test_config_file_parses(micro_config):
    values = load_config_file(micro_config)
    assert values["layers"] == 1
    assert values["learning_rate"] == 0.002
    assert values["lam"] == 5


def test_config_unknown_key_rejected(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("warp_speed=9\n")
    with pytest.raises(InputError):
        load_config_file(bad)


def test_config_bad_value_rejected(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("epochs=often\n")
    with pytest.raises(InputError):
        load_config_file(bad)


def test_unknown_config_key_exits_2(tmp_path, small_dataset):
    bad = tmp_path / "bad.cfg"
    bad.write_text("mystery=1\n")
    code = main(["--config", str(bad), "--output-dir", str(tmp_path / "o"),
                 "filter", str(small_dataset[0])])
    assert code == 2


# ---------------------------------------------------------------------------
# filter
# ---------------------------------------------------------------------------

def test_filter_lambda_contract(tmp_path, small_dataset):
    out = tmp_path / "out"
    code = main(["--output-dir", str(out), "filter", str(small_dataset[0]),
                 "--lambda", "5"])
    assert code == 0
    lines = (out / "filtered.jsonl").read_text().splitlines()
    assert len(lines) == 24
    for line in lines:
        record = json.loads(line)
        assert len(record["selected_a"]) == 5
        assert len(record["selected_b"]) == 5


def test_filter_export_graph_schema(tmp_path, small_dataset):
    out = tmp_path / "out"
    code = main(["--output-dir", str(out), "filter", str(small_dataset[0]),
                 "--export-graph"])
    assert code == 0
    lines = (out / "graphs.jsonl").read_text().splitlines()
    assert len(lines) == 24
    graph = json.loads(lines[0])
    assert set(graph) == {"nodes", "edges"}
    for node in graph["nodes"][:3]:
        assert set(node) == {"doc", "index", "text", "score"}
    for edge in graph["edges"][:3]:
        assert set(edge) == {"i", "j", "weight"}


def test_filter_golden_rerun_identical(tmp_path, small_dataset):
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["--output-dir", str(out1), "filter", str(small_dataset[0])]) == 0
    assert main(["--output-dir", str(out2), "filter", str(small_dataset[0])]) == 0
    assert ((out1 / "filtered.jsonl").read_bytes()
            == (out2 / "filtered.jsonl").read_bytes())


def test_filter_workers_match_sequential(tmp_path, small_dataset):
    out1, out2 = tmp_path / "s", tmp_path / "w"
    assert main(["--output-dir", str(out1), "filter", str(small_dataset[0])]) == 0
    assert main(["--output-dir", str(out2), "--workers", "4",
                 "filter", str(small_dataset[0])]) == 0
    assert ((out1 / "filtered.jsonl").read_bytes()
            == (out2 / "filtered.jsonl").read_bytes())


def test_filter_per_document_flag(tmp_path, small_dataset):
    out = tmp_path / "out"
    code = main(["--output-dir", str(out), "filter", str(small_dataset[0]),
                 "--per-document"])
    assert code == 0
    assert (out / "filtered.jsonl").exists()


def test_filter_missing_input_exits_2(tmp_path):
    code = main(["--output-dir", str(tmp_path / "o"),
                 "filter", str(tmp_path / "absent.jsonl")])
    assert code == 2


def test_filter_bad_label_exits_2(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"text_a": "A.", "text_b": "B.", "label": 3}\n')
    code = main(["--output-dir", str(tmp_path / "o"), "filter", str(bad)])
    assert code == 2


# ---------------------------------------------------------------------------
# train / evaluate / match
# ---------------------------------------------------------------------------

def test_train_writes_artifacts(trained_checkpoint):
    out = trained_checkpoint.parent
    assert trained_checkpoint.exists()
    log = (out / "metrics.jsonl").read_text().splitlines()
    assert len(log) == 6
    record = json.loads(log[0])
    assert set(record) == {"epoch", "train_loss", "dev_acc", "dev_f1", "seconds"}


def test_train_missing_dataset_exits_2(tmp_path, micro_config):
    code = main(["--config", str(micro_config),
                 "--output-dir", str(tmp_path / "o"),
                 "train", str(tmp_path / "absent.jsonl")])
    assert code == 2


def test_train_seed_determinism(tmp_path, small_dataset, micro_config):
    train_path, dev_path = small_dataset
    logs = []
    for sub in ("r1", "r2"):
        out = tmp_path / sub
        code = main(["--config", str(micro_config), "--seed", "7",
                     "--output-dir", str(out),
                     "train", str(train_path), "--dev", str(dev_path)])
        assert code == 0
        records = [json.loads(line) for line in
                   (out / "metrics.jsonl").read_text().splitlines()]
        # Wall-clock seconds legitimately differ between runs.
        logs.append([{k: v for k, v in r.items() if k != "seconds"}
                     for r in records])
    assert logs[0] == logs[1]


def test_evaluate_checkpoint(tmp_path, small_dataset, trained_checkpoint):
    out = tmp_path / "eval"
    code = main(["--output-dir", str(out), "evaluate",
                 str(trained_checkpoint), str(small_dataset[1])])
    assert code == 0
    payload = json.loads((out / "eval_metrics.json").read_text())
    assert {"accuracy", "f1", "n_examples", "tp", "fp", "tn", "fn"} == set(payload)
    assert payload["n_examples"] == 8


def test_match_output_format_and_identical_documents(tmp_path, capsys,
                                                      trained_checkpoint):
    # A pair planted with shared signal tokens must score as a match; a
    # pair with side-reserved signal tokens must not.
    a = tmp_path / "a.txt"
    b = tmp_path / "b.txt"
    a.write_text("sig001 sig002 sig003 sig004 sig005. za001 za002 za003.")
    b.write_text("sig001 sig002 sig003 sig004 sig005! zb004 zb005 zb006!")
    code = main(["--output-dir", str(tmp_path / "o"), "match",
                 str(trained_checkpoint), str(a), str(b)])
    assert code == 0
    line = capsys.readouterr().out.strip().splitlines()[-1]
    p_part, label_part = line.split()
    assert len(p_part.split(".")[1]) == 4  # four decimal places
    assert label_part == "label=1"

    a.write_text("sig030 sig031 sig032 sig033 sig034. za001 za002 za003.")
    b.write_text("sig045 sig046 sig047 sig048 sig049! zb004 zb005 zb006!")
    code = main(["--output-dir", str(tmp_path / "o"), "match",
                 str(trained_checkpoint), str(a), str(b)])
    assert code == 0
    line = capsys.readouterr().out.strip().splitlines()[-1]
    assert line.endswith("label=0")


def test_match_trace_has_layer_records(tmp_path, trained_checkpoint):
    a = tmp_path / "a.txt"
    b = tmp_path / "b.txt"
    a.write_text("sig001 sig002 sig003. za001 za002.")
    b.write_text("sig004 sig005 sig006! zb001 zb002!")
    out = tmp_path / "o"
    code = main(["--output-dir", str(out), "match", str(trained_checkpoint),
                 str(a), str(b), "--trace"])
    assert code == 0
    payload = json.loads((out / "trace.json").read_text())
    assert len(payload["layers"]) == 1  # micro config has one layer
    assert len(payload["tokens"]) == len(payload["retention_depth"])


def test_match_missing_checkpoint_exits_2(tmp_path):
    a = tmp_path / "a.txt"
    a.write_text("Visible text.")
    code = main(["--output-dir", str(tmp_path / "o"), "match",
                 str(tmp_path / "none.ckpt"), str(a), str(a)])
    assert code == 2


def test_match_empty_text_exits_2(tmp_path, trained_checkpoint):
    a = tmp_path / "a.txt"
    b = tmp_path / "b.txt"
    a.write_text("Some words here.")
    b.write_text("   ")
    code = main(["--output-dir", str(tmp_path / "o"), "match",
                 str(trained_checkpoint), str(a), str(b)])
    assert code == 2


# ---------------------------------------------------------------------------
# sweep / inspect
# ---------------------------------------------------------------------------

def test_sweep_alpha_csv(tmp_path, small_dataset, micro_config):
    out = tmp_path / "out"
    code = main(["--config", str(micro_config), "--output-dir", str(out),
                 "sweep", "alpha", str(small_dataset[0]),
                 "--dev", str(small_dataset[1]),
                 "--alphas", "0,0.1,0.2,0.3", "--timing-batches", "2",
                 "--timing-only"])
    assert code == 0
    lines = (out / "alpha_sweep.csv").read_text().splitlines()
    assert len(lines) == 5  # header + 4 rows
    assert lines[0].startswith("alpha,")


def test_sweep_strategy_csv_order(tmp_path, small_dataset, micro_config):
    out = tmp_path / "out"
    code = main(["--config", str(micro_config), "--output-dir", str(out),
                 "sweep", "strategy", str(small_dataset[0]),
                 "--dev", str(small_dataset[1]), "--epochs", "1"])
    assert code == 0
    lines = (out / "strategy_sweep.csv").read_text().splitlines()
    assert len(lines) == 5
    kinds = [line.split(",")[0] for line in lines[1:]]
    assert kinds == ["random", "embedding_norm", "attention_weight", "pagerank"]


def test_sweep_rerun_identical(tmp_path, small_dataset, micro_config):
    outs = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        code = main(["--config", str(micro_config), "--output-dir", str(out),
                     "--seed", "5", "sweep", "strategy", str(small_dataset[0]),
                     "--dev", str(small_dataset[1]), "--epochs", "1"])
        assert code == 0
        outs.append((out / "strategy_sweep.csv").read_bytes())
    assert outs[0] == outs[1]


def test_sweep_unknown_kind_exits_2(tmp_path, small_dataset):
    with pytest.raises(SystemExit) as exc:
        main(["--output-dir", str(tmp_path / "o"),
              "sweep", "gamma", str(small_dataset[0])])
    assert exc.value.code == 2


def test_inspect_graph_only(tmp_path):
    a = tmp_path / "a.txt"
    b = tmp_path / "b.txt"
    a.write_text("The storm hit the coast. Waves flooded the town. Crews worked all night.")
    b.write_text("A storm surge flooded the coastal town. Officials praised the crews.")
    out = tmp_path / "o"
    code = main(["--output-dir", str(out), "inspect", str(a), str(b)])
    assert code == 0
    graph = json.loads((out / "sentence_graph.json").read_text())
    assert len(graph["nodes"]) == 5
    assert all(n["doc"] in ("a", "b") for n in graph["nodes"])


def test_inspect_with_checkpoint(tmp_path, trained_checkpoint):
    a = tmp_path / "a.txt"
    b = tmp_path / "b.txt"
    a.write_text("sig001 sig002 sig003 sig004. za001 za002 za003.")
    b.write_text("sig001 sig002 sig003 sig004! zb001 zb002 zb003!")
    out = tmp_path / "o"
    code = main(["--output-dir", str(out), "inspect", str(a), str(b),
                 "--checkpoint", str(trained_checkpoint)])
    assert code == 0
    payload = json.loads((out / "word_importance.json").read_text())
    assert {"p", "layers", "retention_depth", "tokens"} <= set(payload)


def test_usage_error_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["definitely-not-a-command"])
    assert exc.value.code == 2
