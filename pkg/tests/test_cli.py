import csv
import subprocess
import sys

import numpy as np
import pytest

from lht import model_io
from lht.cli import main
from lht.dataset import load_csv
from lht.experiment import format_accuracy, repeated_holdout
from lht.explain import extract_node_weights
from lht.forest import ForestParams

from conftest import blobs


def write_csv(path, d, labels=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(d.m)] + ["class"])
        for x, y in zip(d.features, d.labels):
            w.writerow([repr(float(v)) for v in x] + [labels[y] if labels else y])
    return path


@pytest.fixture
def toy_csv(tmp_path):
    return write_csv(tmp_path / "toy.csv", blobs(n_per_class=25, k=3, spread=6.0), ["a", "b", "c"])


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_train_writes_model_and_summary(toy_csv, tmp_path, capsys):
    model = tmp_path / "m.json"
    assert main(["train", "--data", str(toy_csv), "--model", str(model), "--trees-per-class", "2"]) == 0
    out = capsys.readouterr().out
    assert "k=3" in out and "t=2" in out and "nodes_per_class=" in out
    assert model_io.load(model).k == 3


def test_missing_data_file(tmp_path, capsys):
    rc = main(["train", "--data", str(tmp_path / "absent.csv"), "--model", str(tmp_path / "m.json")])
    assert rc not in (0, 2)
    assert "absent.csv" in capsys.readouterr().err
    assert not (tmp_path / "m.json").exists()


def test_invalid_gamma_before_io(tmp_path, capsys):
    rc = main(["train", "--data", str(tmp_path / "absent.csv"), "--gamma", "0",
               "--model", str(tmp_path / "m.json")])
    assert rc == 2
    err = capsys.readouterr().err
    assert "gamma" in err and "absent.csv" not in err


def test_bad_flag_is_config_error(capsys):
    assert main(["train", "--nonsense"]) == 2


def test_predict_output(toy_csv, tmp_path):
    model, out = tmp_path / "m.json", tmp_path / "p.csv"
    main(["train", "--data", str(toy_csv), "--model", str(model)])
    assert main(["predict", "--model", str(model), "--data", str(toy_csv), "--out", str(out)]) == 0
    rows = read_rows(out)
    assert rows[0] == ["row_index", "predicted_class", "score_a", "score_b", "score_c"]
    assert len(rows) - 1 == 75
    assert {r[1] for r in rows[1:]} <= {"a", "b", "c"}
    truth = [r[-1] for r in read_rows(toy_csv)[1:]]
    assert [r[1] for r in rows[1:]] == truth


def test_predict_empty_input(toy_csv, tmp_path):
    model, out = tmp_path / "m.json", tmp_path / "p.csv"
    main(["train", "--data", str(toy_csv), "--model", str(model)])
    empty = tmp_path / "empty.csv"
    empty.write_text("x0,x1,x2\n")
    assert main(["predict", "--model", str(model), "--data", str(empty), "--out", str(out)]) == 0
    assert read_rows(out) == [["row_index", "predicted_class", "score_a", "score_b", "score_c"]]


def test_predict_dimension_mismatch(toy_csv, tmp_path):
    model, out = tmp_path / "m.json", tmp_path / "p.csv"
    main(["train", "--data", str(toy_csv), "--model", str(model)])
    bad = tmp_path / "bad.csv"
    bad.write_text("x0\n1.0\n")
    assert main(["predict", "--model", str(model), "--data", str(bad), "--out", str(out)]) == 1
    assert not out.exists()


@pytest.fixture
def separable_csv(tmp_path):
    # two repeated points: every held-out row has an identical training row
    from lht.dataset import Dataset

    X = np.array([[0.0, 1.0]] * 20 + [[1.0, 0.0]] * 20)
    return write_csv(tmp_path / "sep.csv", Dataset.from_arrays(X, [0] * 20 + [1] * 20))


def test_evaluate_separable(separable_csv, capsys):
    assert main(["evaluate", "--data", str(separable_csv), "--runs", "10"]) == 0
    out = capsys.readouterr().out
    assert "accuracy: 100.0 ± 0.0" in out
    assert out.count("100.0") == 11


def test_evaluate_single_run(separable_csv, capsys):
    assert main(["evaluate", "--data", str(separable_csv), "--runs", "1"]) == 0
    out = capsys.readouterr().out
    assert out.strip() == "accuracy: 100.0"


def test_evaluate_bootstrap_with_test_file(tmp_path, capsys):
    train = write_csv(tmp_path / "tr.csv", blobs(n_per_class=20, k=2, spread=6.0, seed=1), ["p", "q"])
    test = write_csv(tmp_path / "te.csv", blobs(n_per_class=10, k=2, spread=6.0, seed=2), ["p", "q"])
    assert main(["evaluate", "--data", str(train), "--test", str(test), "--runs", "5"]) == 0
    assert "100.0 ± 0.0" in capsys.readouterr().out


def test_evaluate_runs_validated(toy_csv):
    assert main(["evaluate", "--data", str(toy_csv), "--runs", "0"]) == 2


def test_importance_single_leaf(tmp_path):
    data = tmp_path / "flat.csv"
    data.write_text("a,b,class\n1,1,0\n1,1,1\n1,1,0\n1,1,1\n")
    out = tmp_path / "imp"
    assert main(["importance", "--data", str(data), "--out", str(out)]) == 0
    assert len(read_rows(out / "node_weights.csv")) == 1
    summary = read_rows(out / "importance_summary.csv")
    assert [float(r[2]) for r in summary[1:]] == [0.0, 0.0]


def test_importance_matches_records(wine_path, tmp_path):
    if not wine_path.exists():
        pytest.skip("wine.csv not available")
    model, out = tmp_path / "m.json", tmp_path / "imp"
    main(["train", "--data", str(wine_path), "--model", str(model)])
    assert main(["importance", "--model", str(model), "--out", str(out)]) == 0
    rows = read_rows(out / "node_weights.csv")
    records = extract_node_weights(model_io.load(model))
    assert len(rows) - 1 == len(records)
    root = rows[1]
    assert root[:4] == ["0", "0", "0", "root"]
    assert np.array_equal(np.array(root[8:], dtype=float), records[0].weights)
    assert rows[0][8 + 12] == "w_proline"
    total = sum(float(r[2]) for r in read_rows(out / "importance_summary.csv")[1:])
    assert total == pytest.approx(1.0)


def test_bench_output(toy_csv, capsys):
    args = ["bench", "--data", str(toy_csv), "--runs", "3", "--trees-per-class", "2"]
    assert main(args) == 0
    first = capsys.readouterr().out
    line = first.splitlines()[0]
    total = float(line.split()[1].rstrip("s"))
    longest = float(line.split("max tree ")[1].rstrip("s)"))
    assert longest <= total
    main(args)
    assert capsys.readouterr().out.splitlines()[1] == first.splitlines()[1]


def test_total_time_is_sum_of_tree_times():
    d = blobs(n_per_class=200, k=2, m=8, spread=0.8)
    rec = repeated_holdout(d, ForestParams(), runs=1)[0]
    assert len(rec.tree_seconds) == 2
    assert sum(rec.tree_seconds) <= rec.train_seconds
    assert rec.train_seconds - sum(rec.tree_seconds) < 0.05 + 0.5 * rec.train_seconds


def test_pipeline_byte_identical(toy_csv, tmp_path):
    outputs = []
    for j in range(2):
        model, pred = tmp_path / f"m{j}.json", tmp_path / f"p{j}.csv"
        main(["train", "--data", str(toy_csv), "--model", str(model), "--seed", "5",
              "--trees-per-class", "3", "--forest-rate", "0.7", "--beta-prime", "0.5"])
        main(["predict", "--model", str(model), "--data", str(toy_csv), "--out", str(pred)])
        outputs.append((model.read_bytes(), pred.read_bytes()))
    assert outputs[0] == outputs[1]


def test_console_entry_point(toy_csv, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "lht.cli", "evaluate", "--data", str(toy_csv), "--runs", "2"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "accuracy:" in proc.stdout


def test_format_accuracy():
    assert format_accuracy([1.0] * 10) == "100.0 ± 0.0"
    assert format_accuracy([0.9]) == "90.0"
    assert format_accuracy([0.9, 1.0]) == "95.0 ± 7.1"


def test_label_column_by_name(tmp_path, capsys):
    data = tmp_path / "d.csv"
    rows = ["kind,a"] + [f"{'u' if i % 2 else 'v'},{i % 2 * 10 + i * 0.01}" for i in range(20)]
    data.write_text("\n".join(rows) + "\n")
    assert main(["evaluate", "--data", str(data), "--label-col", "kind", "--runs", "1"]) == 0
    assert load_csv(data, "kind").class_labels == ("v", "u")
