import json

import numpy as np
import pytest

import sgasmix.cli as cli
from sgasmix.bench import EXAMPLE1_LOCATIONS, example1_model, match_locations
from sgasmix.cli import RunManifest, main, model_to_dict, read_matrix, write_json
from sgasmix.errors import DegenerateGroupError
from sgasmix.sgas import MixtureModel, SgasComponent, mixture_sample

SIGMA1 = np.array([[2.0, 0.5], [0.5, 0.5]])
FAST = ["--iters", "12", "--burnin", "6"]


def write_data(path, data, header=True, labels=None):
    cols = [f"y{i + 1}" for i in range(data.shape[1])] + (["label"] if labels is not None else [])
    lines = [",".join(cols)] if header else []
    for i, row in enumerate(data):
        fields = [repr(float(x)) for x in row] + ([str(int(labels[i]))] if labels is not None else [])
        lines.append(",".join(fields))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_model(path, model):
    write_json(path, model_to_dict(model))
    return path


@pytest.fixture(scope="module")
def example1_csv(tmp_path_factory):
    data, labels = mixture_sample(example1_model(), 600, np.random.default_rng(77))
    path = tmp_path_factory.mktemp("ex1") / "ex1.csv"
    return write_data(path, data, labels=labels), labels


class TestReading:
    def test_header_detected(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text("x,y\n1,2\n3,4\n")
        data, header = read_matrix(path)
        assert header == ["x", "y"] and data.tolist() == [[1, 2], [3, 4]]

    def test_headerless(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text("1,2\n3,4\n")
        data, header = read_matrix(path)
        assert header is None and data.shape == (2, 2)

    def test_label_column_dropped(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text("y1,label\n1.5,0\n2.5,1\n")
        assert read_matrix(path)[0].tolist() == [[1.5], [2.5]]


class TestFit:
    def test_single_component(self, tmp_path):
        data = np.random.default_rng(0).normal(size=(80, 2))
        csv_path = write_data(tmp_path / "d.csv", data)
        assert main(["fit", str(csv_path), "--k", "1", "--out-dir", str(tmp_path / "o")] + FAST) == 0
        model = json.loads((tmp_path / "o" / "model.json").read_text())
        assert model["k"] == 1 and model["components"][0]["weight"] == 1.0
        labels = (tmp_path / "o" / "labels.csv").read_text().splitlines()
        assert labels[0] == "label,r1" and len(labels) == 81

    def test_example1_locations(self, tmp_path, example1_csv):
        csv_path, _ = example1_csv
        out = tmp_path / "o"
        assert main(["fit", str(csv_path), "--k", "3", "--seed", "5", "--out-dir", str(out)]) == 0
        model = cli.load_model(out / "model.json")
        _, dist = match_locations(EXAMPLE1_LOCATIONS, model.locations)
        assert dist.max() < 0.5
        obj = json.loads((out / "model.json").read_text())
        assert obj["dimension"] == 2 and len(obj["components"][0]["sigma"]) == 4

    def test_empty_file(self, tmp_path, capsys):
        path = tmp_path / "empty.csv"
        path.write_text("")
        assert main(["fit", str(path), "--out-dir", str(tmp_path)]) == 2
        assert "empty" in capsys.readouterr().err

    def test_parse_error_names_line(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("y1,y2\n1,2\n3,oops\n5,6\n")
        assert main(["fit", str(path), "--out-dir", str(tmp_path)]) == 2
        assert "line 3" in capsys.readouterr().err

    def test_ragged_row(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("1,2\n3\n")
        assert main(["fit", str(path), "--out-dir", str(tmp_path)]) == 2
        assert "line 2" in capsys.readouterr().err

    def test_degenerate_exit(self, tmp_path, monkeypatch):
        data = np.random.default_rng(1).normal(size=(30, 1))
        csv_path = write_data(tmp_path / "d.csv", data)

        def broken(*args, **kwargs):
            raise DegenerateGroupError("all restarts failed", group=0)

        monkeypatch.setattr(cli, "fit", broken)
        assert main(["fit", str(csv_path), "--k", "2", "--out-dir", str(tmp_path)]) == 3

    def test_bad_flags(self, tmp_path):
        path = write_data(tmp_path / "d.csv", np.zeros((5, 1)))
        assert main(["fit", str(path), "--iters", "5", "--burnin", "9"]) == 2
        assert main(["fit", str(path), "--k-range", "3..1"]) == 2
        assert main(["nonsense"]) == 2

    def test_select_k(self, tmp_path):
        rng = np.random.default_rng(3)
        data = np.vstack([rng.normal(size=(60, 2)), rng.normal(size=(60, 2)) + [12.0, 0.0]])
        path = write_data(tmp_path / "d.csv", data)
        out = tmp_path / "o"
        assert main(["select-k", str(path), "--k-range", "1..3", "--out-dir", str(out)] + FAST) == 0
        manifest = RunManifest.from_json((out / "manifest.json").read_text())
        assert manifest.summary["k"] == 2
        assert [row[0] for row in manifest.summary["bic_table"]] == [1, 2, 3]

    def test_deterministic_outputs(self, tmp_path, example1_csv):
        csv_path, _ = example1_csv
        for name in ("a", "b"):
            assert main(["fit", str(csv_path), "--k", "3", "--seed", "9", "--threads", "2",
                         "--out-dir", str(tmp_path / name)] + FAST) == 0
        for fname in ("model.json", "labels.csv"):
            assert (tmp_path / "a" / fname).read_bytes() == (tmp_path / "b" / fname).read_bytes()

    def test_manifest_round_trip(self, tmp_path):
        path = write_data(tmp_path / "d.csv", np.random.default_rng(4).normal(size=(40, 1)))
        assert main(["fit", str(path), "--out-dir", str(tmp_path)] + FAST) == 0
        text = (tmp_path / "manifest.json").read_text()
        manifest = RunManifest.from_json(text)
        assert RunManifest.from_json(manifest.to_json()) == manifest
        assert manifest.command == "fit" and set(manifest.timings) >= {"read", "fit", "write"}


class TestSimulate:
    def test_header_only(self, tmp_path):
        model = write_model(tmp_path / "m.json", example1_model())
        out = tmp_path / "draws.csv"
        assert main(["simulate", str(model), "--n", "0", "--out", str(out)]) == 0
        assert out.read_text() == "y1,y2,label\n"

    def test_zero_weight_component(self, tmp_path):
        m = MixtureModel([SgasComponent(1.5, [0.0], [[1.0]], 1.0),
                          SgasComponent(1.5, [5.0], [[1.0]], 0.0)])
        model = write_model(tmp_path / "m.json", m)
        assert main(["simulate", str(model), "--n", "100", "--out-dir", str(tmp_path)]) == 0
        rows = (tmp_path / "draws.csv").read_text().splitlines()[1:]
        assert len(rows) == 100 and all(r.endswith(",0") for r in rows)

    def test_gaussian_limit_covariance(self, tmp_path):
        model = write_model(tmp_path / "m.json", MixtureModel([SgasComponent(1.999, [1.0, -1.0], SIGMA1)]))
        out = tmp_path / "draws.csv"
        n = 50_000
        assert main(["simulate", str(model), "--n", str(n), "--seed", "3", "--out", str(out)]) == 0
        data, _ = read_matrix(out)
        se = np.sqrt((SIGMA1 ** 2 + np.outer(np.diag(SIGMA1), np.diag(SIGMA1))) / n)
        assert np.all(np.abs(np.cov(data.T) - SIGMA1) < 4 * se)

    @pytest.mark.parametrize("content", ['{"format": "other"}', "not json",
                                         '{"format": "sgasmix-model", "dimension": 2, "components": '
                                         '[{"weight": 1, "alpha": 1.5, "mu": [0], "sigma": [1]}]}'])
    def test_invalid_model(self, tmp_path, content):
        path = tmp_path / "m.json"
        path.write_text(content)
        assert main(["simulate", str(path), "--n", "5", "--out-dir", str(tmp_path)]) == 2

    def test_fit_simulate_fit(self, tmp_path):
        truth = MixtureModel([SgasComponent(1.6, [0.0, 0.0], np.eye(2), 0.5),
                              SgasComponent(1.6, [10.0, 0.0], SIGMA1, 0.5)])
        write_model(tmp_path / "truth.json", truth)
        assert main(["simulate", str(tmp_path / "truth.json"), "--n", "400", "--seed", "1",
                     "--out", str(tmp_path / "a.csv")]) == 0
        assert main(["fit", str(tmp_path / "a.csv"), "--k", "2", "--out-dir", str(tmp_path / "f1")]) == 0
        assert main(["simulate", str(tmp_path / "f1" / "model.json"), "--n", "400", "--seed", "2",
                     "--out", str(tmp_path / "b.csv")]) == 0
        assert main(["fit", str(tmp_path / "b.csv"), "--k", "2", "--out-dir", str(tmp_path / "f2")]) == 0
        refit = cli.load_model(tmp_path / "f2" / "model.json")
        order, dist = match_locations(truth.locations, refit.locations)
        assert dist.max() < 0.6
        np.testing.assert_allclose(refit.weights[order], truth.weights, atol=0.1)


class TestEval:
    def labels(self, path, values):
        path.write_text("label\n" + "\n".join(str(v) for v in values) + "\n")
        return path

    def test_identical(self, tmp_path, capsys):
        a = self.labels(tmp_path / "a.csv", [0, 0, 1, 2, 2])
        assert main(["eval", str(a), str(a), "--out-dir", str(tmp_path)]) == 0
        assert "ARI 1.000000" in capsys.readouterr().out
        assert (tmp_path / "ari.csv").read_text() == "ari\n1.0\n"

    def test_crossing(self, tmp_path):
        a = self.labels(tmp_path / "a.csv", [1, 1, 2, 2])
        b = self.labels(tmp_path / "b.csv", [1, 2, 1, 2])
        assert main(["eval", str(a), str(b), "--out-dir", str(tmp_path)]) == 0
        assert (tmp_path / "ari.csv").read_text() == "ari\n-0.5\n"
        assert (tmp_path / "confusion.csv").read_text().splitlines()[1:] == [
            "1,1,1", "1,2,1", "2,1,1", "2,2,1"]

    def test_length_mismatch(self, tmp_path):
        a = self.labels(tmp_path / "a.csv", [0, 1, 1])
        b = self.labels(tmp_path / "b.csv", [0, 1])
        assert main(["eval", str(a), str(b), "--out-dir", str(tmp_path)]) == 2

    def test_draws_file_as_truth(self, tmp_path, example1_csv):
        csv_path, labels = example1_csv
        truth = self.labels(tmp_path / "t.csv", labels)
        assert main(["eval", str(csv_path), str(truth), "--out-dir", str(tmp_path)]) == 0
        assert (tmp_path / "ari.csv").read_text() == "ari\n1.0\n"


class TestBench:
    def test_zero_reps(self, tmp_path):
        assert main(["bench-example1", "--reps", "0", "--out-dir", str(tmp_path)]) == 2

    def test_wide_separation(self, tmp_path, capsys):
        assert main(["bench-example1", "--reps", "1", "--scale", "10", "--out-dir", str(tmp_path)]
                    + FAST) == 0
        rows = (tmp_path / "bench.csv").read_text().splitlines()
        assert rows[0].startswith("rep,status,ari")
        fields = rows[1].split(",")
        assert fields[1] == "ok" and float(fields[2]) == 1.0
        manifest = RunManifest.from_json((tmp_path / "manifest.json").read_text())
        assert manifest.summary["median"] == 1.0 and manifest.summary["failed"] == 0
