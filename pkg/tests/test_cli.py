"""CLI pipelines: manifests, fitting, evaluation, analysis, exit codes."""

import http.client
import json
import signal
import subprocess
import sys
import time

import pytest

from routebench.analysis import SyntheticConfig, generate_synthetic
from routebench.cli import main
from routebench.dataio import save_catalog, save_dataset
from routebench.routers import load_router


@pytest.fixture(scope="module")
def bench(tmp_path_factory):
    """A 100-record synthetic benchmark on disk plus a base config."""
    root = tmp_path_factory.mktemp("bench")
    ds = generate_synthetic(
        SyntheticConfig(latent_dim=2, ambient_dim=8, n_models=3, n_queries=100, seed=21)
    )
    dataset_path = root / "dataset.jsonl"
    catalog_path = root / "catalog.json"
    save_dataset(ds, dataset_path)
    save_catalog(ds.catalog, catalog_path)
    return {"root": root, "dataset": str(dataset_path), "catalog": str(catalog_path)}


def _write_config(path, bench, out, **extra):
    doc = {
        "dataset": bench["dataset"],
        "catalog": bench["catalog"],
        "split": {"seed": 5},
        "router": {"arch": "knn", "formulation": "utility", "config": {"k": 5}},
        "out": str(out),
    }
    doc.update(extra)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc))
    return path


class TestSplit:
    def test_writes_manifest_sizes(self, bench, tmp_path):
        out = tmp_path / "out"
        code = main(
            ["split", "--dataset", bench["dataset"], "--catalog", bench["catalog"],
             "--seed", "5", "--out", str(out)]
        )
        assert code == 0
        train = json.loads((out / "train_ids.json").read_text())
        val = json.loads((out / "val_ids.json").read_text())
        test = json.loads((out / "test_ids.json").read_text())
        assert (len(train["ids"]), len(val["ids"]), len(test["ids"])) == (70, 10, 20)
        assert train["seed"] == 5 and "config_hash" in train

    def test_same_seed_rerun_identical(self, bench, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            main(["split", "--dataset", bench["dataset"], "--catalog",
                  bench["catalog"], "--seed", "9", "--out", str(out)])
            outs.append((out / "train_ids.json").read_bytes())
        assert outs[0] == outs[1]

    def test_tiny_dataset_exits_2(self, bench, tmp_path):
        ds = generate_synthetic(
            SyntheticConfig(latent_dim=1, ambient_dim=4, n_models=2, n_queries=5, seed=1)
        )
        small = tmp_path / "small.jsonl"
        cat = tmp_path / "cat.json"
        save_dataset(ds, small)
        save_catalog(ds.catalog, cat)
        code = main(
            ["split", "--dataset", str(small), "--catalog", str(cat),
             "--seed", "1", "--out", str(tmp_path / "out")]
        )
        assert code == 2


class TestFit:
    def test_knn_router_file_round_trips(self, bench, tmp_path):
        out = tmp_path / "out"
        config = _write_config(tmp_path / "config.json", bench, out)
        assert main(["split", "--config", str(config)]) == 0
        assert main(["fit", "--config", str(config)]) == 0
        router = load_router(out / "router.json")
        assert router.arch == "knn"
        assert router.meta["c_max"] > 0
        log = json.loads((out / "train_log.json").read_text())
        assert log["arch"] == "knn" and "config_hash" in log

    def test_seeded_mlp_rerun_is_byte_identical(self, bench, tmp_path):
        blobs = []
        for name in ("a", "b"):
            out = tmp_path / name
            config = _write_config(
                tmp_path / f"config_{name}.json",
                bench,
                out,
                router={
                    "arch": "mlp",
                    "formulation": "utility",
                    "config": {"epochs": 5, "learning_rate": 0.1, "seed": 3},
                },
            )
            assert main(["fit", "--config", str(config)]) == 0
            blobs.append((out / "router.json").read_bytes())
        assert blobs[0] == blobs[1]

    def test_bad_arch_exits_2_and_lists_valid(self, bench, tmp_path, capsys):
        config = _write_config(tmp_path / "config.json", bench, tmp_path / "out")
        code = main(["fit", "--config", str(config), "--arch", "transformer"])
        captured = capsys.readouterr()
        assert code == 2
        assert "knn" in captured.err and "mlp_mf" in captured.err

    def test_divergence_exits_1_and_removes_partials(self, bench, tmp_path):
        out = tmp_path / "out"
        config = _write_config(
            tmp_path / "config.json", bench, out,
            router={
                "arch": "linear_mf",
                "formulation": "utility",
                "config": {"learning_rate": 500.0, "epochs": 5, "seed": 0,
                           "model_embed_dim": 8},
            },
        )
        code = main(["fit", "--config", str(config)])
        assert code == 1
        assert not (out / "router.json").exists()
        assert not (out / "train_log.json").exists()


class TestEval:
    def _pipeline(self, bench, tmp_path, **router):
        out = tmp_path / "out"
        config = _write_config(
            tmp_path / "config.json", bench, out,
            **({"router": router} if router else {}),
        )
        assert main(["split", "--config", str(config)]) == 0
        assert main(["fit", "--config", str(config)]) == 0
        assert main(["eval", "--config", str(config)]) == 0
        return out

    def test_utility_report_rows_and_dominance(self, bench, tmp_path):
        out = self._pipeline(bench, tmp_path)
        payload = json.loads((out / "results.json").read_text())
        rows = payload["auc"]["dataset"]
        assert set(rows) == {"oracle", "random", "knn"}
        assert rows["oracle"]["auc"] >= rows["knn"]["auc"]
        assert rows["oracle"]["auc"] >= rows["random"]["auc"]
        table = (out / "report.txt").read_text()
        assert table.splitlines()[0].startswith("Pareto hull AUC")

    def test_selection_report_three_presets(self, bench, tmp_path):
        # no explicit lambda: fit trains one selection router per preset
        out = self._pipeline(
            bench, tmp_path,
            arch="linear", formulation="selection",
            config={"epochs": 20, "learning_rate": 1.0, "seed": 1},
        )
        assert (out / "router_balanced.json").exists()
        payload = json.loads((out / "results.json").read_text())
        rows = payload["selection"]["dataset"]
        assert set(rows) == {"oracle", "random", "linear"}
        for label in rows:
            report = rows[label]
            assert set(report["per_preset"]) == {
                "low_cost", "balanced", "high_performance"
            }
            assert report["average"] == pytest.approx(
                sum(report["per_preset"].values()) / 3
            )
            assert rows["oracle"]["average"] >= report["average"] - 1e-12

    def test_rerun_byte_identical_results(self, bench, tmp_path):
        out_a = self._pipeline(bench, tmp_path / "a")
        out_b = self._pipeline(bench, tmp_path / "b")
        assert (out_a / "results.json").read_bytes() == (
            out_b / "results.json"
        ).read_bytes()

    def test_missing_router_exits_2(self, bench, tmp_path):
        config = _write_config(tmp_path / "config.json", bench, tmp_path / "out")
        assert main(["eval", "--config", str(config)]) == 2


class TestAnalyze:
    def test_locality_output(self, bench, tmp_path):
        out = tmp_path / "out"
        code = main(
            ["analyze", "locality", "--dataset", bench["dataset"], "--catalog",
             bench["catalog"], "--pairs", "2000", "--bins", "8", "--seed", "0",
             "--out", str(out)]
        )
        assert code == 0
        doc = json.loads((out / "locality.json").read_text())
        assert len(doc["mean_agreement"]) == 8
        assert sum(doc["counts"]) == doc["n_pairs"]

    def test_covering_sweep_monotone(self, bench, tmp_path):
        out = tmp_path / "out"
        code = main(
            ["analyze", "covering", "--dataset", bench["dataset"], "--catalog",
             bench["catalog"], "--radii", "0.1,0.2,0.4,0.8,1.6", "--out", str(out)]
        )
        assert code == 0
        doc = json.loads((out / "covering.json").read_text())
        counts = [doc["covering"][k] for k in ("0.1", "0.2", "0.4", "0.8", "1.6")]
        assert all(b <= a for a, b in zip(counts, counts[1:]))

    def test_epsilon_output(self, bench, tmp_path):
        out = tmp_path / "out"
        code = main(
            ["analyze", "epsilon", "--dataset", bench["dataset"], "--catalog",
             bench["catalog"], "--delta", "0.2,0.4", "--out", str(out)]
        )
        assert code == 0
        doc = json.loads((out / "epsilon.json").read_text())
        assert set(doc["epsilon_hat"]) == {"0.2", "0.4"}

    def test_synthetic_emits_loadable_benchmark(self, tmp_path):
        out = tmp_path / "out"
        code = main(
            ["analyze", "synthetic", "--latent-dim", "2", "--ambient-dim", "8",
             "--models", "3", "--n", "50", "--seed", "4", "--out", str(out)]
        )
        assert code == 0
        from routebench.dataio import load_dataset

        ds = load_dataset(out / "dataset.jsonl", out / "catalog.json")
        assert len(ds) == 50

    def test_regret_with_bound_column(self, tmp_path):
        out = tmp_path / "out"
        code = main(
            ["analyze", "regret", "--latent-dim", "2", "--ambient-dim", "8",
             "--models", "3", "--n", "260", "--train-sizes", "20,40,60",
             "--k", "5", "--trials", "3", "--test-size", "100", "--archs", "knn",
             "--seed", "2", "--out", str(out)]
        )
        assert code == 0
        doc = json.loads((out / "regret.json").read_text())
        assert doc["train_sizes"] == [20, 40, 60]
        assert len(doc["bound_2eps"]) == 3
        assert all(v >= 0 for v in doc["mean_regret"]["knn"])

    def test_missing_dataset_exits_2(self, tmp_path):
        code = main(["analyze", "locality", "--out", str(tmp_path / "out")])
        assert code == 2


class TestReportCommand:
    def test_rerenders_table(self, bench, tmp_path):
        out = tmp_path / "out"
        config = _write_config(tmp_path / "config.json", bench, out)
        main(["split", "--config", str(config)])
        main(["fit", "--config", str(config)])
        main(["eval", "--config", str(config)])
        rendered = tmp_path / "rendered"
        code = main(
            ["report", "--results", str(out / "results.json"), "--out", str(rendered)]
        )
        assert code == 0
        assert (rendered / "report.txt").read_text() == (
            out / "report.txt"
        ).read_text()


class TestServeCommand:
    def test_smoke_lifecycle(self, bench, tmp_path):
        out = tmp_path / "out"
        config = _write_config(tmp_path / "config.json", bench, out)
        main(["split", "--config", str(config)])
        main(["fit", "--config", str(config)])
        proc = subprocess.Popen(
            [sys.executable, "-m", "routebench.cli", "serve",
             "--router-path", str(out / "router.json"),
             "--catalog", bench["catalog"], "--bind", "127.0.0.1:8377"],
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
        )
        try:
            deadline = time.time() + 15
            health = None
            while time.time() < deadline:
                try:
                    conn = http.client.HTTPConnection("127.0.0.1", 8377, timeout=2)
                    conn.request("GET", "/health")
                    health = json.loads(conn.getresponse().read())
                    conn.close()
                    break
                except OSError:
                    time.sleep(0.2)
            assert health is not None and health["ready"] is True
            embedding = json.loads(
                open(bench["dataset"]).readline()
            )["embedding"]
            conn = http.client.HTTPConnection("127.0.0.1", 8377, timeout=5)
            conn.request(
                "POST",
                "/route",
                body=json.dumps({"embedding": embedding, "preset": "balanced"}),
                headers={"Content-Type": "application/json"},
            )
            response = json.loads(conn.getresponse().read())
            conn.close()
            assert "model" in response and response["router_version"]
        finally:
            proc.send_signal(signal.SIGINT)
            try:
                proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                proc.kill()
