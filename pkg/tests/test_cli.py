import csv
import json

import pytest
import yaml

from nudgelab import cli

SIM_CONFIG = {
    "seed": 11,
    "population": {"n_users": 50, "n_items": 15, "pair_affinity": 0.4, "n_affine_pairs": 4},
    "effect": {"immediate_uplift": 0.4, "adopt_probability": 0.5},
    "design": {
        "weeks": 3,
        "burnin_weeks": 8,
        "context": {"traits": ["days_since_last_nudge", "purchase_frequency",
                               "baseline_expenditure"]},
    },
}


def _write_yaml(path, payload):
    path.write_text(yaml.safe_dump(payload), encoding="utf-8")
    return str(path)


@pytest.fixture(scope="module")
def sim_out(tmp_path_factory):
    root = tmp_path_factory.mktemp("sim")
    cfg = _write_yaml(root / "sim.yaml", SIM_CONFIG)
    out = root / "out"
    assert cli.main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    return out


def test_simulate_outputs(sim_out):
    expected = {"purchase_log.csv", "login_log.csv", "nudge_log.csv", "decisions.csv",
                "groups.csv", "model.json", "run_meta.json", "summary.md"}
    assert expected <= {p.name for p in sim_out.iterdir()}
    meta = json.loads((sim_out / "run_meta.json").read_text())
    assert meta["end_day"] - meta["start_day"] == 3 * 7


def test_simulate_deterministic(sim_out, tmp_path):
    cfg = _write_yaml(tmp_path / "sim.yaml", SIM_CONFIG)
    out2 = tmp_path / "out2"
    assert cli.main(["simulate", "--config", cfg, "--out", str(out2)]) == 0
    for name in ("purchase_log.csv", "nudge_log.csv", "decisions.csv", "groups.csv"):
        assert (out2 / name).read_bytes() == (sim_out / name).read_bytes()


def test_analyze_and_report(sim_out, tmp_path):
    cfg = _write_yaml(tmp_path / "an.yaml", {
        "purchase_log": str(sim_out / "purchase_log.csv"),
        "login_log": str(sim_out / "login_log.csv"),
        "nudge_log": str(sim_out / "nudge_log.csv"),
        "groups": str(sim_out / "groups.csv"),
        "decisions": str(sim_out / "decisions.csv"),
        "meta": str(sim_out / "run_meta.json"),
    })
    out = tmp_path / "an_out"
    assert cli.main(["analyze", "--config", cfg, "--out", str(out), "--seed", "3"]) == 0
    assert (out / "summary.md").exists()
    assert (out / "success.csv").exists()

    rep_out = tmp_path / "rep_out"
    assert cli.main(["report", "--config", cfg, "--out", str(rep_out), "--seed", "3"]) == 0
    assert "# Impact summary" in (rep_out / "summary.md").read_text()


def test_recommend(sim_out, tmp_path):
    items = set()
    with (sim_out / "purchase_log.csv").open() as fh:
        for row in csv.DictReader(fh):
            items.add(row["item_id"])
    stock = tmp_path / "stock.csv"
    with stock.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["item_id", "in_stock"])
        for item in sorted(items):
            writer.writerow([item, 1])

    cfg = _write_yaml(tmp_path / "rec.yaml", {
        "purchase_log": str(sim_out / "purchase_log.csv"),
        "stock_file": str(stock),
    })
    out = tmp_path / "rec_out"
    assert cli.main(["recommend", "--config", cfg, "--out", str(out), "--seed", "5"]) == 0
    with (out / "recommendations.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert rows
    for row in rows:
        assert row["infrequent_item"] in (row["item_i"], row["item_j"])
        assert row["message"].startswith("Pharmacies in your area typically purchase")


def test_assign(sim_out, tmp_path):
    meta = json.loads((sim_out / "run_meta.json").read_text())
    cfg = _write_yaml(tmp_path / "asn.yaml", {
        "purchase_log": str(sim_out / "purchase_log.csv"),
        "login_log": str(sim_out / "login_log.csv"),
        "nudge_log": str(sim_out / "nudge_log.csv"),
        "groups": str(sim_out / "groups.csv"),
        "model": str(sim_out / "model.json"),
        "day": meta["end_day"],
        "context": {"traits": ["days_since_last_nudge", "purchase_frequency",
                               "baseline_expenditure"]},
    })
    out = tmp_path / "asn_out"
    assert cli.main(["assign", "--config", cfg, "--out", str(out), "--seed", "9"]) == 0
    with (out / "decisions.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert rows and all(r["arm"] in ("control", "personalized") for r in rows)


def test_error_exit_codes(tmp_path, capsys):
    # missing config file
    assert cli.main(["analyze", "--config", str(tmp_path / "nope.yaml"),
                     "--out", str(tmp_path), "--seed", "1"]) == 2
    assert "nope.yaml" in capsys.readouterr().err

    # missing input file named in the config
    cfg = _write_yaml(tmp_path / "bad.yaml", {
        "purchase_log": str(tmp_path / "ghost.csv"),
        "groups": str(tmp_path / "ghost2.csv"),
        "start_day": 0, "end_day": 7,
    })
    assert cli.main(["analyze", "--config", cfg, "--out", str(tmp_path),
                     "--seed", "1"]) == 2
    assert "ghost.csv" in capsys.readouterr().err

    # stochastic subcommand without a seed anywhere
    cfg2 = _write_yaml(tmp_path / "sim.yaml",
                       {k: v for k, v in SIM_CONFIG.items() if k != "seed"})
    assert cli.main(["simulate", "--config", cfg2, "--out", str(tmp_path)]) == 2
    assert "seed" in capsys.readouterr().err

    # no config flag at all
    assert cli.main(["report"]) == 2
