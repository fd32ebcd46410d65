import csv
import json

import pytest
import yaml

from contribdag import cli
from contribdag.errors import ConfigError, OutputExistsError, QueryFileError
from contribdag.manifest import (
    MANIFEST_NAME,
    SUMMARY_NAME,
    TRANSCRIPT_NAME,
    emit_results,
    execute_run,
    load_config,
    load_queries,
    manifest_from_dict,
    read_summary,
    read_transcript,
    write_sweep_csv,
)
from contribdag.analysis import PopulationSpec, sweep
from contribdag.agents import SimAgentModel
from contribdag.orchestrator import OrchestratorConfig, run


def write_queries(path, records):
    path.write_text("\n".join(r if isinstance(r, str) else json.dumps(r) for r in records) + "\n")
    return path


@pytest.fixture
def queries(tmp_path):
    return write_queries(tmp_path / "q.jsonl", [
        {"id": "a", "query": "What is 2+2?", "answer": "4"},
        {"id": "b", "query": "Name a prime above 10."},
        {"id": 3, "query": "Capital of France?", "answer": "Paris"},
    ])


# --------------------------------------------------------------------------
# config


def test_empty_config_gets_defaults(tmp_path):
    cfg_file = tmp_path / "c.yaml"
    cfg_file.write_text("")
    m = load_config(cfg_file)
    assert m.config == OrchestratorConfig()
    assert [r.name for r in m.roles] == ["Assistant", "Programmer", "Mathematician", "Economist"]
    assert len(m.sim.models) == 4


def test_top_level_shorthand():
    m = manifest_from_dict({"tau": 0.7, "rounds": 2})
    assert m.config.tau == 0.7 and m.config.rounds == 2


@pytest.mark.parametrize("raw,field", [
    ({"tau": 1.5}, "tau"),
    ({"config": {"n_agents": 4, "k": 4}}, "k"),
    ({"config": {"bogus": 1}}, "config.bogus"),
    ({"roles": ["Assistant", "Wizard", "Doctor", "Lawyer"]}, "roles[1]"),
    ({"backend": "http"}, "http"),
    ({"version": "9"}, "version"),
])
def test_config_errors_name_the_field(raw, field):
    with pytest.raises(ConfigError) as info:
        manifest_from_dict(raw)
    assert info.value.field == field


def test_manifest_round_trip():
    m = manifest_from_dict({"config": {"n_agents": 3, "gamma": 0.9, "k": 1}, "created_at": "2026-01-01T00:00:00"})
    again = manifest_from_dict(yaml.safe_load(m.dump()))
    assert again == m


# --------------------------------------------------------------------------
# queries


def test_queries_in_file_order(queries):
    qs = load_queries(queries)
    assert [q.id for q in qs] == ["a", "b", "3"]
    assert qs[1].answer is None and qs[2].answer == "Paris"


def test_duplicate_ids_report_both_lines(tmp_path):
    path = write_queries(tmp_path / "d.jsonl", [{"id": "x", "query": "q"}, {"id": "y", "query": "q"},
                                                {"id": "x", "query": "q"}])
    with pytest.raises(QueryFileError, match="lines 1 and 3"):
        load_queries(path)


@pytest.mark.parametrize("bad", ["{not json", '["a"]', '{"id": "z"}', '{"id": "z", "query": "  "}'])
def test_malformed_query_line(tmp_path, bad):
    path = write_queries(tmp_path / "m.jsonl", [{"id": "ok", "query": "fine"}, bad])
    with pytest.raises(QueryFileError, match=":2:"):
        load_queries(path)


# --------------------------------------------------------------------------
# emission


def test_execute_run_writes_three_files(tmp_path, queries):
    m = manifest_from_dict({"rounds": 2})
    paths = execute_run(m, load_queries(queries), tmp_path / "out")
    assert {p.name for p in paths.values()} == {TRANSCRIPT_NAME, SUMMARY_NAME, MANIFEST_NAME}
    records = read_transcript(paths["transcript"])
    summary = read_summary(paths["summary"])
    assert [r["query_id"] for r in summary] == ["a", "b", "3"]
    for row in summary:
        mine = [r for r in records if r["query_id"] == row["query_id"]]
        assert len(mine) == int(row["rounds"])
        assert sum(r["tokens"]["prompt"] for r in mine) == int(row["prompt_tokens"])
        assert sum(r["tokens"]["completion"] for r in mine) == int(row["completion_tokens"])
    stored = load_config(paths["manifest"])
    assert stored.created_at and stored.config == m.config


def test_refuses_to_overwrite(tmp_path, queries):
    m = manifest_from_dict({"rounds": 1})
    qs = load_queries(queries)
    execute_run(m, qs, tmp_path)
    with pytest.raises(OutputExistsError):
        execute_run(m, qs, tmp_path)
    execute_run(m, qs, tmp_path, overwrite=True)
    assert len(read_summary(tmp_path / SUMMARY_NAME)) == 3


def test_emit_run_results(tmp_path):
    m = manifest_from_dict({"rounds": 2})
    res = run("q", m.config, m.agents(0))
    paths = emit_results([("only", res)], tmp_path, manifest=m)
    assert len(read_transcript(paths["transcript"])) == res.rounds_executed
    with pytest.raises(ValueError):
        emit_results([("only", res)], tmp_path / "x")


def test_sweep_csv_grouped_by_config(tmp_path):
    pop = PopulationSpec(agents=(SimAgentModel.uniform(0.5, 6, p_uplift=0.7),), n_trials=5, seed=1, dim=64)
    cfgs = [OrchestratorConfig(n_agents=n, gamma=g) for n in (3, 4) for g in (None, 0.9)]
    rows = sweep(cfgs, pop)
    # interleave to check grouping is restored on write
    shuffled = rows[::2] + rows[1::2]
    path = emit_results(shuffled, tmp_path)["sweep"]
    with path.open() as fh:
        hashes = [r["config_hash"] for r in csv.DictReader(fh)]
    assert len(hashes) == 20 and len(set(hashes)) == 4
    blocks = [h for i, h in enumerate(hashes) if i == 0 or h != hashes[i - 1]]
    assert len(blocks) == 4
    with pytest.raises(OutputExistsError):
        write_sweep_csv(rows, tmp_path)


# --------------------------------------------------------------------------
# command line


def test_cli_run(tmp_path, queries, capsys):
    out = tmp_path / "run"
    code = cli.main(["run", "--query-file", str(queries), "--agents", "3", "--rounds", "2", "--gamma", "0.95",
                     "--out", str(out)])
    assert code == 0
    assert "summary" in capsys.readouterr().out
    m = load_config(out / MANIFEST_NAME)
    assert m.config.n_agents == 3 and m.config.gamma == 0.95 and m.config.k == 2
    assert cli.main(["run", "--query-file", str(queries), "--out", str(out)]) == 2


def test_cli_run_bad_config(tmp_path, queries, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("tau: 2\n")
    assert cli.main(["run", "--query-file", str(queries), "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "tau" in capsys.readouterr().err


def test_cli_verify_prob2(tmp_path, capsys):
    assert cli.main(["verify", "prob2", "--trials", "20000", "--out", str(tmp_path)]) == 0
    assert "prob2: PASS" in capsys.readouterr().out
    assert (tmp_path / "verify_prob2.csv").exists()


def test_cli_verify_lemma2_small(tmp_path, capsys):
    assert cli.main(["verify", "lemma2", "--trials", "50", "--out", str(tmp_path)]) == 0
    assert "lemma2: PASS" in capsys.readouterr().out


def test_cli_sweep(tmp_path, capsys):
    code = cli.main(["sweep", "--grid", "n_agents=3,4", "--grid", "gamma=none,0.9", "--trials", "4",
                     "--out", str(tmp_path)])
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    assert sum("accuracy=" in line for line in lines) == 4
    with (tmp_path / "sweep.csv").open() as fh:
        assert len(list(csv.DictReader(fh))) == 16


def test_cli_bad_grid(tmp_path):
    assert cli.main(["sweep", "--grid", "tau", "--out", str(tmp_path)]) == 2
