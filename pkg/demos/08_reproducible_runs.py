# %% [markdown]
# # Manifests, transcripts and replay
#
# A run directory holds the manifest (every setting, defaults filled in), a
# JSONL transcript of each round, and a per-query summary. Replaying from the
# stored manifest reproduces the transcript byte for byte.

# %%
import json
import tempfile
from pathlib import Path

from contribdag.manifest import execute_run, load_config, load_queries, manifest_from_dict

work = Path(tempfile.mkdtemp())
(work / "queries.jsonl").write_text(
    "\n".join(json.dumps(q) for q in [{"id": "q1", "query": "2+2?", "answer": "4"},
                                      {"id": "q2", "query": "3*3?", "answer": "9"}]) + "\n")
queries = load_queries(work / "queries.jsonl")

first = execute_run(manifest_from_dict({"rounds": 2, "gamma": 0.95, "seed": 5}), queries, work / "first")
print(first["summary"].read_text())

replayed = execute_run(load_config(first["manifest"]), queries, work / "replay")
same = first["transcript"].read_bytes() == replayed["transcript"].read_bytes()
print("transcript identical on replay:", same)
