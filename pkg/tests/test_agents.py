import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from _stub import StubServer  # noqa: E402

from contribdag.agents import (  # noqa: E402
    ROLE_POOL,
    AnswerGeometry,
    HttpAgent,
    HttpEndpoint,
    PromptBundle,
    RoleProfile,
    SimAgentModel,
    SimPopulation,
    assemble_prompt,
    default_roster,
    http_respond,
    is_correct_text,
    parse_tag,
    sim_respond,
)
from contribdag.agents.http import API_KEY_ENV, build_request  # noqa: E402
from contribdag.agents.roles import count_tokens, default_agent_count  # noqa: E402
from contribdag.agents.sim import check_feasible, synthetic_text  # noqa: E402
from contribdag.analysis import prob_at_least_two_correct  # noqa: E402
from contribdag.embedding import HashEmbedder  # noqa: E402
from contribdag.errors import (  # noqa: E402
    InfeasibleGeometryError,
    InvalidDistributionError,
    MalformedResponseError,
    PromptError,
    StatusError,
    TransportError,
)

ROLE = ROLE_POOL[0]


# --------------------------------------------------------------------------
# roles and prompts


def test_role_pool():
    names = [r.name for r in ROLE_POOL]
    assert len(names) == 8 == len(set(names))
    assert {"Assistant", "Mathematician", "Economist", "Psychologist", "Programmer", "Historian", "Lawyer",
            "Doctor"} == set(names)
    assert all(r.system_prompt.strip() for r in ROLE_POOL)
    with pytest.raises(ValueError):
        RoleProfile("x", " ")


def test_default_roster():
    assert default_agent_count("math") == 4 and default_agent_count("knowledge") == 5
    assert [r.name for r in default_roster(5, "knowledge")][-1] == "Psychologist"
    big = default_roster(10)
    assert len({r.name for r in big}) == 10


def test_round_zero_prompt():
    b = assemble_prompt(ROLE, "What is 2+2?", [], 0)
    assert b.collab == () and b.system == ROLE.system_prompt and b.user_message() == "What is 2+2?"
    with pytest.raises(PromptError):
        assemble_prompt(ROLE, "q", [("Peer", "x")], 0)
    with pytest.raises(PromptError):
        assemble_prompt(ROLE, "q", [], -1)
    with pytest.raises(PromptError):
        PromptBundle(system="s", user="  ")


def test_self_reflection_and_order():
    own = "My earlier answer is 4."
    b = assemble_prompt(ROLE, "q", [(ROLE.name, own)], 1)
    assert own in b.user_message()
    b2 = assemble_prompt(ROLE, "q", [("B", "second"), ("A", "first")], 2)
    msg = b2.user_message()
    assert msg.index("Peer B responded: second") < msg.index("Peer A responded: first")


def test_token_count():
    assert count_tokens("a b  c\n d") == 4
    assert count_tokens(synthetic_text(0, 40)) == 40


# --------------------------------------------------------------------------
# sim model


def test_model_validation():
    with pytest.raises(InvalidDistributionError):
        SimAgentModel(p_correct=0.5, wrong_answer_probs=(0.2, 0.2))
    with pytest.raises(InfeasibleGeometryError):
        SimAgentModel.uniform(0.5, 3, alpha=0.3, beta=0.3)
    m = SimAgentModel.uniform(0.4, 6)
    assert sum(m.wrong_answer_probs) == pytest.approx(0.6, abs=1e-12)
    assert SimAgentModel.from_dict(m.to_dict()) == m


def test_geometry_feasibility():
    with pytest.raises(InfeasibleGeometryError):
        check_feasible(0.5, 0.6, 3, 64, 0.3)
    with pytest.raises(InfeasibleGeometryError):
        check_feasible(0.8, 0.35, 40, 64, 0.3)
    with pytest.raises(InfeasibleGeometryError):
        check_feasible(0.8, 0.35, 3, 64, 0.5)


def test_tags():
    assert parse_tag(synthetic_text(3, 10)) == "W3"
    assert is_correct_text(synthetic_text(0, 5))
    assert not is_correct_text("no tag")


@settings(max_examples=40, deadline=None)
@given(st.floats(0.5, 0.99), st.floats(0.0, 0.45), st.integers(1, 6), st.integers(0, 10_000))
def test_geometry_satisfies_clustering_assumption(alpha, beta, k, seed):
    if not alpha > beta:
        return
    geo = AnswerGeometry(n_answers=k + 1, alpha=alpha, beta=beta, center_cos=beta / 2, dim=64, seed=seed)
    rng = np.random.default_rng(seed)
    answers = rng.integers(0, k + 1, size=8)
    rs = np.vstack([geo.sample(int(a), 1.0, rng) for a in answers])
    assert np.allclose(np.linalg.norm(rs, axis=1), 1.0, atol=1e-12)
    S = rs @ rs.T
    for i in range(8):
        for j in range(i + 1, 8):
            if answers[i] == answers[j]:
                assert S[i, j] >= alpha - 1e-9
            else:
                assert S[i, j] <= beta + 1e-9


def _round0(pop, seed, q=0):
    agents = pop.agents(seed, q)
    return [a.respond(assemble_prompt(a.role, "q", [], 0), i, 0) for i, a in enumerate(agents)]


def test_certain_agents_cluster():
    m = SimAgentModel.uniform(1.0, 3)
    pop = SimPopulation(models=(m,) * 4, roles=tuple(default_roster(4)))
    recs = _round0(pop, 1)
    assert all(r.correct for r in recs)
    rs = np.vstack([r.embedding for r in recs])
    assert (rs @ rs.T).min() >= m.alpha - 1e-9


def test_two_correct_rate_matches_closed_form():
    m = SimAgentModel.uniform(0.5, 4)
    pop = SimPopulation(models=(m,) * 4, roles=tuple(default_roster(4)), dim=32)
    hits = 0
    for t in range(10_000):
        geo = pop.geometry(0, 0)
        rngs = [np.random.default_rng([t, i]) for i in range(4)]
        bundle = assemble_prompt(ROLE, "q", [], 0)
        correct = sum(sim_respond(m, bundle, rngs[i], geo).correct for i in range(4))
        hits += correct >= 2
    assert abs(hits / 10_000 - prob_at_least_two_correct(0.5, 4)) <= 0.015


def test_uplift_with_correct_peer():
    m = SimAgentModel.uniform(0.49, 4, p_uplift=0.69)
    geo = AnswerGeometry(n_answers=5, alpha=m.alpha, beta=m.beta, dim=32)
    bundle = assemble_prompt(ROLE, "q", [("Peer", synthetic_text(0, 8))], 1)
    wrong_peer = assemble_prompt(ROLE, "q", [("Peer", synthetic_text(2, 8))], 1)
    rng = np.random.default_rng(0)
    rate = np.mean([sim_respond(m, bundle, rng, geo).correct for _ in range(10_000)])
    base = np.mean([sim_respond(m, wrong_peer, rng, geo).correct for _ in range(10_000)])
    assert abs(rate - 0.69) <= 0.02
    assert abs(base - 0.49) <= 0.02


def test_single_agent_frequency_converges():
    m = SimAgentModel.uniform(0.3, 5)
    geo = AnswerGeometry(n_answers=6, alpha=m.alpha, beta=m.beta, dim=32)
    rng = np.random.default_rng(1)
    bundle = assemble_prompt(ROLE, "q", [], 0)
    n = 20_000
    freq = np.mean([sim_respond(m, bundle, rng, geo).correct for _ in range(n)])
    assert abs(freq - 0.3) <= 3 * np.sqrt(0.3 * 0.7 / n)


def test_sim_reproducible_and_stream_partitioned():
    m = SimAgentModel.uniform(0.4, 6)
    pop = SimPopulation(models=(m,) * 4, roles=tuple(default_roster(4)))
    a, b = _round0(pop, 9), _round0(pop, 9)
    for x, y in zip(a, b):
        assert x.text == y.text and x.embedding.tobytes() == y.embedding.tobytes()
    # an agent's draw does not depend on whether its peers were called first
    agents = pop.agents(9, 0)
    solo = agents[2].respond(assemble_prompt(agents[2].role, "q", [], 0), 2, 0)
    assert solo.embedding.tobytes() == a[2].embedding.tobytes()


def test_population_requires_shared_geometry():
    with pytest.raises(InfeasibleGeometryError):
        SimPopulation(models=(SimAgentModel.uniform(0.5, 2), SimAgentModel.uniform(0.5, 2, alpha=0.9)),
                      roles=tuple(default_roster(2)))


# --------------------------------------------------------------------------
# HTTP backend


def endpoint(url, **kw):
    return HttpEndpoint(url=url, model="stub", backoff=0.01, **kw)


def test_request_shape():
    b = assemble_prompt(ROLE, "q", [("Peer", "x")], 1)
    req = build_request(HttpEndpoint(url="http://x", model="m"), b)
    assert req["max_tokens"] == 2048 and req["temperature"] == 0.5
    assert [m["role"] for m in req["messages"]] == ["system", "user"]
    assert req["messages"][1]["content"] == "q\n\nPeer Peer responded: x"


def test_http_respond_passes_usage_and_auth(monkeypatch):
    monkeypatch.setenv(API_KEY_ENV, "sekret")
    with StubServer() as stub:
        rec = http_respond(endpoint(stub.url), assemble_prompt(ROLE, "What?", [], 0), HashEmbedder(), 3, 0)
        assert stub.requests[0]["auth"] == "Bearer sekret"
    assert rec.text.endswith("The answer is 4.")
    assert rec.token_counts == tuple(stub.usage)
    assert rec.agent_id == 3
    assert np.linalg.norm(rec.embedding) == pytest.approx(1.0)


def test_http_retries_then_succeeds():
    with StubServer() as stub:
        stub.queue("503", "503")
        rec = http_respond(endpoint(stub.url), assemble_prompt(ROLE, "q", [], 0), HashEmbedder())
        assert len(stub.requests) == 3
    assert rec.text


def test_http_status_error_has_attribution():
    with StubServer() as stub:
        stub.queue("503", "503", "503", "503")
        with pytest.raises(StatusError) as info:
            http_respond(endpoint(stub.url), assemble_prompt(ROLE, "q", [], 0), HashEmbedder(), 2, 1)
        assert len(stub.requests) == 4
    assert info.value.status == 503
    assert "agent=2" in str(info.value) and "round=1" in str(info.value)


def test_http_client_error_not_retried():
    with StubServer() as stub:
        stub.queue("400")
        with pytest.raises(StatusError):
            http_respond(endpoint(stub.url), assemble_prompt(ROLE, "q", [], 0), HashEmbedder())
        assert len(stub.requests) == 1


@pytest.mark.parametrize("plan", ["garbage", "nochoices"])
def test_http_malformed(plan):
    with StubServer() as stub:
        stub.queue(plan)
        with pytest.raises(MalformedResponseError):
            http_respond(endpoint(stub.url), assemble_prompt(ROLE, "q", [], 0), HashEmbedder())


def test_http_truncation_flagged_and_missing_usage():
    with StubServer() as stub:
        stub.queue("truncate", "nousage")
        agent = HttpAgent(ROLE, endpoint(stub.url), HashEmbedder())
        first = agent.respond(assemble_prompt(ROLE, "q", [], 0), 0, 0)
        second = agent.respond(assemble_prompt(ROLE, "q", [], 0), 0, 0)
    assert first.truncated and not second.truncated
    assert second.completion_tokens == count_tokens(second.text)


def test_http_transport_error():
    with pytest.raises(TransportError):
        http_respond(HttpEndpoint(url="http://127.0.0.1:9/x", model="m", max_retries=1, backoff=0.0, timeout=0.5),
                     assemble_prompt(ROLE, "q", [], 0), HashEmbedder())
