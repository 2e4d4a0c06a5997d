import json

import pytest
from hypothesis import given, strategies as st

from kairanban.core import (
    SENTINEL_ANALYSIS,
    SENTINEL_REASONING,
    AgentStepRecord,
    Comment,
    Document,
    ProbabilityVector,
    placeholder,
)
from kairanban.errors import LabelMismatch, MissingPredecessor, MissingSteps, NonNumeric, ParseFailure
from kairanban.prompting import (
    IbcInputs,
    PromptTemplate,
    TemplateSet,
    format_agent_reply,
    parse_agent_output,
    render_ibc_prompt,
    render_judge_prompt,
    render_kcs_prompt,
    render_single_prompt,
)

from conftest import assert_golden

X = "The service was slow but the food made up for it."


def make_doc(space, n_steps, comments=0):
    steps = [AgentStepRecord(0, SENTINEL_ANALYSIS, SENTINEL_REASONING, placeholder(space))]
    for i in range(1, n_steps):
        p = [0.1] * space.k
        p[i % space.k] += 1 - sum(p)
        steps.append(AgentStepRecord(i, f"analysis {i}", f"reasoning {i}.", ProbabilityVector(p)))
    cs = [Comment(j, f"comment {j}") for j in range(comments)]
    return Document(X, tuple(steps), tuple(cs))


def user(prompt):
    return prompt[1].content


def test_template_drops_empty_slot_lines_and_requires_all_slots():
    t = PromptTemplate("head\n\n{{a}}\n\n{{b}}\n\ntail {{c}}\n")
    assert t.render(a="", b="B", c="C") == "head\n\nB\n\ntail C\n"
    with pytest.raises(KeyError):
        t.render(a="x")


def test_external_template_dir(tmp_path, space3):
    for kind in ("kcs", "ibc", "single", "judge"):
        (tmp_path / f"{kind}.system.txt").write_text("SYS")
        (tmp_path / f"{kind}.user.txt").write_text("custom {{input_text}} / {{labels}}")
    ts = TemplateSet.load(tmp_path)
    assert user(render_single_prompt("hi", space3, ts)) == "custom hi / negative, neutral, positive\n"


def test_kcs_step1_prompt_shows_sentinel_and_zero_placeholder(space3):
    prompt = render_kcs_prompt(make_doc(space3, 1), 1, space3, 6)
    text = user(prompt)
    assert SENTINEL_REASONING in text
    assert SENTINEL_ANALYSIS in text
    assert '{"negative": 0.0, "neutral": 0.0, "positive": 0.0}' in text
    assert "Agent 1 of 6" in prompt[0].content
    assert_golden("kcs_step1.txt", text)


def test_kcs_prompt_lists_prior_opinions_in_order(space3):
    text = user(render_kcs_prompt(make_doc(space3, 3), 3, space3, 6))
    i1, i2 = text.index("- Agent 1: reasoning 1."), text.index("- Agent 2: reasoning 2.")
    assert i1 < i2
    assert "Result from the previous agent (Agent 2)" in text
    assert "analysis 2" in text and "analysis 1" not in text
    assert "informal chat" not in text


def test_kcs_prompt_with_comments(space3):
    text = user(render_kcs_prompt(make_doc(space3, 4, comments=7), 4, space3, 6))
    opinions = text.index("Opinions of all prior agents")
    positions = [text.index(f"- Agent {j}: comment {j}") for j in range(7)]
    assert opinions < positions[0] and positions == sorted(positions)
    assert text.index("Your task") > positions[-1]
    assert_golden("kcs_step4_with_comments.txt", text)


def test_kcs_prompt_content_order(space3):
    text = user(render_kcs_prompt(make_doc(space3, 3, comments=2), 3, space3, 6))
    order = [X, "Result from the previous agent", "Opinions of all prior agents",
             "Comments from the informal chat", "one sentence", "Compare your view", "```json"]
    idx = [text.index(s) for s in order]
    assert idx == sorted(idx)


def test_kcs_prompt_missing_predecessor(space3):
    with pytest.raises(MissingPredecessor):
        render_kcs_prompt(make_doc(space3, 1), 2, space3)


def test_render_is_deterministic(space3):
    doc = make_doc(space3, 3, comments=2)
    assert render_kcs_prompt(doc, 3, space3, 6) == render_kcs_prompt(doc, 3, space3, 6)


def test_ibc_prompt_cases(space3):
    first = user(render_ibc_prompt(X, IbcInputs(0, ((0, SENTINEL_ANALYSIS),)), space3))
    assert "Comments from" not in first and SENTINEL_ANALYSIS in first

    late = user(render_ibc_prompt(X, IbcInputs(5, (), (Comment(0, "c0"), Comment(1, "c1"))), space3))
    assert "Analysis by" not in late
    assert "- Agent 0: c0" in late

    mid = user(render_ibc_prompt(
        X, IbcInputs(2, ((2, "R two"), (1, "R one")), (Comment(0, "c0"), Comment(1, "c1"))), space3
    ))
    assert mid.index("- Agent 0: c0") < mid.index("- Agent 1: c1")
    assert mid.index("R two") < mid.index("R one")
    assert_golden("ibc_mid.txt", mid)


def test_single_prompt(space3, space5):
    text = user(render_single_prompt(X, space5))
    assert X in text
    for lab in space5.labels:
        assert f'"{lab}": <probability>' in text
    assert "Opinions" not in text and "Comments" not in text
    assert_golden("single_k3.txt", user(render_single_prompt(X, space3)))


def test_judge_prompt(space3):
    kcs_doc = make_doc(space3, 7)
    text = user(render_judge_prompt(kcs_doc, space3, 6))
    for i in range(1, 7):
        assert f"reasoning {i}." in text
    assert SENTINEL_REASONING not in text
    assert "Comments from" not in text

    ibc_doc = make_doc(space3, 7, comments=7)
    text = user(render_judge_prompt(ibc_doc, space3, 6))
    assert text.index("Comments from") < text.index("Integrate the reasoning")
    assert_golden("judge_post_ibc.txt", text)

    with pytest.raises(MissingSteps):
        render_judge_prompt(make_doc(space3, 5), space3, 6)


def test_parse_well_formed(space3):
    text = 'Analysis: upbeat.\nReasoning: Lots of praise.\n```json\n{"negative": 0.2, "neutral": 0.3, "positive": 0.5}\n```'
    out = parse_agent_output(text, space3)
    assert out.raw_probs == {"negative": 0.2, "neutral": 0.3, "positive": 0.5}
    assert out.reasoning == "Lots of praise."
    assert out.analysis == "upbeat."


def test_parse_accepts_unnormalized_and_case_insensitive(space3):
    text = '```\n{"NEGATIVE": 0.49, "Neutral": "0.29", "positive": 0.20}\n```'
    out = parse_agent_output(text, space3)
    assert sum(out.raw_probs.values()) == pytest.approx(0.98)
    assert out.reasoning == "(no reasoning given)"


def test_parse_reasoning_fallback_to_first_sentence(space3):
    text = 'I think it is upbeat. More words here.\n```json\n{"negative": 0, "neutral": 0, "positive": 1}\n```'
    assert parse_agent_output(text, space3).reasoning == "I think it is upbeat."


@pytest.mark.parametrize("text,err", [
    ("no block at all", ParseFailure),
    ("```json\n{not json}\n```", ParseFailure),
    ("```json\n[0.2, 0.3, 0.5]\n```", ParseFailure),
    ('```json\n{"negative": 0.5, "neutral": 0.5}\n```', LabelMismatch),
    ('```json\n{"negative": 0.2, "neutral": 0.3, "happy": 0.5}\n```', LabelMismatch),
    ('```json\n{"negative": 0.2, "Negative": 0.3, "positive": 0.5}\n```', LabelMismatch),
    ('```json\n{"negative": "lots", "neutral": 0.3, "positive": 0.5}\n```', NonNumeric),
    ('```json\n{"negative": true, "neutral": 0.3, "positive": 0.5}\n```', NonNumeric),
])
def test_parse_errors(space3, text, err):
    with pytest.raises(err):
        parse_agent_output(text, space3)


probs = st.lists(st.floats(0, 1, allow_nan=False), min_size=3, max_size=3)


@given(probs)
def test_reply_round_trip(p):
    from kairanban.core import THREE_CLASS
    text = format_agent_reply("some analysis", "because.", p, THREE_CLASS)
    out = parse_agent_output(text, THREE_CLASS)
    assert list(out.raw_probs.values()) == [float(v) for v in p]
    assert set(out.raw_probs) == set(THREE_CLASS.labels)
    assert out.reasoning == "because."


def test_block_is_json_keyed_by_label(space5):
    text = format_agent_reply("a", "b", [0.2] * 5, space5)
    block = text.split("```json\n")[1].split("\n```")[0]
    assert list(json.loads(block)) == list(space5.labels)
