import json

import pytest

from stancekit import StanceExample, StanceLabel
from stancekit.datagen import (
    GenSettings,
    GenerationReport,
    MalformedResponse,
    SourcePost,
    TopicProposal,
    build_mgt_dataset,
    extract_first_json_object,
    generate_adaptation_set,
    generate_topics_for_post,
)
from stancekit.gateway import ScriptedMockBackend

from helpers import (
    compliant_generation_mock,
    gen_settings,
    make_gateway,
    parse_generation_prompt,
)

P, C, N = StanceLabel.PRO, StanceLabel.CON, StanceLabel.NEUTRAL


def topics_mock(response):
    """Mock answering every topic-generation prompt with one fixed response."""
    return ScriptedMockBackend([("List the most potential topics", response)])


def post(text="Posts about civic policy and its consequences.", id="post0"):
    return SourcePost(id=id, text=text)


# --- JSON extraction -------------------------------------------------------

def test_extracts_plain_object():
    assert extract_first_json_object('{"a": "agree"}') == {"a": "agree"}


def test_extracts_object_wrapped_in_prose():
    text = 'Sure! Here are the topics:\n{"tax policy": "agree"}\nHope that helps.'
    assert extract_first_json_object(text) == {"tax policy": "agree"}


def test_skips_unbalanced_braces_before_object():
    text = 'weird {not json... but then {"a": "disagree"} follows'
    assert extract_first_json_object(text) == {"a": "disagree"}


def test_handles_braces_inside_strings():
    text = '{"curly {topic}": "agree"}'
    assert extract_first_json_object(text) == {"curly {topic}": "agree"}


def test_ignores_non_object_json():
    assert extract_first_json_object("[1, 2, 3]") is None
    assert extract_first_json_object("no json at all") is None


# --- topic generation ------------------------------------------------------

def test_single_proposal_parsed():
    gateway = make_gateway(topics_mock('{"dual citizenship": "agree"}'))
    proposals = generate_topics_for_post(post(), gateway, gen_settings())
    assert len(proposals) == 1
    proposal = proposals[0]
    assert proposal.topic == "dual citizenship"
    assert proposal.label is P
    assert proposal.word_count == 2
    assert proposal.length_flagged is False
    assert proposal.source_post_id == "post0"


def test_both_stances_parsed():
    response = '{"Role of government": "agree", "Corporate behaviour": "disagree"}'
    gateway = make_gateway(topics_mock(response))
    proposals = generate_topics_for_post(post(), gateway, gen_settings())
    assert [(p.topic, p.label) for p in proposals] == [
        ("Role of government", P),
        ("Corporate behaviour", C),
    ]


def test_single_word_topic_flagged_but_kept():
    gateway = make_gateway(topics_mock('{"Immigration": "agree"}'))
    report = GenerationReport()
    proposals = generate_topics_for_post(post(), gateway, gen_settings(), report)
    assert len(proposals) == 1
    assert proposals[0].word_count == 1
    assert proposals[0].length_flagged is True
    assert report.proposals_flagged_length == 1
    assert report.proposals_accepted == 1


def test_strict_length_rejects_flagged_topics():
    gateway = make_gateway(topics_mock('{"Immigration": "agree", "dual citizenship": "disagree"}'))
    report = GenerationReport()
    proposals = generate_topics_for_post(
        post(), gateway, gen_settings(strict_length=True), report
    )
    assert [p.topic for p in proposals] == ["dual citizenship"]
    assert report.proposals_flagged_length == 1
    assert report.proposals_accepted == 1


def test_five_word_topic_flagged():
    gateway = make_gateway(topics_mock('{"a very long topic indeed": "agree"}'))
    proposals = generate_topics_for_post(post(), gateway, gen_settings())
    assert proposals[0].word_count == 5
    assert proposals[0].length_flagged is True


def test_unknown_label_drops_that_proposal_only():
    response = '{"good topic here": "maybe", "other fine topic": "disagree"}'
    gateway = make_gateway(topics_mock(response))
    report = GenerationReport()
    proposals = generate_topics_for_post(post(), gateway, gen_settings(), report)
    assert [p.topic for p in proposals] == ["other fine topic"]
    assert report.proposals_rejected_malformed == 1
    assert report.proposals_accepted == 1


def test_non_string_value_rejected():
    gateway = make_gateway(topics_mock('{"numeric topic": 1, "kept topic": "agree"}'))
    report = GenerationReport()
    proposals = generate_topics_for_post(post(), gateway, gen_settings(), report)
    assert [p.topic for p in proposals] == ["kept topic"]
    assert report.proposals_rejected_malformed == 1


def test_normalized_duplicates_keep_first():
    response = '{"dual  citizenship": "agree", "dual citizenship ": "disagree"}'
    gateway = make_gateway(topics_mock(response))
    proposals = generate_topics_for_post(post(), gateway, gen_settings())
    assert len(proposals) == 1
    assert proposals[0].topic == "dual citizenship"
    assert proposals[0].label is P


def test_malformed_then_valid_on_retry():
    calls = {"n": 0}

    def respond(prompt):
        calls["n"] += 1
        return "not json" if calls["n"] == 1 else '{"fixed topic": "agree"}'

    gateway = make_gateway(ScriptedMockBackend([("List the most", respond)]))
    report = GenerationReport()
    proposals = generate_topics_for_post(post(), gateway, gen_settings(), report)
    assert [p.topic for p in proposals] == ["fixed topic"]
    assert report.llm_retries == 1
    assert calls["n"] == 2


def test_persistently_malformed_raises():
    gateway = make_gateway(topics_mock("never json"))
    report = GenerationReport()
    with pytest.raises(MalformedResponse):
        generate_topics_for_post(
            post(), gateway, gen_settings(parse_retries=2), report
        )
    assert report.llm_retries == 2
    # 1 original + 2 retries, the retries bypassing the cache
    assert gateway.backend_calls == 3


def test_proposal_rejects_neutral():
    with pytest.raises(ValueError):
        TopicProposal("some topic", N, "p", 2)


# --- dataset assembly ------------------------------------------------------

SEVEN_TOPICS = {
    "Role of government": "agree",
    "Corporate behaviour": "disagree",
    "Profit motive": "disagree",
    "Environmental impact": "agree",
    "Worker treatment": "agree",
    "Customer treatment": "disagree",
    "Social responsibility": "agree",
}


def test_one_post_yields_one_example_per_proposal():
    gateway = make_gateway(topics_mock(json.dumps(SEVEN_TOPICS)))
    dataset, report = build_mgt_dataset([post()], gateway, gen_settings())
    assert len(dataset) == 7
    assert all(ex.post == post().text for ex in dataset)
    assert all(ex.source == "generated" for ex in dataset)
    assert all(ex.label in (P, C) for ex in dataset)
    assert report.posts_processed == 1
    assert report.proposals_accepted == 7
    ids = [ex.id for ex in dataset]
    assert ids[0] == "post0::Role of government"


def test_failed_posts_are_counted_not_fatal():
    def respond(prompt):
        return '{"good topic": "agree"}' if "second post" in prompt else "garbage"

    gateway = make_gateway(ScriptedMockBackend([("List the most", respond)]))
    posts = [post("first post text", "a"), post("second post text", "b")]
    dataset, report = build_mgt_dataset(posts, gateway, gen_settings(parse_retries=0))
    assert report.posts_processed == 2
    assert report.posts_failed == 1
    assert [ex.id for ex in dataset] == ["b::good topic"]


def test_all_rejections_yield_empty_dataset():
    gateway = make_gateway(topics_mock('{"some topic": "maybe"}'))
    dataset, report = build_mgt_dataset([post()], gateway, gen_settings())
    assert len(dataset) == 0
    assert report.proposals_rejected_malformed == 1


def test_warm_cache_rerun_is_identical_with_zero_calls(tmp_path):
    gateway = make_gateway(
        topics_mock(json.dumps(SEVEN_TOPICS)), cache_dir=tmp_path
    )
    first, _ = build_mgt_dataset([post()], gateway, gen_settings())
    calls_after_first = gateway.backend_calls
    second, _ = build_mgt_dataset([post()], gateway, gen_settings())
    assert gateway.backend_calls == calls_after_first
    assert [(e.id, e.post, e.topic, e.label) for e in first] == [
        (e.id, e.post, e.topic, e.label) for e in second
    ]


# --- adaptation sets -------------------------------------------------------

def exemplar(topic="solar subsidies"):
    return StanceExample("An example post about the grid.", topic, "ex0", P)


def test_two_mode_k3_generates_six_balanced():
    gateway = make_gateway(compliant_generation_mock())
    result = generate_adaptation_set(
        "solar subsidies", exemplar(), 3, "two", gateway, gen_settings()
    )
    assert len(result.examples) == 6
    assert sum(1 for e in result.examples if e.label is P) == 3
    assert sum(1 for e in result.examples if e.label is C) == 3
    assert result.partial is False
    assert result.dropped == 0
    assert all(e.source == "generated" for e in result.examples)
    assert all(e.topic == "solar subsidies" for e in result.examples)


def test_k1_two_mode_generates_two():
    gateway = make_gateway(compliant_generation_mock())
    result = generate_adaptation_set(
        "solar subsidies", exemplar(), 1, "two", gateway, gen_settings()
    )
    assert len(result.examples) == 2
    assert result.intended == 2


def test_three_mode_targets_all_labels():
    gateway = make_gateway(compliant_generation_mock())
    result = generate_adaptation_set(
        "solar subsidies", exemplar(), 2, "three", gateway, gen_settings()
    )
    assert len(result.examples) == 6
    assert result.intended == 6
    assert sum(1 for e in result.examples if e.label is N) == 2


def test_empty_generation_dropped_and_flagged():
    def respond(prompt):
        _, stance = parse_generation_prompt(prompt)
        if stance == "disagree" and "[sample 1]" in prompt:
            return "   "
        return "A fine generated post."

    gateway = make_gateway(ScriptedMockBackend([("stance: ", respond)]))
    result = generate_adaptation_set(
        "solar subsidies", exemplar(), 3, "two", gateway, gen_settings()
    )
    assert len(result.examples) == 5
    assert result.dropped == 1
    assert result.partial is True
    pro = sum(1 for e in result.examples if e.label is P)
    con = sum(1 for e in result.examples if e.label is C)
    assert abs(pro - con) <= result.dropped


def test_distinct_slots_get_distinct_cache_keys(tmp_path):
    gateway = make_gateway(compliant_generation_mock(), cache_dir=tmp_path)
    generate_adaptation_set(
        "solar subsidies", exemplar(), 3, "two", gateway, gen_settings()
    )
    assert gateway.backend_calls == 6  # no slot collapsed into another's cache entry


def test_generation_is_deterministic():
    results = []
    for _ in range(2):
        gateway = make_gateway(compliant_generation_mock())
        result = generate_adaptation_set(
            "solar subsidies", exemplar(), 3, "two", gateway, gen_settings()
        )
        results.append([(e.id, e.post, e.label) for e in result.examples])
    assert results[0] == results[1]


def test_exemplar_topic_must_match():
    with pytest.raises(ValueError):
        generate_adaptation_set(
            "school uniforms", exemplar("solar subsidies"), 3, "two",
            make_gateway(compliant_generation_mock()), gen_settings(),
        )
    # normalization differences are fine
    gateway = make_gateway(compliant_generation_mock())
    result = generate_adaptation_set(
        "solar subsidies", exemplar(" solar  subsidies "), 1, "two",
        gateway, gen_settings(),
    )
    assert len(result.examples) == 2


def test_invalid_k_and_mode_rejected():
    gateway = make_gateway(compliant_generation_mock())
    with pytest.raises(ValueError):
        generate_adaptation_set("t x", exemplar("t x"), 0, "two", gateway)
    with pytest.raises(ValueError):
        generate_adaptation_set("t x", exemplar("t x"), 1, "binary", gateway)


def test_settings_validation():
    with pytest.raises(ValueError):
        GenSettings(parse_retries=-1)
    with pytest.raises(ValueError):
        GenSettings(salt_template="no index slot")
