import json

import pytest

from stancekit import (
    AdaptConfig,
    Dataset,
    StanceExample,
    StanceLabel,
    evaluate,
    run_baseline,
    run_dymoadapt,
)
from stancekit.classifier import LlmClassifierBackend, NativeLinearBackend, TrainHyper
from stancekit.gateway import ScriptedMockBackend

from helpers import (
    TOPIC_VOCAB,
    compliant_generation_mock,
    gen_settings,
    make_gateway,
    topic_private_corpus,
    vocab_generation_mock,
)

P, C, N = StanceLabel.PRO, StanceLabel.CON, StanceLabel.NEUTRAL


def three_topic_dataset():
    examples = []
    for i, topic in enumerate(("solar subsidies", "school uniforms", "city bike lanes")):
        examples.append(StanceExample(f"test post {2 * i}", topic, f"t{2 * i}", P))
        examples.append(StanceExample(f"test post {2 * i + 1}", topic, f"t{2 * i + 1}", C))
    return Dataset(tuple(examples), "mgt")


def adapt_config(**overrides):
    defaults = dict(k=3, label_mode="two", seed=5, generation=gen_settings())
    defaults.update(overrides)
    return AdaptConfig(**defaults)


def test_baseline_zero_model_predicts_pro_everywhere():
    preds = run_baseline(NativeLinearBackend(), three_topic_dataset())
    assert len(preds) == 6
    assert all(r.predicted is P for r in preds)


def test_baseline_is_read_only():
    backend = NativeLinearBackend()
    dataset = three_topic_dataset()
    before = backend.serialize()
    first = run_baseline(backend, dataset)
    gateway = make_gateway(compliant_generation_mock())
    run_dymoadapt(backend, dataset, gateway, adapt_config())
    again = run_baseline(backend, dataset)
    assert backend.serialize() == before
    assert first == again


def test_structural_contract_three_topics():
    backend = NativeLinearBackend()
    dataset = three_topic_dataset()
    state_before = backend.serialize()
    gateway = make_gateway(compliant_generation_mock())
    preds, logs = run_dymoadapt(backend, dataset, gateway, adapt_config())
    assert backend.serialize() == state_before
    assert len(logs) == 3
    assert [log.topic for log in logs] == [
        "city bike lanes", "school uniforms", "solar subsidies"  # sorted order
    ]
    for log in logs:
        assert log.generated_count == 6
        assert log.dropped_count == 0
        assert log.epochs_run == 10
        assert log.examples_predicted == 2
        assert log.post_loss <= log.pre_loss
    # predictions come back in original dataset order
    assert [r.example_id for r in preds] == [ex.id for ex in dataset]


def test_topic_order_permutation_changes_nothing():
    dataset = three_topic_dataset()
    outputs = []
    for order in (None, ["solar subsidies", "city bike lanes", "school uniforms"]):
        backend = NativeLinearBackend()
        gateway = make_gateway(compliant_generation_mock())
        preds, _ = run_dymoadapt(backend, dataset, gateway, adapt_config(), topic_order=order)
        outputs.append(preds)
    assert outputs[0] == outputs[1]


def test_bad_topic_order_rejected():
    backend = NativeLinearBackend()
    gateway = make_gateway(compliant_generation_mock())
    with pytest.raises(ValueError):
        run_dymoadapt(
            backend, three_topic_dataset(), gateway, adapt_config(),
            topic_order=["solar subsidies"],
        )


def test_three_mode_bounds_generated_count():
    backend = NativeLinearBackend()
    gateway = make_gateway(compliant_generation_mock())
    _, logs = run_dymoadapt(
        backend, three_topic_dataset(), gateway, adapt_config(label_mode="three")
    )
    for log in logs:
        assert log.generated_count <= 9


def test_empty_adaptation_set_falls_back_to_unadapted():
    backend = NativeLinearBackend()
    dataset = three_topic_dataset()
    gateway = make_gateway(ScriptedMockBackend([("stance: ", "   ")]))
    preds, logs = run_dymoadapt(backend, dataset, gateway, adapt_config())
    baseline = run_baseline(backend, dataset)
    assert preds == baseline
    for log in logs:
        assert log.generated_count == 0
        assert log.dropped_count == 6
        assert log.epochs_run == 0
        assert log.pre_loss is None and log.post_loss is None


def test_per_input_grouping_on_single_example_matches_per_topic():
    dataset = Dataset((StanceExample("solo post", "solar subsidies", "s0", P),), "mgt")
    results = []
    for grouping in ("per_topic", "per_input"):
        backend = NativeLinearBackend()
        gateway = make_gateway(compliant_generation_mock())
        preds, logs = run_dymoadapt(
            backend, dataset, gateway, adapt_config(grouping=grouping)
        )
        results.append((preds, len(logs)))
    assert results[0] == results[1]


def test_per_input_grouping_runs_one_episode_per_example():
    backend = NativeLinearBackend()
    dataset = three_topic_dataset()
    gateway = make_gateway(compliant_generation_mock())
    preds, logs = run_dymoadapt(
        backend, dataset, gateway, adapt_config(grouping="per_input")
    )
    assert len(logs) == len(dataset)
    assert [r.example_id for r in preds] == [ex.id for ex in dataset]


def test_run_twice_bitwise_identical():
    dataset = three_topic_dataset()
    runs = []
    for _ in range(2):
        backend = NativeLinearBackend()
        gateway = make_gateway(compliant_generation_mock())
        preds, logs = run_dymoadapt(backend, dataset, gateway, adapt_config())
        runs.append((preds.to_jsonl(), json.dumps([l.to_dict() for l in logs])))
    assert runs[0] == runs[1]


def test_finetune_hyper_overrides_apply():
    backend = NativeLinearBackend(TrainHyper(epochs=10))
    gateway = make_gateway(compliant_generation_mock())
    _, logs = run_dymoadapt(
        backend,
        three_topic_dataset(),
        gateway,
        adapt_config(finetune_hyper={"epochs": 2}),
    )
    assert all(log.epochs_run == 2 for log in logs)


def test_untrainable_backend_rejected():
    gateway = make_gateway(compliant_generation_mock())
    llm = LlmClassifierBackend(gateway, model_name="mock-model")
    with pytest.raises(ValueError):
        run_dymoadapt(llm, three_topic_dataset(), gateway, adapt_config())


def test_empty_test_set_rejected():
    backend = NativeLinearBackend()
    gateway = make_gateway(compliant_generation_mock())
    with pytest.raises(ValueError):
        run_dymoadapt(backend, Dataset((), "mgt"), gateway, adapt_config())


def test_prediction_jsonl_shape():
    backend = NativeLinearBackend()
    preds = run_baseline(backend, three_topic_dataset())
    lines = preds.to_jsonl().splitlines()
    assert len(lines) == 6
    row = json.loads(lines[0])
    assert set(row) == {"example_id", "gold", "predicted", "probabilities"}
    assert row["predicted"] == "pro"
    assert len(row["probabilities"]) == 3


def test_adaptation_beats_zero_weight_baseline():
    """Topic-private vocabulary is learnable only from the generated data."""
    dataset = topic_private_corpus(per_side=2)
    backend = NativeLinearBackend()
    baseline_report = evaluate(dataset, run_baseline(backend, dataset))
    gateway = make_gateway(vocab_generation_mock(TOPIC_VOCAB))
    preds, logs = run_dymoadapt(backend, dataset, gateway, adapt_config())
    adapted_report = evaluate(dataset, preds)
    assert adapted_report.macro_f1_pro_con >= baseline_report.macro_f1_pro_con
    assert adapted_report.macro_f1_pro_con > baseline_report.macro_f1_pro_con
    assert all(log.generated_count == 6 for log in logs)
