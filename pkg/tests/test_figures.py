from stancekit import Dataset, StanceExample, StanceLabel, dataset_stats, evaluate, top_topics
from stancekit.adapt import PredictionRecord, PredictionSet
from stancekit.figures import (
    save_label_distribution,
    save_per_class_f1,
    save_per_topic_f1,
    save_top_topics,
)

P, C = StanceLabel.PRO, StanceLabel.CON


def sample_dataset():
    examples = (
        StanceExample("p1", "solar subsidies", "0", P),
        StanceExample("p2", "solar subsidies", "1", C),
        StanceExample("p3", "school uniforms", "2", P),
        StanceExample("p4", "school uniforms", "3", C),
    )
    return Dataset(examples, "mgt")


def sample_report():
    dataset = sample_dataset()
    preds = PredictionSet(
        tuple(
            PredictionRecord(ex.id, ex.label, P, (0.6, 0.3, 0.1)) for ex in dataset
        )
    )
    return evaluate(dataset, preds, per_topic=True)


def assert_png(path):
    assert path.exists()
    assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_label_distribution_figure(tmp_path):
    stats = dataset_stats(sample_dataset())
    assert_png(save_label_distribution(stats, tmp_path / "labels.png"))


def test_top_topics_figure(tmp_path):
    pairs = top_topics(sample_dataset(), 5)
    assert_png(save_top_topics(pairs, tmp_path / "topics.png"))


def test_per_class_f1_figure(tmp_path):
    assert_png(save_per_class_f1(sample_report(), tmp_path / "f1.png"))


def test_per_topic_f1_figure_creates_parent_dirs(tmp_path):
    report = sample_report()
    target = tmp_path / "nested" / "dir" / "per_topic.png"
    assert_png(save_per_topic_f1(report.per_topic, target))
