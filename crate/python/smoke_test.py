"""End-to-end smoke test of the colannot Python bindings.

Build and install first:  pip install --no-build-isolation ./crates/python
"""

import tempfile
from pathlib import Path

import colannot

TABLE = '{"id":"t1","columns":[["Happy Feet","Cars"],["George Miller","John Lasseter"]]}'


def main():
    one = colannot.Corpus.from_jsonl(TABLE)
    assert one.table_ids() == ["t1"]
    rendered = colannot.Config().render_table(one, "t1")
    assert rendered == "[CLS] happy feet cars [CLS] george miller john lasseter [SEP]", rendered

    corpus = colannot.Corpus.synthetic(60, seed=5)
    print(corpus)
    config = colannot.Config(
        "epochs = 2\nnum_layers = 1\nnum_heads = 2\nd_model = 16\nd_ff = 32\n"
        "max_seq_len = 32\nmax_tokens_per_column = 5\nseed = 5\n"
    )
    assert config.to_dict()["epochs"] == 2

    result = colannot.train(corpus, config)
    assert len(result.history) == 4, result.history
    assert set(result.test_reports) <= {"type", "relation"}
    model = result.model

    records = model.predict(corpus, task="type")
    assert len(records) == corpus.num_type_annotations()
    report = model.evaluate(corpus, task="relation")
    assert 0.0 <= report["micro"]["f1"] <= 1.0

    first = corpus.table_ids()[0]
    embeddings = model.embed(corpus, first)
    assert len(embeddings) == len(corpus.columns(first))
    assert all(len(e) == 16 for e in embeddings)

    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "model.ckpt"
        model.save(str(path))
        again = colannot.Model.load(str(path)).predict(corpus, task="type")
        assert again == records

    scores = colannot.score([[0], [1], [1]], [[0], [1], [0]])
    assert abs(scores["micro"]["f1"] - 2 / 3) < 1e-12

    try:
        colannot.Config("num_heads = 3\nd_model = 16\n")
    except ValueError:
        pass
    else:
        raise AssertionError("invalid config accepted")

    print("smoke test ok")


if __name__ == "__main__":
    main()
