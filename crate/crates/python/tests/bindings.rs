use pyo3::ffi::c_str;
use pyo3::prelude::*;

#[test]
fn module_trains_predicts_and_scores_from_python() {
    use colannot_py::colannot as module;
    pyo3::append_to_inittab!(module);
    Python::initialize();
    Python::attach(|py| {
        py.run(
            c_str!(
                r#"
import colannot
corpus = colannot.Corpus.synthetic(30, seed=2)
cfg = colannot.Config("epochs = 1\nnum_layers = 1\nnum_heads = 2\nd_model = 8\nd_ff = 16\nmax_seq_len = 32\nmax_tokens_per_column = 5\n")
result = colannot.train(corpus, cfg)
assert len(result.history) == 2
records = result.model.predict(corpus, task="relation")
assert len(records) == corpus.num_relation_annotations()
assert all(len(r["probs"]) == len(result.model.relation_labels()) for r in records)
s = colannot.score([[1]], [[1]])
assert s["micro"]["f1"] == 1.0
try:
    colannot.Corpus.from_jsonl("not json")
    raise SystemExit("bad corpus accepted")
except RuntimeError:
    pass
"#
            ),
            None,
            None,
        )
        .inspect_err(|e| {
            e.print(py);
        })
        .unwrap();
    });
}
