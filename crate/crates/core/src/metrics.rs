//! Precision, recall, and F1 over label sets; entropy-based cluster quality;
//! pseudo-perplexity of a masked-token model.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::Hash;
use std::io::Write;

use ndarray::Axis;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{forward, project_mlm, EncoderParams};
use crate::serializer::EncodedSequence;
use crate::tokenizer::{TokenId, TokenVocabulary, MASK};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub label: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Items whose gold set contains the label.
    pub support: usize,
    /// Items whose predicted set contains the label.
    pub predicted: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub items: usize,
    pub micro: Prf,
    #[serde(rename = "macro")]
    pub macro_avg: Prf,
    pub per_class: Vec<ClassScores>,
}

impl EvalReport {
    /// Per-class table as CSV. `names` maps label ids to display names.
    pub fn write_csv<W: Write>(&self, writer: W, names: Option<&[String]>) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["label", "name", "precision", "recall", "f1", "support", "predicted"])
            .map_err(csv_err)?;
        for c in &self.per_class {
            let name = names
                .and_then(|n| n.get(c.label))
                .cloned()
                .unwrap_or_else(|| c.label.to_string());
            w.write_record([
                c.label.to_string(),
                name,
                c.precision.to_string(),
                c.recall.to_string(),
                c.f1.to_string(),
                c.support.to_string(),
                c.predicted.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}

/// Scores aligned predicted and gold label sets.
///
/// Micro scores pool true/false positives over every (item, class) decision. Macro
/// scores average per-class values over classes that occur in some gold set.
pub fn evaluate(predictions: &[Vec<usize>], golds: &[Vec<usize>]) -> Result<EvalReport> {
    if predictions.len() != golds.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} gold items",
            predictions.len(),
            golds.len()
        )));
    }
    if golds.is_empty() {
        return Err(Error::EmptyInput("nothing to evaluate".into()));
    }
    // label -> (tp, fp, fn)
    let mut counts: BTreeMap<usize, (usize, usize, usize)> = Default::default();
    for (p, g) in predictions.iter().zip(golds) {
        let p: BTreeSet<usize> = p.iter().copied().collect();
        let g: BTreeSet<usize> = g.iter().copied().collect();
        for &l in p.union(&g) {
            let e = counts.entry(l).or_default();
            match (p.contains(&l), g.contains(&l)) {
                (true, true) => e.0 += 1,
                (true, false) => e.1 += 1,
                (false, true) => e.2 += 1,
                (false, false) => unreachable!(),
            }
        }
    }
    let (tp, fp, fn_) = counts
        .values()
        .fold((0, 0, 0), |a, c| (a.0 + c.0, a.1 + c.1, a.2 + c.2));
    let per_class: Vec<ClassScores> = counts
        .iter()
        .map(|(&label, &(tp, fp, fn_))| {
            let s = Prf::from_counts(tp, fp, fn_);
            ClassScores {
                label,
                precision: s.precision,
                recall: s.recall,
                f1: s.f1,
                support: tp + fn_,
                predicted: tp + fp,
            }
        })
        .collect();
    let supported: Vec<&ClassScores> = per_class.iter().filter(|c| c.support > 0).collect();
    let mean = |f: fn(&ClassScores) -> f64| {
        if supported.is_empty() {
            0.0
        } else {
            supported.iter().map(|c| f(c)).sum::<f64>() / supported.len() as f64
        }
    };
    let macro_avg = Prf {
        precision: mean(|c| c.precision),
        recall: mean(|c| c.recall),
        f1: mean(|c| c.f1),
    };
    Ok(EvalReport {
        items: golds.len(),
        micro: Prf::from_counts(tp, fp, fn_),
        macro_avg,
        per_class,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub homogeneity: f64,
    pub completeness: f64,
    pub v_measure: f64,
    pub num_clusters: usize,
    pub num_classes: usize,
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Conditional entropy given the variable that `given` selects from each joint key.
fn conditional_entropy(
    joint: &BTreeMap<(usize, usize), usize>,
    given_totals: &[usize],
    n: f64,
    given: fn(&(usize, usize)) -> usize,
) -> f64 {
    joint
        .iter()
        .map(|(key, &c)| {
            let c = c as f64;
            -(c / n) * (c / given_totals[given(key)] as f64).ln()
        })
        .sum()
}

fn dense_ids<T: Hash + Eq>(items: &[T]) -> (Vec<usize>, usize) {
    let mut map: HashMap<&T, usize> = HashMap::new();
    let ids = items
        .iter()
        .map(|x| {
            let next = map.len();
            *map.entry(x).or_insert(next)
        })
        .collect();
    (ids, map.len())
}

/// Homogeneity, completeness, and V-measure of a clustering against gold classes,
/// with natural-log entropies.
pub fn clustering_scores<P: Hash + Eq, G: Hash + Eq>(predicted: &[P], gold: &[G]) -> Result<ClusterReport> {
    if predicted.len() != gold.len() {
        return Err(Error::Shape(format!(
            "{} cluster assignments for {} gold labels",
            predicted.len(),
            gold.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::EmptyInput("nothing to score".into()));
    }
    let n = gold.len() as f64;
    let (k, num_clusters) = dense_ids(predicted);
    let (c, num_classes) = dense_ids(gold);
    let mut k_tot = vec![0usize; num_clusters];
    let mut c_tot = vec![0usize; num_classes];
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (&ki, &ci) in k.iter().zip(&c) {
        k_tot[ki] += 1;
        c_tot[ci] += 1;
        *joint.entry((ci, ki)).or_default() += 1;
    }
    let h_c = entropy(c_tot.iter().copied(), n);
    let h_k = entropy(k_tot.iter().copied(), n);
    let h_c_given_k = conditional_entropy(&joint, &k_tot, n, |&(_, k)| k);
    let h_k_given_c = conditional_entropy(&joint, &c_tot, n, |&(c, _)| c);
    let homogeneity = if h_c == 0.0 { 1.0 } else { 1.0 - h_c_given_k / h_c };
    let completeness = if h_k == 0.0 { 1.0 } else { 1.0 - h_k_given_c / h_k };
    let v_measure = if homogeneity + completeness == 0.0 {
        0.0
    } else {
        2.0 * homogeneity * completeness / (homogeneity + completeness)
    };
    Ok(ClusterReport {
        homogeneity,
        completeness,
        v_measure,
        num_clusters,
        num_classes,
    })
}

/// A model that returns the probability of a token at a masked position.
pub trait MaskedScorer: Sync {
    /// `ids[position]` holds `[MASK]`; returns `p(true_token | ids)`.
    fn masked_probability(&self, ids: &[TokenId], position: usize, true_token: TokenId) -> Result<f64>;
}

impl MaskedScorer for EncoderParams {
    fn masked_probability(&self, ids: &[TokenId], position: usize, true_token: TokenId) -> Result<f64> {
        let (out, _) = forward(self, ids, None)?;
        let logits = project_mlm(self, &out, &[position]);
        let row = logits.index_axis(Axis(0), 0);
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let denom: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let p = (row[true_token as usize] - max).exp() / denom;
        if !p.is_finite() {
            return Err(Error::NonFinite {
                context: "masked-token probability".into(),
            });
        }
        Ok(p)
    }
}

/// Pseudo-perplexity: every non-special token is masked in turn and scored by
/// `model`; returns `exp` of the mean negative log-probability.
pub fn perplexity<M: MaskedScorer + ?Sized>(model: &M, seq: &EncodedSequence) -> Result<f64> {
    let positions: Vec<usize> = seq
        .ids
        .iter()
        .enumerate()
        .filter(|(_, &id)| !TokenVocabulary::is_special(id))
        .map(|(i, _)| i)
        .collect();
    if positions.is_empty() {
        return Err(Error::EmptyInput("sequence has no scorable tokens".into()));
    }
    let log_probs = positions
        .par_iter()
        .map(|&i| {
            let mut ids = seq.ids.clone();
            ids[i] = MASK;
            model
                .masked_probability(&ids, i, seq.ids[i])
                .map(|p| p.ln())
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = log_probs.iter().sum::<f64>() / positions.len() as f64;
    Ok((-mean).exp())
}
