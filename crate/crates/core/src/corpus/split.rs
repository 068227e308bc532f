use rand::seq::SliceRandom;

use super::Corpus;
use crate::util::{floor_count, rng};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub train: Corpus,
    pub valid: Corpus,
    pub test: Corpus,
}

/// Partitions `corpus` by table into train/valid/test.
///
/// Valid and test receive `floor(n * fraction)` tables; the remainder goes to train.
/// Tables keep their corpus order within each split.
pub fn split_corpus(corpus: &Corpus, fractions: (f64, f64, f64), seed: u64) -> Result<Splits> {
    let (f_train, f_valid, f_test) = fractions;
    if [f_train, f_valid, f_test].iter().any(|f| !(*f > 0.0)) {
        return Err(Error::Config(format!(
            "split fractions must be positive, got {fractions:?}"
        )));
    }
    if ((f_train + f_valid + f_test) - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions must sum to 1, got {fractions:?}"
        )));
    }
    let n = corpus.len();
    if n == 0 {
        return Err(Error::EmptyInput("cannot split an empty corpus".into()));
    }

    let n_valid = floor_count(n, f_valid);
    let n_test = floor_count(n, f_test);
    let n_train = n - n_valid - n_test;
    if n >= 3 && (n_train == 0 || n_valid == 0 || n_test == 0) {
        return Err(Error::Config(format!(
            "split of {n} tables with fractions {fractions:?} leaves an empty partition"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng(seed));
    let part = |range: std::ops::Range<usize>| {
        let mut idx = order[range].to_vec();
        idx.sort_unstable();
        corpus.subset(&idx)
    };
    Ok(Splits {
        train: part(0..n_train),
        valid: part(n_train..n_train + n_valid),
        test: part(n_train + n_valid..n),
    })
}
