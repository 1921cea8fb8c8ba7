use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Rng};

/// Pairwise-disjoint train / validation / test class sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSplit {
    pub train: BTreeSet<usize>,
    pub val: BTreeSet<usize>,
    pub test: BTreeSet<usize>,
}

impl ClassSplit {
    pub fn new(train: BTreeSet<usize>, val: BTreeSet<usize>, test: BTreeSet<usize>) -> Result<Self> {
        if !train.is_disjoint(&val) || !train.is_disjoint(&test) || !val.is_disjoint(&test) {
            return Err(Error::Invalid("class split sets overlap".into()));
        }
        Ok(ClassSplit { train, val, test })
    }
}

/// Samples disjoint class sets of the requested sizes without replacement.
pub fn split_classes(
    classes: &BTreeSet<usize>,
    counts: (usize, usize, usize),
    rng: &mut Rng,
) -> Result<ClassSplit> {
    let (n_train, n_val, n_test) = counts;
    if n_train + n_val + n_test > classes.len() {
        return Err(Error::Invalid(format!(
            "split {n_train}/{n_val}/{n_test} needs more than the {} available classes",
            classes.len()
        )));
    }
    let mut pool: Vec<usize> = classes.iter().copied().collect();
    pool.shuffle(rng);
    let mut it = pool.into_iter();
    let train = it.by_ref().take(n_train).collect();
    let val = it.by_ref().take(n_val).collect();
    let test = it.take(n_test).collect();
    ClassSplit::new(train, val, test)
}
