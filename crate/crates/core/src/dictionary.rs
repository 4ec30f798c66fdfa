//! Per-node finite dictionary of RBF centers.
//!
//! Each entry holds a center (a past raw observation), its accumulated
//! innovation weight, and the two quantities that drive fixed-budget pruning:
//! a significance estimate and a discounted age accumulator.
//!
//! Weights already include the step size, so a prediction is the plain sum
//! `sum_j weight_j * k(center_j, x)`.
//!
//! Fixed-budget bookkeeping follows three recursions, all with forgetting
//! factor `zeta`:
//!
//! ```text
//! add   (new center c, error e):   E_j <- zeta*E_j + |e| k(c_j, c)              for existing j
//!                                  E_new = |e|, age_new = 1
//! merge (into j*, increment eta*e): E_j <- zeta*E_j + |w_j| k(c_j, c_j*)        for j != j*
//!                                  age_j <- zeta*age_j                           for j != j*
//!                                  E_j* <- (|w*+eta*e|/|w*|) zeta*E_j* + |w*+eta*e|
//!                                  age_j* <- zeta*age_j* + 1
//! prune (entry L removed):         E_j <- E_j - |w_j| age_L k(c_j, c_L)
//!                                  age_j <- zeta*age_j + 1
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kernel::{squared_distance, KernelParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DictionaryEntry {
    pub center: Vec<f64>,
    pub weight: f64,
    pub significance: f64,
    pub age_accum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dictionary {
    dim: usize,
    budget: Option<usize>,
    entries: Vec<DictionaryEntry>,
}

impl Dictionary {
    /// An empty dictionary over `dim`-dimensional inputs.
    pub fn new(dim: usize, budget: Option<usize>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "input dimension must be >= 1"));
        }
        if budget == Some(0) {
            return Err(Error::invalid("budget", "must be >= 1 when present"));
        }
        Ok(Self {
            dim,
            budget,
            entries: Vec::new(),
        })
    }

    /// The initial dictionary `{(x0, eta * d0)}`: the first observation, with
    /// its desired value taken as the first innovation.
    pub fn seeded(x0: &[f64], eta: f64, d0: f64, budget: Option<usize>) -> Result<Self> {
        let mut dict = Self::new(x0.len(), budget)?;
        dict.add_entry(x0, eta, d0)?;
        Ok(dict)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn budget(&self) -> Option<usize> {
        self.budget
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[DictionaryEntry] {
        &self.entries
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.weight)
    }

    fn ensure_nonempty(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::State("dictionary is empty".into()));
        }
        Ok(())
    }

    fn ensure_index(&self, j: usize) -> Result<()> {
        if j >= self.entries.len() {
            return Err(Error::State(format!(
                "entry index {j} out of range for dictionary of size {}",
                self.entries.len()
            )));
        }
        Ok(())
    }

    /// `sum_j weight_j * k(center_j, x)`.
    pub fn predict(&self, x: &[f64], kernel: &KernelParams) -> Result<f64> {
        self.ensure_nonempty()?;
        check_dim(self.dim, x.len())?;
        Ok(self
            .entries
            .iter()
            .map(|e| e.weight * kernel.eval(&e.center, x))
            .sum())
    }

    /// Index and Euclidean distance of the center closest to `x`. Ties go to
    /// the lowest index.
    pub fn nearest_entry(&self, x: &[f64]) -> Result<(usize, f64)> {
        self.ensure_nonempty()?;
        check_dim(self.dim, x.len())?;
        let mut best = (0, f64::INFINITY);
        for (j, e) in self.entries.iter().enumerate() {
            let d2 = squared_distance(&e.center, x);
            if d2 < best.1 {
                best = (j, d2);
            }
        }
        Ok((best.0, best.1.sqrt()))
    }

    /// Folds `eta * diffused_error` into the weight of entry `j_star`.
    pub fn merge_update(&mut self, j_star: usize, eta: f64, diffused_error: f64) -> Result<()> {
        self.ensure_index(j_star)?;
        self.entries[j_star].weight += eta * diffused_error;
        Ok(())
    }

    /// Appends `x` as a new center with weight `eta * diffused_error`. The new
    /// entry starts with significance `|diffused_error|` and age 1.
    pub fn add_entry(&mut self, x: &[f64], eta: f64, diffused_error: f64) -> Result<()> {
        check_dim(self.dim, x.len())?;
        self.entries.push(DictionaryEntry {
            center: x.to_vec(),
            weight: eta * diffused_error,
            significance: diffused_error.abs(),
            age_accum: 1.0,
        });
        Ok(())
    }

    /// Significance update for every existing entry when `new_center` is about
    /// to be added. Call before [`Dictionary::add_entry`], which initializes
    /// the new entry itself.
    pub fn significance_on_add(
        &mut self,
        abs_error: f64,
        zeta: f64,
        new_center: &[f64],
        kernel: &KernelParams,
    ) -> Result<()> {
        check_dim(self.dim, new_center.len())?;
        for e in &mut self.entries {
            e.significance = zeta * e.significance + abs_error * kernel.eval(&e.center, new_center);
        }
        Ok(())
    }

    /// Significance and age update for a merge into `j_star`. Must run before
    /// [`Dictionary::merge_update`]: it reads the pre-merge weight.
    ///
    /// A zero pre-merge weight makes the rescaling ratio singular; the ratio is
    /// then taken as 1.
    pub fn significance_on_merge(
        &mut self,
        j_star: usize,
        eta: f64,
        error: f64,
        zeta: f64,
        kernel: &KernelParams,
    ) -> Result<()> {
        self.ensure_index(j_star)?;
        let target = self.entries[j_star].center.clone();
        let w_old = self.entries[j_star].weight;
        let w_new = (w_old + eta * error).abs();
        for (j, e) in self.entries.iter_mut().enumerate() {
            if j == j_star {
                let ratio = if w_old == 0.0 {
                    1.0
                } else {
                    w_new / w_old.abs()
                };
                e.significance = ratio * zeta * e.significance + w_new;
                e.age_accum = zeta * e.age_accum + 1.0;
            } else {
                e.significance =
                    zeta * e.significance + e.weight.abs() * kernel.eval(&e.center, &target);
                e.age_accum *= zeta;
            }
        }
        Ok(())
    }

    /// Correction applied to the survivors after `removed` has been taken out.
    pub fn significance_on_prune(
        &mut self,
        removed: &DictionaryEntry,
        zeta: f64,
        kernel: &KernelParams,
    ) -> Result<()> {
        check_dim(self.dim, removed.center.len())?;
        for e in &mut self.entries {
            e.significance -=
                e.weight.abs() * removed.age_accum * kernel.eval(&e.center, &removed.center);
            e.age_accum = zeta * e.age_accum + 1.0;
        }
        Ok(())
    }

    /// Index of the least significant entry (lowest index on ties).
    pub fn min_significance_index(&self) -> Result<usize> {
        self.ensure_nonempty()?;
        let mut best = 0;
        for (j, e) in self.entries.iter().enumerate().skip(1) {
            if e.significance < self.entries[best].significance {
                best = j;
            }
        }
        Ok(best)
    }

    /// Removes the least significant entry when the dictionary is over budget,
    /// then applies the prune correction to the survivors. Returns the removed
    /// entry and the index it held. At or below budget (or without a budget)
    /// this is a no-op returning `None`.
    pub fn prune_min_significance(
        &mut self,
        zeta: f64,
        kernel: &KernelParams,
    ) -> Result<Option<(usize, DictionaryEntry)>> {
        let Some(budget) = self.budget else {
            return Ok(None);
        };
        if self.entries.len() <= budget || self.entries.len() < 2 {
            return Ok(None);
        }
        let victim = self.min_significance_index()?;
        let removed = self.entries.remove(victim);
        self.significance_on_prune(&removed, zeta, kernel)?;
        Ok(Some((victim, removed)))
    }

    #[cfg(test)]
    pub(crate) fn from_entries(
        dim: usize,
        budget: Option<usize>,
        entries: Vec<DictionaryEntry>,
    ) -> Self {
        Self {
            dim,
            budget,
            entries,
        }
    }
}
