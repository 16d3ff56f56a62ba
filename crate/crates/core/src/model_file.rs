//! JSON description of a model:
//!
//! ```json
//! {"populations": [
//!   {"kind": "bernoulli", "p": 0.4, "n": 20},
//!   {"kind": "lattice", "offset": 0, "span": 0.5, "pmf": {"0": 0.2, "3": 0.8}, "n": 30}
//! ]}
//! ```
//!
//! Sample sizes may be omitted when the sizes come from elsewhere (an
//! experiment's sample-size rule). A Bernoulli `p` is `P(X = 0)` unless the
//! population, or the caller, selects the success-probability reading.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{BernoulliConvention, LatticeLaw, MeanSumModel, Population};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub populations: Vec<PopulationSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PopulationSpec {
    Bernoulli {
        p: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<u64>,
        /// `true` reads `p` as `P(X = 1)`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        success_prob: Option<bool>,
    },
    Lattice {
        #[serde(default)]
        offset: f64,
        span: f64,
        pmf: BTreeMap<String, f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<u64>,
    },
}

impl PopulationSpec {
    pub fn n(&self) -> Option<u64> {
        match self {
            PopulationSpec::Bernoulli { n, .. } | PopulationSpec::Lattice { n, .. } => *n,
        }
    }

    pub fn law(&self, default: BernoulliConvention) -> Result<LatticeLaw> {
        match self {
            PopulationSpec::Bernoulli { p, success_prob, .. } => {
                let convention = match success_prob {
                    Some(true) => BernoulliConvention::SuccessProb,
                    Some(false) => BernoulliConvention::Literal,
                    None => default,
                };
                LatticeLaw::bernoulli_with(*p, convention)
            }
            PopulationSpec::Lattice { offset, span, pmf, .. } => {
                let atoms = pmf
                    .iter()
                    .map(|(k, &v)| {
                        k.trim()
                            .parse::<i64>()
                            .map(|i| (i, v))
                            .map_err(|_| Error::invalid(format!("pmf key {k:?} is not an integer index")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                LatticeLaw::new(*offset, *span, atoms)
            }
        }
    }
}

impl ModelSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid(format!("malformed model: {e}")))
    }

    pub fn laws(&self, default: BernoulliConvention) -> Result<Vec<LatticeLaw>> {
        self.populations.iter().map(|p| p.law(default)).collect()
    }

    /// Every population must carry its sample size.
    pub fn to_model(&self, default: BernoulliConvention) -> Result<MeanSumModel> {
        let populations = self
            .populations
            .iter()
            .enumerate()
            .map(|(j, p)| {
                let n = p.n().ok_or_else(|| Error::invalid(format!("population {j} has no sample size \"n\"")))?;
                Ok(Population { law: p.law(default)?, n })
            })
            .collect::<Result<Vec<_>>>()?;
        MeanSumModel::new(populations)
    }

    /// Template laws with the given sizes.
    pub fn with_sizes(&self, sizes: &[u64], default: BernoulliConvention) -> Result<MeanSumModel> {
        if sizes.len() != self.populations.len() {
            return Err(Error::PopulationCount { expected: self.populations.len(), found: sizes.len() });
        }
        MeanSumModel::from_laws(self.laws(default)?.into_iter().zip(sizes.iter().copied()))
    }
}
