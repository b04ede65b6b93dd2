//! JSON model files.
//!
//! ```json
//! {
//!   "dimension": 2,
//!   "offspring": [
//!     [ {"counts": [0, 0], "p": 0.5}, {"counts": [1, 1], "p": 0.5} ],
//!     [ {"counts": [0, 0], "p": 0.5}, {"counts": [2, 0], "p": 0.5} ]
//!   ],
//!   "immigration": [ {"counts": [1, 0], "p": 1.0} ]
//! }
//! ```
//!
//! Validation (nonnegative masses, sums within 1e-12, index dimensions)
//! is the law constructors' job; this module only maps the document.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use progeny_core::{ImmigrationLaw, OffspringLaw};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MassEntry {
    pub counts: Vec<u32>,
    pub p: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub dimension: usize,
    pub offspring: Vec<Vec<MassEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub immigration: Option<Vec<MassEntry>>,
}

pub struct LoadedModel {
    pub law: OffspringLaw,
    pub immigration: Option<ImmigrationLaw>,
}

fn entries_to_support(entries: &[MassEntry], dim: usize) -> Result<Vec<(Vec<u32>, f64)>> {
    entries
        .iter()
        .map(|e| {
            if e.counts.len() != dim {
                bail!("count vector {:?} does not match dimension {dim}", e.counts);
            }
            Ok((e.counts.clone(), e.p))
        })
        .collect()
}

pub fn parse_model(doc: &ModelFile) -> Result<LoadedModel> {
    if doc.offspring.len() != doc.dimension {
        bail!(
            "offspring table has {} types, dimension says {}",
            doc.offspring.len(),
            doc.dimension
        );
    }
    let per_type = doc
        .offspring
        .iter()
        .map(|entries| entries_to_support(entries, doc.dimension))
        .collect::<Result<Vec<_>>>()?;
    let law = OffspringLaw::new(per_type).context("offspring law rejected")?;
    let immigration = match &doc.immigration {
        Some(entries) => Some(
            ImmigrationLaw::new(doc.dimension, entries_to_support(entries, doc.dimension)?)
                .context("immigration law rejected")?,
        ),
        None => None,
    };
    Ok(LoadedModel { law, immigration })
}

pub fn load_model(path: &Path) -> Result<LoadedModel> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read model file {}", path.display()))?;
    let doc: ModelFile = serde_json::from_str(&text)
        .with_context(|| format!("cannot parse model file {}", path.display()))?;
    parse_model(&doc)
}

/// The document form of a law, for `oracle`/`verify` outputs that echo
/// their inputs.
pub fn model_to_file(law: &OffspringLaw, imm: Option<&ImmigrationLaw>) -> ModelFile {
    let offspring = (0..law.dim())
        .map(|k| {
            law.support(k)
                .map(|(counts, p)| MassEntry {
                    counts: counts.clone(),
                    p,
                })
                .collect()
        })
        .collect();
    let immigration = imm.map(|ilaw| {
        ilaw.support()
            .map(|(counts, p)| MassEntry {
                counts: counts.clone(),
                p,
            })
            .collect()
    });
    ModelFile {
        dimension: law.dim(),
        offspring,
        immigration,
    }
}
