use std::collections::BTreeSet;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SequenceError {
    #[error("duplicate subsystem `{0}`")]
    Duplicate(String),
}

/// Orders subsystems so that the one with the fewest free parameters is
/// fixed first. Ties are broken by name.
pub fn design_sequence(subsystems: &[(String, u32)]) -> Result<Vec<String>, SequenceError> {
    let mut seen = BTreeSet::new();
    for (name, _) in subsystems {
        if !seen.insert(name.as_str()) {
            return Err(SequenceError::Duplicate(name.clone()));
        }
    }
    let mut sorted: Vec<&(String, u32)> = subsystems.iter().collect();
    sorted.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    Ok(sorted.into_iter().map(|(n, _)| n.clone()).collect())
}
