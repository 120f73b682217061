//! JSON problem specs and their validation.

use std::collections::BTreeMap;
use std::path::Path;

use hidden_gibbs::{
    Alphabet, AmalgamationMap, LocallyConstantPotential, TableEntry, VariationBoundedPotential,
};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub alphabet: Vec<String>,
    pub target_alphabet: Option<Vec<String>>,
    /// Source symbol -> target symbol.
    pub amalgamation: Option<BTreeMap<String, String>>,
    pub potential: PotentialSpec,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    /// Explicit words to tabulate; otherwise every word of `word_length`.
    pub words: Option<Vec<String>>,
    pub word_length: Option<usize>,
    pub separator: Option<String>,
    #[serde(default)]
    pub report: ReportSpec,
    /// Output directory used when `--out` is absent.
    pub out_dir: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// Explicit `(r+1)`-word table.
    Table { r: usize, entries: BTreeMap<String, f64> },
    Constant { r: usize, value: f64 },
    /// `psi(a) = ln w(a_0)`.
    FirstSymbolWeighted { weights: Vec<f64> },
    /// `psi(a) = ln Q(a_0, a_1)`.
    WeightMatrix { weights: Vec<Vec<f64>> },
    /// `psi(a) = sum_k ratio^k values(a_k)`.
    GeometricTail { values: Vec<f64>, ratio: f64 },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub r: Option<usize>,
    pub n: Option<usize>,
    pub tol: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSpec {
    pub n_max: Option<usize>,
    pub lookahead: Option<usize>,
    pub gibbs_n_max: Option<usize>,
}

/// Either a locally constant potential or a general one.
#[derive(Clone, Debug)]
pub enum Potential {
    Local(LocallyConstantPotential),
    General(VariationBoundedPotential),
}

/// A validated spec.
#[derive(Clone, Debug)]
pub struct Problem {
    pub map: Option<AmalgamationMap>,
    pub potential: Potential,
    /// Weight matrix when the potential is given as one.
    pub weights: Option<Vec<Vec<f64>>>,
    pub r: Option<usize>,
    pub n: Option<usize>,
    pub tol: Option<f64>,
    pub delta: f64,
    pub words: Option<Vec<String>>,
    pub word_length: Option<usize>,
    pub separator: String,
    pub n_max: usize,
    pub lookahead: usize,
    pub gibbs_n_max: usize,
    pub out_dir: Option<String>,
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

pub fn load(path: &Path) -> Result<Problem, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let spec: ProblemSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    validate(spec)
}

pub fn validate(spec: ProblemSpec) -> Result<Problem, CliError> {
    let alphabet = Alphabet::new(spec.alphabet.iter().cloned()).map_err(invalid)?;
    let separator = match spec.separator {
        Some(s) => s,
        None if alphabet.single_char_labels() => String::new(),
        None => ",".to_string(),
    };
    let map = match (&spec.target_alphabet, &spec.amalgamation) {
        (Some(target), Some(pairs)) => {
            let target = Alphabet::new(target.iter().cloned()).map_err(invalid)?;
            let pairs: Vec<(&str, &str)> = pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
            Some(AmalgamationMap::from_labels(&alphabet, &target, &pairs).map_err(invalid)?)
        }
        (None, None) => None,
        _ => {
            return Err(CliError::Validation(
                "target_alphabet and amalgamation must be given together".into(),
            ))
        }
    };
    let mut weights = None;
    let potential = match spec.potential {
        PotentialSpec::Table { r, entries } => {
            let entries: Vec<TableEntry> = entries
                .into_iter()
                .map(|(word, value)| TableEntry { word, value })
                .collect();
            Potential::Local(
                LocallyConstantPotential::from_entries(&alphabet, r, &entries, &separator)
                    .map_err(invalid)?,
            )
        }
        PotentialSpec::Constant { r, value } => Potential::Local(
            LocallyConstantPotential::constant(&alphabet, r, value).map_err(invalid)?,
        ),
        PotentialSpec::FirstSymbolWeighted { weights } => Potential::Local(
            LocallyConstantPotential::first_symbol_weighted(&alphabet, &weights).map_err(invalid)?,
        ),
        PotentialSpec::WeightMatrix { weights: q } => {
            let pot = LocallyConstantPotential::from_weight_matrix(&alphabet, &q).map_err(invalid)?;
            weights = Some(q);
            Potential::Local(pot)
        }
        PotentialSpec::GeometricTail { values, ratio } => Potential::General(
            VariationBoundedPotential::geometric_tail(&alphabet, &values, ratio).map_err(invalid)?,
        ),
    };
    if let Some(tol) = spec.schedule.tol {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(CliError::Validation(format!("schedule.tol must be positive, got {tol}")));
        }
    }
    let delta = spec.schedule.delta.unwrap_or(1.0);
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(CliError::Validation(format!("schedule.delta must be positive, got {delta}")));
    }
    if spec.word_length == Some(0) {
        return Err(CliError::Validation("word_length must be at least 1".into()));
    }
    Ok(Problem {
        map,
        potential,
        weights,
        r: spec.schedule.r,
        n: spec.schedule.n,
        tol: spec.schedule.tol,
        delta,
        words: spec.words,
        word_length: spec.word_length,
        separator,
        n_max: spec.report.n_max.unwrap_or(8),
        lookahead: spec.report.lookahead.unwrap_or(hidden_gibbs::pushforward::DEFAULT_LOOKAHEAD),
        gibbs_n_max: spec.report.gibbs_n_max.unwrap_or(8),
        out_dir: spec.out_dir,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Problem, CliError> {
        validate(serde_json::from_str(text).map_err(|e| CliError::Validation(e.to_string()))?)
    }

    #[test]
    fn table_spec() {
        let p = parse(
            r#"{"alphabet": ["a", "b"], "potential": {"kind": "table", "r": 1,
                "entries": {"aa": 0.0, "ab": -1.0, "ba": 0.5, "bb": 0.0}}}"#,
        )
        .unwrap();
        match p.potential {
            Potential::Local(pot) => assert_eq!(pot.table(), &[0.0, -1.0, 0.5, 0.0]),
            Potential::General(_) => panic!("expected a table"),
        }
        assert_eq!(p.separator, "");
    }

    #[test]
    fn missing_preimage_is_named() {
        let err = parse(
            r#"{"alphabet": ["0", "1", "2", "3"], "target_alphabet": ["x", "y", "z"],
                "amalgamation": {"0": "x", "1": "x", "2": "y", "3": "y"},
                "potential": {"kind": "constant", "r": 1, "value": 0.0}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains('z'), "{err}");
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(parse(r#"{"alphabet": ["0", "1"], "potental": {}}"#).is_err());
    }

    #[test]
    fn map_needs_both_halves() {
        let err = parse(
            r#"{"alphabet": ["0", "1", "2"], "target_alphabet": ["x", "y"],
                "potential": {"kind": "constant", "r": 1, "value": 0.0}}"#,
        )
        .unwrap_err();
        assert!(matches!(err, CliError::Validation(_)));
    }
}
