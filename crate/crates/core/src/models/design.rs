use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::tables::{ColumnKind, ObservedTable, PredictorValue};

/// A term of a linear design.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    Intercept,
    Numeric(String),
    /// Natural log of a strictly positive numeric predictor.
    LogNumeric(String),
    /// One indicator column per level of a categorical predictor.
    GroupIntercept(String),
    /// One `indicator(level) * numeric` column per level.
    GroupSlope {
        group: String,
        numeric: String,
    },
}

/// Terms plus the level order captured for every grouping predictor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub terms: Vec<Term>,
    #[serde(default)]
    pub levels: BTreeMap<String, Vec<String>>,
}

impl DesignSpec {
    /// Builds a design and captures group levels from `data`.
    pub fn new(terms: Vec<Term>, data: &ObservedTable) -> Result<Self, ModelError> {
        if terms.is_empty() {
            return Err(ModelError::Design("a design needs at least one term".into()));
        }
        let mut levels = BTreeMap::new();
        for term in &terms {
            if let Some(group) = term.group() {
                let col =
                    data.column(group).ok_or_else(|| ModelError::Design(format!("unknown predictor `{group}`")))?;
                match &col.kind {
                    ColumnKind::Categorical { levels: l } => {
                        levels.insert(group.to_string(), l.clone());
                    }
                    ColumnKind::Numeric => {
                        return Err(ModelError::Design(format!("group predictor `{group}` must be categorical")))
                    }
                }
            }
        }
        let spec = DesignSpec { terms, levels };
        spec.check_table(data)?;
        Ok(spec)
    }

    /// Checks that every referenced predictor exists with the required kind.
    pub fn check_table(&self, data: &ObservedTable) -> Result<(), ModelError> {
        for term in &self.terms {
            if let Some(num) = term.numeric() {
                match data.column(num) {
                    Some(c) if c.kind.is_numeric() => {}
                    Some(_) => return Err(ModelError::Design(format!("predictor `{num}` must be numeric"))),
                    None => return Err(ModelError::Design(format!("unknown predictor `{num}`"))),
                }
            }
            if let Some(group) = term.group() {
                match data.column(group) {
                    Some(c) if !c.kind.is_numeric() => {}
                    Some(_) => {
                        return Err(ModelError::Design(format!("group predictor `{group}` must be categorical")))
                    }
                    None => return Err(ModelError::Design(format!("unknown predictor `{group}`"))),
                }
                if !self.levels.contains_key(group) {
                    return Err(ModelError::Design(format!("no level map for group predictor `{group}`")));
                }
            }
        }
        Ok(())
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for term in &self.terms {
            match term {
                Term::Intercept => names.push("(Intercept)".to_string()),
                Term::Numeric(x) => names.push(x.clone()),
                Term::LogNumeric(x) => names.push(format!("log({x})")),
                Term::GroupIntercept(g) => names.extend(self.group_levels(g).iter().map(|l| format!("{g}[{l}]"))),
                Term::GroupSlope { group, numeric } => {
                    names.extend(self.group_levels(group).iter().map(|l| format!("{group}[{l}]:{numeric}")))
                }
            }
        }
        names
    }

    pub fn n_columns(&self) -> usize {
        self.column_names().len()
    }

    fn group_levels(&self, group: &str) -> &[String] {
        self.levels.get(group).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Design matrix for `data`, one row per table row.
    pub fn design_matrix(&self, data: &ObservedTable) -> Result<Vec<Vec<f64>>, ModelError> {
        self.check_table(data)?;
        let mut matrix = Vec::with_capacity(data.len());
        for i in 0..data.len() {
            let mut row = Vec::with_capacity(self.n_columns());
            for term in &self.terms {
                match term {
                    Term::Intercept => row.push(1.0),
                    Term::Numeric(x) => row.push(numeric_at(data, i, x)?),
                    Term::LogNumeric(x) => {
                        let v = numeric_at(data, i, x)?;
                        if v <= 0.0 {
                            return Err(ModelError::Design(format!(
                                "log({x}) needs positive values, row {} has {v}",
                                i + 1
                            )));
                        }
                        row.push(v.ln());
                    }
                    Term::GroupIntercept(g) => {
                        let k = self.level_index(data, i, g)?;
                        row.extend((0..self.group_levels(g).len()).map(|j| if j == k { 1.0 } else { 0.0 }));
                    }
                    Term::GroupSlope { group, numeric } => {
                        let k = self.level_index(data, i, group)?;
                        let v = numeric_at(data, i, numeric)?;
                        row.extend((0..self.group_levels(group).len()).map(|j| if j == k { v } else { 0.0 }));
                    }
                }
            }
            matrix.push(row);
        }
        Ok(matrix)
    }

    fn level_index(&self, data: &ObservedTable, row: usize, group: &str) -> Result<usize, ModelError> {
        let level = match data.predictor(row, group) {
            Some(PredictorValue::Categorical(l)) => l,
            _ => return Err(ModelError::Design(format!("group predictor `{group}` must be categorical"))),
        };
        self.group_levels(group)
            .iter()
            .position(|l| l == level)
            .ok_or_else(|| ModelError::UnseenLevel { predictor: group.to_string(), level: level.clone() })
    }
}

impl Term {
    fn group(&self) -> Option<&str> {
        match self {
            Term::GroupIntercept(g) | Term::GroupSlope { group: g, .. } => Some(g),
            _ => None,
        }
    }

    fn numeric(&self) -> Option<&str> {
        match self {
            Term::Numeric(x) | Term::LogNumeric(x) | Term::GroupSlope { numeric: x, .. } => Some(x),
            _ => None,
        }
    }
}

fn numeric_at(data: &ObservedTable, row: usize, name: &str) -> Result<f64, ModelError> {
    data.predictor(row, name)
        .and_then(PredictorValue::as_f64)
        .ok_or_else(|| ModelError::Design(format!("predictor `{name}` must be numeric")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tables::read_observed;

    #[test]
    fn grouped_design_columns() {
        let obs = read_observed("y,x,g\n1,2,a\n1,3,b\n", "y").unwrap();
        let d = DesignSpec::new(
            vec![Term::GroupIntercept("g".into()), Term::GroupSlope { group: "g".into(), numeric: "x".into() }],
            &obs,
        )
        .unwrap();
        assert_eq!(d.column_names(), vec!["g[a]", "g[b]", "g[a]:x", "g[b]:x"]);
        assert_eq!(d.design_matrix(&obs).unwrap(), vec![vec![1.0, 0.0, 2.0, 0.0], vec![0.0, 1.0, 0.0, 3.0]]);
    }

    #[test]
    fn log_term() {
        let obs = read_observed("y,x\n1,1\n1,0\n", "y").unwrap();
        let d = DesignSpec::new(vec![Term::LogNumeric("x".into())], &obs).unwrap();
        assert!(d.design_matrix(&obs).is_err());
        let ok = read_observed("y,x\n1,1\n1,2\n", "y").unwrap();
        assert_eq!(d.design_matrix(&ok).unwrap(), vec![vec![0.0], vec![2f64.ln()]]);
    }

    #[test]
    fn kind_checks() {
        let obs = read_observed("y,x,g\n1,2,a\n", "y").unwrap();
        assert!(DesignSpec::new(vec![Term::Numeric("g".into())], &obs).is_err());
        assert!(DesignSpec::new(vec![Term::GroupIntercept("x".into())], &obs).is_err());
        assert!(DesignSpec::new(vec![Term::Numeric("z".into())], &obs).is_err());
    }
}
