//! In-memory column store with numeric and categorical columns and NA support.

use std::collections::HashMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<Option<f64>>),
    /// Codes index into `levels`; levels are kept in order of first appearance.
    Categorical {
        codes: Vec<Option<u32>>,
        levels: Vec<String>,
    },
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_na(&self, i: usize) -> bool {
        match self {
            Column::Numeric(v) => v[i].is_none_or(|x| x.is_nan()),
            Column::Categorical { codes, .. } => codes[i].is_none(),
        }
    }

    /// Builds a categorical column, assigning level codes by first appearance.
    pub fn categorical<S: AsRef<str>>(values: &[Option<S>]) -> Column {
        let mut index: HashMap<String, u32> = HashMap::new();
        let mut levels = Vec::new();
        let codes = values
            .iter()
            .map(|v| {
                v.as_ref().map(|s| {
                    let s = s.as_ref();
                    *index.entry(s.to_string()).or_insert_with(|| {
                        levels.push(s.to_string());
                        (levels.len() - 1) as u32
                    })
                })
            })
            .collect();
        Column::Categorical { codes, levels }
    }

    /// Coerces to categorical; numeric values become their shortest decimal label.
    pub fn to_categorical(&self) -> Column {
        match self {
            Column::Categorical { .. } => self.clone(),
            Column::Numeric(v) => {
                let labels: Vec<Option<String>> =
                    v.iter().map(|x| x.filter(|x| !x.is_nan()).map(format_level)).collect();
                Column::categorical(&labels)
            }
        }
    }

    /// Keeps the given rows (in order) and drops levels that no longer occur.
    pub fn take(&self, rows: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&i| v[i]).collect()),
            Column::Categorical { codes, levels } => {
                let labels: Vec<Option<&str>> =
                    rows.iter().map(|&i| codes[i].map(|c| levels[c as usize].as_str())).collect();
                Column::categorical(&labels)
            }
        }
    }

    pub fn as_numeric(&self) -> Option<&[Option<f64>]> {
        match self {
            Column::Numeric(v) => Some(v),
            _ => None,
        }
    }

    /// Value at row `i` rendered as text (`None` for NA).
    pub fn label(&self, i: usize) -> Option<String> {
        match self {
            Column::Numeric(v) => v[i].map(format_level),
            Column::Categorical { codes, levels } => codes[i].map(|c| levels[c as usize].clone()),
        }
    }
}

pub(crate) fn format_level(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DataTable {
    names: Vec<String>,
    columns: Vec<Column>,
}

impl DataTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nrows(&self) -> usize {
        self.columns.first().map_or(0, Column::len)
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Adds or replaces a column.
    pub fn insert(&mut self, name: impl Into<String>, col: Column) -> Result<()> {
        let name = name.into();
        if !self.columns.is_empty() && col.len() != self.nrows() {
            return Err(Error::Data(format!("column '{name}' has {} rows, table has {}", col.len(), self.nrows())));
        }
        match self.names.iter().position(|n| *n == name) {
            Some(k) => self.columns[k] = col,
            None => {
                self.names.push(name);
                self.columns.push(col);
            }
        }
        Ok(())
    }

    pub fn with_numeric(mut self, name: &str, values: Vec<f64>) -> Result<Self> {
        self.insert(name, Column::Numeric(values.into_iter().map(Some).collect()))?;
        Ok(self)
    }

    pub fn with_categorical<S: AsRef<str>>(mut self, name: &str, values: &[S]) -> Result<Self> {
        let opts: Vec<Option<&str>> = values.iter().map(|s| Some(s.as_ref())).collect();
        self.insert(name, Column::categorical(&opts))?;
        Ok(self)
    }

    pub fn get(&self, name: &str) -> Option<&Column> {
        self.names.iter().position(|n| n == name).map(|k| &self.columns[k])
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.get(name).ok_or_else(|| Error::Data(format!("unknown column '{name}'")))
    }

    /// Numeric column without NAs.
    pub fn numeric(&self, name: &str) -> Result<Vec<f64>> {
        match self.column(name)? {
            Column::Numeric(v) => v
                .iter()
                .enumerate()
                .map(|(i, x)| x.ok_or_else(|| Error::Data(format!("column '{name}' is NA at row {}", i + 1))))
                .collect(),
            Column::Categorical { .. } => Err(Error::Data(format!("column '{name}' is not numeric"))),
        }
    }

    pub fn take(&self, rows: &[usize]) -> DataTable {
        DataTable { names: self.names.clone(), columns: self.columns.iter().map(|c| c.take(rows)).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_follow_first_appearance() {
        let c = Column::categorical(&[Some("b"), Some("a"), None, Some("b")]);
        match c {
            Column::Categorical { codes, levels } => {
                assert_eq!(levels, ["b", "a"]);
                assert_eq!(codes, [Some(0), Some(1), None, Some(0)]);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn numeric_coercion_labels() {
        let c = Column::Numeric(vec![Some(308.0), Some(1.5), None]).to_categorical();
        assert_eq!(c.label(0).as_deref(), Some("308"));
        assert_eq!(c.label(1).as_deref(), Some("1.5"));
        assert!(c.is_na(2));
    }

    #[test]
    fn take_drops_unused_levels() {
        let c = Column::categorical(&[Some("a"), Some("b"), Some("c")]).take(&[2, 0]);
        assert_eq!(c, Column::categorical(&[Some("c"), Some("a")]));
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let t = DataTable::new().with_numeric("x", vec![1.0, 2.0]).unwrap();
        assert!(t.with_numeric("y", vec![1.0]).is_err());
    }
}
