use crate::data::{Column, DataTable};
use crate::error::{Error, Result};
use crate::formula::{Formula, Grouping};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SingleLevelPolicy {
    #[default]
    Error,
    Warn,
}

#[derive(Debug, Clone, Default)]
pub struct FrameOptions {
    /// Column holding prior weights.
    pub weights: Option<String>,
    /// Column added to the offset, on top of any `offset()` terms.
    pub offset: Option<String>,
    pub single_level: SingleLevelPolicy,
}

/// Complete-case rows of the referenced columns plus realized grouping factors.
#[derive(Debug, Clone)]
pub struct ModelFrame {
    pub data: DataTable,
    /// Row indices into the original table.
    pub rows: Vec<usize>,
    /// Grouping factors by printed name (`g`, `a:b`), categorical.
    pub groupings: Vec<(String, Column)>,
    pub warnings: Vec<String>,
}

impl ModelFrame {
    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn grouping(&self, name: &str) -> Option<&Column> {
        self.groupings.iter().find(|(n, _)| n == name).map(|(_, c)| c)
    }
}

/// Grouping factor built from the interaction of `parts` on the rows of `data`.
pub fn grouping_column(parts: &[String], data: &DataTable) -> Result<Column> {
    if parts.len() == 1 {
        return Ok(data.column(&parts[0])?.to_categorical());
    }
    let cols: Vec<Column> = parts.iter().map(|p| data.column(p).map(Column::to_categorical)).collect::<Result<_>>()?;
    let labels: Vec<Option<String>> = (0..data.nrows())
        .map(|i| cols.iter().map(|c| c.label(i)).collect::<Option<Vec<_>>>().map(|v| v.join(":")))
        .collect();
    Ok(Column::categorical(&labels))
}

/// Drops incomplete rows, coerces grouping expressions to factors and drops
/// unused levels. Expects a rewritten formula (no nesting).
pub fn build_model_frame(f: &Formula, data: &DataTable, opts: &FrameOptions) -> Result<ModelFrame> {
    let mut vars = f.variables();
    for extra in [&opts.weights, &opts.offset].into_iter().flatten() {
        if !vars.contains(extra) {
            vars.push(extra.clone());
        }
    }
    let cols: Vec<&Column> = vars.iter().map(|v| data.column(v)).collect::<Result<_>>()?;
    let rows: Vec<usize> = (0..data.nrows()).filter(|&i| cols.iter().all(|c| !c.is_na(i))).collect();
    if rows.is_empty() {
        return Err(Error::Data("no complete rows remain after removing missing values".into()));
    }
    let mut frame = DataTable::new();
    for (name, col) in vars.iter().zip(&cols) {
        frame.insert(name.clone(), col.take(&rows))?;
    }

    let mut groupings: Vec<(String, Column)> = Vec::new();
    let mut warnings = Vec::new();
    for t in &f.random {
        let parts = match &t.grouping {
            Grouping::Factor(p) => p,
            Grouping::Nested(_) => {
                return Err(Error::Formula(format!(
                    "nested grouping '{}' must be rewritten before building a frame",
                    t.grouping
                )))
            }
        };
        let name = t.grouping.to_string();
        if groupings.iter().any(|(n, _)| *n == name) {
            continue;
        }
        let col = grouping_column(parts, &frame)?;
        if let Column::Categorical { levels, .. } = &col {
            if levels.len() < 2 {
                let msg = format!("grouping factor '{name}' has a single level");
                match opts.single_level {
                    SingleLevelPolicy::Error => return Err(Error::Data(msg)),
                    SingleLevelPolicy::Warn => warnings.push(msg),
                }
            }
        }
        groupings.push((name, col));
    }
    Ok(ModelFrame { data: frame, rows, groupings, warnings })
}
