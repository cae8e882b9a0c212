//! CSV files into [`DataTable`]s.

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use lmmfit::data::{Column, DataTable};

use crate::CliError;

/// Reads `path`; see [`read_csv`].
pub fn ingest_csv(path: &Path) -> Result<DataTable, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    read_csv(file).map_err(|e| match e {
        CliError::Io(m) => CliError::Io(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// A column is numeric when every non-empty cell parses as a number,
/// otherwise categorical. Empty cells are missing values.
pub fn read_csv<R: Read>(reader: R) -> Result<DataTable, CliError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Io(format!("reading header: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(CliError::Io("empty file".into()));
    }
    let mut seen = HashSet::new();
    for h in &headers {
        if h.is_empty() {
            return Err(CliError::Io("empty column name in header".into()));
        }
        if !seen.insert(h.as_str()) {
            return Err(CliError::Io(format!("duplicate column name {h:?}")));
        }
    }

    let mut cells: Vec<Vec<Option<String>>> = vec![Vec::new(); headers.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Io(format!("malformed CSV: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != headers.len() {
            return Err(CliError::Io(format!("line {line}: expected {} fields, found {}", headers.len(), rec.len())));
        }
        for (col, field) in cells.iter_mut().zip(rec.iter()) {
            let v = field.trim();
            col.push((!v.is_empty()).then(|| v.to_string()));
        }
    }

    let mut table = DataTable::new();
    for (name, col) in headers.into_iter().zip(cells) {
        table.insert(name, type_column(&col))?;
    }
    Ok(table)
}

fn type_column(cells: &[Option<String>]) -> Column {
    let parsed: Option<Vec<Option<f64>>> = cells
        .iter()
        .map(|c| match c {
            None => Some(None),
            Some(s) => s.parse::<f64>().ok().filter(|v| v.is_finite()).map(Some),
        })
        .collect();
    match parsed {
        Some(values) => Column::Numeric(values),
        None => Column::categorical(cells),
    }
}

/// Recodes the named columns as categorical.
pub fn force_factors(table: &mut DataTable, names: &[String]) -> Result<(), CliError> {
    for name in names {
        let col = table.column(name)?.to_categorical();
        table.insert(name.clone(), col)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_column_is_categorical() {
        let t = read_csv("a,b\n1,1\n2,2\nx,3\n".as_bytes()).unwrap();
        assert!(matches!(t.column("a").unwrap(), Column::Categorical { levels, .. } if levels == &["1", "2", "x"]));
        assert!(matches!(t.column("b").unwrap(), Column::Numeric(_)));
    }

    #[test]
    fn empty_cells_are_missing() {
        let t = read_csv("a,b\n1,\n,u\n".as_bytes()).unwrap();
        assert_eq!(t.column("a").unwrap(), &Column::Numeric(vec![Some(1.0), None]));
        assert!(t.column("b").unwrap().is_na(0));
    }

    #[test]
    fn quoted_fields() {
        let t = read_csv("name,v\n\"a, b\",1\n\"c \"\"d\"\"\",2\n".as_bytes()).unwrap();
        assert_eq!(t.column("name").unwrap().label(0).as_deref(), Some("a, b"));
        assert_eq!(t.column("name").unwrap().label(1).as_deref(), Some("c \"d\""));
    }

    #[test]
    fn ragged_row_reports_its_line() {
        let e = read_csv("a,b\n1,2\n3\n".as_bytes()).unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
    }

    #[test]
    fn empty_input_and_duplicate_headers() {
        assert!(read_csv("".as_bytes()).is_err());
        assert!(read_csv("a,a\n1,2\n".as_bytes()).unwrap_err().to_string().contains("duplicate"));
    }
}
