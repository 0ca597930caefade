//! Typed rectangular tables.
//!
//! A [`Table`] is immutable once built: headers, rows, and one inferred
//! [`DataType`] per column. Columns are addressed by index everywhere, since
//! scraped tables routinely repeat header names.

use std::io::{BufRead, Read};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TableError {
    #[error("row {row} has {found} cells, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("table has no headers or no rows")]
    EmptyTable,
    #[error("header {0} is empty after trimming")]
    EmptyHeader(usize),
    #[error("malformed input: {0}")]
    MalformedInput(String),
}

/// Column type. `Numeric` iff every non-empty cell passes [`parse_number`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DataType {
    #[serde(rename = "real")]
    Numeric,
    #[serde(rename = "text")]
    Text,
}

/// Parses a cell as a number.
///
/// Surrounding whitespace and `,` thousands separators are stripped; what
/// remains must be an optional sign followed by digits with at most one
/// decimal point. Exponents, currency symbols and units are not numbers.
pub fn parse_number(cell: &str) -> Option<f64> {
    let trimmed = cell.trim();
    let unsigned = trimmed.trim_start_matches(',');
    let body = unsigned.strip_prefix(['+', '-']).unwrap_or(unsigned);
    let mut digits = 0usize;
    let mut points = 0usize;
    for c in body.chars() {
        match c {
            '0'..='9' => digits += 1,
            '.' => points += 1,
            ',' => {}
            _ => return None,
        }
    }
    if digits == 0 || points > 1 {
        return None;
    }
    let parsed = if trimmed.contains(',') {
        trimmed.replace(',', "").parse::<f64>()
    } else {
        trimmed.parse::<f64>()
    };
    parsed.ok().filter(|v| v.is_finite())
}

/// Infers the type of a column from its cells. Empty cells are ignored; a
/// column with no non-empty cell is `Text`.
pub fn infer_column_type<S: AsRef<str>>(cells: &[S]) -> DataType {
    let mut seen = false;
    for cell in cells {
        let cell = cell.as_ref();
        if cell.trim().is_empty() {
            continue;
        }
        if parse_number(cell).is_none() {
            return DataType::Text;
        }
        seen = true;
    }
    if seen {
        DataType::Numeric
    } else {
        DataType::Text
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    id: String,
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
    col_types: Vec<DataType>,
    // per-cell caches, row-major
    numbers: Vec<Option<f64>>,
    folded: Vec<String>,
}

/// Lowercased with runs of whitespace collapsed to one space and trimmed.
pub fn fold_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for w in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(w.chars().flat_map(char::to_lowercase));
    }
    out
}

/// Wire form of a table: one JSON object per line.
#[derive(Debug, Serialize, Deserialize)]
struct TableRecord {
    id: String,
    header: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    types: Option<Vec<DataType>>,
    rows: Vec<Vec<String>>,
}

impl Table {
    /// Builds a table, inferring column types.
    pub fn new(
        id: impl Into<String>,
        headers: Vec<String>,
        rows: Vec<Vec<String>>,
    ) -> Result<Self, TableError> {
        Self::build(id.into(), headers, rows, None)
    }

    /// Builds a table with explicit column types. A column declared
    /// `Numeric` must actually satisfy the numeric rule; declaring a
    /// numeric-looking column `Text` is allowed.
    pub fn with_types(
        id: impl Into<String>,
        headers: Vec<String>,
        rows: Vec<Vec<String>>,
        col_types: Vec<DataType>,
    ) -> Result<Self, TableError> {
        Self::build(id.into(), headers, rows, Some(col_types))
    }

    fn build(
        id: String,
        headers: Vec<String>,
        rows: Vec<Vec<String>>,
        declared: Option<Vec<DataType>>,
    ) -> Result<Self, TableError> {
        if headers.is_empty() || rows.is_empty() {
            return Err(TableError::EmptyTable);
        }
        let headers: Vec<String> = headers.into_iter().map(|h| h.trim().to_string()).collect();
        if let Some(i) = headers.iter().position(|h| h.is_empty()) {
            return Err(TableError::EmptyHeader(i));
        }
        let width = headers.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(TableError::RaggedRows {
                    row: i,
                    expected: width,
                    found: row.len(),
                });
            }
        }
        let inferred: Vec<DataType> = (0..width)
            .map(|c| {
                let cells: Vec<&str> = rows.iter().map(|r| r[c].as_str()).collect();
                infer_column_type(&cells)
            })
            .collect();
        let col_types = match declared {
            None => inferred,
            Some(types) => {
                if types.len() != width {
                    return Err(TableError::MalformedInput(format!(
                        "{} types for {} columns",
                        types.len(),
                        width
                    )));
                }
                for (c, (&want, &got)) in types.iter().zip(&inferred).enumerate() {
                    if want == DataType::Numeric && got != DataType::Numeric {
                        return Err(TableError::MalformedInput(format!(
                            "column {c} ({}) declared real but holds non-numeric cells",
                            headers[c]
                        )));
                    }
                }
                types
            }
        };
        let numbers = rows.iter().flatten().map(|c| parse_number(c)).collect();
        let folded = rows.iter().flatten().map(|c| fold_text(c)).collect();
        Ok(Self {
            id,
            headers,
            rows,
            col_types,
            numbers,
            folded,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn header(&self, col: usize) -> &str {
        &self.headers[col]
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn col_types(&self) -> &[DataType] {
        &self.col_types
    }

    pub fn col_type(&self, col: usize) -> DataType {
        self.col_types[col]
    }

    pub fn num_cols(&self) -> usize {
        self.headers.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn cell(&self, row: usize, col: usize) -> &str {
        &self.rows[row][col]
    }

    /// The cell parsed by [`parse_number`].
    pub fn number(&self, row: usize, col: usize) -> Option<f64> {
        self.numbers[row * self.headers.len() + col]
    }

    /// The cell after [`fold_text`].
    pub fn folded(&self, row: usize, col: usize) -> &str {
        &self.folded[row * self.headers.len() + col]
    }

    /// Cells of one column in row order.
    pub fn column(&self, col: usize) -> impl Iterator<Item = &str> + '_ {
        self.rows.iter().map(move |r| r[col].as_str())
    }

    /// First column whose header equals `name` exactly.
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    /// Parses one JSONL line. `types` is optional; absent types are inferred.
    pub fn from_json_line(line: &str) -> Result<Self, TableError> {
        let rec: TableRecord =
            serde_json::from_str(line).map_err(|e| TableError::MalformedInput(e.to_string()))?;
        Self::build(rec.id, rec.header, rec.rows, rec.types)
    }

    /// Serializes to one JSONL line; types are always emitted.
    pub fn to_json_line(&self) -> String {
        let rec = TableRecord {
            id: self.id.clone(),
            header: self.headers.clone(),
            types: Some(self.col_types.clone()),
            rows: self.rows.clone(),
        };
        serde_json::to_string(&rec).expect("table record serializes")
    }

    /// Reads a delimited file whose first record is the header row.
    pub fn from_delimited<R: Read>(
        id: impl Into<String>,
        reader: R,
        delimiter: u8,
    ) -> Result<Self, TableError> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| TableError::MalformedInput(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| TableError::MalformedInput(e.to_string()))?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        Self::new(id, headers, rows)
    }
}

/// Reads every table from a JSONL stream, skipping blank lines.
pub fn read_tables_jsonl<R: BufRead>(reader: R) -> Result<Vec<Table>, TableError> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| TableError::MalformedInput(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let t = Table::from_json_line(&line).map_err(|e| match e {
            TableError::MalformedInput(m) => TableError::MalformedInput(format!("line {}: {m}", n + 1)),
            other => other,
        })?;
        out.push(t);
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::Table;

    /// The five-candidate election table used throughout the tests.
    pub fn election() -> Table {
        let rows = [
            ["Conservatives", "Andrew Turner", "32,717"],
            ["Liberal Democrats", "Anthony Rowlands", "19,739"],
            ["Labour", "Mark Chiverton", "11,484"],
            ["UK Independence", "Michael Tarrant", "2,352"],
            ["Independent", "Edward Corby", "551"],
        ];
        Table::new(
            "election",
            vec!["Party".into(), "Candidate".into(), "Votes".into()],
            rows.iter()
                .map(|r| r.iter().map(|c| c.to_string()).collect())
                .collect(),
        )
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn election_table_types() {
        let t = fixtures::election();
        assert_eq!(
            t.col_types(),
            &[DataType::Text, DataType::Text, DataType::Numeric]
        );
    }

    #[test]
    fn header_only_is_empty_table() {
        let err = Table::new("x", vec!["X".into()], vec![]).unwrap_err();
        assert_eq!(err, TableError::EmptyTable);
        let tsv = "X\n";
        assert_eq!(
            Table::from_delimited("x", tsv.as_bytes(), b'\t').unwrap_err(),
            TableError::EmptyTable
        );
    }

    #[test]
    fn ragged_rows_rejected() {
        let err = Table::new(
            "x",
            vec!["a".into(), "b".into()],
            vec![vec!["1".into(), "2".into()], vec!["3".into()]],
        )
        .unwrap_err();
        assert_eq!(
            err,
            TableError::RaggedRows {
                row: 1,
                expected: 2,
                found: 1
            }
        );
    }

    #[test]
    fn blank_header_rejected() {
        let err = Table::new("x", vec!["a".into(), "  ".into()], vec![vec!["1".into(), "2".into()]])
            .unwrap_err();
        assert_eq!(err, TableError::EmptyHeader(1));
    }

    #[test]
    fn comma_grouped_numbers() {
        assert_eq!(parse_number("1,234"), Some(1234.0));
        assert_eq!(parse_number(" 55 "), Some(55.0));
        assert_eq!(parse_number("-3.5"), Some(-3.5));
        assert_eq!(parse_number("+7"), Some(7.0));
        assert_eq!(parse_number("1.2.3"), None);
        assert_eq!(parse_number("1e5"), None);
        assert_eq!(parse_number("$5"), None);
        assert_eq!(parse_number("-"), None);
        assert_eq!(parse_number("."), None);
        assert_eq!(parse_number(""), None);
        assert_eq!(infer_column_type(&["1,234", "55"]), DataType::Numeric);
    }

    #[test]
    fn infer_examples() {
        assert_eq!(infer_column_type(&["32,717", "19,739", "551"]), DataType::Numeric);
        assert_eq!(infer_column_type(&["Labour", "Independent"]), DataType::Text);
        assert_eq!(infer_column_type(&["12", "", "7"]), DataType::Numeric);
        assert_eq!(infer_column_type(&["", "  "]), DataType::Text);
    }

    #[test]
    fn csv_and_tsv_ingest() {
        let csv = "Party,Votes\nLabour,\"11,484\"\nIndependent,551\n";
        let t = Table::from_delimited("c", csv.as_bytes(), b',').unwrap();
        assert_eq!(t.col_types(), &[DataType::Text, DataType::Numeric]);
        assert_eq!(t.cell(0, 1), "11,484");

        let tsv = "Party\tVotes\nLabour\t11,484\nIndependent\n";
        assert!(matches!(
            Table::from_delimited("t", tsv.as_bytes(), b'\t'),
            Err(TableError::RaggedRows { row: 1, .. })
        ));
    }

    #[test]
    fn json_types_optional_and_checked() {
        let line = r#"{"id":"a","header":["h","n"],"rows":[["x","1"],["y","2"]]}"#;
        let t = Table::from_json_line(line).unwrap();
        assert_eq!(t.col_types(), &[DataType::Text, DataType::Numeric]);
        assert!(t.to_json_line().contains(r#""types":["text","real"]"#));

        let forced_text = r#"{"id":"a","header":["h","n"],"types":["text","text"],"rows":[["x","1"]]}"#;
        assert_eq!(
            Table::from_json_line(forced_text).unwrap().col_type(1),
            DataType::Text
        );
        let bad = r#"{"id":"a","header":["h","n"],"types":["real","text"],"rows":[["x","1"]]}"#;
        assert!(matches!(
            Table::from_json_line(bad),
            Err(TableError::MalformedInput(_))
        ));
        assert!(matches!(
            Table::from_json_line("{not json"),
            Err(TableError::MalformedInput(_))
        ));
    }

    fn cell_strategy() -> impl Strategy<Value = String> {
        prop_oneof![
            "[a-zA-Z ]{0,8}",
            (-100000i64..100000).prop_map(|v| v.to_string()),
            Just(String::new()),
        ]
    }

    proptest! {
        #[test]
        fn jsonl_round_trip(
            id in "[a-z0-9_-]{1,10}",
            width in 1usize..5,
            rows in prop::collection::vec(prop::collection::vec(cell_strategy(), 5), 1..8),
        ) {
            let headers: Vec<String> = (0..width).map(|i| format!("col {i}")).collect();
            let rows: Vec<Vec<String>> = rows.into_iter().map(|mut r| { r.truncate(width); r }).collect();
            let t = Table::new(id, headers, rows).unwrap();
            let back = Table::from_json_line(&t.to_json_line()).unwrap();
            prop_assert_eq!(back, t);
        }

        #[test]
        fn inference_is_order_insensitive(mut cells in prop::collection::vec(cell_strategy(), 1..12), seed in any::<u64>()) {
            let before = infer_column_type(&cells);
            // deterministic permutation from the seed
            let n = cells.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                cells.swap(i, (s >> 33) as usize % (i + 1));
            }
            prop_assert_eq!(before, infer_column_type(&cells));
        }
    }
}
