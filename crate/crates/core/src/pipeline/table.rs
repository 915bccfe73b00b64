use std::borrow::Cow;
use std::fs::File;
use std::path::Path;

use indexmap::IndexSet;

use crate::error::{Error, Result};

/// Interned text id, resolved through the owning table's pool.
pub type Sym = u32;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Real(f64),
    Text(Sym),
    Missing,
}

impl Cell {
    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Cell::Int(i) => Some(i as f64),
            Cell::Real(x) => Some(x),
            _ => None,
        }
    }

    /// Equality key under which `Int(1)` and `Real(1.0)` coincide.
    pub(crate) fn key(&self) -> CellKey {
        match *self {
            Cell::Int(i) => CellKey::Int(i),
            Cell::Real(x) if x.fract() == 0.0 && x.abs() < 9.0e15 => CellKey::Int(x as i64),
            Cell::Real(x) => CellKey::Real(x.to_bits()),
            Cell::Text(s) => CellKey::Text(s),
            Cell::Missing => CellKey::Missing,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub(crate) enum CellKey {
    Int(i64),
    Real(u64),
    Text(Sym),
    Missing,
}

/// Rectangular table of typed cells with a header row.
#[derive(Clone, Debug, Default)]
pub struct RawTable {
    columns: Vec<String>,
    cells: Vec<Cell>,
    pool: IndexSet<Box<str>>,
}

impl PartialEq for RawTable {
    fn eq(&self, other: &Self) -> bool {
        self.columns == other.columns
            && self.n_rows() == other.n_rows()
            && (0..self.n_rows()).all(|r| {
                self.row(r)
                    .iter()
                    .zip(other.row(r))
                    .all(|(a, b)| self.display(a) == other.display(b))
            })
    }
}

/// Parses one field. Empty and `nan` (any case) become missing, as do
/// non-finite numbers.
fn parse_cell(raw: &str, pool: &mut IndexSet<Box<str>>) -> Cell {
    let s = raw.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("nan") {
        return Cell::Missing;
    }
    if let Ok(i) = s.parse::<i64>() {
        return Cell::Int(i);
    }
    if s.bytes().any(|b| b.is_ascii_digit()) {
        if let Ok(x) = s.parse::<f64>() {
            return if x.is_finite() {
                Cell::Real(x)
            } else {
                Cell::Missing
            };
        }
    }
    let (id, _) = pool.insert_full(raw.into());
    Cell::Text(id as Sym)
}

impl RawTable {
    pub fn new(columns: Vec<String>) -> Self {
        Self {
            columns,
            ..Default::default()
        }
    }

    /// Builds a table from string rows, parsing each field like the CSV loader.
    pub fn from_strings(columns: &[&str], rows: &[&[&str]]) -> Result<Self> {
        let mut t = Self::new(columns.iter().map(|s| s.to_string()).collect());
        for (i, r) in rows.iter().enumerate() {
            if r.len() != t.n_cols() {
                return Err(Error::Data(format!(
                    "row {} has {} fields, header has {}",
                    i + 1,
                    r.len(),
                    t.n_cols()
                )));
            }
            for f in r.iter() {
                let c = parse_cell(f, &mut t.pool);
                t.cells.push(c);
            }
        }
        Ok(t)
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn n_rows(&self) -> usize {
        if self.columns.is_empty() {
            0
        } else {
            self.cells.len() / self.columns.len()
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn row(&self, i: usize) -> &[Cell] {
        let w = self.n_cols();
        &self.cells[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Cell]> {
        self.cells.chunks_exact(self.n_cols().max(1))
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell {
        self.cells[row * self.n_cols() + col]
    }

    pub fn text(&self, sym: Sym) -> &str {
        &self.pool[sym as usize]
    }

    /// Canonical string form: integral reals print without a fraction so
    /// `1`, `1.0` and `1.00` render identically.
    pub fn display(&self, cell: &Cell) -> Cow<'_, str> {
        match *cell {
            Cell::Int(i) => Cow::Owned(i.to_string()),
            Cell::Real(x) if x.fract() == 0.0 && x.abs() < 9.0e15 => {
                Cow::Owned((x as i64).to_string())
            }
            Cell::Real(x) => Cow::Owned(x.to_string()),
            Cell::Text(s) => Cow::Borrowed(self.text(s)),
            Cell::Missing => Cow::Borrowed(""),
        }
    }

    /// New table with the same pool and only the listed column indices.
    pub(crate) fn select_columns(&self, keep: &[usize]) -> Self {
        let mut cells = Vec::with_capacity(self.n_rows() * keep.len());
        for row in self.rows() {
            cells.extend(keep.iter().map(|&c| row[c]));
        }
        Self {
            columns: keep.iter().map(|&c| self.columns[c].clone()).collect(),
            cells,
            pool: self.pool.clone(),
        }
    }

    /// New table with the same columns and only the listed row indices.
    pub fn select_rows(&self, keep: &[usize]) -> Self {
        let mut cells = Vec::with_capacity(keep.len() * self.n_cols());
        for &r in keep {
            cells.extend_from_slice(self.row(r));
        }
        Self {
            columns: self.columns.clone(),
            cells,
            pool: self.pool.clone(),
        }
    }
}

/// Loads a comma-delimited file with a header row.
pub fn load_csv(path: impl AsRef<Path>) -> Result<RawTable> {
    load_csv_with(path, b',')
}

pub fn load_csv_with(path: impl AsRef<Path>, delimiter: u8) -> Result<RawTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, delimiter).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn read_csv(reader: impl std::io::Read, delimiter: u8) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Data("empty table: no header row".into()));
    }
    let mut table = RawTable::new(header);
    let width = table.n_cols();
    let mut record = csv::StringRecord::new();
    let mut row = 0usize;
    while rdr.read_record(&mut record)? {
        row += 1;
        if record.len() != width {
            let line = record.position().map_or(row + 1, |p| p.line() as usize);
            return Err(Error::Data(format!(
                "ragged row {row} (line {line}): {} fields, header has {width}",
                record.len()
            )));
        }
        for field in record.iter() {
            let c = parse_cell(field, &mut table.pool);
            table.cells.push(c);
        }
    }
    if row == 0 {
        return Err(Error::Data("empty table: header but no rows".into()));
    }
    Ok(table)
}

pub fn write_csv(table: &RawTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(table.columns())?;
    for row in table.rows().take(table.n_rows()) {
        w.write_record(row.iter().map(|c| table.display(c)).map(|s| s.into_owned()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
