//! Discrete datasets: loading, integer encoding, validation, and the
//! frequency discretization used for bag-of-words count matrices.
//!
//! Every cell holds a dense categorical code in `[0, cardinality)` or the
//! [`MISSING`] marker. String categories are encoded per column in order of
//! first appearance, and the resulting code books are kept so that encoded
//! values can be written back out unchanged.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::info;

/// Marker stored in a cell whose value was not observed.
pub const MISSING: u32 = u32::MAX;

/// An `n_samples x n_vars` table of categorical codes.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    cells: Array2<u32>,
    cardinalities: Vec<usize>,
    column_names: Option<Vec<String>>,
    codebooks: Option<Vec<Vec<String>>>,
}

impl DataMatrix {
    /// Builds a matrix from explicit codes and per-column cardinalities.
    pub fn new(cells: Array2<u32>, cardinalities: Vec<usize>) -> Result<Self> {
        let (n_samples, n_vars) = cells.dim();
        if n_samples == 0 || n_vars == 0 {
            return Err(Error::Empty);
        }
        if cardinalities.len() != n_vars {
            return Err(Error::LengthMismatch {
                left: cardinalities.len(),
                right: n_vars,
            });
        }
        if let Some(i) = cardinalities.iter().position(|&c| c == 0) {
            return Err(Error::InvalidData(format!("column {i} has cardinality 0")));
        }
        for ((l, i), &code) in cells.indexed_iter() {
            if code != MISSING && code as usize >= cardinalities[i] {
                return Err(Error::InvalidData(format!(
                    "cell ({l}, {i}) has code {code} but column cardinality is {}",
                    cardinalities[i]
                )));
            }
        }
        Ok(DataMatrix {
            cells,
            cardinalities,
            column_names: None,
            codebooks: None,
        })
    }

    /// Builds a matrix whose cardinalities are inferred as `max code + 1`.
    pub fn from_codes(cells: Array2<u32>) -> Result<Self> {
        let cardinalities = cells
            .axis_iter(Axis(1))
            .map(|col| {
                col.iter()
                    .filter(|&&c| c != MISSING)
                    .map(|&c| c as usize + 1)
                    .max()
                    .unwrap_or(1)
            })
            .collect();
        Self::new(cells, cardinalities)
    }

    /// Convenience constructor from row vectors.
    pub fn from_rows(rows: &[Vec<u32>]) -> Result<Self> {
        let n_vars = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != n_vars) {
            return Err(Error::Parse {
                row: bad + 1,
                message: format!("expected {n_vars} fields, found {}", rows[bad].len()),
            });
        }
        let flat: Vec<u32> = rows.iter().flatten().copied().collect();
        let cells = Array2::from_shape_vec((rows.len(), n_vars), flat)
            .map_err(|e| Error::InvalidData(e.to_string()))?;
        Self::from_codes(cells)
    }

    pub fn with_column_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_vars() {
            return Err(Error::LengthMismatch {
                left: names.len(),
                right: self.n_vars(),
            });
        }
        self.column_names = Some(names);
        Ok(self)
    }

    pub fn with_codebooks(mut self, codebooks: Vec<Vec<String>>) -> Result<Self> {
        if codebooks.len() != self.n_vars() {
            return Err(Error::LengthMismatch {
                left: codebooks.len(),
                right: self.n_vars(),
            });
        }
        for (i, book) in codebooks.iter().enumerate() {
            if book.len() > self.cardinalities[i] {
                return Err(Error::InvalidData(format!(
                    "code book for column {i} has {} entries but cardinality is {}",
                    book.len(),
                    self.cardinalities[i]
                )));
            }
        }
        self.codebooks = Some(codebooks);
        Ok(self)
    }

    pub fn n_samples(&self) -> usize {
        self.cells.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.cells.ncols()
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn max_cardinality(&self) -> usize {
        self.cardinalities.iter().copied().max().unwrap_or(1)
    }

    pub fn cells(&self) -> ArrayView2<'_, u32> {
        self.cells.view()
    }

    pub fn cell(&self, sample: usize, column: usize) -> Option<u32> {
        let code = self.cells[[sample, column]];
        (code != MISSING).then_some(code)
    }

    pub fn row(&self, sample: usize) -> ArrayView1<'_, u32> {
        self.cells.row(sample)
    }

    pub fn column(&self, column: usize) -> ArrayView1<'_, u32> {
        self.cells.column(column)
    }

    pub fn column_names(&self) -> Option<&[String]> {
        self.column_names.as_deref()
    }

    pub fn codebooks(&self) -> Option<&[Vec<String>]> {
        self.codebooks.as_deref()
    }

    /// Human-readable label for a column: its name if known, else `x{i}`.
    pub fn column_label(&self, column: usize) -> String {
        self.column_names
            .as_ref()
            .map_or_else(|| format!("x{column}"), |n| n[column].clone())
    }

    /// Decodes a cell back to its original string, if code books exist.
    pub fn decode(&self, sample: usize, column: usize) -> Option<&str> {
        let code = self.cell(sample, column)?;
        self.codebooks
            .as_ref()
            .and_then(|b| b[column].get(code as usize))
            .map(String::as_str)
    }

    pub fn has_missing(&self) -> bool {
        self.cells.iter().any(|&c| c == MISSING)
    }

    /// Counts of each code among the non-missing cells of a column.
    pub fn value_counts(&self, column: usize) -> Vec<usize> {
        let mut counts = vec![0usize; self.cardinalities[column]];
        for &code in self.cells.column(column) {
            if code != MISSING {
                counts[code as usize] += 1;
            }
        }
        counts
    }

    /// A column is constant when at most one distinct value is observed.
    pub fn is_constant(&self, column: usize) -> bool {
        self.cardinalities[column] == 1
            || self.value_counts(column).iter().filter(|&&c| c > 0).count() <= 1
    }

    pub fn constant_columns(&self) -> Vec<usize> {
        (0..self.n_vars()).filter(|&i| self.is_constant(i)).collect()
    }

    /// Restricts the matrix to the given rows, keeping schema and code books.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty);
        }
        Ok(DataMatrix {
            cells: self.cells.select(Axis(0), rows),
            ..self.clone()
        })
    }

    /// Writes the table as CSV with a header; missing cells become `NA`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(file)
    }

    pub fn write_csv_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let header: Vec<String> = (0..self.n_vars()).map(|i| self.column_label(i)).collect();
        out.write_record(&header)?;
        let mut record = Vec::with_capacity(self.n_vars());
        for l in 0..self.n_samples() {
            record.clear();
            for i in 0..self.n_vars() {
                let field = match self.cell(l, i) {
                    None => "NA".to_string(),
                    Some(code) => self
                        .decode(l, i)
                        .map_or_else(|| code.to_string(), str::to_string),
                };
                record.push(field);
            }
            out.write_record(&record)?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Parsing options for delimited text tables.
#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub delimiter: u8,
    pub has_header: bool,
    pub missing_tokens: Vec<String>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            delimiter: b',',
            has_header: true,
            missing_tokens: vec![String::new(), "?".into(), "NA".into()],
        }
    }
}

impl LoadOptions {
    /// Tab-separated, otherwise default options.
    pub fn tsv() -> Self {
        LoadOptions {
            delimiter: b'\t',
            ..Default::default()
        }
    }

    /// Picks the delimiter from the file extension (`.tsv`/`.tab` → tab).
    pub fn for_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("tab") => Self::tsv(),
            _ => Self::default(),
        }
    }
}

/// How string fields become integer codes.
#[derive(Debug, Clone, Copy)]
pub enum Encoding<'a> {
    /// Dense codes assigned per column in order of first appearance.
    FirstAppearance,
    /// Codes looked up in existing per-column code books; unknown strings
    /// are an error.
    Codebooks(&'a [Vec<String>]),
}

/// Loads a delimited table, encoding categories by first appearance.
pub fn load_table(path: &Path, options: &LoadOptions) -> Result<DataMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_table(file, options, Encoding::FirstAppearance)
}

/// Loads a delimited table using previously fitted code books.
pub fn load_table_with_codebooks(
    path: &Path,
    options: &LoadOptions,
    codebooks: &[Vec<String>],
) -> Result<DataMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_table(file, options, Encoding::Codebooks(codebooks))
}

pub fn read_table<R: Read>(reader: R, options: &LoadOptions, encoding: Encoding<'_>) -> Result<DataMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut names: Option<Vec<String>> = None;
    let mut width: Option<usize> = None;
    let mut books: Vec<Vec<String>> = Vec::new();
    let mut lookup: Vec<HashMap<String, u32>> = Vec::new();
    let mut flat: Vec<u32> = Vec::new();
    let mut n_rows = 0usize;

    for (idx, record) in rdr.records().enumerate() {
        let row_number = idx + 1;
        let record = record.map_err(|e| Error::Parse {
            row: row_number,
            message: e.to_string(),
        })?;
        match width {
            None => {
                width = Some(record.len());
                match encoding {
                    Encoding::FirstAppearance => {
                        books = vec![Vec::new(); record.len()];
                        lookup = vec![HashMap::new(); record.len()];
                    }
                    Encoding::Codebooks(existing) => {
                        if existing.len() != record.len() {
                            return Err(Error::SchemaMismatch(format!(
                                "table has {} columns but the model expects {}",
                                record.len(),
                                existing.len()
                            )));
                        }
                        books = existing.to_vec();
                        lookup = existing
                            .iter()
                            .map(|b| {
                                b.iter()
                                    .enumerate()
                                    .map(|(code, s)| (s.clone(), code as u32))
                                    .collect()
                            })
                            .collect();
                    }
                }
                if options.has_header {
                    names = Some(record.iter().map(str::to_string).collect());
                    continue;
                }
            }
            Some(w) if w != record.len() => {
                return Err(Error::Parse {
                    row: row_number,
                    message: format!("expected {w} fields, found {}", record.len()),
                });
            }
            Some(_) => {}
        }

        for (i, field) in record.iter().enumerate() {
            if options.missing_tokens.iter().any(|t| t == field) {
                flat.push(MISSING);
                continue;
            }
            let code = match lookup[i].get(field) {
                Some(&code) => code,
                None => match encoding {
                    Encoding::FirstAppearance => {
                        let code = books[i].len() as u32;
                        books[i].push(field.to_string());
                        lookup[i].insert(field.to_string(), code);
                        code
                    }
                    Encoding::Codebooks(_) => {
                        let column = names
                            .as_ref()
                            .map_or_else(|| format!("x{i}"), |n| n[i].clone());
                        return Err(Error::UnseenCategory {
                            column,
                            code: field.to_string(),
                            cardinality: books[i].len(),
                        });
                    }
                },
            };
            flat.push(code);
        }
        n_rows += 1;
    }

    let width = width.ok_or(Error::Empty)?;
    if n_rows == 0 || width == 0 {
        return Err(Error::Empty);
    }
    let cells = Array2::from_shape_vec((n_rows, width), flat)
        .map_err(|e| Error::InvalidData(e.to_string()))?;
    let cardinalities = books.iter().map(|b| b.len().max(1)).collect();
    let mut data = DataMatrix::new(cells, cardinalities)?.with_codebooks(books)?;
    if let Some(names) = names {
        data = data.with_column_names(names)?;
    }
    Ok(data)
}

/// Discretizes a document-term count matrix.
///
/// The first `three_level_top` columns (expected to be the most frequent
/// terms) are coded 0 = absent, 1 = present below the column's mean count
/// over documents that use it, 2 = at or above that mean. Remaining columns
/// are coded 0 = absent, 1 = present.
pub fn discretize_counts(counts: ArrayView2<'_, i64>, three_level_top: usize) -> Result<DataMatrix> {
    let (n_samples, n_vars) = counts.dim();
    if n_samples == 0 || n_vars == 0 {
        return Err(Error::Empty);
    }
    if three_level_top > n_vars {
        return Err(Error::InvalidConfig(format!(
            "three_level_top = {three_level_top} exceeds column count {n_vars}"
        )));
    }
    if let Some(((sample, column), &value)) = counts.indexed_iter().find(|(_, &v)| v < 0) {
        return Err(Error::NegativeCount {
            sample,
            column,
            value,
        });
    }

    let mut cells = Array2::<u32>::zeros((n_samples, n_vars));
    let mut cardinalities = Vec::with_capacity(n_vars);
    for (i, col) in counts.axis_iter(Axis(1)).enumerate() {
        if i < three_level_top {
            let (total, used) = col
                .iter()
                .filter(|&&v| v > 0)
                .fold((0i64, 0i64), |(t, u), &v| (t + v, u + 1));
            for (l, &v) in col.iter().enumerate() {
                // v >= mean  <=>  v * used >= total, kept in integers
                cells[[l, i]] = match v {
                    0 => 0,
                    v if (v as i128) * (used as i128) >= total as i128 => 2,
                    _ => 1,
                };
            }
            cardinalities.push(3);
        } else {
            for (l, &v) in col.iter().enumerate() {
                cells[[l, i]] = u32::from(v > 0);
            }
            cardinalities.push(2);
        }
    }
    DataMatrix::new(cells, cardinalities)
}

/// Orders columns by descending total count (stable for ties); the order
/// `discretize_counts` expects.
pub fn order_by_total(counts: ArrayView2<'_, i64>) -> Vec<usize> {
    let totals: Vec<i64> = counts.axis_iter(Axis(1)).map(|c| c.sum()).collect();
    let mut order: Vec<usize> = (0..totals.len()).collect();
    order.sort_by(|&a, &b| totals[b].cmp(&totals[a]));
    order
}

/// Plug-in entropy (nats) of every column; missing cells are excluded.
pub fn column_entropies(data: &DataMatrix) -> Result<Vec<f64>> {
    (0..data.n_vars())
        .map(|i| {
            let counts = data.value_counts(i);
            if counts.iter().all(|&c| c == 0) {
                Err(Error::AllMissing { column: i })
            } else {
                Ok(info::entropy_of_counts(&counts))
            }
        })
        .collect()
}
