//! CSV and JSON-lines persistence for embeddings, RDMs, category labels,
//! triplet judgments, transport plans and trial logs.
//!
//! Every matrix file shares one layout: a header row `id,<col ids...>` and
//! one row per object whose first field is the object id. Reals are printed
//! in the shortest decimal form that parses back to the identical `f64`
//! (never more than 17 significant digits), so save/load is bit-exact.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Labeled `n x d` matrix of object embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet<T = f64> {
    ids: Vec<String>,
    matrix: Array2<T>,
}

impl<T: Real> EmbeddingSet<T> {
    pub fn new(ids: Vec<String>, matrix: Array2<T>) -> Result<Self> {
        let (n, d) = matrix.dim();
        if n == 0 || d == 0 {
            return Err(Error::Shape(format!("embedding must be at least 1x1, got {n}x{d}")));
        }
        if ids.len() != n {
            return Err(Error::Shape(format!("{} ids for {n} rows", ids.len())));
        }
        check_unique(&ids)?;
        if let Some(((r, c), v)) = matrix.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Numeric(format!("entry ({r},{c}) = {v}")));
        }
        Ok(Self { ids, matrix })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn matrix(&self) -> &Array2<T> {
        &self.matrix
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    pub fn dims(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn into_parts(self) -> (Vec<String>, Array2<T>) {
        (self.ids, self.matrix)
    }
}

/// Object id to coarse category label. Objects missing from the map are unlabeled.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CategoryMap {
    entries: HashMap<String, String>,
    order: Vec<String>,
}

impl CategoryMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, category: impl Into<String>) -> Result<()> {
        let id = id.into();
        let category = category.into();
        if category.is_empty() {
            return Err(Error::Format(format!("empty category for `{id}`")));
        }
        if self.entries.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        self.order.push(id.clone());
        self.entries.insert(id, category);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&str> {
        self.entries.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in file order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.order
            .iter()
            .map(move |id| (id.as_str(), self.entries[id].as_str()))
    }

    /// Number of distinct labels.
    pub fn n_categories(&self) -> usize {
        self.entries.values().collect::<HashSet<_>>().len()
    }

    /// Integer codes for `ids`, interning label strings into `vocab` so that
    /// codes from two calls sharing one vocabulary are comparable.
    pub fn codes(&self, ids: &[String], vocab: &mut Vec<String>) -> Vec<Option<usize>> {
        ids.iter()
            .map(|id| {
                self.get(id).map(|label| match vocab.iter().position(|v| v == label) {
                    Some(k) => k,
                    None => {
                        vocab.push(label.to_string());
                        vocab.len() - 1
                    }
                })
            })
            .collect()
    }
}

/// One odd-one-out judgment over objects `i`, `j`, `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub odd: usize,
}

impl Triplet {
    pub fn new(i: usize, j: usize, k: usize, odd: usize) -> Result<Self> {
        if i == j || i == k || j == k {
            return Err(Error::Format(format!("triplet ({i},{j},{k}) has repeated objects")));
        }
        if odd != i && odd != j && odd != k {
            return Err(Error::Format(format!("odd {odd} is not one of ({i},{j},{k})")));
        }
        Ok(Self { i, j, k, odd })
    }

    /// The pair endorsed as most similar (the two non-odd objects).
    pub fn similar_pair(&self) -> (usize, usize) {
        if self.odd == self.i {
            (self.j, self.k)
        } else if self.odd == self.j {
            (self.i, self.k)
        } else {
            (self.i, self.j)
        }
    }

    pub fn max_index(&self) -> usize {
        self.i.max(self.j).max(self.k)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TripletSet {
    pub triplets: Vec<Triplet>,
}

impl TripletSet {
    pub fn new(triplets: Vec<Triplet>) -> Self {
        Self { triplets }
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn check_range(&self, n_objects: usize) -> Result<()> {
        match self.triplets.iter().position(|t| t.max_index() >= n_objects) {
            Some(pos) => Err(Error::Index(format!(
                "triplet {pos} references object {} but n = {n_objects}",
                self.triplets[pos].max_index()
            ))),
            None => Ok(()),
        }
    }
}

/// Matrix with row and column labels, the generic on-disk form.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix<T = f64> {
    pub row_ids: Vec<String>,
    pub col_ids: Vec<String>,
    pub values: Array2<T>,
}

/// Shortest round-trip decimal for an `f64`, with integral values printed without `.0`.
pub fn format_real(x: f64) -> String {
    let s = format!("{x:?}");
    match s.strip_suffix(".0") {
        Some(t) => t.to_string(),
        None => s,
    }
}

fn parse_real(field: &str, line: usize) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| Error::Format(format!("line {line}: `{field}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::Numeric(format!("line {line}: `{field}`")));
    }
    Ok(v)
}

fn check_unique(ids: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId(id.clone()));
        }
    }
    Ok(())
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn read_records(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut rdr = csv_reader(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        // blank lines come through as a single empty field
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        out.push(rec);
    }
    Ok(out)
}

fn read_labeled_matrix<T: Real>(path: &Path) -> Result<LabeledMatrix<T>> {
    let records = read_records(path)?;
    let (header, rows) = records
        .split_first()
        .ok_or_else(|| Error::Format(format!("{}: empty file", path.display())))?;
    if header.len() < 2 {
        return Err(Error::Format(format!("{}: header needs an id column and at least one value column", path.display())));
    }
    let col_ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let width = col_ids.len();
    let mut row_ids = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len() * width);
    for (r, rec) in rows.iter().enumerate() {
        let line = r + 2;
        if rec.len() != width + 1 {
            return Err(Error::Format(format!(
                "{} line {line}: expected {} fields, found {}",
                path.display(),
                width + 1,
                rec.len()
            )));
        }
        row_ids.push(rec[0].to_string());
        for field in rec.iter().skip(1) {
            values.push(T::of(parse_real(field, line)?));
        }
    }
    if row_ids.is_empty() {
        return Err(Error::Format(format!("{}: no data rows", path.display())));
    }
    check_unique(&row_ids)?;
    let values = Array2::from_shape_vec((row_ids.len(), width), values)
        .map_err(|e| Error::Shape(e.to_string()))?;
    Ok(LabeledMatrix { row_ids, col_ids, values })
}

/// Loads an embedding CSV with header `id,dim_0,...,dim_{d-1}`.
pub fn load_embeddings<T: Real>(path: impl AsRef<Path>) -> Result<EmbeddingSet<T>> {
    let m = read_labeled_matrix::<T>(path.as_ref())?;
    EmbeddingSet::new(m.row_ids, m.values)
}

pub fn save_embeddings<T: Real>(emb: &EmbeddingSet<T>, path: impl AsRef<Path>) -> Result<()> {
    let cols: Vec<String> = (0..emb.dims()).map(|c| format!("dim_{c}")).collect();
    save_matrix(emb.matrix().view(), emb.ids(), &cols, path)
}

/// Loads any labeled matrix (RDM or plan) written by [`save_matrix`].
pub fn load_matrix<T: Real>(path: impl AsRef<Path>) -> Result<LabeledMatrix<T>> {
    read_labeled_matrix(path.as_ref())
}

/// True when the header looks like an embedding file (`dim_0`, `dim_1`, ...).
pub fn is_embedding_file(path: impl AsRef<Path>) -> Result<bool> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    BufReader::new(file)
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    Ok(first
        .trim()
        .split(',')
        .skip(1)
        .enumerate()
        .all(|(c, f)| f.trim() == format!("dim_{c}"))
        && first.contains(','))
}

/// Writes `matrix` with a header row of `col_labels` and `row_labels` in the first column.
pub fn save_matrix<T: Real>(
    matrix: ArrayView2<'_, T>,
    row_labels: &[String],
    col_labels: &[String],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let (n, m) = matrix.dim();
    if row_labels.len() != n || col_labels.len() != m {
        return Err(Error::Shape(format!(
            "{n}x{m} matrix with {} row labels and {} column labels",
            row_labels.len(),
            col_labels.len()
        )));
    }
    if let Some(((r, c), v)) = matrix.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Numeric(format!("entry ({r},{c}) = {v}")));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().from_writer(BufWriter::new(file));
    let to_fmt = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    let mut header = Vec::with_capacity(m + 1);
    header.push("id".to_string());
    header.extend(col_labels.iter().cloned());
    w.write_record(&header).map_err(to_fmt)?;
    let mut row = Vec::with_capacity(m + 1);
    for (label, values) in row_labels.iter().zip(matrix.rows()) {
        row.clear();
        row.push(label.clone());
        row.extend(values.iter().map(|v| format_real(v.as_f64())));
        w.write_record(&row).map_err(to_fmt)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Loads a category file `id,category`.
pub fn load_categories(path: impl AsRef<Path>) -> Result<CategoryMap> {
    let path = path.as_ref();
    let records = read_records(path)?;
    let mut map = CategoryMap::new();
    for (r, rec) in records.iter().enumerate() {
        if r == 0 && rec.len() == 2 && &rec[0] == "id" && &rec[1] == "category" {
            continue;
        }
        if rec.len() != 2 {
            return Err(Error::Format(format!(
                "{} line {}: expected `id,category`",
                path.display(),
                r + 1
            )));
        }
        map.insert(&rec[0], &rec[1])?;
    }
    Ok(map)
}

pub fn save_categories(map: &CategoryMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let to_fmt = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(["id", "category"]).map_err(to_fmt)?;
    for (id, cat) in map.iter() {
        w.write_record([id, cat]).map_err(to_fmt)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads triplets `i,j,k,odd` (an `i,j,k,odd` header line is optional).
/// With `n_objects` set, indices are range-checked.
pub fn load_triplets(path: impl AsRef<Path>, n_objects: Option<usize>) -> Result<TripletSet> {
    let path = path.as_ref();
    let records = read_records(path)?;
    let mut triplets = Vec::with_capacity(records.len());
    for (r, rec) in records.iter().enumerate() {
        if r == 0 && rec.get(0).is_some_and(|f| f.parse::<usize>().is_err()) {
            continue;
        }
        if rec.len() != 4 {
            return Err(Error::Format(format!("{} line {}: expected 4 fields", path.display(), r + 1)));
        }
        let mut idx = [0usize; 4];
        for (slot, field) in idx.iter_mut().zip(rec.iter()) {
            *slot = field.parse().map_err(|_| {
                Error::Format(format!("{} line {}: `{field}` is not an index", path.display(), r + 1))
            })?;
        }
        triplets.push(Triplet::new(idx[0], idx[1], idx[2], idx[3])?);
    }
    let set = TripletSet::new(triplets);
    if let Some(n) = n_objects {
        set.check_range(n)?;
    }
    Ok(set)
}

pub fn save_triplets(set: &TripletSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "i,j,k,odd").map_err(io)?;
    for t in &set.triplets {
        writeln!(w, "{},{},{},{}", t.i, t.j, t.k, t.odd).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes `source_id,target_id,mass` with the row-argmax target of every source row.
pub fn save_plan_argmax<T: Real>(
    plan: ArrayView2<'_, T>,
    source_ids: &[String],
    target_ids: &[String],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let (n, m) = plan.dim();
    if source_ids.len() != n || target_ids.len() != m {
        return Err(Error::Shape(format!("{n}x{m} plan with {}/{} ids", source_ids.len(), target_ids.len())));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let to_fmt = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(["source_id", "target_id", "mass"]).map_err(to_fmt)?;
    for (i, row) in plan.rows().into_iter().enumerate() {
        let j = crate::metrics::argmax_first(row.iter().copied());
        w.write_record([
            source_ids[i].as_str(),
            target_ids[j].as_str(),
            &format_real(row[j].as_f64()),
        ])
        .map_err(to_fmt)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Append-only JSON-lines writer; one serialized record per line, flushed per record.
pub struct JsonlWriter {
    out: BufWriter<File>,
    path: String,
}

impl JsonlWriter {
    /// Opens `path` for appending, or truncates it when `append` is false.
    pub fn open(path: impl AsRef<Path>, append: bool) -> Result<Self> {
        let path = path.as_ref();
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .append(append)
            .truncate(!append)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            out: BufWriter::new(file),
            path: path.display().to_string(),
        })
    }

    pub fn append<R: Serialize>(&mut self, record: &R) -> Result<()> {
        let line = serde_json::to_string(record).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(self.out, "{line}")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

/// Reads every record of a JSON-lines file; a missing file reads as empty.
/// A truncated final line (interrupted writer) is skipped.
pub fn read_jsonl<R: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<R>> {
    let path = path.as_ref();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(path, e))?;
    let last = lines.len().saturating_sub(1);
    let mut out = Vec::with_capacity(lines.len());
    for (n, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(r) => out.push(r),
            Err(_) if n == last => break,
            Err(e) => return Err(Error::Format(format!("{} line {}: {e}", path.display(), n + 1))),
        }
    }
    Ok(out)
}
