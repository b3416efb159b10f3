//! Drug-screen ingestion and preprocessing.
//!
//! Input is three CSV exports in one directory:
//!
//! - `expression.csv`: `cell_id` followed by one numeric column per gene.
//! - `response.csv`: `cell_id` followed by one column per drug, headed by the
//!   drug id. Empty cells and the literal `NA` mark missing responses.
//! - `fingerprints.csv`: `drug_id` followed by 0/1 fingerprint bits.
//!
//! [`prepare`] filters missingness, projects expression onto principal
//! components and scales contexts and responses into `[0, 1]`. A
//! [`PreparedScreen`] is written back in the same three-file layout plus a
//! `meta.json` provenance record, so it can be loaded again with
//! [`load_screen`].

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bandit::ActionSet;
use crate::error::{Error, Result};
use crate::tensor::{symmetric_eig, Matrix};

pub const EXPRESSION_FILE: &str = "expression.csv";
pub const RESPONSE_FILE: &str = "response.csv";
pub const FINGERPRINT_FILE: &str = "fingerprints.csv";
pub const META_FILE: &str = "meta.json";

/// Cells missing more than this share of responses are dropped.
pub const CELL_MISSING_THRESHOLD: f64 = 0.7;

pub const DEFAULT_PCA_DIMS: usize = 500;

/// Eigenvalues below this (relative to the largest) count as zero variance.
const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleAxis {
    /// Each column scaled independently.
    Columns,
    /// One min and max over the whole matrix.
    All,
}

/// Min-max scaling to `[0, 1]`. Constant columns (or a constant matrix for
/// [`ScaleAxis::All`]) map to 0.5. NaN entries stay NaN and are ignored when
/// finding the range.
pub fn minmax_scale(m: &Matrix, axis: ScaleAxis) -> Matrix {
    fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
        values
            .filter(|v| !v.is_nan())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
    }
    fn scale(x: f64, lo: f64, hi: f64) -> f64 {
        if x.is_nan() {
            x
        } else if hi > lo {
            ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
        } else {
            0.5
        }
    }
    match axis {
        ScaleAxis::All => {
            let (lo, hi) = range(m.data().iter().copied());
            m.map(|x| scale(x, lo, hi))
        }
        ScaleAxis::Columns => {
            let ranges: Vec<(f64, f64)> = (0..m.cols())
                .map(|c| range((0..m.rows()).map(|r| m.get(r, c))))
                .collect();
            Matrix::from_fn(m.rows(), m.cols(), |r, c| {
                scale(m.get(r, c), ranges[c].0, ranges[c].1)
            })
        }
    }
}

/// A screen as exported: expression, responses with missing values (NaN) and
/// drug fingerprints.
#[derive(Debug, Clone, PartialEq)]
pub struct RawScreen {
    pub cell_ids: Vec<String>,
    pub gene_ids: Vec<String>,
    /// `N × G`.
    pub expression: Matrix,
    pub drug_ids: Vec<String>,
    /// `N × K`, NaN marks a missing response.
    pub response: Matrix,
    /// `K × d₂`, entries 0 or 1.
    pub fingerprints: Matrix,
}

impl RawScreen {
    pub fn validate(&self) -> Result<()> {
        let n = self.cell_ids.len();
        let k = self.drug_ids.len();
        if self.expression.shape() != (n, self.gene_ids.len()) {
            return Err(Error::shape(format!(
                "expression is {}x{}, expected {n}x{}",
                self.expression.rows(),
                self.expression.cols(),
                self.gene_ids.len()
            )));
        }
        if self.response.shape() != (n, k) {
            return Err(Error::shape(format!(
                "response is {}x{}, expected {n}x{k}",
                self.response.rows(),
                self.response.cols()
            )));
        }
        if self.fingerprints.rows() != k {
            return Err(Error::shape(format!(
                "{} fingerprints for {k} drugs",
                self.fingerprints.rows()
            )));
        }
        if self
            .fingerprints
            .data()
            .iter()
            .any(|&b| b != 0.0 && b != 1.0)
        {
            return Err(Error::contract("fingerprints must be strictly 0/1"));
        }
        self.expression.ensure_finite("expression")?;
        if self.response.data().iter().any(|v| v.is_infinite()) {
            return Err(Error::numeric("response contains infinite values"));
        }
        Ok(())
    }

    pub fn missing_count(&self) -> usize {
        self.response.data().iter().filter(|v| v.is_nan()).count()
    }
}

/// Drops cells missing more than 70% of responses, then drops every drug
/// still missing a response in any remaining cell.
pub fn filter_missing(raw: &RawScreen) -> Result<RawScreen> {
    raw.validate()?;
    let k = raw.drug_ids.len();
    let keep_cells: Vec<usize> = (0..raw.cell_ids.len())
        .filter(|&r| {
            let missing = raw.response.row(r).iter().filter(|v| v.is_nan()).count();
            k > 0 && (missing as f64) / (k as f64) <= CELL_MISSING_THRESHOLD
        })
        .collect();
    let keep_drugs: Vec<usize> = (0..k)
        .filter(|&c| keep_cells.iter().all(|&r| !raw.response.get(r, c).is_nan()))
        .collect();
    Ok(RawScreen {
        cell_ids: keep_cells
            .iter()
            .map(|&r| raw.cell_ids[r].clone())
            .collect(),
        gene_ids: raw.gene_ids.clone(),
        expression: raw.expression.select_rows(&keep_cells),
        drug_ids: keep_drugs
            .iter()
            .map(|&c| raw.drug_ids[c].clone())
            .collect(),
        response: raw
            .response
            .select_rows(&keep_cells)
            .select_cols(&keep_drugs),
        fingerprints: raw.fingerprints.select_rows(&keep_drugs),
    })
}

/// Principal components of a data matrix.
#[derive(Debug, Clone)]
pub struct Pca {
    /// `N × d` projections of the centered data.
    pub scores: Matrix,
    /// `G × d`, unit columns.
    pub loadings: Matrix,
    /// Sample variance along each component.
    pub variances: Vec<f64>,
    /// Share of total variance per component.
    pub explained_ratio: Vec<f64>,
    pub means: Vec<f64>,
}

/// Projects the column-centered matrix onto its top `dims` principal
/// components. Uses the `N × N` Gram matrix when genes outnumber samples.
/// Each component's largest-magnitude loading is made positive.
pub fn pca_project(matrix: &Matrix, dims: usize) -> Result<Pca> {
    let (n, g) = matrix.shape();
    if dims == 0 || dims > n.min(g) {
        return Err(Error::contract(format!(
            "cannot take {dims} components from a {n}x{g} matrix"
        )));
    }
    matrix.ensure_finite("PCA input")?;
    let means = matrix.column_means();
    let centered = Matrix::from_fn(n, g, |r, c| matrix.get(r, c) - means[c]);
    let denom = (n.max(2) - 1) as f64;

    let (values, mut loadings) = if g <= n {
        let cov = centered.t_matmul(&centered)?.map(|x| x / denom);
        let (values, vectors) = symmetric_eig(&cov)?;
        let keep: Vec<usize> = (0..dims).collect();
        (values[..dims].to_vec(), vectors.select_cols(&keep))
    } else {
        let gram = centered.matmul_t(&centered)?.map(|x| x / denom);
        let (values, vectors) = symmetric_eig(&gram)?;
        let top = values.first().copied().unwrap_or(0.0).max(0.0);
        let mut loadings = Matrix::zeros(g, dims);
        for j in 0..dims {
            if values[j] <= RANK_TOLERANCE * top.max(f64::MIN_POSITIVE) {
                continue;
            }
            // v = Xᵀu / ‖Xᵀu‖
            let mut v = vec![0.0; g];
            for r in 0..n {
                let u = vectors.get(r, j);
                for (vc, x) in v.iter_mut().zip(centered.row(r)) {
                    *vc += u * x;
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for (c, vc) in v.iter().enumerate() {
                loadings.set(c, j, vc / norm);
            }
        }
        (values[..dims].to_vec(), loadings)
    };

    // Components at or below numerical rank carry only rounding noise; zero
    // them so they score as constants rather than amplified noise.
    let top = values.first().copied().unwrap_or(0.0).max(0.0);
    for j in 0..dims {
        if values[j] <= RANK_TOLERANCE * top.max(f64::MIN_POSITIVE) {
            for c in 0..g {
                loadings.set(c, j, 0.0);
            }
        }
    }

    for j in 0..dims {
        let mut best = 0;
        for c in 1..g {
            if loadings.get(c, j).abs() > loadings.get(best, j).abs() {
                best = c;
            }
        }
        if loadings.get(best, j) < 0.0 {
            for c in 0..g {
                loadings.set(c, j, -loadings.get(c, j));
            }
        }
    }

    let scores = centered.matmul(&loadings)?;
    let total: f64 = (0..g)
        .map(|c| (0..n).map(|r| centered.get(r, c).powi(2)).sum::<f64>() / denom)
        .sum();
    let variances: Vec<f64> = values
        .iter()
        .map(|&v| {
            if v <= RANK_TOLERANCE * top.max(f64::MIN_POSITIVE) {
                0.0
            } else {
                v
            }
        })
        .collect();
    let explained_ratio = variances
        .iter()
        .map(|v| if total > 0.0 { v / total } else { 0.0 })
        .collect();
    Ok(Pca {
        scores,
        loadings,
        variances,
        explained_ratio,
        means,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrepareOptions {
    /// Requested context dimension; clamped to `min(N, G)`.
    pub dims: usize,
    /// Negate responses before scaling (for exports shipped as raw IC50).
    pub negate_response: bool,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        Self {
            dims: DEFAULT_PCA_DIMS,
            negate_response: false,
        }
    }
}

/// What [`prepare`] did to a screen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub input_cells: usize,
    pub input_drugs: usize,
    pub genes: usize,
    pub dropped_cells: Vec<String>,
    pub dropped_drugs: Vec<String>,
    pub cell_missing_threshold: f64,
    pub requested_components: usize,
    pub components: usize,
    /// Explained-variance share of each output context column, in output order.
    pub explained_variance_ratio: Vec<f64>,
    /// Principal-component rank (0 = largest variance) of each output column.
    pub component_rank: Vec<usize>,
    pub negate_response: bool,
}

/// A fully observed, `[0, 1]`-scaled screen ready for replay.
#[derive(Debug, Clone)]
pub struct PreparedScreen {
    pub cell_ids: Vec<String>,
    /// `N' × d₁`.
    pub contexts: Matrix,
    pub drug_ids: Vec<String>,
    /// `N' × K'`.
    pub responses: Matrix,
    pub actions: ActionSet,
    pub provenance: Provenance,
}

/// Filter → PCA → per-column context scaling → whole-table response scaling.
///
/// Context columns are ordered by descending variance after scaling, which
/// makes `prepare` idempotent on its own output.
pub fn prepare(raw: &RawScreen, opts: PrepareOptions) -> Result<PreparedScreen> {
    let filtered = filter_missing(raw)?;
    let (n, g) = filtered.expression.shape();
    if n == 0 || filtered.drug_ids.is_empty() {
        return Err(Error::contract(
            "no cells or drugs survive the missingness filter",
        ));
    }
    let dims = opts.dims.min(n).min(g);
    let pca = pca_project(&filtered.expression, dims)?;
    let scaled = minmax_scale(&pca.scores, ScaleAxis::Columns);

    let col_var: Vec<f64> = (0..dims)
        .map(|c| {
            let col = scaled.column(c);
            let mean = col.iter().sum::<f64>() / n as f64;
            col.iter().map(|x| (x - mean).powi(2)).sum::<f64>()
        })
        .collect();
    let mut order: Vec<usize> = (0..dims).collect();
    order.sort_by(|&a, &b| col_var[b].total_cmp(&col_var[a]).then(a.cmp(&b)));
    let contexts = scaled.select_cols(&order);

    let response = if opts.negate_response {
        filtered.response.map(|x| -x)
    } else {
        filtered.response.clone()
    };
    let responses = minmax_scale(&response, ScaleAxis::All);
    let actions = ActionSet::new(filtered.fingerprints.clone(), filtered.drug_ids.clone())?;

    let dropped_cells = raw
        .cell_ids
        .iter()
        .filter(|id| !filtered.cell_ids.contains(id))
        .cloned()
        .collect();
    let dropped_drugs = raw
        .drug_ids
        .iter()
        .filter(|id| !filtered.drug_ids.contains(id))
        .cloned()
        .collect();
    Ok(PreparedScreen {
        cell_ids: filtered.cell_ids.clone(),
        contexts,
        drug_ids: filtered.drug_ids.clone(),
        responses,
        actions,
        provenance: Provenance {
            input_cells: raw.cell_ids.len(),
            input_drugs: raw.drug_ids.len(),
            genes: g,
            dropped_cells,
            dropped_drugs,
            cell_missing_threshold: CELL_MISSING_THRESHOLD,
            requested_components: opts.dims,
            components: dims,
            explained_variance_ratio: order.iter().map(|&i| pca.explained_ratio[i]).collect(),
            component_rank: order,
            negate_response: opts.negate_response,
        },
    })
}

impl PreparedScreen {
    /// Context column names: `pc1`, `pc2`, ... by principal-component rank.
    pub fn context_names(&self) -> Vec<String> {
        self.provenance
            .component_rank
            .iter()
            .map(|r| format!("pc{}", r + 1))
            .collect()
    }

    /// Same table viewed as a raw screen (contexts as expression).
    pub fn to_raw(&self) -> RawScreen {
        RawScreen {
            cell_ids: self.cell_ids.clone(),
            gene_ids: self.context_names(),
            expression: self.contexts.clone(),
            drug_ids: self.drug_ids.clone(),
            response: self.responses.clone(),
            fingerprints: self.actions.features().clone(),
        }
    }

    /// Writes `expression.csv`, `response.csv`, `fingerprints.csv` and
    /// `meta.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let bits: Vec<String> = (0..self.actions.feature_dim())
            .map(|i| format!("bit{i}"))
            .collect();
        write_table(
            &dir.join(EXPRESSION_FILE),
            "cell_id",
            &self.context_names(),
            &self.cell_ids,
            &self.contexts,
        )?;
        write_table(
            &dir.join(RESPONSE_FILE),
            "cell_id",
            &self.drug_ids,
            &self.cell_ids,
            &self.responses,
        )?;
        write_table(
            &dir.join(FINGERPRINT_FILE),
            "drug_id",
            &bits,
            &self.drug_ids,
            self.actions.features(),
        )?;
        let meta = serde_json::to_string_pretty(&self.provenance)
            .map_err(|e| Error::numeric(format!("serializing provenance: {e}")))?;
        let path = dir.join(META_FILE);
        fs::write(&path, meta + "\n").map_err(|e| Error::io(path, e))
    }
}

fn write_table(
    path: &Path,
    id_header: &str,
    headers: &[String],
    ids: &[String],
    values: &Matrix,
) -> Result<()> {
    let mut out = String::new();
    out.push_str(id_header);
    for h in headers {
        out.push(',');
        out.push_str(h);
    }
    out.push('\n');
    for (r, id) in ids.iter().enumerate() {
        out.push_str(id);
        for v in values.row(r) {
            out.push(',');
            if v.is_nan() {
                out.push_str("NA");
            } else {
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Locations of the three input tables.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreenPaths {
    pub expression: PathBuf,
    pub response: PathBuf,
    pub fingerprints: PathBuf,
}

impl ScreenPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            expression: dir.join(EXPRESSION_FILE),
            response: dir.join(RESPONSE_FILE),
            fingerprints: dir.join(FINGERPRINT_FILE),
        }
    }
}

struct Table {
    headers: Vec<String>,
    ids: Vec<String>,
    /// Line number of each data row, for diagnostics.
    lines: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, PartialEq)]
enum Cells {
    Numeric,
    AllowMissing,
    Binary,
}

fn parse_err(file: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn read_table(path: &Path, cells: Cells) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    if header.len() < 2 {
        return Err(parse_err(
            path,
            1,
            "expected an id column and at least one value column",
        ));
    }
    let headers: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut table = Table {
        headers,
        ids: Vec::new(),
        lines: Vec::new(),
        rows: Vec::new(),
    };
    let mut seen = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != header.len() {
            return Err(parse_err(
                path,
                line,
                format!("{} fields, header has {}", record.len(), header.len()),
            ));
        }
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(parse_err(path, line, "empty id"));
        }
        if let Some(prev) = seen.insert(id.clone(), line) {
            return Err(parse_err(
                path,
                line,
                format!("id {id} already defined on line {prev}"),
            ));
        }
        let mut row = Vec::with_capacity(header.len() - 1);
        for (c, field) in record.iter().enumerate().skip(1) {
            let column = &header[c];
            let value = if field.is_empty() || field == "NA" {
                if cells != Cells::AllowMissing {
                    return Err(parse_err(
                        path,
                        line,
                        format!("missing value in column {column}"),
                    ));
                }
                f64::NAN
            } else {
                let v: f64 = field.parse().map_err(|_| {
                    parse_err(
                        path,
                        line,
                        format!("column {column}: '{field}' is not a number"),
                    )
                })?;
                if !v.is_finite() {
                    return Err(parse_err(
                        path,
                        line,
                        format!("column {column}: non-finite value"),
                    ));
                }
                if cells == Cells::Binary && v != 0.0 && v != 1.0 {
                    return Err(parse_err(
                        path,
                        line,
                        format!("column {column}: fingerprint bit '{field}' is not 0/1"),
                    ));
                }
                v
            };
            row.push(value);
        }
        table.ids.push(id);
        table.lines.push(line);
        table.rows.push(row);
    }
    if table.rows.is_empty() {
        return Err(parse_err(path, 1, "no data rows"));
    }
    Ok(table)
}

/// Reads and joins the three tables. Rows of `expression.csv` and
/// `fingerprints.csv` are reordered to follow `response.csv`.
pub fn load_screen(paths: &ScreenPaths) -> Result<RawScreen> {
    let expr = read_table(&paths.expression, Cells::Numeric)?;
    let resp = read_table(&paths.response, Cells::AllowMissing)?;
    let fp = read_table(&paths.fingerprints, Cells::Binary)?;

    let expr_index: HashMap<&str, usize> = expr
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut expr_rows = Vec::with_capacity(resp.ids.len());
    for (id, line) in resp.ids.iter().zip(&resp.lines) {
        match expr_index.get(id.as_str()) {
            Some(&i) => expr_rows.push(i),
            None => {
                return Err(parse_err(
                    &paths.response,
                    *line,
                    format!("cell {id} has no row in {}", paths.expression.display()),
                ))
            }
        }
    }
    if expr.ids.len() != resp.ids.len() {
        let extra = expr
            .ids
            .iter()
            .zip(&expr.lines)
            .find(|(id, _)| !resp.ids.contains(id))
            .expect("row counts differ so some expression id is unmatched");
        return Err(parse_err(
            &paths.expression,
            *extra.1,
            format!(
                "cell {} has no row in {}",
                extra.0,
                paths.response.display()
            ),
        ));
    }

    let fp_index: HashMap<&str, usize> = fp
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut fp_rows = Vec::with_capacity(resp.headers.len());
    for drug in &resp.headers {
        match fp_index.get(drug.as_str()) {
            Some(&i) => fp_rows.push(i),
            None => {
                return Err(parse_err(
                    &paths.response,
                    1,
                    format!("drug {drug} has no fingerprint"),
                ))
            }
        }
    }
    if fp.ids.len() != resp.headers.len() {
        let (id, line) = fp
            .ids
            .iter()
            .zip(&fp.lines)
            .find(|(id, _)| !resp.headers.contains(id))
            .expect("row counts differ so some fingerprint id is unmatched");
        return Err(parse_err(
            &paths.fingerprints,
            *line,
            format!("drug {id} does not appear in {}", paths.response.display()),
        ));
    }

    let expression = Matrix::from_rows(
        &expr_rows
            .iter()
            .map(|&i| expr.rows[i].clone())
            .collect::<Vec<_>>(),
    )?;
    let response = Matrix::from_rows(&resp.rows)?;
    let fingerprints = Matrix::from_rows(
        &fp_rows
            .iter()
            .map(|&i| fp.rows[i].clone())
            .collect::<Vec<_>>(),
    )?;
    let raw = RawScreen {
        cell_ids: resp.ids,
        gene_ids: expr.headers,
        expression,
        drug_ids: resp.headers,
        response,
        fingerprints,
    };
    raw.validate()?;
    Ok(raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;
    use rand::Rng;

    const NA: f64 = f64::NAN;

    fn screen(response: Matrix) -> RawScreen {
        let (n, k) = response.shape();
        RawScreen {
            cell_ids: (0..n).map(|i| format!("c{i}")).collect(),
            gene_ids: vec!["g0".into(), "g1".into()],
            expression: Matrix::from_fn(n, 2, |r, c| (r * 2 + c) as f64),
            drug_ids: (0..k).map(|i| format!("d{i}")).collect(),
            response,
            fingerprints: Matrix::from_fn(k, 3, |r, c| ((r >> c) & 1) as f64),
        }
    }

    #[test]
    fn minmax_columns() {
        let m = Matrix::from_rows(&[[0.0, 3.0], [5.0, 3.0], [10.0, 3.0]]).unwrap();
        let s = minmax_scale(&m, ScaleAxis::Columns);
        assert_eq!(s.column(0), vec![0.0, 0.5, 1.0]);
        assert_eq!(s.column(1), vec![0.5, 0.5, 0.5]);
        let g = minmax_scale(&m, ScaleAxis::All);
        assert_eq!(g.column(1), vec![0.3, 0.3, 0.3]);
    }

    #[test]
    fn fully_observed_table_unchanged() {
        let raw = screen(Matrix::from_fn(3, 2, |r, c| (r + c) as f64));
        assert_eq!(filter_missing(&raw).unwrap(), raw);
    }

    #[test]
    fn fully_missing_cell_is_dropped() {
        let raw = screen(Matrix::from_rows(&[[0.1, 0.2], [NA, NA], [0.3, 0.4]]).unwrap());
        let f = filter_missing(&raw).unwrap();
        assert_eq!(f.cell_ids, vec!["c0", "c2"]);
        assert_eq!(f.drug_ids, vec!["d0", "d1"]);
        assert_eq!(f.missing_count(), 0);
    }

    #[test]
    fn five_by_four_crafted_pattern() {
        // c0: 1/4 missing (kept)  c1: 3/4 missing = 75% > 70% (dropped)
        // c2: complete (kept)     c3: 4/4 missing (dropped)  c4: 1/4 missing (kept)
        // Among c0, c2, c4: d1 missing in c0, d3 missing in c4 → drugs d0, d2 survive.
        let raw = screen(
            Matrix::from_rows(&[
                [0.1, NA, 0.3, 0.4],
                [NA, NA, NA, 0.2],
                [0.5, 0.6, 0.7, 0.8],
                [NA, NA, NA, NA],
                [0.9, 0.1, 0.2, NA],
            ])
            .unwrap(),
        );
        let f = filter_missing(&raw).unwrap();
        assert_eq!(f.cell_ids, vec!["c0", "c2", "c4"]);
        assert_eq!(f.drug_ids, vec!["d0", "d2"]);
        assert_eq!(f.response.data(), &[0.1, 0.3, 0.5, 0.7, 0.9, 0.2]);
        assert_eq!(f.fingerprints.row(1), raw.fingerprints.row(2));
    }

    #[test]
    fn pca_line_in_3d() {
        let m = Matrix::from_fn(30, 3, |r, c| (r as f64 - 7.0) * [1.0, -2.0, 0.5][c] + 4.0);
        let p = pca_project(&m, 2).unwrap();
        assert!(p.explained_ratio[0] > 0.9999);
        // largest-magnitude loading is positive
        assert!(p.loadings.get(1, 0) > 0.0);
    }

    #[test]
    fn pca_centered_orthogonal_data_reproduces_coordinates() {
        let m = Matrix::from_rows(&[[3.0, 0.0], [-3.0, 0.0], [0.0, 1.0], [0.0, -1.0]]).unwrap();
        let p = pca_project(&m, 2).unwrap();
        for r in 0..4 {
            for c in 0..2 {
                assert!((p.scores.get(r, c).abs() - m.get(r, c).abs()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pca_full_rank_reconstruction() {
        let mut rng = rng_from_seed(2);
        let m = Matrix::from_fn(20, 8, |_, _| rng.random_range(-1.0..1.0));
        let p = pca_project(&m, 8).unwrap();
        let recon = p.scores.matmul_t(&p.loadings).unwrap();
        for r in 0..20 {
            for c in 0..8 {
                let centered = m.get(r, c) - p.means[c];
                assert!((recon.get(r, c) - centered).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn pca_gram_route_matches_covariance_route() {
        let mut rng = rng_from_seed(4);
        let wide = Matrix::from_fn(6, 15, |_, _| rng.random_range(-1.0..1.0));
        let p = pca_project(&wide, 4).unwrap();
        // Reference via the G×G covariance.
        let means = wide.column_means();
        let c = Matrix::from_fn(6, 15, |r, j| wide.get(r, j) - means[j]);
        let cov = c.t_matmul(&c).unwrap().map(|x| x / 5.0);
        let (vals, _) = symmetric_eig(&cov).unwrap();
        for j in 0..4 {
            assert!((p.variances[j] - vals[j]).abs() < 1e-10);
        }
        let gram = p.scores.t_matmul(&p.scores).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                if a != b {
                    assert!(gram.get(a, b).abs() < 1e-8 * gram.get(a, a).max(1.0));
                }
            }
        }
        assert!(pca_project(&wide, 7).is_err());
    }

    #[test]
    fn load_reports_line_of_bad_fingerprint() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join(EXPRESSION_FILE),
            "cell_id,g1\nc1,0.5\nc2,0.7\n",
        )
        .unwrap();
        fs::write(
            dir.path().join(RESPONSE_FILE),
            "cell_id,dA,dB\nc2,0.1,NA\nc1,,0.3\n",
        )
        .unwrap();
        fs::write(
            dir.path().join(FINGERPRINT_FILE),
            "drug_id,b0,b1\ndB,1,0\ndA,0,2\n",
        )
        .unwrap();
        let err = load_screen(&ScreenPaths::in_dir(dir.path())).unwrap_err();
        match err {
            Error::Parse {
                file,
                line,
                message,
            } => {
                assert!(file.ends_with(FINGERPRINT_FILE));
                assert_eq!(line, 3);
                assert!(message.contains("0/1"), "{message}");
            }
            other => panic!("unexpected {other}"),
        }

        fs::write(
            dir.path().join(FINGERPRINT_FILE),
            "drug_id,b0,b1\ndB,1,0\ndA,0,1\n",
        )
        .unwrap();
        let raw = load_screen(&ScreenPaths::in_dir(dir.path())).unwrap();
        assert_eq!(raw.cell_ids, vec!["c2", "c1"]);
        assert_eq!(raw.expression.column(0), vec![0.7, 0.5]);
        assert_eq!(raw.fingerprints.row(0), &[0.0, 1.0]);
        assert!(raw.response.get(0, 1).is_nan() && raw.response.get(1, 0).is_nan());
    }

    #[test]
    fn load_rejects_id_mismatch_and_malformed_rows() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join(EXPRESSION_FILE),
            "cell_id,g1\nc1,0.5\nc3,0.7\n",
        )
        .unwrap();
        fs::write(
            dir.path().join(RESPONSE_FILE),
            "cell_id,dA\nc1,0.1\nc2,0.2\n",
        )
        .unwrap();
        fs::write(dir.path().join(FINGERPRINT_FILE), "drug_id,b0\ndA,1\n").unwrap();
        let err = load_screen(&ScreenPaths::in_dir(dir.path())).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");

        fs::write(
            dir.path().join(EXPRESSION_FILE),
            "cell_id,g1\nc1,0.5\nc2,abc\n",
        )
        .unwrap();
        let err = load_screen(&ScreenPaths::in_dir(dir.path())).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");

        fs::write(
            dir.path().join(EXPRESSION_FILE),
            "cell_id,g1\nc1,0.5,1\nc2,0.1\n",
        )
        .unwrap();
        let err = load_screen(&ScreenPaths::in_dir(dir.path())).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }
}
