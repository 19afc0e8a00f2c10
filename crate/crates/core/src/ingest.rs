//! CSV ingestion of perturbation screens.
//!
//! Two input layouts are supported:
//!
//! - a gene-major log-fold-change table, header `gene,<pert1>,<pert2>,...`;
//! - a cell-level table, header `cell_id,perturbation,<gene1>,...`, holding
//!   log-normalized expression, from which LFCs are derived.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use thiserror::Error;

use crate::affected_sets::AffectedSets;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("bad header: {0}")]
    Header(String),
    #[error("line {line}: expected {expected} fields, found {found}")]
    Ragged { line: u64, expected: usize, found: usize },
    #[error("line {line}, column '{column}': cannot parse '{value}' as a number")]
    NonNumeric { line: u64, column: String, value: String },
    #[error("duplicate gene name '{0}'")]
    DuplicateGene(String),
    #[error("control label '{0}' not found")]
    MissingControl(String),
    #[error("no data rows")]
    Empty,
}

/// Perturbation × gene log-fold-change matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbMatrix {
    pub genes: Vec<String>,
    pub perturbations: Vec<String>,
    pub lfc: Array2<f64>,
    pub cell_counts: Option<Vec<usize>>,
}

impl PerturbMatrix {
    pub fn n_genes(&self) -> usize {
        self.genes.len()
    }

    pub fn n_perturbations(&self) -> usize {
        self.perturbations.len()
    }

    pub fn perturbation_index(&self, name: &str) -> Option<usize> {
        self.perturbations.iter().position(|p| p == name)
    }

    /// Node id per perturbation: the index of the gene with the same name
    /// when there is one, otherwise `n_genes + j`. Upstream relations between
    /// perturbations are read off these ids.
    pub fn perturbation_nodes(&self) -> Vec<usize> {
        let by_name: HashMap<&str, usize> = self.genes.iter().enumerate().map(|(k, g)| (g.as_str(), k)).collect();
        self.perturbations
            .iter()
            .enumerate()
            .map(|(j, p)| by_name.get(p.as_str()).copied().unwrap_or(self.genes.len() + j))
            .collect()
    }
}

fn open(path: &Path) -> Result<BufReader<File>, IngestError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| IngestError::Io { path: path.display().to_string(), source })
}

fn parse_cell(s: &str, line: u64, column: &str) -> Result<f64, IngestError> {
    let t = s.trim();
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(IngestError::NonNumeric { line, column: column.to_string(), value: t.to_string() }),
    }
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().flexible(true).from_reader(r)
}

pub fn load_lfc_csv(path: &Path) -> Result<PerturbMatrix, IngestError> {
    read_lfc_csv(open(path)?)
}

pub fn read_lfc_csv<R: Read>(r: R) -> Result<PerturbMatrix, IngestError> {
    let mut rd = reader(r);
    let header = rd.headers()?.clone();
    if header.get(0).map(str::trim) != Some("gene") {
        return Err(IngestError::Header("first column must be 'gene'".into()));
    }
    let perturbations: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    if perturbations.is_empty() {
        return Err(IngestError::Header("no perturbation columns".into()));
    }
    let width = header.len();
    let mut genes = Vec::new();
    let mut seen = BTreeSet::new();
    let mut values = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(IngestError::Ragged { line, expected: width, found: rec.len() });
        }
        let gene = rec[0].trim().to_string();
        if !seen.insert(gene.clone()) {
            return Err(IngestError::DuplicateGene(gene));
        }
        for (k, cell) in rec.iter().enumerate().skip(1) {
            values.push(parse_cell(cell, line, &perturbations[k - 1])?);
        }
        genes.push(gene);
    }
    if genes.is_empty() {
        return Err(IngestError::Empty);
    }
    let gene_major = Array2::from_shape_vec((genes.len(), perturbations.len()), values).expect("shape checked");
    Ok(PerturbMatrix { genes, perturbations, lfc: gene_major.t().to_owned(), cell_counts: None })
}

pub fn save_lfc_csv(m: &PerturbMatrix, path: &Path) -> Result<(), IngestError> {
    let f = File::create(path).map_err(|source| IngestError::Io { path: path.display().to_string(), source })?;
    write_lfc_csv(m, BufWriter::new(f))
}

/// Writes the gene-major layout; values use the shortest representation that
/// parses back to the same `f64`.
pub fn write_lfc_csv<W: Write>(m: &PerturbMatrix, w: W) -> Result<(), IngestError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(std::iter::once("gene").chain(m.perturbations.iter().map(String::as_str)))?;
    for (g, name) in m.genes.iter().enumerate() {
        let mut row = vec![name.clone()];
        row.extend(m.lfc.column(g).iter().map(|v| v.to_string()));
        wr.write_record(&row)?;
    }
    wr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn load_cells_csv(path: &Path, control_label: &str, min_cells: usize, min_expr_frac: f64) -> Result<PerturbMatrix, IngestError> {
    read_cells_csv(open(path)?, control_label, min_cells, min_expr_frac)
}

/// Cell-level ingestion. Genes nonzero in fewer than `min_expr_frac` of all
/// cells are dropped, as are non-control perturbations with fewer than
/// `min_cells` cells. `LFC = mean_perturbation − mean_control`.
pub fn read_cells_csv<R: Read>(r: R, control_label: &str, min_cells: usize, min_expr_frac: f64) -> Result<PerturbMatrix, IngestError> {
    let mut rd = reader(r);
    let header = rd.headers()?.clone();
    if header.len() < 3 || header[0].trim() != "cell_id" || header[1].trim() != "perturbation" {
        return Err(IngestError::Header("expected 'cell_id,perturbation,<genes...>'".into()));
    }
    let all_genes: Vec<String> = header.iter().skip(2).map(|s| s.trim().to_string()).collect();
    let mut seen = BTreeSet::new();
    for g in &all_genes {
        if !seen.insert(g) {
            return Err(IngestError::DuplicateGene(g.clone()));
        }
    }
    let width = header.len();
    let g = all_genes.len();
    let mut order: Vec<String> = Vec::new();
    let mut sums: BTreeMap<String, (usize, Vec<f64>)> = BTreeMap::new();
    let mut nonzero = vec![0usize; g];
    let mut total = 0usize;
    for rec in rd.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(IngestError::Ragged { line, expected: width, found: rec.len() });
        }
        let label = rec[1].trim().to_string();
        if !sums.contains_key(&label) {
            order.push(label.clone());
        }
        let (count, acc) = sums.entry(label).or_insert_with(|| (0, vec![0.0; g]));
        *count += 1;
        for k in 0..g {
            let v = parse_cell(&rec[k + 2], line, &all_genes[k])?;
            acc[k] += v;
            nonzero[k] += usize::from(v != 0.0);
        }
        total += 1;
    }
    if total == 0 {
        return Err(IngestError::Empty);
    }
    let (ctrl_n, ctrl_sum) = sums.get(control_label).ok_or_else(|| IngestError::MissingControl(control_label.to_string()))?;
    let keep: Vec<usize> = (0..g).filter(|&k| nonzero[k] as f64 >= min_expr_frac * total as f64).collect();
    let perts: Vec<&String> = order
        .iter()
        .filter(|p| p.as_str() != control_label && sums[*p].0 >= min_cells)
        .collect();
    let mut lfc = Array2::zeros((perts.len(), keep.len()));
    let mut counts = Vec::with_capacity(perts.len());
    for (r, p) in perts.iter().enumerate() {
        let (n, s) = &sums[*p];
        counts.push(*n);
        for (c, &k) in keep.iter().enumerate() {
            lfc[[r, c]] = s[k] / *n as f64 - ctrl_sum[k] / *ctrl_n as f64;
        }
    }
    Ok(PerturbMatrix {
        genes: keep.iter().map(|&k| all_genes[k].clone()).collect(),
        perturbations: perts.into_iter().cloned().collect(),
        lfc,
        cell_counts: Some(counts),
    })
}

/// Genes (by index) in the top `⌈top_frac·|genes|⌉` by |LFC| for one row,
/// ties broken by lower index.
pub fn top_genes(row: ndarray::ArrayView1<f64>, top_frac: f64) -> BTreeSet<usize> {
    let k = ((top_frac * row.len() as f64) - 1e-9).ceil().clamp(0.0, row.len() as f64) as usize;
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].abs().total_cmp(&row[a].abs()).then(a.cmp(&b)));
    idx.truncate(k);
    idx.into_iter().collect()
}

/// Proxy affected sets keyed by [`PerturbMatrix::perturbation_nodes`].
pub fn proxy_affected_sets(m: &PerturbMatrix, top_frac: f64) -> AffectedSets {
    let nodes = m.perturbation_nodes();
    let sets = m.lfc.rows().into_iter().zip(nodes).map(|(row, a)| (a, top_genes(row, top_frac))).collect();
    AffectedSets::new(top_frac, sets)
}
