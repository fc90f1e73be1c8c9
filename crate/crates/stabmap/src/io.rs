//! File formats: edge lists, feature matrices (CSV and the SGMX binary),
//! label files, flat config files, and JSON sidecars.
//!
//! Output JSON is deterministic: struct fields serialize in declared order
//! and every float is rounded to 12 significant digits first, so identical
//! inputs and seeds reproduce byte-identical files.

use crate::error::{Error, Result};
use crate::graph::{IngestStats, SparseGraph};
use crate::manifold::{Clusters, Manifold, ManifoldConfig, ManifoldProvenance};
use crate::matrix::RowMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Round to 12 significant digits; NaN and infinities pass through.
pub fn round_sig12(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    let exp = v.abs().log10().floor() as i32;
    let scale = 10f64.powi(11 - exp);
    (v * scale).round() / scale
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        reason: reason.into(),
    }
}

/// An ingested graph: densely remapped ids plus the original-id map and
/// cleanup counters.
#[derive(Debug, Clone)]
pub struct LoadedGraph {
    pub graph: SparseGraph,
    /// Original id of each dense node, ascending.
    pub node_ids: Vec<u64>,
    pub stats: IngestStats,
}

/// Read a tab-separated edge list: `u<TAB>v[<TAB>w]`, `#` comments, ids are
/// arbitrary nonnegative integers remapped densely in ascending order.
pub fn read_edge_list(path: impl AsRef<Path>) -> Result<LoadedGraph> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let mut raw: Vec<(u64, u64, f64)> = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        let u: u64 = parts
            .next()
            .ok_or_else(|| parse_err(path, lineno + 1, "missing source id"))?
            .parse()
            .map_err(|e| parse_err(path, lineno + 1, format!("bad source id: {e}")))?;
        let v: u64 = parts
            .next()
            .ok_or_else(|| parse_err(path, lineno + 1, "missing target id"))?
            .parse()
            .map_err(|e| parse_err(path, lineno + 1, format!("bad target id: {e}")))?;
        let w: f64 = match parts.next() {
            Some(tok) => tok
                .parse()
                .map_err(|e| parse_err(path, lineno + 1, format!("bad weight: {e}")))?,
            None => 1.0,
        };
        raw.push((u, v, w));
    }
    let mut ids: Vec<u64> = raw.iter().flat_map(|&(u, v, _)| [u, v]).collect();
    ids.sort_unstable();
    ids.dedup();
    let index: std::collections::HashMap<u64, usize> =
        ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let (graph, stats) = SparseGraph::with_stats(
        ids.len(),
        raw.iter().map(|&(u, v, w)| (index[&u], index[&v], w)),
    )?;
    Ok(LoadedGraph {
        graph,
        node_ids: ids,
        stats,
    })
}

/// Write an edge list, mapping dense ids back through `node_ids` when given.
pub fn write_edge_list(
    path: impl AsRef<Path>,
    g: &SparseGraph,
    node_ids: Option<&[u64]>,
) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    for e in g.edges() {
        let (u, v) = match node_ids {
            Some(ids) => (ids[e.u], ids[e.v]),
            None => (e.u as u64, e.v as u64),
        };
        writeln!(out, "{u}\t{v}\t{}", e.w)?;
    }
    out.flush()?;
    Ok(())
}

const SGMX_MAGIC: &[u8; 4] = b"SGMX";

/// Write the binary matrix format: 16-byte header (magic "SGMX", u32 rows,
/// u32 cols, 4 reserved bytes, little-endian) then row-major f64 values.
pub fn write_matrix_sgmx(path: impl AsRef<Path>, m: &RowMatrix) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    out.write_all(SGMX_MAGIC)?;
    out.write_all(&(m.n_rows() as u32).to_le_bytes())?;
    out.write_all(&(m.n_cols() as u32).to_le_bytes())?;
    out.write_all(&[0u8; 4])?;
    for v in m.data() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Read the SGMX binary matrix format.
pub fn read_matrix_sgmx(path: impl AsRef<Path>) -> Result<RowMatrix> {
    let path = path.as_ref();
    let mut file = std::fs::File::open(path)?;
    let mut header = [0u8; 16];
    file.read_exact(&mut header)
        .map_err(|_| parse_err(path, 0, "truncated header"))?;
    if &header[..4] != SGMX_MAGIC {
        return Err(parse_err(path, 0, "bad magic (expected SGMX)"));
    }
    let rows = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let mut buf = Vec::new();
    file.read_to_end(&mut buf)?;
    if buf.len() != rows * cols * 8 {
        return Err(parse_err(
            path,
            0,
            format!(
                "payload holds {} bytes, header implies {}",
                buf.len(),
                rows * cols * 8
            ),
        ));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for chunk in buf.chunks_exact(8) {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(parse_err(path, 0, "non-finite matrix entry"));
        }
        data.push(v);
    }
    RowMatrix::from_vec(rows, cols, data)
}

/// Read a matrix from CSV: one row per node, comma-separated, optional
/// header line (detected by failing to parse as numbers). Missing or
/// non-finite entries are rejected.
pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<RowMatrix> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            trimmed.split(',').map(|t| t.trim().parse::<f64>()).collect();
        match parsed {
            Ok(values) => {
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(parse_err(path, lineno + 1, "non-finite entry"));
                }
                if let Some(w) = width {
                    if values.len() != w {
                        return Err(parse_err(
                            path,
                            lineno + 1,
                            format!("row has {} columns, expected {w}", values.len()),
                        ));
                    }
                } else {
                    width = Some(values.len());
                }
                rows.push(values);
            }
            Err(e) => {
                // A non-numeric first content line is a header; anywhere
                // else it is an error.
                if rows.is_empty() && width.is_none() {
                    width = None;
                    continue;
                }
                return Err(parse_err(path, lineno + 1, format!("bad number: {e}")));
            }
        }
    }
    if rows.is_empty() {
        return Err(parse_err(path, 0, "no data rows"));
    }
    RowMatrix::from_rows(&rows)
}

/// Write a matrix as CSV (no header).
pub fn write_matrix_csv(path: impl AsRef<Path>, m: &RowMatrix) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    for i in 0..m.n_rows() {
        let line: Vec<String> = m.row(i).iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Sniff SGMX magic vs CSV and read either.
pub fn read_matrix_auto(path: impl AsRef<Path>) -> Result<RowMatrix> {
    let path = path.as_ref();
    let mut file = std::fs::File::open(path)?;
    let mut magic = [0u8; 4];
    let is_sgmx = file.read_exact(&mut magic).is_ok() && &magic == SGMX_MAGIC;
    drop(file);
    if is_sgmx {
        read_matrix_sgmx(path)
    } else {
        read_matrix_csv(path)
    }
}

/// Labels: one nonnegative integer per line.
pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let mut labels = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        labels.push(
            trimmed
                .parse::<usize>()
                .map_err(|e| parse_err(path, lineno + 1, format!("bad label: {e}")))?,
        );
    }
    Ok(labels)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    for l in labels {
        writeln!(out, "{l}")?;
    }
    out.flush()?;
    Ok(())
}

/// Flat `key=value` config file; later duplicates win. Lines starting with
/// `#` are comments.
pub fn read_config(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let mut map = BTreeMap::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (k, v) = trimmed
            .split_once('=')
            .ok_or_else(|| parse_err(path, lineno + 1, "expected key=value"))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Serialize pretty JSON to a file, appending a trailing newline.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    let text = serde_json::to_string_pretty(value)?;
    out.write_all(text.as_bytes())?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let file = std::fs::File::open(path)?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

/// Sidecar JSON carried next to a manifold edge list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifoldSidecar {
    pub n_nodes: usize,
    pub node_ids: Vec<u64>,
    pub clusters: Vec<usize>,
    pub n_clusters: usize,
    pub intra_edges: Vec<usize>,
    pub inter_edges: Vec<usize>,
    pub rho: Vec<f64>,
    pub effective_diameter: f64,
    pub exact_resistances: bool,
    pub dense_edges: usize,
    pub stitched_edges: usize,
    pub config: ManifoldConfig,
}

/// Write a manifold as `<base>.edges` plus `<base>.json`.
pub fn write_manifold(base: impl AsRef<Path>, m: &Manifold, node_ids: Option<&[u64]>) -> Result<()> {
    let base = base.as_ref();
    let ids: Vec<u64> = match node_ids {
        Some(ids) => ids.to_vec(),
        None => (0..m.n_nodes() as u64).collect(),
    };
    if ids.len() != m.n_nodes() {
        return Err(Error::DimensionMismatch {
            expected: m.n_nodes(),
            got: ids.len(),
        });
    }
    write_edge_list(base.with_extension("edges"), &m.graph, Some(&ids))?;
    let sidecar = ManifoldSidecar {
        n_nodes: m.n_nodes(),
        node_ids: ids,
        clusters: m.clusters.assignment.clone(),
        n_clusters: m.clusters.n_clusters,
        intra_edges: m.intra_edges.clone(),
        inter_edges: m.inter_edges.clone(),
        rho: m.rho.iter().map(|&r| round_sig12(r)).collect(),
        effective_diameter: round_sig12(m.provenance.effective_diameter),
        exact_resistances: m.provenance.exact_resistances,
        dense_edges: m.provenance.dense_edges,
        stitched_edges: m.provenance.stitched_edges,
        config: m.provenance.config.clone(),
    };
    write_json(base.with_extension("json"), &sidecar)
}

/// Read a manifold written by [`write_manifold`]; ids are remapped densely
/// through the sidecar's `node_ids`. Structural invariants are re-checked.
pub fn read_manifold(base: impl AsRef<Path>) -> Result<(Manifold, Vec<u64>)> {
    let base = base.as_ref();
    let sidecar: ManifoldSidecar = read_json(base.with_extension("json"))?;
    let loaded = read_edge_list(base.with_extension("edges"))?;
    if loaded.node_ids != sidecar.node_ids {
        // Isolated nodes never occur in manifolds (connected by contract),
        // so the edge list must mention every sidecar id.
        return Err(Error::InvalidArgument(format!(
            "edge list ids disagree with sidecar ({} vs {} nodes)",
            loaded.node_ids.len(),
            sidecar.node_ids.len()
        )));
    }
    let manifold = Manifold {
        graph: loaded.graph,
        clusters: Clusters {
            assignment: sidecar.clusters,
            n_clusters: sidecar.n_clusters,
            diameter: sidecar.effective_diameter,
        },
        intra_edges: sidecar.intra_edges,
        inter_edges: sidecar.inter_edges,
        rho: sidecar.rho,
        provenance: ManifoldProvenance {
            config: sidecar.config,
            effective_diameter: sidecar.effective_diameter,
            exact_resistances: sidecar.exact_resistances,
            dense_edges: sidecar.dense_edges,
            stitched_edges: sidecar.stitched_edges,
        },
    };
    manifold.validate()?;
    Ok((manifold, sidecar.node_ids))
}

/// Round every float of a stability report to 12 significant digits.
pub fn round_report(mut report: crate::dmd::StabilityReport) -> crate::dmd::StabilityReport {
    for e in report.nodes.iter_mut() {
        e.score = round_sig12(e.score);
    }
    report.lambda_max = round_sig12(report.lambda_max);
    report.dmd_max = round_sig12(report.dmd_max);
    report.fraction = round_sig12(report.fraction);
    report
}

/// Write separation rows as `segment,level,mean_cos,mean_kld,n`.
pub fn write_separation_csv(
    path: impl AsRef<Path>,
    rows: &[crate::modelsim::SeparationRow],
) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "segment,level,mean_cos,mean_kld,n")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.segment,
            round_sig12(r.level),
            round_sig12(r.mean_cos),
            round_sig12(r.mean_kld),
            r.n
        )?;
    }
    out.flush()?;
    Ok(())
}
