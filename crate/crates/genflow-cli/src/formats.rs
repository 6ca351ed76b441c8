//! File formats: densities as JSON and CSV, operators as coordinate lists,
//! sampler trajectories and evolution traces as CSV.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use genflow::linalg::Csr;
use genflow::opalg::LinOp;
use genflow::pdmp_sim::{EventKind, Trajectory};
use genflow::statespace::{build_grid, Axis, Density, Space, SpaceKind, StateSpace};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// `{kind, axes[], weights[], values[]}`; `values` is absent for a bare space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityFile {
    pub kind: SpaceKind,
    pub axes: Vec<Axis>,
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl DensityFile {
    pub fn from_space(space: &Space) -> Self {
        DensityFile { kind: space.kind(), axes: space.axes().to_vec(), weights: space.weights().to_vec(), values: None }
    }

    pub fn from_density(rho: &Density) -> Self {
        DensityFile { values: Some(rho.values().to_vec()), ..Self::from_space(rho.space()) }
    }

    pub fn space(&self) -> Result<Space, CliError> {
        let s = match self.kind {
            SpaceKind::Grid => build_grid(&self.axes)?,
            SpaceKind::Finite => StateSpace::finite(self.weights.clone())?,
        };
        let same =
            s.weights().len() == self.weights.len() && s.weights().iter().zip(&self.weights).all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0));
        if !same {
            return Err(CliError::Schema("stored weights disagree with the axes".into()));
        }
        Ok(s)
    }

    pub fn density(&self) -> Result<Density, CliError> {
        let v = self.values.clone().ok_or_else(|| CliError::Schema("density file has no values".into()))?;
        Ok(Density::new(self.space()?, v)?)
    }
}

pub fn write_density_json(path: &Path, rho: &Density) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(&DensityFile::from_density(rho)).map_err(CliError::runtime)?;
    std::fs::write(path, text + "\n").map_err(CliError::runtime)
}

pub fn read_density_json(path: &Path) -> Result<Density, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
    let f: DensityFile = serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
    f.density()
}

/// Columns index, coord_1..coord_d, weight, value.
pub fn write_density_csv<W: Write>(out: W, rho: &Density) -> Result<(), CliError> {
    let s = rho.space();
    let mut w = csv::Writer::from_writer(out);
    let mut head = vec!["index".to_string()];
    head.extend((1..=s.dim()).map(|k| format!("coord_{k}")));
    head.extend(["weight".into(), "value".into()]);
    w.write_record(&head).map_err(CliError::runtime)?;
    for i in 0..s.len() {
        let mut rec = vec![i.to_string()];
        rec.extend(s.point(i).iter().map(|c| c.to_string()));
        rec.push(s.weights()[i].to_string());
        rec.push(rho.values()[i].to_string());
        w.write_record(&rec).map_err(CliError::runtime)?;
    }
    w.flush().map_err(CliError::runtime)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixHeader {
    pub format: String,
    pub label: String,
    pub rows: usize,
    pub cols: usize,
    pub nnz: usize,
}

const MATRIX_FORMAT: &str = "genflow-coo-1";

/// A JSON header line followed by one `row col value` line per stored entry.
pub fn write_matrix<W: Write>(mut out: W, op: &LinOp) -> Result<(), CliError> {
    let m = op.to_csr();
    let t = m.triplets();
    let head = MatrixHeader { format: MATRIX_FORMAT.into(), label: op.label().into(), rows: m.nrows, cols: m.ncols, nnz: t.len() };
    writeln!(out, "{}", serde_json::to_string(&head).map_err(CliError::runtime)?).map_err(CliError::runtime)?;
    for (i, j, v) in t {
        writeln!(out, "{i} {j} {v:e}").map_err(CliError::runtime)?;
    }
    Ok(())
}

pub fn read_matrix<R: Read>(input: R) -> Result<(MatrixHeader, Csr), CliError> {
    let bad = |m: String| CliError::Schema(format!("matrix file: {m}"));
    let mut lines = BufReader::new(input).lines();
    let head = lines.next().ok_or_else(|| bad("empty".into()))?.map_err(CliError::runtime)?;
    let head: MatrixHeader = serde_json::from_str(&head).map_err(|e| bad(e.to_string()))?;
    if head.format != MATRIX_FORMAT {
        return Err(bad(format!("unknown format `{}`", head.format)));
    }
    let mut t = Vec::with_capacity(head.nnz);
    for (k, line) in lines.enumerate() {
        let line = line.map_err(CliError::runtime)?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let parse = || -> Option<(usize, usize, f64)> { Some((f.first()?.parse().ok()?, f.get(1)?.parse().ok()?, f.get(2)?.parse().ok()?)) };
        match parse() {
            Some((i, j, v)) if f.len() == 3 && i < head.rows && j < head.cols => t.push((i, j, v)),
            _ => return Err(bad(format!("entry line {} is malformed: `{line}`", k + 2))),
        }
    }
    if t.len() != head.nnz {
        return Err(bad(format!("header promises {} entries, found {}", head.nnz, t.len())));
    }
    Ok((head.clone(), Csr::from_triplets(head.rows, head.cols, t)))
}

/// Skeleton rows (`event_kind = skeleton`) merged in time order with events,
/// which record the post-jump state.
pub fn write_trajectory_csv<W: Write>(out: W, tr: &Trajectory) -> Result<(), CliError> {
    let d = tr.dim / 2;
    let mut w = csv::Writer::from_writer(out);
    let mut head = vec!["t".to_string()];
    head.extend((1..=d).map(|k| format!("x{k}")));
    head.extend((1..=d).map(|k| format!("v{k}")));
    head.push("event_kind".into());
    w.write_record(&head).map_err(CliError::runtime)?;
    let mut events = tr.events.iter().peekable();
    let row = |t: f64, z: &[f64], kind: &str| {
        let mut r = vec![t.to_string()];
        r.extend(z.iter().map(|v| v.to_string()));
        r.push(kind.to_string());
        r
    };
    for k in 0..tr.len() {
        let t = k as f64 * tr.skeleton_dt;
        while let Some(e) = events.next_if(|e| e.t < t) {
            w.write_record(row(e.t, &e.after, kind_name(e.kind))).map_err(CliError::runtime)?;
        }
        w.write_record(row(t, tr.state(k), "skeleton")).map_err(CliError::runtime)?;
    }
    for e in events {
        w.write_record(row(e.t, &e.after, kind_name(e.kind))).map_err(CliError::runtime)?;
    }
    w.flush().map_err(CliError::runtime)
}

fn kind_name(k: EventKind) -> &'static str {
    match k {
        EventKind::Refresh => "refresh",
        EventKind::Bounce => "bounce",
    }
}

/// Two-column CSV with the given header.
pub fn write_columns<W: Write>(out: W, header: &[&str], columns: &[&[f64]]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(CliError::runtime)?;
    let n = columns.iter().map(|c| c.len()).max().unwrap_or(0);
    for k in 0..n {
        let rec: Vec<String> = columns.iter().map(|c| c.get(k).map_or(String::new(), |v| v.to_string())).collect();
        w.write_record(&rec).map_err(CliError::runtime)?;
    }
    w.flush().map_err(CliError::runtime)
}

#[cfg(test)]
mod tests {
    use super::*;
    use genflow::statespace::normalize;

    #[test]
    fn density_json_round_trip() {
        let s = build_grid(&[Axis::truncated(-1.0, 1.0, 4), Axis::periodic(0.0, 1.0, 3)]).unwrap();
        let rho = normalize(&Density::from_fn(&s, |p| 1.0 + p[0] * p[0] + p[1]).unwrap()).unwrap();
        let text = serde_json::to_string(&DensityFile::from_density(&rho)).unwrap();
        let back: DensityFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.density().unwrap(), rho);
    }

    #[test]
    fn matrix_round_trip() {
        let s = StateSpace::counting(3).unwrap();
        let m = Csr::from_triplets(3, 3, vec![(0, 0, -1.0), (0, 2, 1.0), (1, 1, -0.1 / 3.0), (1, 0, 0.1 / 3.0)]);
        let op = LinOp::from_csr(&s, m.clone(), "L").unwrap();
        let mut buf = Vec::new();
        write_matrix(&mut buf, &op).unwrap();
        let (head, back) = read_matrix(buf.as_slice()).unwrap();
        assert_eq!(head.label, "L");
        assert_eq!(back.triplets(), m.triplets());
        let broken = String::from_utf8(buf).unwrap().replace("0 2 1e0", "0 7 1e0");
        assert!(read_matrix(broken.as_bytes()).is_err());
    }
}
