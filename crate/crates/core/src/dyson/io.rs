//! Textual series export: a CSV of `step,row,col,value` plus a JSON sidecar.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{OperatorSeries, ReducedBasis, Representation, TimeGrid};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub dt: f64,
    pub n_steps: usize,
    pub representation: Representation,
    /// Reduced dimension, present for reduced series.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    /// Grid dimension, present for full series.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Grid spacing and column-major transition densities of a reduced series.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<Vec<f64>>,
}

pub fn write_series(series: &OperatorSeries, csv_path: &Path, json_path: &Path) -> Result<()> {
    let d = series.dim();
    let mut out = String::with_capacity(series.time.len() * d * d * 24 + 32);
    out.push_str("step,row,col,value\n");
    for (m, mat) in series.mats.iter().enumerate() {
        for i in 0..d {
            for j in 0..d {
                writeln!(out, "{m},{i},{j},{:?}", mat[(i, j)]).expect("writing to a String");
            }
        }
    }
    fs::write(csv_path, out)?;
    let meta = SeriesMeta {
        dt: series.time.dt,
        n_steps: series.time.n_steps,
        representation: series.representation(),
        p: series.basis.as_ref().map(|_| d),
        n: if series.basis.is_none() { Some(d) } else { None },
        dx: series.basis.as_ref().map(|b| b.dx),
        phi: series.basis.as_ref().map(|b| b.phi.as_slice().to_vec()),
    };
    fs::write(json_path, serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn read_series(csv_path: &Path, json_path: &Path) -> Result<OperatorSeries> {
    let meta: SeriesMeta = serde_json::from_str(&fs::read_to_string(json_path)?)?;
    let time = TimeGrid::new(meta.dt, meta.n_steps)?;
    let d = match meta.representation {
        Representation::Full => meta.n,
        Representation::Reduced => meta.p,
    }
    .ok_or_else(|| Error::Parse("sidecar lacks the matrix dimension".into()))?;
    let mut mats = vec![DMatrix::zeros(d, d); time.len()];
    let text = fs::read_to_string(csv_path)?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("step,row,col,value") {
        return Err(Error::Parse("missing CSV header".into()));
    }
    for (no, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Parse(format!("line {}: expected 4 fields", no + 2)));
        }
        let bad = |_| Error::Parse(format!("line {}: malformed number", no + 2));
        let m: usize = fields[0].parse().map_err(|_| Error::Parse(format!("line {}: bad step", no + 2)))?;
        let i: usize = fields[1].parse().map_err(|_| Error::Parse(format!("line {}: bad row", no + 2)))?;
        let j: usize = fields[2].parse().map_err(|_| Error::Parse(format!("line {}: bad col", no + 2)))?;
        let v: f64 = fields[3].parse().map_err(bad)?;
        if m >= time.len() || i >= d || j >= d {
            return Err(Error::Parse(format!("line {}: index out of range", no + 2)));
        }
        mats[m][(i, j)] = v;
    }
    let basis = match (meta.representation, meta.dx, meta.phi) {
        (Representation::Reduced, Some(dx), Some(phi)) => {
            if phi.len() % d != 0 {
                return Err(Error::Parse("transition densities do not fill whole columns".into()));
            }
            Some(ReducedBasis { phi: DMatrix::from_column_slice(phi.len() / d, d, &phi), dx })
        }
        (Representation::Reduced, _, _) => return Err(Error::Parse("reduced sidecar lacks dx/phi".into())),
        (Representation::Full, _, _) => None,
    };
    OperatorSeries::new(time, mats, basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyson::chi0_series_reduced;
    use crate::response::{TransitionPair, TransitionTable};
    use nalgebra::DVector;

    #[test]
    fn round_trip_is_exact() {
        let pairs = vec![
            TransitionPair { k: 0, a: 1, omega: 0.77, phi: DVector::from_vec(vec![0.1, 0.2, 0.3]) },
            TransitionPair { k: 0, a: 2, omega: 1.91, phi: DVector::from_vec(vec![-0.3, 0.1, 1e-17]) },
        ];
        let t = TransitionTable::from_pairs(0.25, 3, pairs, 1e-9).unwrap();
        let s = chi0_series_reduced(&t, TimeGrid::new(0.013, 25).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (c, j) = (dir.path().join("s.csv"), dir.path().join("s.json"));
        for series in [s.clone(), s.to_full()] {
            write_series(&series, &c, &j).unwrap();
            let back = read_series(&c, &j).unwrap();
            assert_eq!(back.representation(), series.representation());
            assert_eq!(back.max_diff(&series).unwrap(), 0.0);
        }
        let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(&j).unwrap()).unwrap();
        assert_eq!(meta["representation"], "full");
        assert_eq!(meta["n"], 3);
    }
}
