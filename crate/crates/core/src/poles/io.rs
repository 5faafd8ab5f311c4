//! CSV and JSON output for pole tables and eigencurve scans.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{EigenCurveScan, PoleKind, PoleMethod, PoleRecord};
use crate::error::Result;

fn kind_name(k: PoleKind) -> &'static str {
    match k {
        PoleKind::Interior => "interior",
        PoleKind::Coincident => "coincident",
    }
}

fn method_name(m: PoleMethod) -> &'static str {
    match m {
        PoleMethod::Bisection => "bisection",
        PoleMethod::Projection => "projection",
        PoleMethod::Casida => "casida",
        PoleMethod::Contour => "contour",
    }
}

pub fn poles_csv(poles: &[PoleRecord]) -> String {
    let mut out = String::from("omega,rank,kind,method,residue_norm\n");
    for p in poles {
        writeln!(out, "{:?},{},{},{},{:?}", p.omega, p.rank, kind_name(p.kind), method_name(p.method), p.residue_norm)
            .expect("writing to a String");
    }
    out
}

pub fn write_poles_csv(poles: &[PoleRecord], path: &Path) -> Result<()> {
    fs::write(path, poles_csv(poles))?;
    Ok(())
}

pub fn write_poles_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// `omega,eig_1..eig_K`, one row per sample.
pub fn curves_csv(scan: &EigenCurveScan) -> String {
    let k = scan.eigs.first().map_or(0, Vec::len);
    let mut out = String::from("omega");
    for i in 1..=k {
        write!(out, ",eig_{i}").expect("writing to a String");
    }
    out.push('\n');
    for (w, eigs) in scan.omegas.iter().zip(&scan.eigs) {
        write!(out, "{w:?}").expect("writing to a String");
        for e in eigs {
            write!(out, ",{e:?}").expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

pub fn write_curves_csv(scan: &EigenCurveScan, path: &Path) -> Result<()> {
    fs::write(path, curves_csv(scan))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pole_csv_fields() {
        let p = PoleRecord {
            omega: 1.25,
            rank: 2,
            kind: PoleKind::Coincident,
            method: PoleMethod::Projection,
            residue_norm: 0.1,
            resolvent_rank: 1,
        };
        let s = poles_csv(&[p]);
        assert_eq!(s, "omega,rank,kind,method,residue_norm\n1.25,2,coincident,projection,0.1\n");
    }

    #[test]
    fn curve_csv_round_trips_floats() {
        let scan = EigenCurveScan {
            omegas: vec![0.1, 0.2],
            eigs: vec![vec![1.0 / 3.0, -2.0], vec![0.3, -1e-300]],
            monotone: vec![true, true],
            worst_increase: 0.0,
        };
        let s = curves_csv(&scan);
        let rows: Vec<&str> = s.lines().collect();
        assert_eq!(rows[0], "omega,eig_1,eig_2");
        let v: f64 = rows[1].split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(v, 1.0 / 3.0);
        assert!(rows[2].ends_with("-1e-300"));
    }
}
