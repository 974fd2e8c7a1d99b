//! Plot-ready CSV traces: one row per scan instant.

use std::io::Write;

use finsler_morse::jacobi::{p_jacobi_basis, scan_trace};

use crate::pipeline::StageError;
use crate::scenario::Scenario;

/// Rows `t, x.., y.., L, sigma_min, det` on the scan grid.
pub fn trace_rows(s: &Scenario) -> Result<(Vec<String>, Vec<Vec<f64>>), StageError> {
    let err = |stage: &'static str| move |error| StageError { stage, error };
    let m = s.metric_spec().map_err(err("metric"))?;
    let p = s.p.build().map_err(err("submanifold"))?;
    let geo = s.geodesic(&m, &p).map_err(err("geodesic"))?;
    let sys =
        finsler_morse::jacobi::ReducedJacobiSystem::reduce(&geo, &p).map_err(err("reduce"))?;
    let basis = p_jacobi_basis(&sys).map_err(err("jacobi"))?;
    let samples = s.numerics.scan_samples;
    let scan = scan_trace(&sys, &basis, samples);
    let n = sys.dim();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=n).map(|i| format!("y{i}")));
    header.extend(["L", "sigma_min", "det"].map(String::from));
    let rows = scan
        .iter()
        .map(|[t, smin, det]| {
            let v = geo.tangent(*t);
            let mut row = vec![*t];
            row.extend(&v.x);
            row.extend(&v.y);
            row.push(m.eval_l(&v).unwrap_or(f64::NAN));
            row.push(*smin);
            row.push(*det);
            row
        })
        .collect();
    Ok((header, rows))
}

pub fn write_csv<W: Write>(out: W, header: &[String], rows: &[Vec<f64>]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|x| format!("{x:.17e}")))?;
    }
    w.flush()?;
    Ok(())
}
