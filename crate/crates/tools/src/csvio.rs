//! Comma-separated trace, curve and reference files. Every float is written
//! with 17 significant digits.

use std::io::{Read, Write};
use std::path::Path;

use lieccm::controller::{TabulatedReference, TrackingTrace};
use lieccm::geodesics::GeodesicCurve;
use lieccm::{ControlAffineSystem, Vector};

use crate::error::{Result, ToolError};

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}[{i}]"))
}

pub fn trace_header(n_amb: usize, n_u: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(indexed("x", n_amb));
    h.extend(indexed("x_star", n_amb));
    h.extend(indexed("u", n_u));
    h.extend(["d_induced", "path_energy", "h_residual"].map(String::from));
    h
}

pub fn write_trace<W: Write>(out: W, trace: &TrackingTrace) -> Result<()> {
    let n_amb = trace.states.first().map_or(0, |x| x.len());
    let n_u = trace.controls.first().map_or(0, |u| u.len());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trace_header(n_amb, n_u))?;
    for k in 0..trace.len() {
        let mut row = vec![format_float(trace.times[k])];
        row.extend(trace.states[k].iter().map(|v| format_float(*v)));
        row.extend(trace.references[k].iter().map(|v| format_float(*v)));
        row.extend(trace.controls[k].iter().map(|v| format_float(*v)));
        row.push(format_float(trace.distances[k]));
        row.push(format_float(trace.energies[k]));
        row.push(format_float(trace.residuals[k]));
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Columns `s`, `p[0..n]`, `length` (cumulative).
pub fn write_curve<W: Write>(out: W, curve: &GeodesicCurve) -> Result<()> {
    let n = curve.points.first().map_or(0, |p| p.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["s".to_string()];
    header.extend(indexed("p", n));
    header.push("length".to_string());
    w.write_record(&header)?;
    for ((s, p), l) in curve
        .params
        .iter()
        .zip(&curve.points)
        .zip(curve.cumulative_lengths())
    {
        let mut row = vec![format_float(*s)];
        row.extend(p.iter().map(|v| format_float(*v)));
        row.push(format_float(l));
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads a reference table with columns `t`, `x[0..n_amb]`, `u[0..m]` and a
/// header row.
pub fn read_reference<R: Read>(
    input: R,
    sys: &ControlAffineSystem,
    path: &Path,
) -> Result<TabulatedReference> {
    let n_amb = sys.manifold().n_amb();
    let n_u = sys.input_dim();
    let width = 1 + n_amb + n_u;
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header_len = r.headers()?.len();
    if header_len != width {
        return Err(ToolError::parse(
            path,
            Some(1),
            format!("expected {width} columns (t, {n_amb} states, {n_u} inputs), found {header_len}"),
        ));
    }
    let (mut times, mut states, mut controls) = (Vec::new(), Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize);
        let vals = rec
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| ToolError::parse(path, line, format!("bad number: {e}")))?;
        times.push(vals[0]);
        states.push(Vector::from_column_slice(&vals[1..1 + n_amb]));
        controls.push(Vector::from_column_slice(&vals[1 + n_amb..]));
    }
    Ok(TabulatedReference::new(sys.manifold().clone(), times, states, controls)?)
}

/// Writes a reference table readable by [`read_reference`].
pub fn write_reference<W: Write>(out: W, reference: &TabulatedReference) -> Result<()> {
    let n_amb = reference.states().first().map_or(0, |x| x.len());
    let n_u = reference.controls().first().map_or(0, |u| u.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(indexed("x", n_amb));
    header.extend(indexed("u", n_u));
    w.write_record(&header)?;
    for ((t, x), u) in reference
        .times()
        .iter()
        .zip(reference.states())
        .zip(reference.controls())
    {
        let mut row = vec![format_float(*t)];
        row.extend(x.iter().map(|v| format_float(*v)));
        row.extend(u.iter().map(|v| format_float(*v)));
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use lieccm::controller::Reference;
    use lieccm::geodesics::group_geodesic;
    use lieccm::systems::builtin_system;
    use lieccm::{EmbeddedManifold, Group, SystemParams};

    #[test]
    fn seventeen_significant_digits() {
        let s = format_float(0.1);
        assert_eq!(s, "1.0000000000000001e-1");
        assert_eq!(s.parse::<f64>().unwrap(), 0.1);
        assert_eq!(format_float(-2.5), "-2.5000000000000000e0");
    }

    #[test]
    fn curve_rows_and_header() {
        let m = EmbeddedManifold::new(Group::Euclidean(2));
        let p = Vector::from_vec(vec![0.0, 0.0]);
        let q = Vector::from_vec(vec![3.0, 4.0]);
        let c = group_geodesic(&m, &p, &q, 3).unwrap();
        let mut buf = Vec::new();
        write_curve(&mut buf, &c).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "s,p[0],p[1],length");
        assert_eq!(lines.len(), 4);
        assert!(lines[3].ends_with(",5.0000000000000000e0"));
    }

    #[test]
    fn reference_round_trip() {
        let sys = builtin_system("scalar-linear", &SystemParams::default()).unwrap();
        let r = TabulatedReference::integrate(
            &sys,
            &Vector::from_element(1, 0.3),
            &Vector::from_element(1, 0.2),
            0.1,
            1.0,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_reference(&mut buf, &r).unwrap();
        let back = read_reference(buf.as_slice(), &sys, Path::new("r.csv")).unwrap();
        assert_eq!(back.times(), r.times());
        assert_eq!(back.states(), r.states());
        assert_eq!(back.state(0.5).unwrap(), r.state(0.5).unwrap());
    }

    #[test]
    fn reference_with_wrong_width_is_rejected() {
        let sys = builtin_system("scalar-linear", &SystemParams::default()).unwrap();
        let text = "t,x[0]\n0,1\n";
        assert!(matches!(
            read_reference(text.as_bytes(), &sys, Path::new("r.csv")),
            Err(ToolError::Parse { line: Some(1), .. })
        ));
        let text = "t,x[0],u[0]\n0,1,zz\n";
        assert!(matches!(
            read_reference(text.as_bytes(), &sys, Path::new("r.csv")),
            Err(ToolError::Parse { line: Some(2), .. })
        ));
    }
}
