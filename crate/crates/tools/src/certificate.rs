//! Certificate files: TOML with one array row per coefficient block. Floats
//! are written in shortest round-trip form, so a write → read → write cycle
//! reproduces the file byte for byte.

use std::path::Path;

use lieccm::synthesis::{
    CertificateStatus, Condition, ContractionCertificate, LmiSpec, MetricParameterization,
    Monomial, VerificationReport,
};
use lieccm::systems::BuiltinSystem;
use lieccm::{Matrix, SystemParams};
use std::fmt::Write as _;

use serde::Deserialize;

use crate::error::{line_of, one_line, read_file, write_file, Result, ToolError};

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
struct CertificateFile {
    system: String,
    status: String,
    lambda: f64,
    a1: f64,
    a2: f64,
    margin: f64,
    kill_tol: f64,
    degree: usize,
    n_dim: usize,
    grid_size: usize,
    grid_seed: u64,
    /// Variable indices of each monomial; `[]` is the constant.
    basis: Vec<Vec<usize>>,
    /// One row-major `n_dim × n_dim` block per basis element.
    coeffs: Vec<Vec<f64>>,
    rho_coeffs: Vec<f64>,
    params: ParamsFile,
    report: ReportFile,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
struct ParamsFile {
    k: Option<f64>,
    e: Option<[f64; 3]>,
}

/// Worst margins per condition, as stored in certificates and verification
/// reports.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ReportFile {
    pub pass: bool,
    pub samples: usize,
    pub seed: u64,
    pub worst_r1: f64,
    pub worst_r0_lo: f64,
    pub worst_r0_hi: f64,
    pub worst_killing: f64,
    pub failed: Vec<String>,
}

impl From<&VerificationReport> for ReportFile {
    fn from(r: &VerificationReport) -> Self {
        Self {
            pass: r.pass,
            samples: r.samples,
            seed: r.seed,
            worst_r1: r.worst_r1,
            worst_r0_lo: r.worst_r0_lo,
            worst_r0_hi: r.worst_r0_hi,
            worst_killing: r.worst_killing,
            failed: r.failed.iter().map(|c| c.to_string()).collect(),
        }
    }
}

impl ReportFile {
    fn into_report(self) -> std::result::Result<VerificationReport, String> {
        let failed = self
            .failed
            .iter()
            .map(|s| Condition::parse(s).ok_or_else(|| format!("unknown condition `{s}`")))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(VerificationReport {
            samples: self.samples,
            seed: self.seed,
            worst_r1: self.worst_r1,
            worst_r0_lo: self.worst_r0_lo,
            worst_r0_hi: self.worst_r0_hi,
            worst_killing: self.worst_killing,
            failed,
            pass: self.pass,
        })
    }
}

/// Shortest string that parses back to the same `f64`, in TOML syntax.
pub fn toml_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:?}")
    }
}

fn toml_list<T>(vals: &[T], f: impl Fn(&T) -> String) -> String {
    let items: Vec<String> = vals.iter().map(f).collect();
    format!("[{}]", items.join(", "))
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn write_report(out: &mut String, r: &ReportFile) {
    let _ = writeln!(out, "pass = {}", r.pass);
    let _ = writeln!(out, "samples = {}", r.samples);
    let _ = writeln!(out, "seed = {}", r.seed);
    let _ = writeln!(out, "worst_r1 = {}", toml_float(r.worst_r1));
    let _ = writeln!(out, "worst_r0_lo = {}", toml_float(r.worst_r0_lo));
    let _ = writeln!(out, "worst_r0_hi = {}", toml_float(r.worst_r0_hi));
    let _ = writeln!(out, "worst_killing = {}", toml_float(r.worst_killing));
    let _ = writeln!(out, "failed = {}", toml_list(&r.failed, |s| toml_string(s)));
}

pub fn report_to_string(report: &VerificationReport) -> String {
    let mut out = String::new();
    write_report(&mut out, &ReportFile::from(report));
    out
}

pub fn certificate_to_string(cert: &ContractionCertificate) -> String {
    let n = cert.param.n_dim();
    let mut out = String::new();
    let _ = writeln!(out, "system = {}", toml_string(&cert.system));
    let _ = writeln!(out, "status = {}", toml_string(cert.status.as_str()));
    let spec = &cert.spec;
    for (key, v) in [
        ("lambda", spec.lambda),
        ("a1", spec.a1),
        ("a2", spec.a2),
        ("margin", spec.margin),
        ("kill_tol", spec.kill_tol),
    ] {
        let _ = writeln!(out, "{key} = {}", toml_float(v));
    }
    let _ = writeln!(out, "degree = {}", cert.param.degree);
    let _ = writeln!(out, "n_dim = {n}");
    let _ = writeln!(out, "grid_size = {}", cert.grid_size);
    let _ = writeln!(out, "grid_seed = {}", cert.grid_seed);
    let _ = writeln!(
        out,
        "basis = {}",
        toml_list(&cert.param.basis, |m| toml_list(m.indices(), |i| i.to_string()))
    );
    out.push_str("coeffs = [\n");
    for c in &cert.param.coeffs {
        let row: Vec<f64> = (0..n * n).map(|k| c[(k / n, k % n)]).collect();
        let _ = writeln!(out, "    {},", toml_list(&row, |v| toml_float(*v)));
    }
    out.push_str("]\n");
    let _ = writeln!(out, "rho_coeffs = {}", toml_list(&cert.param.rho_coeffs, |v| toml_float(*v)));
    out.push_str("\n[params]\n");
    if let Some(k) = cert.system_params.k {
        let _ = writeln!(out, "k = {}", toml_float(k));
    }
    if let Some(e) = cert.system_params.e {
        let _ = writeln!(out, "e = {}", toml_list(&e, |v| toml_float(*v)));
    }
    out.push_str("\n[report]\n");
    write_report(&mut out, &ReportFile::from(&cert.report));
    out
}

/// Parses a certificate and checks it against the system it names.
pub fn certificate_from_str(text: &str, path: &Path) -> Result<ContractionCertificate> {
    let file: CertificateFile = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start));
        ToolError::parse(path, line, one_line(e.message()))
    })?;
    let bad = |msg: String| ToolError::parse(path, None, msg);

    let params = SystemParams {
        k: file.params.k,
        e: file.params.e,
    };
    let sys = BuiltinSystem::from_name(&file.system, &params)
        .map_err(|e| bad(e.to_string()))?
        .build();
    let status = CertificateStatus::parse(&file.status)
        .ok_or_else(|| bad(format!("unknown status `{}`", file.status)))?;
    let n = file.n_dim;
    if let Some(c) = file.coeffs.iter().find(|c| c.len() != n * n) {
        return Err(bad(format!(
            "coefficient block has {} entries, expected {}",
            c.len(),
            n * n
        )));
    }
    let param = MetricParameterization {
        degree: file.degree,
        basis: file.basis.into_iter().map(Monomial::new).collect(),
        coeffs: file
            .coeffs
            .iter()
            .map(|c| Matrix::from_row_slice(n, n, c))
            .collect(),
        rho_coeffs: file.rho_coeffs,
    };
    let m = sys.manifold();
    param
        .validate(m.n_amb(), m.n_dim())
        .map_err(|e| bad(e.to_string()))?;
    let spec = LmiSpec {
        lambda: file.lambda,
        a1: file.a1,
        a2: file.a2,
        margin: file.margin,
        kill_tol: file.kill_tol,
    };
    spec.validate().map_err(|e| bad(e.to_string()))?;
    let report = file.report.into_report().map_err(bad)?;
    Ok(ContractionCertificate {
        system: file.system,
        system_params: params,
        spec,
        param,
        grid_size: file.grid_size,
        grid_seed: file.grid_seed,
        status,
        report,
    })
}

pub fn read_certificate(path: &Path) -> Result<ContractionCertificate> {
    certificate_from_str(&read_file(path)?, path)
}

pub fn write_certificate(path: &Path, cert: &ContractionCertificate) -> Result<()> {
    write_file(path, &certificate_to_string(cert))
}
