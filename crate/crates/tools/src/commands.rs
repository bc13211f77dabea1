//! Subcommand bodies. Each returns an exit code and a short plain-text
//! summary; `Err` values carry their own exit code.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use lieccm::controller::{sampled_data_run, RunOptions, TabulatedReference};
use lieccm::geodesics::group_geodesic;
use lieccm::manifold::MANIFOLD_TOL;
use lieccm::sdpa::sdpa_problem;
use lieccm::synthesis::{synthesize, verify, CertificateStatus, Synthesis, VerificationReport};
use lieccm::systems::BuiltinSystem;
use lieccm::{EmbeddedManifold, Error, Group, Vector};

use crate::certificate::{read_certificate, report_to_string, write_certificate};
use crate::config::{LoadedConfig, Period, ReferenceSource};
use crate::csvio::{read_reference, write_curve, write_trace};
use crate::error::{write_file, Result, ToolError, EXIT_FAILURE, EXIT_OK};
use crate::sdpa::write_sdpa;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub summary: String,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| ToolError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn require_output(path: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    path.ok_or_else(|| ToolError::Argument(format!("no {what} path: pass --out or set it under [output]")))
}

fn report_lines(out: &mut String, r: &VerificationReport, margin: f64, kill_tol: f64) {
    let _ = writeln!(out, "samples        {} (seed {})", r.samples, r.seed);
    let _ = writeln!(out, "R1     worst    {:.6e} (need <= {:.1e})", r.worst_r1, -margin);
    let _ = writeln!(out, "R0_lo  worst    {:.6e} (need <= 0)", r.worst_r0_lo);
    let _ = writeln!(out, "R0_hi  worst    {:.6e} (need <= 0)", r.worst_r0_hi);
    let _ = writeln!(out, "R2     worst    {:.6e} (need <= {:.1e})", r.worst_killing, kill_tol);
    if !r.failed.is_empty() {
        let names: Vec<String> = r.failed.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(out, "failed         {}", names.join(", "));
    }
}

pub fn cmd_synthesize(config: &Path, out: Option<&Path>) -> Result<Outcome> {
    let cfg = LoadedConfig::load(config)?;
    let section = cfg.synthesis()?;
    let system = cfg.system();
    let sys = system.build();
    let cert_path = require_output(cfg.output(out, |o| o.certificate.as_ref()), "certificate")?;
    let opts = section.options();

    let mut summary = String::new();
    let (mut cert, code, report) = match synthesize(&sys, section.lambda, &opts)? {
        Synthesis::Certified {
            certificate,
            iterations,
            ..
        } => {
            let _ = writeln!(summary, "status         verified after {iterations} iterations");
            let report = certificate.report.clone();
            (certificate, EXIT_OK, report)
        }
        Synthesis::Infeasible(r) => {
            let _ = writeln!(summary, "status         infeasible ({}) after {} iterations", r.reason, r.iterations);
            if let Some(c) = r.worst_condition {
                let _ = writeln!(summary, "worst          {c}");
            }
            if let Some(x) = &r.worst_point {
                let coords: Vec<String> = x.iter().map(|v| format!("{v:.6}")).collect();
                let _ = writeln!(summary, "at             [{}]", coords.join(", "));
            }
            let report = r.dense_report.clone().unwrap_or_else(|| r.grid_report.clone());
            let mut best = r.best;
            best.status = CertificateStatus::Infeasible;
            (best, EXIT_FAILURE, report)
        }
    };
    cert.system_params = system.params();
    report_lines(&mut summary, &report, cert.spec.margin, cert.spec.kill_tol);
    write_certificate(&cert_path, &cert)?;
    let _ = writeln!(summary, "certificate    {}", cert_path.display());
    if let Some(p) = cfg.output(None, |o| o.report.as_ref()) {
        write_file(&p, &report_to_string(&report))?;
        let _ = writeln!(summary, "report         {}", p.display());
    }
    Ok(Outcome { code, summary })
}

pub fn cmd_verify(cert_path: &Path, samples: usize, seed: u64, out: Option<&Path>) -> Result<Outcome> {
    if samples == 0 {
        return Err(ToolError::Argument("--samples must be at least 1".into()));
    }
    let cert = read_certificate(cert_path)?;
    let sys = BuiltinSystem::from_name(&cert.system, &cert.system_params)?.build();
    let report = verify(&cert, &sys, samples, seed)?;
    let mut summary = String::new();
    let _ = writeln!(summary, "status         {}", if report.pass { "pass" } else { "fail" });
    report_lines(&mut summary, &report, cert.spec.margin, cert.spec.kill_tol);
    if let Some(p) = out {
        write_file(p, &report_to_string(&report))?;
        let _ = writeln!(summary, "report         {}", p.display());
    }
    Ok(Outcome {
        code: if report.pass { EXIT_OK } else { EXIT_FAILURE },
        summary,
    })
}

pub fn cmd_simulate(config: &Path, cert_path: &Path, out: Option<&Path>) -> Result<Outcome> {
    let cfg = LoadedConfig::load(config)?;
    let sim = cfg.simulation()?;
    let cert = read_certificate(cert_path)?;
    let system = cfg.system();
    let same = BuiltinSystem::from_name(&cert.system, &cert.system_params).ok() == Some(system.clone());
    if !same {
        return Err(ToolError::SystemMismatch {
            certificate: cert.system.clone(),
            config: cfg.config.system.name.clone(),
        });
    }
    let sys = system.build();
    let man = sys.manifold();
    let trace_path = require_output(cfg.output(out, |o| o.trace.as_ref()), "trace")?;

    let reference = match cfg.reference_source()? {
        ReferenceSource::Constant { x0, u } => TabulatedReference::integrate(&sys, &x0, &u, sim.dt, sim.t_end)?,
        ReferenceSource::Csv(p) => {
            let f = File::open(&p).map_err(|source| ToolError::Io { path: p.clone(), source })?;
            read_reference(f, &sys, &p)?
        }
    };
    let x0 = match (&sim.x0, sim.plant_seed) {
        (Some(x), _) => Vector::from_column_slice(x),
        (None, Some(seed)) => man.random_point_seeded(seed),
        (None, None) => unreachable!("validated at load"),
    };
    let mut opts = RunOptions::auto(&cert, sim.dt, sim.t_end)?;
    if let Period::Fixed(p) = sim.period {
        opts.period = p;
    }
    if !(sim.dt < opts.period) {
        return Err(ToolError::Argument(format!(
            "dt = {} is not below the sampling period {}",
            sim.dt, opts.period
        )));
    }
    opts.segments = sim.path_segments;
    opts.reference_checks = sim.reference_checks;

    let trace = sampled_data_run(&cert, &sys, &x0, &reference, &opts)?;
    write_trace(create(&trace_path)?, &trace)?;

    let lambda = cert.lambda();
    let mut summary = String::new();
    let _ = writeln!(summary, "rows           {}", trace.len());
    let _ = writeln!(
        summary,
        "period         {:.6} ({})",
        trace.period,
        if sim.period == Period::Auto { "auto" } else { "fixed" }
    );
    let _ = writeln!(summary, "samples        {}", trace.sample_times.len());
    match trace.second_half_slope() {
        Some(slope) => {
            let _ = writeln!(summary, "fitted slope   {slope:.6}");
            let _ = writeln!(summary, "rate >= 0.9λ   {} (rate {:.6}, λ {lambda})", -slope >= 0.9 * lambda, -slope);
        }
        None => {
            let _ = writeln!(summary, "fitted slope   n/a (distance vanishes)");
        }
    }
    let _ = writeln!(summary, "max distance   {:.6e}", trace.max_distance());
    let _ = writeln!(summary, "max |h(x)|     {:.6e}", trace.max_residual());
    let _ = writeln!(summary, "trace          {}", trace_path.display());
    Ok(Outcome { code: EXIT_OK, summary })
}

fn parse_point(text: &str, flag: &str) -> Result<Vector> {
    let vals = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| ToolError::Argument(format!("{flag}: {e}")))?;
    Ok(Vector::from_vec(vals))
}

fn on_manifold(m: &EmbeddedManifold, x: &Vector, flag: &str) -> Result<()> {
    if x.len() != m.n_amb() {
        return Err(ToolError::Argument(format!(
            "{flag}: {} has {} coordinates, got {}",
            m.name(),
            m.n_amb(),
            x.len()
        )));
    }
    let residual = m.residual_norm(x)?;
    if residual > MANIFOLD_TOL {
        return Err(Error::OffManifold { residual }.into());
    }
    Ok(())
}

pub fn cmd_geodesic(group: &str, from: &str, to: &str, nodes: usize, out: &Path) -> Result<Outcome> {
    let p = parse_point(from, "--from")?;
    let q = parse_point(to, "--to")?;
    let m = EmbeddedManifold::new(Group::parse(group, Some(p.len()))?);
    on_manifold(&m, &p, "--from")?;
    on_manifold(&m, &q, "--to")?;
    if nodes < 2 {
        return Err(ToolError::Argument("--nodes must be at least 2".into()));
    }
    let curve = group_geodesic(&m, &p, &q, nodes)?;
    write_curve(create(out)?, &curve)?;
    let mut summary = String::new();
    let _ = writeln!(summary, "length         {:.16e}", curve.length);
    let _ = writeln!(summary, "curve          {}", out.display());
    Ok(Outcome { code: EXIT_OK, summary })
}

pub fn cmd_export_sdpa(config: &Path, out: Option<&Path>) -> Result<Outcome> {
    let cfg = LoadedConfig::load(config)?;
    let s = cfg.synthesis()?;
    let sys = cfg.system().build();
    let path = require_output(cfg.output(out, |o| o.sdpa.as_ref()), "SDPA")?;
    let opts = s.options();
    let points = sys.manifold().sample_points(s.grid_size, s.seed);
    let problem = sdpa_problem(&sys, &opts.spec(s.lambda), s.degree, &points)?;
    let comment = format!(
        "{} lambda={} grid={} seed={} a1={} a2={}",
        sys.name(),
        s.lambda,
        s.grid_size,
        s.seed,
        s.a1,
        s.a2
    );
    write_file(&path, &write_sdpa(&problem, &comment))?;
    let mut summary = String::new();
    let _ = writeln!(summary, "variables      {}", problem.n_vars());
    let _ = writeln!(summary, "blocks         {}", problem.n_blocks());
    let _ = writeln!(summary, "sdpa           {}", path.display());
    Ok(Outcome { code: EXIT_OK, summary })
}
