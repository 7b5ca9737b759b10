//! Command-line front end: `continue`, `detect`, `refine`, `validate`, `diagram`.
//!
//! Exit codes: 0 success or valid certificate, 2 invalid certificate,
//! 3 numerical failure, 4 bad input.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equilibria::{
    continue_branch, detect_bifurcations, trivial_branch, BifurcationKind, BifurcationRecord, BranchSample,
    EquilibriaError, StepPolicy,
};
use crate::extended::{ext_residual, newton_extended, ExtendedPoint, NormalizationFunctional};
use crate::model::ModelParams;
use crate::spectral::CosineSeries;
use crate::symmetry::CaseLabel;
use crate::validation::{make_certificate, CertConfig, ValidationCertificate};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_BAD_INPUT: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("[{stage}] bad input: {msg}")]
    BadInput { stage: &'static str, msg: String },
    #[error("[{stage}] numerical failure: {msg}")]
    Numerical { stage: &'static str, msg: String },
    #[error("[validate/{stage}] certificate invalid: {msg}")]
    Invalid { stage: String, msg: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::BadInput { .. } => EXIT_BAD_INPUT,
            CliError::Numerical { .. } => EXIT_NUMERICAL,
            CliError::Invalid { .. } => EXIT_INVALID,
        }
    }
}

fn bad(stage: &'static str, msg: impl ToString) -> CliError {
    CliError::BadInput {
        stage,
        msg: msg.to_string(),
    }
}

fn num(stage: &'static str, msg: impl ToString) -> CliError {
    CliError::Numerical {
        stage,
        msg: msg.to_string(),
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Run configuration; a JSON file may set any subset, flags override it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sigma: f64,
    /// Primary branch modes; 0 stands for the trivial branch.
    pub modes: Vec<usize>,
    pub lambda_max: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub out: PathBuf,
    pub step: StepPolicy,
    pub trivial_step: f64,
    pub cert: CertConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            sigma: 6.0,
            modes: Vec::new(),
            lambda_max: 350.0,
            n: 64,
            out: PathBuf::from("."),
            step: StepPolicy::default(),
            trivial_step: 1.0,
            cert: CertConfig::default(),
        }
    }
}

impl RunConfig {
    fn check(&self) -> Result<()> {
        let stage = "config";
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(bad(stage, format!("sigma must be positive (got {})", self.sigma)));
        }
        if !(self.lambda_max > 0.0 && self.lambda_max.is_finite()) {
            return Err(bad(stage, format!("lambda_max must be positive (got {})", self.lambda_max)));
        }
        if !(self.trivial_step > 0.0) {
            return Err(bad(stage, "trivial_step must be positive"));
        }
        let s = &self.step;
        if !(s.h_init > 0.0 && s.h_min > 0.0 && s.h_max >= s.h_min && s.grow >= 1.0 && s.max_correction > 0.0) {
            return Err(bad(stage, "step policy tolerances must be positive with h_min <= h_max"));
        }
        if let Some(&m) = self.modes.iter().max() {
            if self.n < m {
                return Err(bad(stage, format!("N = {} is below the largest mode {m}", self.n)));
            }
        }
        if self.n == 0 {
            return Err(bad(stage, "N must be positive"));
        }
        let c = &self.cert;
        if c.d_w.is_some_and(|d| !(d > 0.0)) || c.d_sigma.is_some_and(|d| !(d > 0.0)) {
            return Err(bad(stage, "dw and dsigma must be positive"));
        }
        Ok(())
    }
}

#[derive(Parser, Debug)]
#[command(name = "okpitch", version, about = "Symmetry-breaking pitchforks of 1-D diblock copolymer equilibria")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Continue primary branches and write one CSV per branch.
    Continue {
        #[command(flatten)]
        common: Common,
        /// Comma-separated modes; 0 is the trivial branch.
        #[arg(long, value_delimiter = ',')]
        modes: Option<Vec<usize>>,
        #[arg(long = "lambda-max")]
        lambda_max: Option<f64>,
    },
    /// Detect bifurcations on branch CSV files.
    Detect {
        #[command(flatten)]
        common: Common,
        #[arg(long, num_args = 1.., required = true)]
        branch: Vec<PathBuf>,
        /// Overrides the symmetry index stored in the branch file.
        #[arg(long = "n-sym")]
        n_sym: Option<usize>,
    },
    /// Solve the extended system at detected symmetry-breaking points.
    Refine {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        records: PathBuf,
        /// Only the record closest to this lambda.
        #[arg(long)]
        near: Option<f64>,
    },
    /// Build a validation certificate.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Refined point (or list) from `refine`, or records from `detect` with --refine.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Refine a detection record at N before validating.
        #[arg(long)]
        refine: bool,
        #[arg(long)]
        dw: Option<f64>,
        #[arg(long)]
        dsigma: Option<f64>,
        #[arg(long = "tail-N")]
        tail_n: Option<usize>,
        /// Leave wall-clock timings out of the certificate.
        #[arg(long)]
        no_timings: bool,
    },
    /// Plot branches and bifurcation points.
    Diagram {
        #[command(flatten)]
        common: Common,
        #[arg(long, num_args = 0..)]
        branch: Vec<PathBuf>,
        #[arg(long, num_args = 0..)]
        records: Vec<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => {
            let s = fs::read_to_string(p).map_err(|e| bad("config", format!("{}: {e}", p.display())))?;
            serde_json::from_str(&s).map_err(|e| bad("config", format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = common.sigma {
        cfg.sigma = s;
    }
    if let Some(n) = common.n {
        cfg.n = n;
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    Ok(cfg)
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

fn write_out(stage: &'static str, path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, bytes).map_err(|e| bad(stage, format!("cannot write {}: {e}", path.display())))
}

fn json_bytes<T: Serialize>(stage: &'static str, v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| num(stage, e))?;
    s.push('\n');
    Ok(s.into_bytes())
}

/// Full-precision scientific notation (17 significant digits).
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// A branch as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchFile {
    pub sigma: f64,
    /// Mode of the primary branch; 0 for the trivial branch.
    pub mode: usize,
    pub samples: Vec<BranchSample>,
}

impl BranchFile {
    pub fn n_sym(&self) -> Option<usize> {
        (self.mode > 0).then_some(self.mode)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let n = self.samples.iter().map(|s| s.u.len()).max().unwrap_or(0);
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut head: Vec<String> = ["sigma", "mode", "lambda", "normX", "stability_index"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        head.extend((1..=n).map(|k| format!("a{k}")));
        w.write_record(&head).map_err(|e| num("continue", e))?;
        for s in &self.samples {
            let mut row = vec![
                fmt17(self.sigma),
                self.mode.to_string(),
                fmt17(s.lambda),
                fmt17(s.norm_x),
                s.stability_index.to_string(),
            ];
            row.extend((1..=n).map(|k| fmt17(s.u.coeff(k))));
            w.write_record(&row).map_err(|e| num("continue", e))?;
        }
        w.into_inner().map_err(|e| num("continue", e))
    }

    /// Parses a branch CSV; spectra are recomputed from the coefficients.
    pub fn read(path: &Path) -> Result<Self> {
        let stage = "read-branch";
        let ctx = |e: &dyn std::fmt::Display| bad(stage, format!("{}: {e}", path.display()));
        let mut r = csv::Reader::from_path(path).map_err(|e| ctx(&e))?;
        let head = r.headers().map_err(|e| ctx(&e))?.clone();
        if head.len() < 5 || &head[0] != "sigma" || &head[2] != "lambda" {
            return Err(ctx(&"not a branch file"));
        }
        let mut sigma = None;
        let mut mode = 0;
        let mut samples = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| ctx(&e))?;
            let f = |i: usize| -> Result<f64> { rec[i].trim().parse::<f64>().map_err(|e| ctx(&e)) };
            let s = f(0)?;
            mode = rec[1].trim().parse::<usize>().map_err(|e| ctx(&e))?;
            sigma = Some(s);
            let lambda = f(2)?;
            let coeffs = (5..rec.len()).map(f).collect::<Result<Vec<_>>>()?;
            let p = ModelParams::new(s, lambda, (mode > 0).then_some(mode)).map_err(|e| ctx(&e))?;
            samples.push(BranchSample::at(&p, CosineSeries::new(coeffs)));
        }
        Ok(BranchFile {
            sigma: sigma.unwrap_or(f64::NAN),
            mode,
            samples,
        })
    }
}

pub fn branch_file_name(mode: usize) -> String {
    if mode == 0 {
        "branch_trivial.csv".into()
    } else {
        format!("branch_k{mode:02}.csv")
    }
}

fn run_mode(cfg: &RunConfig, k: usize) -> Result<(usize, Option<Vec<BranchSample>>, Option<String>)> {
    if k == 0 {
        let s = trivial_branch(cfg.sigma, (0.0, cfg.lambda_max), cfg.trivial_step, cfg.n).map_err(|e| num("continue", e))?;
        return Ok((k, Some(s), None));
    }
    match continue_branch(cfg.sigma, k, (0.0, cfg.lambda_max), cfg.n, &cfg.step) {
        Ok(s) => Ok((k, Some(s), None)),
        Err(EquilibriaError::NoPrimary { .. }) => Ok((
            k,
            None,
            Some(format!("[continue] mode {k}: no primary bifurcation for sigma = {}", cfg.sigma)),
        )),
        Err(EquilibriaError::ContinuationFailure { samples, source }) if samples.len() >= 2 => {
            let msg = format!(
                "[continue] mode {k}: stopped at lambda = {:.6} after {} samples ({source})",
                samples.last().map_or(f64::NAN, |s| s.lambda),
                samples.len()
            );
            Ok((k, Some(samples), Some(msg)))
        }
        Err(e) => Err(num("continue", format!("mode {k}: {e}"))),
    }
}

/// Runs the continuation for every configured mode. Branches that stop early
/// (fold or failed corrector) keep their samples; the reason is returned too.
pub fn cmd_continue(cfg: &RunConfig) -> Result<(Vec<PathBuf>, Vec<String>)> {
    cfg.check()?;
    let runs: Vec<Result<(usize, Option<Vec<BranchSample>>, Option<String>)>> = cfg
        .modes
        .par_iter()
        .map(|&k| run_mode(cfg, k))
        .collect();
    let mut files = Vec::new();
    let mut warnings = Vec::new();
    for run in runs {
        let (k, samples, warning) = run?;
        warnings.extend(warning);
        let Some(samples) = samples else { continue };
        let bf = BranchFile {
            sigma: cfg.sigma,
            mode: k,
            samples,
        };
        let path = cfg.out.join(branch_file_name(k));
        write_out("continue", &path, &bf.to_csv()?)?;
        files.push(path);
    }
    Ok((files, warnings))
}

pub fn cmd_detect(branches: &[BranchFile], n_sym: Option<usize>) -> Result<Vec<BifurcationRecord>> {
    let per: Vec<Result<Vec<BifurcationRecord>>> = branches
        .par_iter()
        .filter(|b| b.samples.len() >= 2)
        .map(|b| detect_bifurcations(b.sigma, &b.samples, n_sym.or(b.n_sym())).map_err(|e| num("detect", e)))
        .collect();
    let mut all = Vec::new();
    for r in per {
        all.extend(r?);
    }
    Ok(all)
}

/// Zero of the extended system with the functional it was solved for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedPoint {
    pub sigma: f64,
    pub detected_lambda: f64,
    pub w: ExtendedPoint,
    pub ell: NormalizationFunctional,
    pub residual: f64,
}

pub fn refine_record(rec: &BifurcationRecord, n: usize) -> Result<RefinedPoint> {
    if rec.kind != BifurcationKind::SymmetryBreaking {
        return Err(bad("refine", format!("record at lambda = {:.6} is not symmetry breaking", rec.lambda0)));
    }
    let len = rec.u0.len().max(rec.phi0.len());
    let mut r = rec.clone();
    if n < len {
        r.u0 = r.u0.resized(n);
        r.phi0 = r.phi0.resized(n);
    }
    let (w0, ell) = ExtendedPoint::from_record(&r, len.min(n)).map_err(|e| bad("refine", e))?;
    let w = newton_extended(rec.sigma, &w0, &ell, n).map_err(|e| num("refine", e))?;
    let residual = ext_residual(rec.sigma, &w, &ell).map_err(|e| num("refine", e))?;
    Ok(RefinedPoint {
        sigma: rec.sigma,
        detected_lambda: rec.lambda0,
        w,
        ell,
        residual,
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(stage: &'static str, path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).map_err(|e| bad(stage, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&s).map_err(|e| bad(stage, format!("{}: {e}", path.display())))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    Many(Vec<T>),
    One(T),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::Many(v) => v,
            OneOrMany::One(t) => vec![t],
        }
    }
}

fn read_list<T: for<'de> Deserialize<'de>>(stage: &'static str, path: &Path) -> Result<Vec<T>> {
    Ok(read_json::<OneOrMany<T>>(stage, path)?.into_vec())
}

/// Validates a refined point; invalid certificates are still returned.
pub fn cmd_validate(point: &RefinedPoint, cert: &CertConfig) -> Result<ValidationCertificate> {
    make_certificate(point.sigma, &point.w, &point.ell, cert).map_err(|e| num("validate", e))
}

fn case_color(c: Option<CaseLabel>) -> &'static str {
    match c {
        Some(CaseLabel::A) => "#d62728",
        Some(CaseLabel::B) => "#2ca02c",
        Some(CaseLabel::C) => "#17becf",
        Some(CaseLabel::D) => "#e377c2",
        None => "#000000",
    }
}

const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#9467bd", "#8c564b", "#7f7f7f", "#bcbd22"];

/// SVG of `||u||_X` against lambda with bifurcation markers, and the
/// combined CSV. Both are deterministic functions of the inputs.
pub fn render_diagram(branches: &[BranchFile], records: &[BifurcationRecord]) -> (String, String) {
    let (w, h, ml, mr, mt, mb) = (900.0, 600.0, 70.0, 20.0, 20.0, 50.0);
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for b in branches {
        for s in &b.samples {
            xs.push(s.lambda);
            ys.push(s.norm_x);
        }
    }
    for r in records {
        xs.push(r.lambda0);
        ys.push(r.u0.norm_x());
    }
    let range = |v: &[f64]| -> (f64, f64) {
        let lo = v.iter().cloned().filter(|x| x.is_finite()).fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().filter(|x| x.is_finite()).fold(f64::NEG_INFINITY, f64::max);
        if !(lo <= hi) {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = range(&xs);
    let (y0, y1) = range(&ys);
    let (y0, y1) = (y0.min(0.0), y1 + 0.05 * (y1 - y0));
    let px = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let py = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="900" height="600" viewBox="0 0 900 600">"#);
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="900" height="600" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<path d="M{ml:.2} {:.2} L{ml:.2} {:.2} L{:.2} {:.2}" stroke="black" fill="none"/>"#,
        mt,
        h - mb,
        w - mr,
        h - mb
    );
    for i in 0..=5 {
        let t = i as f64 / 5.0;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"#,
            px(xv),
            h - mb + 18.0,
            tick(xv)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="end">{}</text>"#,
            ml - 6.0,
            py(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(svg, r#"<text x="{:.2}" y="592" font-size="14" text-anchor="middle">lambda</text>"#, (ml + w - mr) / 2.0);
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" font-size="14" text-anchor="middle" transform="rotate(-90 16 {:.2})">||u||_X</text>"#,
        (mt + h - mb) / 2.0,
        (mt + h - mb) / 2.0
    );
    for (i, b) in branches.iter().enumerate() {
        if b.samples.is_empty() {
            continue;
        }
        let pts: Vec<String> = b.samples.iter().map(|s| format!("{:.2},{:.2}", px(s.lambda), py(s.norm_x))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" stroke="{}" stroke-width="1.5" fill="none"/>"#,
            pts.join(" "),
            PALETTE[i % PALETTE.len()]
        );
    }
    for r in records {
        let (cx, cy) = (px(r.lambda0), py(r.u0.norm_x()));
        let col = case_color(r.scenario.map(|s| s.case_label));
        if r.kind == BifurcationKind::SymmetryBreaking {
            let _ = writeln!(svg, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="4" fill="{col}"/>"#);
        } else {
            let _ = writeln!(
                svg,
                r#"<path d="M{:.2} {:.2} L{:.2} {:.2} M{:.2} {:.2} L{:.2} {:.2}" stroke="{col}" stroke-width="1.5"/>"#,
                cx - 4.0,
                cy - 4.0,
                cx + 4.0,
                cy + 4.0,
                cx - 4.0,
                cy + 4.0,
                cx + 4.0,
                cy - 4.0
            );
        }
    }
    svg.push_str("</svg>\n");

    let mut csv = String::from("kind,branch,lambda,normX,case\n");
    for b in branches {
        for s in &b.samples {
            let _ = writeln!(csv, "sample,{},{},{},", b.mode, fmt17(s.lambda), fmt17(s.norm_x));
        }
    }
    for r in records {
        let case = r.scenario.map(|s| s.case_label.to_string()).unwrap_or_default();
        let _ = writeln!(
            csv,
            "bifurcation,{},{},{},{case}",
            r.n_sym.unwrap_or(0),
            fmt17(r.lambda0),
            fmt17(r.u0.norm_x())
        );
    }
    (svg, csv)
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.to_string() }
}

fn dispatch(cmd: Cmd) -> Result<i32> {
    match cmd {
        Cmd::Continue {
            common,
            modes,
            lambda_max,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(m) = modes {
                cfg.modes = m;
            }
            if let Some(l) = lambda_max {
                cfg.lambda_max = l;
            }
            let (files, warnings) = cmd_continue(&cfg)?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            for f in files {
                println!("{}", f.display());
            }
            Ok(EXIT_OK)
        }
        Cmd::Detect { common, branch, n_sym } => {
            let cfg = load_config(&common)?;
            let files = branch.iter().map(|p| BranchFile::read(p)).collect::<Result<Vec<_>>>()?;
            let recs = cmd_detect(&files, n_sym)?;
            let path = cfg.out.join("bifurcations.json");
            write_out("detect", &path, &json_bytes("detect", &recs)?)?;
            for r in recs.iter().filter(|r| !r.resolved) {
                eprintln!("warning: [detect] unresolved crossing near lambda = {:.6}", r.lambda0);
            }
            println!("{}", path.display());
            Ok(EXIT_OK)
        }
        Cmd::Refine { common, records, near } => {
            let cfg = load_config(&common)?;
            cfg.check()?;
            let mut recs: Vec<BifurcationRecord> = read_list("refine", &records)?;
            recs.retain(|r| r.kind == BifurcationKind::SymmetryBreaking);
            if let Some(l) = near {
                let best = recs
                    .iter()
                    .min_by(|a, b| (a.lambda0 - l).abs().total_cmp(&(b.lambda0 - l).abs()))
                    .cloned();
                recs = best.into_iter().collect();
            }
            let pts = recs.iter().map(|r| refine_record(r, cfg.n)).collect::<Result<Vec<_>>>()?;
            let path = cfg.out.join("refined.json");
            write_out("refine", &path, &json_bytes("refine", &pts)?)?;
            println!("{}", path.display());
            Ok(EXIT_OK)
        }
        Cmd::Validate {
            common,
            input,
            index,
            refine,
            dw,
            dsigma,
            tail_n,
            no_timings,
        } => {
            let mut cfg = load_config(&common)?;
            if dw.is_some() {
                cfg.cert.d_w = dw;
            }
            if dsigma.is_some() {
                cfg.cert.d_sigma = dsigma;
            }
            if tail_n.is_some() {
                cfg.cert.tail_n = tail_n;
            }
            if no_timings {
                cfg.cert.record_timings = false;
            }
            cfg.check()?;
            let point = if refine {
                let recs: Vec<BifurcationRecord> = read_list("validate", &input)?;
                let rec = recs
                    .get(index)
                    .ok_or_else(|| bad("validate", format!("no record at index {index}")))?;
                refine_record(rec, cfg.n)?
            } else {
                let pts: Vec<RefinedPoint> = read_list("validate", &input)?;
                pts.get(index)
                    .cloned()
                    .ok_or_else(|| bad("validate", format!("no refined point at index {index}")))?
            };
            let cert = cmd_validate(&point, &cfg.cert)?;
            let path = cfg.out.join("certificate.json");
            write_out("validate", &path, &json_bytes("validate", &cert)?)?;
            println!("{}", path.display());
            match &cert.failure {
                None if cert.valid => Ok(EXIT_OK),
                f => {
                    let (stage, msg) = f
                        .as_ref()
                        .map(|f| (f.stage.to_string(), f.message.clone()))
                        .unwrap_or(("box".into(), "not valid".into()));
                    Err(CliError::Invalid { stage, msg })
                }
            }
        }
        Cmd::Diagram {
            common,
            branch,
            records,
        } => {
            let cfg = load_config(&common)?;
            let files = branch.iter().map(|p| BranchFile::read(p)).collect::<Result<Vec<_>>>()?;
            let mut recs = Vec::new();
            for p in &records {
                recs.extend(read_list::<BifurcationRecord>("diagram", p)?);
            }
            let (svg, csv) = render_diagram(&files, &recs);
            write_out("diagram", &cfg.out.join("diagram.svg"), svg.as_bytes())?;
            write_out("diagram", &cfg.out.join("diagram.csv"), csv.as_bytes())?;
            Ok(EXIT_OK)
        }
    }
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_BAD_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.cmd) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
