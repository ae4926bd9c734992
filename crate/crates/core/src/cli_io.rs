//! Command-line front end: argument parsing, input formats and report output.
//!
//! Exit codes: 0 when the computed verdict passes, 1 when it fails, 2 on
//! malformed input or arguments.

use std::ffi::OsString;
use std::fs;
use std::io::{Read, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::{json, Value};

use crate::cross_ratio::{abstract_cr_validate, cr_identities_check, XRTable, IDENTITY_TOL};
use crate::deform_tree::{
    critical_dimension, critical_exponent, tree_embed, CriticalExponent, TreeMetric, DEFAULT_ITERS, DEFAULT_T_MAX,
};
use crate::degeneration::{run_degeneration, DegenerationReport, Family, RepFamilySpec};
use crate::error::{GeoError, Result};
use crate::gns_embed::{embed_from_cross_ratios, embed_hyperbolic};
use crate::isometry_dyn::{
    classify, length_function_from_orbit, validate_isometry, IsomKind, Isometry, LengthFunction, Representation,
    Word, LOXODROMIC_TOL,
};
use crate::kernel_check::{
    is_hyperbolic_type, is_strict_hyperbolic_type, visual_rank, CheckReport, FiniteMetric, SymKernel, PSD_TOL,
    RANK_TOL, STRICT_TOL,
};
use crate::mink_core::{hull_bound, hull_skeleton_gap, BPoint, HPoint, Point};

/// Slack on the hull-to-skeleton bound in `hull-check`.
pub const HULL_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "hypgeo", version, about = "Hyperbolic geometry of finite configurations")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
    /// Input file; standard input when absent or `-`.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output format; each subcommand has its own default.
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
    /// Numerical tolerance; each subcommand has its own default.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Certify a kernel as being of hyperbolic type.
    CheckKernel,
    /// Embed a hyperbolic-type kernel in its minimal hyperbolic space.
    Embed {
        #[arg(long, default_value_t = 0)]
        base: usize,
    },
    /// Reconstruct boundary rays from a cross-ratio table.
    BoundaryEmbed {
        /// Label indices sent to infinity, 0 and 1.
        #[arg(long, value_delimiter = ',', default_values_t = [0usize, 1, 2])]
        anchors: Vec<usize>,
    },
    /// Critical exponent and dimension of a kernel.
    Critical {
        #[arg(long, default_value_t = DEFAULT_T_MAX)]
        t_max: f64,
        #[arg(long, default_value_t = DEFAULT_ITERS)]
        iters: usize,
    },
    /// Classify an isometry given as a Lorentz matrix.
    Classify,
    /// Translation lengths over a word ball of a representation.
    LengthSpectrum {
        #[arg(long, default_value_t = 2)]
        ball: usize,
    },
    /// Cross-ratio table of boundary rays, or identity check of a given table.
    CrossRatio {
        /// Random quintuples sampled when the input is a list of rays.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Embed a tree metric through `lambda^d = cosh d_H`.
    TreeEmbed {
        #[arg(long, default_value_t = std::f64::consts::E)]
        lambda: f64,
    },
    /// Rescaled degeneration of a family of free-group representations.
    Degenerate {
        #[arg(long, default_value = "crossed_axes")]
        family: String,
        #[arg(long, default_value_t = std::f64::consts::FRAC_PI_2)]
        phi: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [10.0, 20.0, 40.0])]
        scales: Vec<f64>,
        #[arg(long, default_value_t = 3)]
        ball: usize,
        #[arg(long, value_delimiter = ',', default_values_t = ["a".to_string(), "ab".to_string(), "abAB".to_string()])]
        words: Vec<String>,
        #[arg(long, default_value_t = 2)]
        dimension: usize,
        /// Axis distance for the schottky family.
        #[arg(long, default_value_t = 1.0)]
        distance: f64,
    },
    /// Sampled distance from the convex hull of points to its 1-skeleton.
    HullCheck {
        #[arg(long, default_value_t = 500)]
        samples: usize,
    },
}

/// Result of one subcommand: the document to print and whether its verdict passed.
#[derive(Debug)]
pub struct Outcome {
    pub body: String,
    pub pass: bool,
}

pub fn exit_code(err: &GeoError) -> i32 {
    match err {
        GeoError::Precondition(_)
        | GeoError::Certification(_)
        | GeoError::Degenerate(_)
        | GeoError::NoConvergence(_) => 1,
        GeoError::DimensionMismatch { .. }
        | GeoError::InvalidPoint(_)
        | GeoError::InvalidInput(_)
        | GeoError::Io(_)
        | GeoError::Parse(_) => 2,
    }
}

/// Parses `args` (program name first), runs, writes output and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    dispatch(&config)
}

pub fn dispatch(config: &RunConfig) -> i32 {
    let outcome = run(config).and_then(|o| {
        write_output(config.out.as_ref(), &o.body)?;
        Ok(o)
    });
    match outcome {
        Ok(o) => i32::from(!o.pass),
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn write_output(path: Option<&PathBuf>, body: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, body)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(body.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

fn read_input(path: Option<&PathBuf>) -> Result<String> {
    match path {
        Some(p) if p.as_os_str() != "-" => Ok(fs::read_to_string(p)?),
        _ => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s)?;
            Ok(s)
        }
    }
}

fn tolerance(config: &RunConfig, default: f64) -> Result<f64> {
    match config.tol {
        None => Ok(default),
        Some(t) if t > 0.0 && t.is_finite() => Ok(t),
        Some(t) => Err(GeoError::InvalidInput(format!("tolerance {t} must be positive"))),
    }
}

pub fn run(config: &RunConfig) -> Result<Outcome> {
    let format = |default: OutputFormat| config.format.unwrap_or(default);
    let input = || read_input(config.input.as_ref());
    match &config.command {
        Command::CheckKernel => {
            let tol = tolerance(config, PSD_TOL)?;
            let k = parse_kernel(&input()?)?;
            let hyp = is_hyperbolic_type(&k, tol, true)?;
            let strict = is_strict_hyperbolic_type(&k, STRICT_TOL)?;
            let dim = if hyp.verdict && !k.is_empty() { Some(visual_rank(&k, 0)?) } else { None };
            let summary = match dim {
                Some(d) => format!("hyperbolic type, dim {d}"),
                None => "not of hyperbolic type".to_string(),
            };
            let doc = json!({ "summary": summary, "hyperbolic": hyp, "strict": strict, "dimension": dim });
            Ok(Outcome { body: to_json(&doc)?, pass: hyp.verdict })
        }
        Command::Embed { base } => {
            let tol = tolerance(config, RANK_TOL)?;
            let k = parse_kernel(&input()?)?;
            let e = embed_hyperbolic(&k, *base, tol)?;
            Ok(Outcome { body: to_json(&e)?, pass: true })
        }
        Command::BoundaryEmbed { anchors } => {
            let tol = tolerance(config, RANK_TOL)?;
            let anchors: [usize; 3] = anchors
                .as_slice()
                .try_into()
                .map_err(|_| GeoError::InvalidInput("--anchors takes exactly three indices".into()))?;
            let table = XRTable::from_json(&input()?)?;
            let e = embed_from_cross_ratios(&table, anchors, tol)?;
            Ok(Outcome { body: to_json(&e)?, pass: true })
        }
        Command::Critical { t_max, iters } => {
            let k = parse_kernel(&input()?)?;
            let analysis = critical_exponent(&k, *t_max, *iters)?;
            let dimension = match analysis.t_k {
                CriticalExponent::Finite(_) => Some(critical_dimension(&k, &analysis)?),
                CriticalExponent::Infinite => critical_dimension(&k, &analysis).ok(),
            };
            let mut doc = serde_json::to_value(&analysis)?;
            doc["critical_dimension"] = json!(dimension);
            Ok(Outcome { body: to_json(&doc)?, pass: true })
        }
        Command::Classify => {
            let tol = tolerance(config, LOXODROMIC_TOL)?;
            let g = parse_isometry(&input()?)?;
            let class = classify(&g, tol)?;
            let summary = match class.kind {
                IsomKind::Loxodromic => format!("loxodromic, length {}", fmt17(class.length)),
                kind => kind.to_string(),
            };
            let doc = json!({
                "summary": summary,
                "kind": class.kind,
                "length": class.length,
                "log_spectral_radius": class.log_spectral_radius,
                "fixed_rays": class.fixed_rays,
                "ortho_residual": g.ortho_residual(),
            });
            Ok(Outcome { body: to_json(&doc)?, pass: true })
        }
        Command::LengthSpectrum { ball } => {
            let rho = parse_representation(&input()?)?;
            let l = length_function_from_orbit(&rho, &HPoint::origin(rho.dimension), *ball)?;
            let body = match format(OutputFormat::Csv) {
                OutputFormat::Csv => length_function_csv(&l),
                OutputFormat::Json => {
                    let rows: Vec<Value> = l
                        .words
                        .iter()
                        .zip(&l.lengths)
                        .map(|(w, x)| json!({ "word": w.to_string(), "length": x }))
                        .collect();
                    to_json(&rows)?
                }
            };
            Ok(Outcome { body, pass: true })
        }
        Command::CrossRatio { samples } => {
            let tol = tolerance(config, IDENTITY_TOL)?;
            let text = input()?;
            match parse_rays(&text) {
                Ok(rays) => {
                    let table = XRTable::from_rays(&rays)?;
                    let report = if rays.len() >= 2 {
                        Some(cr_identities_check(&rays, *samples, config.seed, tol)?)
                    } else {
                        None
                    };
                    let pass = report.as_ref().is_none_or(|r| r.verdict);
                    let table_value: Value = serde_json::from_str(&table.to_json()?)?;
                    let doc = json!({ "identities": report.as_ref().map(report_value), "table": table_value });
                    Ok(Outcome { body: to_json(&doc)?, pass })
                }
                Err(_) => {
                    let table = XRTable::from_json(&text)?;
                    let report = abstract_cr_validate(&table, tol)?;
                    let doc = json!({ "identities": report_value(&report) });
                    Ok(Outcome { body: to_json(&doc)?, pass: report.verdict })
                }
            }
        }
        Command::TreeEmbed { lambda } => {
            let d = parse_metric(&input()?)?;
            let e = tree_embed(&TreeMetric::new(d)?, *lambda)?;
            Ok(Outcome { body: to_json(&e)?, pass: true })
        }
        Command::Degenerate { family, phi, scales, ball, words, dimension, distance } => {
            let family: Family = family.parse()?;
            let spec = RepFamilySpec {
                family,
                phi: *phi,
                scales: scales.clone(),
                dimension: *dimension,
                distance: *distance,
                seed: config.seed,
            };
            let words: Vec<Word> = words.iter().map(|w| Word::parse(w)).collect::<Result<_>>()?;
            let report = run_degeneration(&spec, *ball, &words)?;
            let pass = report.defects.as_ref().is_none_or(|d| d.monotone);
            let body = match format(OutputFormat::Csv) {
                OutputFormat::Csv => degeneration_csv(&report),
                OutputFormat::Json => to_json(&report)?,
            };
            Ok(Outcome { body, pass })
        }
        Command::HullCheck { samples } => {
            let points = parse_points(&input()?)?;
            let gap = hull_skeleton_gap(&points, *samples, config.seed)?;
            let report = CheckReport::new(
                hull_bound() - gap,
                HULL_SLACK,
                None,
                format!("largest sampled hull-to-skeleton distance {}", fmt17(gap)),
            );
            let doc = json!({ "gap": gap, "bound": hull_bound(), "report": report_value(&report) });
            Ok(Outcome { body: to_json(&doc)?, pass: report.verdict })
        }
    }
}

/// Identity-check report with a one-line human summary.
fn report_value(r: &CheckReport) -> Value {
    let mut v = serde_json::to_value(r).unwrap_or(Value::Null);
    let line = format!(
        "{}: margin {} (tolerance {}), {}",
        if r.verdict { "PASS" } else { "FAIL" },
        fmt17(r.margin),
        fmt17(r.tolerance),
        r.detail
    );
    v["summary"] = Value::String(line);
    v
}

/// Float with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

struct Sig17Formatter<'a>(PrettyFormatter<'a>);

impl Formatter for Sig17Formatter<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> std::io::Result<()> {
        w.write_all(fmt17(value).as_bytes())
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(w, value as f64)
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Pretty JSON with every float printed to 17 significant digits. Non-finite
/// floats become `null`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17Formatter(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| GeoError::Parse(e.to_string()))
}

pub fn length_function_csv(l: &LengthFunction) -> String {
    let mut s = String::from("word,length\n");
    for (w, x) in l.words.iter().zip(&l.lengths) {
        s.push_str(&format!("{w},{}\n", fmt17(*x)));
    }
    s
}

/// One row per scale: `L`, the four-point defect and `ℓ_L(w)/L` for each word.
pub fn degeneration_csv(r: &DegenerationReport) -> String {
    let mut s = String::from("L,delta4");
    for row in &r.lengths {
        s.push(',');
        s.push_str(&row.word);
    }
    s.push('\n');
    for (k, rec) in r.records.iter().enumerate() {
        s.push_str(&format!("{},{}", fmt17(rec.scale), fmt17(rec.delta4)));
        for row in &r.lengths {
            s.push(',');
            s.push_str(&fmt17(row.ratios[k]));
        }
        s.push('\n');
    }
    s
}

#[derive(Deserialize)]
struct MatrixJson {
    #[serde(default)]
    labels: Option<Vec<String>>,
    entries: Vec<Vec<f64>>,
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(GeoError::InvalidInput("matrix must be square".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Square matrix with optional labels, from JSON `{labels, entries}` or CSV.
/// A CSV whose first row is not numeric takes that row as labels.
pub fn parse_matrix(text: &str) -> Result<(DMatrix<f64>, Option<Vec<String>>)> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        let m: MatrixJson = serde_json::from_str(text)?;
        return Ok((matrix_from_rows(&m.entries)?, m.labels));
    }
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty()).peekable();
    let mut labels = None;
    if let Some(first) = lines.peek() {
        if first.split(',').any(|c| c.trim().parse::<f64>().is_err()) {
            labels = Some(first.split(',').map(|c| c.trim().to_string()).collect());
            lines.next();
        }
    }
    let rows: Vec<Vec<f64>> = lines
        .map(|l| {
            l.split(',')
                .map(|c| c.trim().parse::<f64>().map_err(|e| GeoError::Parse(format!("{c:?}: {e}"))))
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok((matrix_from_rows(&rows)?, labels))
}

pub fn parse_kernel(text: &str) -> Result<SymKernel> {
    let (m, labels) = parse_matrix(text)?;
    SymKernel::new(m, labels)
}

pub fn parse_metric(text: &str) -> Result<FiniteMetric> {
    let (m, labels) = parse_matrix(text)?;
    FiniteMetric::new(m, labels)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum IsometryJson {
    Wrapped { matrix: Vec<Vec<f64>> },
    Bare(Vec<Vec<f64>>),
}

fn isometry_from_rows(rows: &[Vec<f64>]) -> Result<Isometry> {
    validate_isometry(matrix_from_rows(rows)?)
}

/// Lorentz matrix as `{"matrix": [[...]]}` or a bare list of rows.
pub fn parse_isometry(text: &str) -> Result<Isometry> {
    let rows = match serde_json::from_str::<IsometryJson>(text)? {
        IsometryJson::Wrapped { matrix } => matrix,
        IsometryJson::Bare(m) => m,
    };
    isometry_from_rows(&rows)
}

#[derive(Serialize, Deserialize)]
pub struct RepresentationJson {
    pub dimension: usize,
    pub generators: Vec<Vec<Vec<f64>>>,
}

pub fn parse_representation(text: &str) -> Result<Representation> {
    let r: RepresentationJson = serde_json::from_str(text)?;
    let gens: Vec<Isometry> = r.generators.iter().map(|g| isometry_from_rows(g)).collect::<Result<_>>()?;
    let rho = Representation::new(gens)?;
    if rho.dimension != r.dimension {
        return Err(GeoError::DimensionMismatch { expected: r.dimension, got: rho.dimension });
    }
    Ok(rho)
}

pub fn representation_json(rho: &Representation) -> RepresentationJson {
    RepresentationJson {
        dimension: rho.dimension,
        generators: rho
            .generators
            .iter()
            .map(|g| g.matrix().row_iter().map(|r| r.iter().copied().collect()).collect())
            .collect(),
    }
}

/// List of tagged points, as written by the embedding commands or by hand.
/// An object with a `points` or `rays` field is unwrapped first.
pub fn parse_points(text: &str) -> Result<Vec<Point>> {
    let v: Value = serde_json::from_str(text)?;
    let list = match &v {
        Value::Object(o) => o
            .get("points")
            .or_else(|| o.get("rays"))
            .cloned()
            .ok_or_else(|| GeoError::Parse("expected a list of points".into()))?,
        _ => v,
    };
    Ok(serde_json::from_value(list)?)
}

pub fn parse_rays(text: &str) -> Result<Vec<BPoint>> {
    parse_points(text)?
        .into_iter()
        .map(|p| match p {
            Point::Boundary(b) => Ok(b),
            Point::Interior(_) => Err(GeoError::InvalidInput("expected boundary rays".into())),
        })
        .collect()
}
