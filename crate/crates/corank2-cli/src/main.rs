//! Command-line front end for the corank2 library.
//!
//! Every subcommand loads a model (built-in or from a description file),
//! runs one pipeline stage, and emits a report. Exit codes: 0 on success,
//! 1 when a verification item fails, 2 on usage or input-file errors, 3
//! when a computation fails at evaluation time (for example requesting
//! the complex structure of a hyperbolic model).

mod dsl;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use corank2::almost_complex::{canonical_j, RootBranch, StructureField};
use corank2::catalog::load_model;
use corank2::checklist;
use corank2::distribution::{build_distribution, verify_reeb, verify_reeb_at, Distribution};
use corank2::ellipticity::{classify_point, scan_interval, Kind, ScanSample};
use corank2::obstruction::{canonical_conditions, s_tensor};
use corank2::oracle::verify_globalization;
use corank2::sample::{SampleOptions, DEFAULT_SEED};
use corank2::scalar::{Coordinate, Point};
use serde_json::{json, Value};

use report::{sci, Item, Report};

#[derive(Parser)]
#[command(name = "corank2", version, about = "Corank-2 distributions on R^6: \
classification, transverse pairs, the canonical almost complex structure, \
and its obstruction tensor")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify points (or a grid line) as elliptic, hyperbolic, or degenerate.
    Classify {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        points: PointArgs,
        /// Classify along a coordinate segment, e.g. x2=-2:2:401.
        #[arg(long, value_name = "VAR=LO:HI:N")]
        grid: Option<String>,
        /// Degeneracy threshold on the normalized determinant.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Check the four transverse-pair conditions.
    ReebCheck {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        points: PointArgs,
        /// Tolerance for each condition residual.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Sample seed (used when no explicit points are given).
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Build the canonical almost complex structure and check its conditions.
    JStructure {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        points: PointArgs,
        /// Override the per-condition tolerances with a single value.
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Evaluate the obstruction tensor at points.
    STensor {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        points: PointArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Factor the curvature pencil at the root into a wedge of covectors.
    Factor {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        points: PointArgs,
        /// Tolerance for decomposability and reconstruction.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Tabulate the classification along a coordinate segment.
    Scan {
        #[command(flatten)]
        model: ModelArgs,
        /// Segment to scan, e.g. x2=-2:2:401.
        #[arg(long, value_name = "VAR=LO:HI:N")]
        grid: String,
        /// Base point the segment passes through.
        #[arg(long, value_name = "C1,..,C6")]
        point: Option<String>,
        /// Degeneracy threshold on the normalized determinant.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Certify the band-to-line globalization of the cubic model.
    GlobalizeCheck {
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Run the full verification battery over the model catalog.
    Verify {
        /// Sample seed for the battery.
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        out: OutputArgs,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Built-in model: flat_elliptic, flat_hyperbolic, cubic, global, perturbed.
    #[arg(long, conflicts_with = "file")]
    model: Option<String>,
    /// Model description file.
    #[arg(long)]
    file: Option<PathBuf>,
    /// Shear expression in y1 for the perturbed model.
    #[arg(long)]
    kappa: Option<String>,
}

#[derive(Args)]
struct PointArgs {
    /// Evaluation point, six comma-separated components; repeatable.
    #[arg(long = "point", value_name = "C1,..,C6")]
    points: Vec<String>,
}

#[derive(Args)]
struct OutputArgs {
    /// Report format (csv is available for scan only).
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Write the report to this file instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

/// A failure outside the report itself, mapped to an exit code.
#[derive(Debug)]
enum Failure {
    /// Bad invocation or unreadable/invalid input: exit 2.
    Usage(String),
    /// A computation refused or broke down at evaluation time: exit 3.
    Eval(String),
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn eval(e: impl std::fmt::Display) -> Failure {
    Failure::Eval(e.to_string())
}

struct Outcome {
    report: Report,
    /// CSV rendering, offered by the scan command.
    csv: Option<String>,
}

impl From<Report> for Outcome {
    fn from(report: Report) -> Outcome {
        Outcome { report, csv: None }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Eval(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    let (outcome, out) = match cli.command {
        Command::Classify {
            model,
            points,
            grid,
            tol,
            out,
        } => {
            let handle = load_handle(&model)?;
            let pts = parse_points(&points, handle.distribution.domain().center())?;
            let grid = grid.map(|g| parse_grid(&g)).transpose()?;
            (cmd_classify(&handle, &pts, grid, tol)?, out)
        }
        Command::ReebCheck {
            model,
            points,
            tol,
            seed,
            out,
        } => {
            let handle = load_handle(&model)?;
            let pts = parse_point_list(&points)?;
            (cmd_reeb_check(&handle, &pts, tol, seed)?, out)
        }
        Command::JStructure {
            model,
            points,
            tol,
            out,
        } => {
            let handle = load_handle(&model)?;
            let pts = parse_points(&points, handle.distribution.domain().center())?;
            (cmd_j_structure(&handle, &pts, tol)?, out)
        }
        Command::STensor { model, points, out } => {
            let handle = load_handle(&model)?;
            let pts = parse_points(&points, handle.distribution.domain().center())?;
            (cmd_s_tensor(&handle, &pts)?, out)
        }
        Command::Factor {
            model,
            points,
            tol,
            out,
        } => {
            let handle = load_handle(&model)?;
            let pts = parse_points(&points, handle.distribution.domain().center())?;
            (cmd_factor(&handle, &pts, tol)?, out)
        }
        Command::Scan {
            model,
            grid,
            point,
            tol,
            out,
        } => {
            let handle = load_handle(&model)?;
            let grid = parse_grid(&grid)?;
            let base = match point {
                Some(s) => parse_point(&s)?,
                None => handle.distribution.domain().center(),
            };
            (cmd_scan(&handle, grid, &base, tol)?, out)
        }
        Command::GlobalizeCheck { out } => (cmd_globalize_check()?, out),
        Command::Verify { seed, out } => (cmd_verify(seed), out),
    };

    let rendered = match out.format {
        Format::Json => outcome.report.to_json(),
        Format::Text => outcome.report.to_text(),
        Format::Csv => outcome
            .csv
            .ok_or_else(|| usage("csv output is only available for scan"))?,
    };
    match &out.output {
        Some(path) => std::fs::write(path, rendered)
            .map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?,
        None => print!("{rendered}"),
    }

    Ok(if outcome.report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

/// A loaded model: its distribution plus the label reports carry.
struct ModelHandle {
    label: String,
    distribution: Distribution,
}

fn load_handle(args: &ModelArgs) -> Result<ModelHandle, Failure> {
    match (&args.model, &args.file) {
        (Some(name), None) => {
            let model = load_model(name, args.kappa.as_deref()).map_err(usage)?;
            let label = match &args.kappa {
                Some(k) => format!("{name} kappa={k}"),
                None => name.clone(),
            };
            Ok(ModelHandle {
                label,
                distribution: model.distribution,
            })
        }
        (None, Some(path)) => {
            if args.kappa.is_some() {
                return Err(usage("--kappa only applies to the built-in perturbed model"));
            }
            let file = dsl::load_model_file(path).map_err(usage)?;
            let distribution =
                build_distribution(file.forms, file.framing, file.reeb, file.domain)
                    .map_err(usage)?;
            let label = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "file".into());
            Ok(ModelHandle {
                label,
                distribution,
            })
        }
        _ => Err(usage("give exactly one of --model or --file")),
    }
}

fn parse_point(s: &str) -> Result<Point, Failure> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 6 {
        return Err(usage(format!(
            "a point needs 6 comma-separated components, found {} in {s:?}",
            parts.len()
        )));
    }
    let mut c = [0.0; 6];
    for (i, part) in parts.iter().enumerate() {
        c[i] = part
            .trim()
            .parse()
            .map_err(|_| usage(format!("bad component {:?} in point {s:?}", part.trim())))?;
    }
    Ok(Point(c))
}

/// Explicit points, or the single default when none were given.
fn parse_points(args: &PointArgs, default: Point) -> Result<Vec<Point>, Failure> {
    let pts = parse_point_list(args)?;
    Ok(if pts.is_empty() { vec![default] } else { pts })
}

fn parse_point_list(args: &PointArgs) -> Result<Vec<Point>, Failure> {
    args.points.iter().map(|s| parse_point(s)).collect()
}

struct GridSpec {
    coord: Coordinate,
    lo: f64,
    hi: f64,
    n: usize,
}

fn parse_grid(s: &str) -> Result<GridSpec, Failure> {
    let bad = || usage(format!("grid must look like x2=-2:2:401, found {s:?}"));
    let (var, rest) = s.split_once('=').ok_or_else(bad)?;
    let coord = Coordinate::parse(var.trim())
        .ok_or_else(|| usage(format!("unknown coordinate {:?} in grid {s:?}", var.trim())))?;
    let parts: Vec<&str> = rest.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if n < 2 {
        return Err(usage("a grid needs at least two samples"));
    }
    Ok(GridSpec { coord, lo, hi, n })
}

fn point_value(p: &Point) -> Value {
    json!(p.0.to_vec())
}

fn complex_value(z: num_complex::Complex64) -> Value {
    json!([z.re, z.im])
}

/// Contiguous same-kind runs of a scan, one info item each.
fn region_items(coord: Coordinate, rows: &[ScanSample]) -> Vec<Item> {
    let mut items = Vec::new();
    let mut start = 0;
    for i in 1..=rows.len() {
        if i == rows.len() || rows[i].kind != rows[start].kind {
            items.push(Item::info(
                format!("region-{}", items.len() + 1),
                format!(
                    "{} for {} in [{}, {}]",
                    rows[start].kind.label(),
                    coord.name(),
                    rows[start].value,
                    rows[i - 1].value
                ),
            ));
            start = i;
        }
    }
    items
}

fn cmd_classify(
    handle: &ModelHandle,
    pts: &[Point],
    grid: Option<GridSpec>,
    tol: f64,
) -> Result<Outcome, Failure> {
    let mut report = Report::new("classify", &handle.label, DEFAULT_SEED);
    let dist = &handle.distribution;

    if let Some(g) = grid {
        let base = pts[0];
        let rows = scan_interval(dist, g.coord, g.lo, g.hi, g.n, &base, tol).map_err(eval)?;
        report.items = region_items(g.coord, &rows);
        for r in &rows {
            report.points.push(json!({
                g.coord.name(): r.value,
                "det": r.det_raw,
                "det_normalized": r.det_normalized,
                "kind": r.kind.label(),
            }));
        }
    } else {
        let mut counts = [0usize; 3];
        for p in pts {
            let c = classify_point(dist, p, tol).map_err(eval)?;
            counts[match c.kind {
                Kind::Elliptic => 0,
                Kind::Hyperbolic => 1,
                Kind::Degenerate => 2,
            }] += 1;
            report.points.push(json!({
                "point": point_value(p),
                "kind": c.kind.label(),
                "matrix": c.matrix.to_vec(),
                "det": c.det_raw,
                "det_normalized": c.det_normalized,
                "scale": c.scale,
            }));
        }
        report.items.push(Item::info(
            "classified",
            format!(
                "{} points: {} elliptic, {} hyperbolic, {} degenerate",
                pts.len(),
                counts[0],
                counts[1],
                counts[2]
            ),
        ));
    }
    Ok(report.into())
}

fn cmd_reeb_check(
    handle: &ModelHandle,
    pts: &[Point],
    tol: f64,
    seed: u64,
) -> Result<Outcome, Failure> {
    let dist = &handle.distribution;
    let pair = dist
        .transverse()
        .ok_or_else(|| usage("the model declares no transverse pair; add a [reeb] section"))?;

    let outcome = if pts.is_empty() {
        let opts = SampleOptions {
            count: 50,
            seed,
            tol,
            retry_budget: 1000,
        };
        verify_reeb(dist, pair, &opts).map_err(eval)?
    } else {
        verify_reeb_at(dist, pair, pts, tol).map_err(eval)?
    };

    let mut report = Report::new("reeb-check", &handle.label, seed);
    for c in &outcome.conditions {
        report
            .items
            .push(Item::check(c.name, c.pass, c.residual, format!("tol {:e}", c.tol)));
    }
    report.items.push(Item::info(
        "frame-volume",
        format!(
            "smallest |det| of the combined frame over {} points: {}",
            outcome.points,
            sci(outcome.min_frame_det)
        ),
    ));
    Ok(report.into())
}

fn cmd_j_structure(
    handle: &ModelHandle,
    pts: &[Point],
    tol: Option<f64>,
) -> Result<Outcome, Failure> {
    let dist = &handle.distribution;
    let mut report = Report::new("j-structure", &handle.label, DEFAULT_SEED);

    let (tol_sq, tol_ker, tol_bilin, tol_bracket) = match tol {
        Some(t) => (t, t, t, t),
        None => (1e-9, 1e-9, 1e-7, 1e-6),
    };
    let mut worst_sq = 0.0f64;
    let mut worst_ker = 0.0f64;
    let mut worst_bilin = 0.0f64;
    let mut worst_bracket = 0.0f64;

    for p in pts {
        let canonical = canonical_j(dist, p).map_err(eval)?;
        let conditions = canonical_conditions(dist, p).map_err(eval)?;
        worst_sq = worst_sq.max(conditions.j_squared);
        worst_ker = worst_ker.max(conditions.preserves_kernel);
        worst_bilin = worst_bilin.max(conditions.curvature_bilinear);
        worst_bracket = worst_bracket.max(conditions.bracket_condition);

        let fiber = &canonical.data.fiber;
        report.points.push(json!({
            "point": point_value(p),
            "branch": match canonical.branch {
                RootBranch::Upper => "upper",
                RootBranch::Lower => "lower",
            },
            "root_flipped": canonical.root_flipped,
            "t": complex_value(fiber.root.t),
            "pairing": fiber.root.pairing.to_vec(),
            "j_q": fiber.j_q.to_vec(),
            "j_kernel": fiber.j_d.to_vec(),
            "j_full": canonical.data.j_full.to_vec(),
            "k_residual": canonical.data.k_residual,
            "conditions": {
                "j_squared": conditions.j_squared,
                "preserves_kernel": conditions.preserves_kernel,
                "orientation": conditions.orientation,
                "curvature_bilinear": conditions.curvature_bilinear,
                "bracket_condition": conditions.bracket_condition,
            },
        }));
    }

    let n = pts.len();
    let over = |what: &str| format!("worst of {n} points, tol {what}");
    report.items.push(Item::check(
        "j-squared",
        worst_sq <= tol_sq,
        worst_sq,
        over(&format!("{tol_sq:e}")),
    ));
    report.items.push(Item::check(
        "preserves-kernel",
        worst_ker <= tol_ker,
        worst_ker,
        over(&format!("{tol_ker:e}")),
    ));
    report.items.push(Item::check(
        "curvature-bilinear",
        worst_bilin <= tol_bilin,
        worst_bilin,
        over(&format!("{tol_bilin:e}")),
    ));
    report.items.push(Item::check(
        "bracket-condition",
        worst_bracket <= tol_bracket,
        worst_bracket,
        over(&format!("{tol_bracket:e}")),
    ));
    Ok(report.into())
}

fn cmd_s_tensor(handle: &ModelHandle, pts: &[Point]) -> Result<Outcome, Failure> {
    let dist = &handle.distribution;
    let mut report = Report::new("s-tensor", &handle.label, DEFAULT_SEED);

    let mut max_norm = 0.0f64;
    let mut max_at = pts[0];
    for p in pts {
        let r = s_tensor(dist, p).map_err(eval)?;
        if r.norm > max_norm {
            max_norm = r.norm;
            max_at = *p;
        }
        report.points.push(json!({
            "point": point_value(p),
            "branch": match r.branch {
                RootBranch::Upper => "upper",
                RootBranch::Lower => "lower",
            },
            "root_flipped": r.root_flipped,
            "values": r.values.iter().map(|row| row.to_vec()).collect::<Vec<_>>(),
            "reduced": r.reduced.iter().map(|row| row.to_vec()).collect::<Vec<_>>(),
            "norm": r.norm,
            "reduced_norm": r.reduced_norm,
            "k_residual": r.k_residual,
        }));
    }
    report.items.push(Item::info(
        "largest-norm",
        format!(
            "|S| = {} at ({})",
            sci(max_norm),
            max_at
                .0
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ),
    ));
    Ok(report.into())
}

fn cmd_factor(handle: &ModelHandle, pts: &[Point], tol: f64) -> Result<Outcome, Failure> {
    let dist = &handle.distribution;
    let mut report = Report::new("factor", &handle.label, DEFAULT_SEED);
    let field = StructureField::new(dist, RootBranch::Upper);

    let mut worst_wedge = 0.0f64;
    let mut worst_rec = 0.0f64;
    for p in pts {
        let fiber = field.fiber(p).map_err(eval)?;
        let omega =
            corank2::almost_complex::dpsi_on_framing(dist, p, fiber.root.t).map_err(eval)?;

        // omega ^ omega in the framing volume, relative to the square of
        // the largest entry; zero exactly when omega is decomposable.
        let pf = omega[0][1] * omega[2][3] - omega[0][2] * omega[1][3] + omega[0][3] * omega[1][2];
        let scale = omega
            .iter()
            .flatten()
            .map(|z| z.norm())
            .fold(0.0f64, f64::max)
            .max(1e-300);
        let wedge = 2.0 * pf.norm() / (scale * scale);
        worst_wedge = worst_wedge.max(wedge);
        worst_rec = worst_rec.max(fiber.factorization.residual);

        let f = &fiber.factorization;
        report.points.push(json!({
            "point": point_value(p),
            "t": complex_value(fiber.root.t),
            "alpha": f.alpha.iter().copied().map(complex_value).collect::<Vec<_>>(),
            "beta": f.beta.iter().copied().map(complex_value).collect::<Vec<_>>(),
            "pivot": [f.pivot.0, f.pivot.1],
            "wedge_square": wedge,
            "residual": f.residual,
        }));
    }

    let detail = format!("worst of {} points, tol {tol:e}", pts.len());
    report.items.push(Item::check(
        "decomposable",
        worst_wedge <= tol,
        worst_wedge,
        detail.clone(),
    ));
    report.items.push(Item::check(
        "reconstruction",
        worst_rec <= tol,
        worst_rec,
        detail,
    ));
    Ok(report.into())
}

fn cmd_scan(
    handle: &ModelHandle,
    grid: GridSpec,
    base: &Point,
    tol: f64,
) -> Result<Outcome, Failure> {
    let dist = &handle.distribution;
    let rows =
        scan_interval(dist, grid.coord, grid.lo, grid.hi, grid.n, base, tol).map_err(eval)?;

    let mut report = Report::new("scan", &handle.label, DEFAULT_SEED);
    report.items = region_items(grid.coord, &rows);
    for r in &rows {
        report.points.push(json!({
            grid.coord.name(): r.value,
            "det": r.det_raw,
            "kind": r.kind.label(),
        }));
    }

    let mut csv = format!("{},det,classification\n", grid.coord.name());
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{}\n",
            sci(r.value),
            sci(r.det_raw),
            r.kind.label()
        ));
    }
    Ok(Outcome {
        report,
        csv: Some(csv),
    })
}

fn cmd_globalize_check() -> Result<Outcome, Failure> {
    let outcome = verify_globalization().map_err(eval)?;
    let mut report = Report::new("globalize-check", "global", DEFAULT_SEED);
    for c in &outcome.items {
        report
            .items
            .push(Item::check(c.name, c.pass, c.residual, format!("tol {:e}", c.tol)));
    }
    Ok(report.into())
}

fn cmd_verify(seed: u64) -> Outcome {
    let battery = checklist::run_all(seed);
    let mut report = Report::new("verify", "catalog", seed);
    for item in battery.items {
        report.items.push(Item {
            name: item.name.into(),
            status: if item.pass { "pass" } else { "fail" }.into(),
            residual: item.residual.filter(|r| r.is_finite()),
            detail: item.detail,
        });
    }
    report.into()
}
