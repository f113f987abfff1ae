//! `whitney`: file-based front end for decompositions, extensions, paths,
//! seminorm estimates and the verification suite.
//!
//! Every subcommand accepts `--config scenario.json [--out DIR]`; most also
//! take direct file arguments. The exit code is 0 iff every requested check
//! passes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;
use whitney_core::extension::{sample_field, sample_points, GridSpec};
use whitney_core::paths::{build_path, check_path, fit_decay, sample_a_p_from, two_ring, PathOptions};
use whitney_core::seminorm::{gagliardo, gagliardo_extension, EstimatorConfig, Method, Region};
use whitney_core::{AxisBox, DyadicCube, ExtensionField, JetField, MultiIndex, SpaceParams, TestFunction, Whitney};
use whitney_harness::experiments::{run_bound_experiment, run_term_split};
use whitney_harness::formats::{read_points_csv, CubesFile, SitesFile};
use whitney_harness::suite::{report_json, verify_modules, Module};
use whitney_harness::svg::{render_decomposition, render_path, RenderOptions};
use whitney_harness::Scenario;

#[derive(Parser)]
#[command(name = "whitney", version, about = "Whitney extension of jets on finite sets: build, evaluate, verify")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Scenario file (`"schema": 1`).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the Whitney decomposition of a site set.
    Decompose {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Site list: `[[x..], ..]` or `{"params": .., "points": ..}`.
        #[arg(long, conflicts_with = "config")]
        sites: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        domain_exp: i32,
        #[arg(long, default_value_t = 12)]
        max_depth: i32,
        /// Smoothness, when the site file has no parameters.
        #[arg(long)]
        s: Option<f64>,
        #[arg(long)]
        p: Option<f64>,
        /// `cubes.json` in direct mode, a directory with `--config`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// SVG of a planar decomposition.
    Render {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, conflicts_with = "config")]
        cubes: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Partition-of-unity checks.
    PouCheck {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, conflicts_with = "config")]
        cubes: Option<PathBuf>,
        /// Derivative order of the scale sweep.
        #[arg(long, default_value_t = 2)]
        order: usize,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate ∂^i Tf at query points.
    Extend {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, conflicts_with = "config")]
        cubes: Option<PathBuf>,
        #[arg(long)]
        jets: Option<PathBuf>,
        /// CSV, one point per line.
        #[arg(long)]
        queries: Option<PathBuf>,
        /// Multi-index, e.g. "0,0".
        #[arg(long)]
        deriv: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exponentially decreasing paths from points near a cube to its anchor.
    Paths {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, conflicts_with = "config")]
        cubes: Option<PathBuf>,
        #[arg(long)]
        cube_id: Option<String>,
        #[arg(long, default_value_t = 10)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// SVG of one path (n = 2).
    PathsRender {
        #[arg(long)]
        cubes: PathBuf,
        #[arg(long)]
        cube_id: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate an L^{s,p} seminorm.
    Seminorm {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// `analytic:NAME` (gaussian, bump, linear, or a TestFunction JSON
        /// file) or `extension:cubes.json+jets.json`.
        #[arg(long, conflicts_with = "config")]
        field: Option<String>,
        /// `{"lo": [..], "hi": [..]}` or `{"boxes": [..]}`.
        #[arg(long)]
        region: Option<PathBuf>,
        #[arg(long)]
        s: Option<f64>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        budget: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// ρ = ‖Tf‖/‖F‖ over the computational domain.
    Bound {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split of the Tf double integral by cube adjacency.
    Split {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every check on a scenario.
    Verify {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_scenario(cfg: &ConfigArgs) -> Result<Option<Scenario>> {
    match &cfg.config {
        Some(p) => Ok(Some(Scenario::load(p).with_context(|| format!("loading {}", p.display()))?)),
        None => Ok(None),
    }
}

/// `--out`, else the scenario's `output_dir`, else `out/<name>`.
fn out_dir(sc: &Scenario, out: Option<PathBuf>) -> Result<PathBuf> {
    let dir = out
        .or_else(|| sc.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| Path::new("out").join(if sc.name.is_empty() { "scenario" } else { &sc.name }));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.with_context(|| format!("{flag} is required without --config"))
}

fn load_cubes(path: &Path) -> Result<Whitney> {
    let f = CubesFile::load(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(f.to_decomposition()?)
}

fn load_extension(cubes: &Path, jets: &Path) -> Result<ExtensionField> {
    let w = Arc::new(load_cubes(cubes)?);
    let text = fs::read_to_string(jets).with_context(|| format!("reading {}", jets.display()))?;
    let jets = JetField::from_json(&text, w.sites())?;
    Ok(ExtensionField::new(w, jets)?)
}

/// Suite modules of a scenario: report.json plus a text summary.
fn suite(sc: &Scenario, out: Option<PathBuf>, modules: &[Module]) -> Result<bool> {
    let dir = out_dir(sc, out)?;
    let report = verify_modules(sc, modules)?;
    write(&dir.join("report.json"), &report_json(&report)?)?;
    print!("{}", report.summary());
    Ok(report.all_pass)
}

fn run(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Decompose { cfg, sites, domain_exp, max_depth, s, p, out } => {
            if let Some(sc) = load_scenario(&cfg)? {
                let dir = out_dir(&sc, out.clone())?;
                let w = sc.decompose()?;
                CubesFile::from_decomposition(&w).save(&dir.join("cubes.json"))?;
                return suite(&sc, Some(dir), &[Module::Decomposition]);
            }
            let path = required(sites, "--sites")?;
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let (params, points) = match serde_json::from_str::<SitesFile>(&text)? {
                SitesFile::WithParams { params, points } => (params, points),
                SitesFile::Points(points) => {
                    let n = points.first().map_or(0, Vec::len);
                    let s = required(s, "--s (or params in the site file)")?;
                    let p = required(p, "--p (or params in the site file)")?;
                    (SpaceParams::new(n, s, p)?, points)
                }
            };
            let w = Whitney::build(params, &points, domain_exp, max_depth)?;
            let out = out.unwrap_or_else(|| PathBuf::from("cubes.json"));
            write(&out, &serde_json::to_string(&CubesFile::from_decomposition(&w))?)?;
            println!("{} cubes, {} fringe cubes", w.len(), w.fringe().len());
            Ok(true)
        }
        Command::Render { cfg, cubes, out } => {
            let (w, out) = match load_scenario(&cfg)? {
                Some(sc) => {
                    let dir = out_dir(&sc, out)?;
                    (sc.decompose()?, dir.join("decomposition.svg"))
                }
                None => (load_cubes(&required(cubes, "--cubes")?)?, out.unwrap_or_else(|| "decomposition.svg".into())),
            };
            write(&out, &render_decomposition(&w, &RenderOptions::default())?)?;
            Ok(true)
        }
        Command::PouCheck { cfg, cubes, order, samples, seed, out } => {
            if let Some(sc) = load_scenario(&cfg)? {
                return suite(&sc, out, &[Module::Partition]);
            }
            let w = load_cubes(&required(cubes, "--cubes")?)?;
            let sum_error = whitney_harness::suite::partition_sum_error(&w, samples, seed)?;
            let fd = whitney_core::partition::finite_difference_check(&w, samples.min(100), seed, 1e-5)?;
            let top = w.levels().iter().filter(|l| !l.is_empty()).map(|l| l.level).max().unwrap_or(w.max_level());
            let levels: Vec<i32> = (top - 4..top).collect();
            let bounds = whitney_core::partition::derivative_bounds(&w, order, &levels, 9, 400)?;
            let pass = sum_error <= 1e-12 && fd.pass && bounds.stable;
            let report = json!({
                "sum_to_one": {"max_error": sum_error, "samples": samples, "pass": sum_error <= 1e-12},
                "finite_differences": fd,
                "derivative_bounds": bounds,
                "pass": pass,
            });
            write(&out.unwrap_or_else(|| "report.json".into()), &report_json(&report)?)?;
            println!("max |Σθ−1| {sum_error:.2e}; FD rel error {:.2e}; scale spread {:?}", fd.max_rel_error, bounds.spread);
            Ok(pass)
        }
        Command::Extend { cfg, cubes, jets, queries, deriv, out } => {
            if let Some(sc) = load_scenario(&cfg)? {
                let dir = out_dir(&sc, out.clone())?;
                let inst = sc.instance()?;
                let w = &inst.decomposition;
                CubesFile::from_decomposition(w).save(&dir.join("cubes.json"))?;
                write(&dir.join("jets.json"), &inst.jets.to_json()?)?;
                let dom = w.domain_box();
                let n = w.dim();
                let k = if n == 1 { 1001 } else if n == 2 { 101 } else { 21 };
                let grid = GridSpec { lo: dom.lo.clone(), hi: dom.hi.clone(), counts: vec![k; n] };
                let i = match deriv {
                    Some(d) => parse_index(&d, n)?,
                    None => MultiIndex::zeros(n),
                };
                write(&dir.join("values.csv"), &sample_field(&inst.extension, &grid, &i).to_csv())?;
                return suite(&sc, Some(dir), &[Module::Extension]);
            }
            let tf = load_extension(&required(cubes, "--cubes")?, &required(jets, "--jets")?)?;
            let n = tf.decomposition().dim();
            let qpath = required(queries, "--queries")?;
            let pts = read_points_csv(&fs::read_to_string(&qpath).with_context(|| format!("reading {}", qpath.display()))?, n)?;
            let i = match deriv {
                Some(d) => parse_index(&d, n)?,
                None => MultiIndex::zeros(n),
            };
            let sampled = sample_points(&tf, pts, &i);
            for (row, e) in &sampled.errors {
                eprintln!("query {row}: {e}");
            }
            write(&out.unwrap_or_else(|| "values.csv".into()), &sampled.to_csv())?;
            Ok(sampled.errors.is_empty())
        }
        Command::Paths { cfg, cubes, cube_id, samples, seed, out } => {
            if let Some(sc) = load_scenario(&cfg)? {
                return suite(&sc, out, &[Module::Paths]);
            }
            let w = load_cubes(&required(cubes, "--cubes")?)?;
            let p: DyadicCube = required(cube_id, "--cube-id")?.parse()?;
            if !w.is_accepted(&p) {
                bail!("{} is not a Whitney cube of this decomposition", p.id());
            }
            let opts = PathOptions::for_decomposition(&w);
            let ring = two_ring(&w, &p);
            let mut paths = Vec::new();
            let mut checks = Vec::new();
            for k in 0..samples as u64 {
                let x = sample_a_p_from(&w, &ring, whitney_core::rng::derive_seed(seed, k));
                let path = build_path(&w, &p, &x, &opts)?;
                checks.push(check_path(&path, 1000, whitney_core::rng::derive_seed(seed, 1000 + k))?);
                paths.push(path);
            }
            let decay = fit_decay(&paths)?;
            let pass = checks.iter().all(|c| c.all_pass()) && decay.a < 1.0;
            let report = json!({"cube": p.id(), "paths": paths, "checks": checks, "decay": decay, "pass": pass});
            write(&out.unwrap_or_else(|| "paths.json".into()), &report_json(&report)?)?;
            println!("{} paths, all checks pass: {pass}, a = {:.4}, C_n = {}", paths.len(), decay.a, decay.c_n);
            Ok(pass)
        }
        Command::PathsRender { cubes, cube_id, seed, out } => {
            let w = load_cubes(&cubes)?;
            let p: DyadicCube = cube_id.parse()?;
            let x = sample_a_p_from(&w, &two_ring(&w, &p), seed);
            let path = build_path(&w, &p, &x, &PathOptions::for_decomposition(&w))?;
            write(&out, &render_path(&w, &path)?)?;
            Ok(true)
        }
        Command::Seminorm { cfg, field, region, s, p, method, budget, seed, out } => {
            if let Some(sc) = load_scenario(&cfg)? {
                let dir = out_dir(&sc, out)?;
                let inst = sc.instance()?;
                let est = gagliardo_extension(&inst.extension, &Region::single(inst.decomposition.domain_box()), &sc.estimator())?;
                write(&dir.join("est.json"), &report_json(&est)?)?;
                println!("‖Tf‖ = {:.6e} ± {:.2e}", est.value, est.error_bound);
                return Ok(est.value.is_finite());
            }
            let field = required(field, "--field")?;
            let rpath = required(region, "--region")?;
            let region = load_region(&rpath)?;
            let cfg = EstimatorConfig::new(method.unwrap_or(Method::ImportanceMc), budget.unwrap_or(200_000), seed.unwrap_or(0));
            let est = if let Some(files) = field.strip_prefix("extension:") {
                let (cubes, jets) = files.split_once('+').context("expected extension:cubes.json+jets.json")?;
                let tf = load_extension(Path::new(cubes), Path::new(jets))?;
                gagliardo_extension(&tf, &region, &cfg)?
            } else if let Some(name) = field.strip_prefix("analytic:") {
                let n = region.dim();
                let params = SpaceParams::new(n, required(s, "--s")?, required(p, "--p")?)?;
                gagliardo(&analytic(name, n)?, &region, &params, &cfg)?
            } else {
                bail!("--field must start with analytic: or extension:");
            };
            for w in &est.warnings {
                eprintln!("warning: {w}");
            }
            write(&out.unwrap_or_else(|| "est.json".into()), &report_json(&est)?)?;
            println!("{:.6e} ± {:.2e}", est.value, est.error_bound);
            Ok(est.value.is_finite())
        }
        Command::Bound { cfg, out } => {
            let sc = required(load_scenario(&cfg)?, "--config")?;
            let dir = out_dir(&sc, out)?;
            let r = run_bound_experiment(&sc)?;
            write(&dir.join("report.json"), &report_json(&r)?)?;
            match (r.rho, r.rho_error) {
                (Some(rho), Some(e)) => println!("ρ = {rho:.6} ± {e:.2e}"),
                _ => println!("{}", r.note.clone().unwrap_or_default()),
            }
            Ok(r.degenerate || r.rho.is_some_and(f64::is_finite))
        }
        Command::Split { cfg, out } => {
            let sc = required(load_scenario(&cfg)?, "--config")?;
            let dir = out_dir(&sc, out)?;
            let r = run_term_split(&sc)?;
            write(&dir.join("report.json"), &report_json(&r)?)?;
            let rows: Vec<Vec<f64>> = [&r.i, &r.ii, &r.iii, &r.iv, &r.unresolved, &r.whole]
                .iter()
                .map(|t| vec![t.value, t.error_bound])
                .collect();
            let mut csv = String::from("term,value,error_bound\n");
            for (name, row) in ["I", "II", "III", "IV", "unresolved", "whole"].iter().zip(&rows) {
                csv.push_str(&format!("{name},{:e},{:e}\n", row[0], row[1]));
            }
            write(&dir.join("terms.csv"), &csv)?;
            print!("{csv}");
            Ok(r.checks.all_pass())
        }
        Command::Verify { cfg, out } => {
            let sc = required(load_scenario(&cfg)?, "--config")?;
            let dir = out_dir(&sc, out)?;
            let report = verify_modules(&sc, &Module::ALL)?;
            write(&dir.join("report.json"), &report_json(&report)?)?;
            write(&dir.join("summary.txt"), &report.summary())?;
            print!("{}", report.summary());
            Ok(report.all_pass)
        }
    }
}

fn parse_index(s: &str, n: usize) -> Result<MultiIndex> {
    let c: Vec<u32> = s.split(',').map(|v| v.trim().parse::<u32>()).collect::<std::result::Result<_, _>>()?;
    if c.len() != n {
        bail!("--deriv has {} components, expected {n}", c.len());
    }
    Ok(MultiIndex::new(&c))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RegionFile {
    Boxes(Region),
    Single(AxisBox),
}

fn load_region(path: &Path) -> Result<Region> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(match serde_json::from_str::<RegionFile>(&text)? {
        RegionFile::Boxes(r) => Region::new(r.boxes)?,
        RegionFile::Single(b) => Region::single(AxisBox::new(b.lo, b.hi)?),
    })
}

/// Built-in test functions by name, or a `TestFunction` JSON file.
fn analytic(name: &str, n: usize) -> Result<TestFunction> {
    Ok(match name {
        "gaussian" => TestFunction::gaussian(vec![0.0; n], 1.0),
        "bump" => TestFunction::BumpProduct { center: vec![0.0; n], radius: 1.0, amplitude: 1.0 },
        "linear" => {
            let mut k = vec![0u32; n];
            k[0] = 1;
            TestFunction::polynomial(n, &[(1.0, &k)])
        }
        file => {
            let f: TestFunction = serde_json::from_str(&fs::read_to_string(file).with_context(|| format!("unknown field {file:?}"))?)?;
            f.validate()?;
            f
        }
    })
}
