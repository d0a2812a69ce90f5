//! Command-line front end. Every command writes CSV files plus a
//! `manifest.json` into the output directory.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 usage or invalid parameters,
//! 3 every requested design infeasible, 4 numerical non-convergence.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::degree::{strand_model, DegreeDistribution, LayerSpec, StrandId};
use crate::epidemic::{
    effective_rate, epidemic_threshold, solve_theta_exact, theta_approx, SolveOptions,
};
use crate::error::{Error, Result};
use crate::geometry::{build_graph, empirical_degree_histogram, sample_network, Window};
use crate::mission::{load_mission, preset};
use crate::optimizer::{self, MissionSpec, OptimizationResult, SweepRow};
use crate::simulate::{estimate_steady_state, run_sis, SimConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_NONCONVERGENCE: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "d2dspread",
    version,
    about = "Information spreading and threat-aware design of multi-layer D2D networks"
)]
pub struct Cli {
    /// Directory receiving CSV outputs and manifest.json.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads for independent rows and trials.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub jobs: u32,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analytic degree laws per strand, optionally against a sampled network.
    Degree(DegreeArgs),
    /// Mean-field equilibrium per strand.
    Equilibrium(EquilibriumArgs),
    /// Minimum-cost design for one threat level.
    Optimize(OptimizeArgs),
    /// Minimum-cost designs over a grid of threat levels.
    Sweep(SweepArgs),
    /// Monte-Carlo slotted spreading on a sampled network.
    Simulate(SimulateArgs),
}

/// A design given layer by layer, or the optimum of a mission.
#[derive(Debug, Args)]
pub struct DesignArgs {
    /// Layer density in devices per km² (repeat once per layer).
    #[arg(long = "lambda", value_name = "PER_KM2")]
    pub lambda: Vec<f64>,
    /// Layer range in meters (repeat once per layer).
    #[arg(long = "range-m", value_name = "METERS")]
    pub range_m: Vec<f64>,
    /// Use the optimized design of a bundled mission (intelligence, encounter).
    #[arg(long, conflicts_with_all = ["lambda", "range_m", "mission"])]
    pub preset: Option<String>,
    /// Use the optimized design of a mission file.
    #[arg(long, conflicts_with_all = ["lambda", "range_m"])]
    pub mission: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MissionArgs {
    /// Bundled mission: intelligence or encounter.
    #[arg(long, required_unless_present = "mission", conflicts_with = "mission")]
    pub preset: Option<String>,
    /// Mission file (JSON).
    #[arg(long)]
    pub mission: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DegreeArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    /// Strands to report (intra:M, inter:M:N, combined); all by default.
    #[arg(long)]
    pub strand: Vec<StrandId>,
    /// Threat level used when the design comes from a mission.
    #[arg(long, default_value_t = 0.0, value_parser = parse_delta)]
    pub delta: f64,
    /// Also sample a network and compare its degree histogram.
    #[arg(long)]
    pub empirical: bool,
    /// Side of the square torus used with --empirical, km.
    #[arg(long, default_value_t = 20.0)]
    pub side_km: f64,
}

#[derive(Debug, Args)]
pub struct EquilibriumArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    /// Strands to report (intra:M, inter:M:N, combined); all by default.
    #[arg(long)]
    pub strand: Vec<StrandId>,
    /// Threat level δ; the spreading rate is γ(1 − δ).
    #[arg(long, default_value_t = 0.0, value_parser = parse_delta)]
    pub delta: f64,
    /// Contact rate γ.
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Emit exact and lower-bound Θ for r = 0.2 km, λ ∈ {25, 50, 100}, α = 0.05..1.
    #[arg(long)]
    pub fig10: bool,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub mission: MissionArgs,
    /// Threat level; the mission's own value when omitted.
    #[arg(long, value_parser = parse_delta)]
    pub delta: Option<f64>,
    /// Check the design against the original thresholds with the exact solver.
    #[arg(long)]
    pub verify: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub mission: MissionArgs,
    /// Threat grid `start:end:step` or a comma list, all in [0, 1).
    #[arg(long, value_parser = parse_delta_grid)]
    pub delta: DeltaGrid,
    /// Check every design against the original thresholds.
    #[arg(long)]
    pub verify: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    /// Strand to simulate.
    #[arg(long, default_value = "intra:1")]
    pub strand: StrandId,
    /// Threat level δ; the spreading rate is γ(1 − δ).
    #[arg(long, default_value_t = 0.0, value_parser = parse_delta)]
    pub delta: f64,
    /// Contact rate γ.
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Area of the square torus, km².
    #[arg(long, default_value_t = 10.0)]
    pub area_km2: f64,
    /// Slots simulated per trial, burn-in included.
    #[arg(long, default_value_t = 300)]
    pub slots: usize,
    /// Initial slots excluded from the average.
    #[arg(long, default_value_t = 100)]
    pub burn_in: usize,
    /// Independent spreading trials on the sampled network.
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    /// Micro-step as a fraction of a slot.
    #[arg(long, default_value_t = 0.05)]
    pub dt: f64,
    /// Also write the sampled points and links.
    #[arg(long)]
    pub dump_graph: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaGrid(pub Vec<f64>);

fn parse_delta(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|e| format!("'{s}': {e}"))?;
    if !(0.0..=1.0).contains(&v) {
        return Err(format!("threat level {v} outside [0, 1]"));
    }
    Ok(v)
}

/// `start:end:step` (inclusive, computed by index) or `a,b,c`.
pub fn parse_delta_grid(s: &str) -> std::result::Result<DeltaGrid, String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("'{t}': {e}"));
    let values = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("'{s}': expected start:end:step"));
        }
        let (a, b, h) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(h > 0.0) || b < a {
            return Err(format!("'{s}': need step > 0 and end >= start"));
        }
        let n = ((b - a) / h + 1e-9).floor() as usize;
        (0..=n).map(|i| round12(a + i as f64 * h)).collect()
    } else {
        s.split(',')
            .map(num)
            .collect::<std::result::Result<Vec<_>, _>>()?
    };
    if let Some(v) = values.iter().find(|v| !(0.0..1.0).contains(*v)) {
        return Err(format!("threat level {v} outside [0, 1)"));
    }
    let mut values = values;
    values.sort_by(f64::total_cmp);
    values.dedup();
    Ok(DeltaGrid(values))
}

/// Strips accumulated binary noise so `0.1 * 3` prints as `0.3`.
fn round12(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

#[derive(Debug, Serialize)]
struct Manifest {
    command: String,
    argv: Vec<String>,
    seed: u64,
    jobs: u32,
    tool_version: &'static str,
    parameters: serde_json::Value,
    outputs: Vec<String>,
    wall_clock_s: f64,
}

struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    ) -> Result<()> {
        let path = self.dir.join(name);
        let file =
            File::create(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        f(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        self.written.push(name.to_string());
        Ok(())
    }
}

/// Maps an error to its exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Infeasible(_) | Error::InfeasibleByThreat(_) => EXIT_INFEASIBLE,
        Error::NonConvergence { .. } | Error::StepSize { .. } => EXIT_NONCONVERGENCE,
        Error::Io(_) => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let argv: Vec<String> = argv
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match execute(&cli, argv) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(cli: &Cli, argv: Vec<String>) -> Result<i32> {
    let started = Instant::now();
    let mut out = Outputs::new(&cli.out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs as usize)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let (name, params, code) = pool.install(|| match &cli.command {
        Command::Degree(a) => cmd_degree(cli, a, &mut out).map(|p| ("degree", p, EXIT_OK)),
        Command::Equilibrium(a) => {
            cmd_equilibrium(a, &mut out).map(|p| ("equilibrium", p, EXIT_OK))
        }
        Command::Optimize(a) => cmd_optimize(a, &mut out).map(|(p, c)| ("optimize", p, c)),
        Command::Sweep(a) => cmd_sweep(cli, a, &mut out).map(|(p, c)| ("sweep", p, c)),
        Command::Simulate(a) => cmd_simulate(cli, a, &mut out).map(|p| ("simulate", p, EXIT_OK)),
    })?;
    let manifest = Manifest {
        command: name.to_string(),
        argv,
        seed: cli.seed,
        jobs: cli.jobs,
        tool_version: env!("CARGO_PKG_VERSION"),
        parameters: params,
        outputs: out.written.clone(),
        wall_clock_s: started.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    out.write("manifest.json", |w| writeln!(w, "{text}"))?;
    for f in &out.written {
        println!("{}", cli.out.join(f).display());
    }
    Ok(code)
}

fn resolve_mission(args: &MissionArgs) -> Result<MissionSpec> {
    match (&args.preset, &args.mission) {
        (Some(p), _) => preset(p),
        (None, Some(path)) => load_mission(path),
        (None, None) => Err(Error::InvalidParameter(
            "either --preset or --mission is required".into(),
        )),
    }
}

/// Layers from explicit flags, or from the optimum of the named mission.
fn resolve_design(args: &DesignArgs, delta: f64) -> Result<Vec<LayerSpec>> {
    if args.preset.is_some() || args.mission.is_some() {
        let mission = resolve_mission(&MissionArgs {
            preset: args.preset.clone(),
            mission: args.mission.clone(),
        })?
        .with_delta(delta)?;
        return optimizer::optimize(&mission, None)?.design.layer_specs();
    }
    if args.lambda.is_empty() || args.lambda.len() != args.range_m.len() {
        return Err(Error::InvalidParameter(format!(
            "give one --range-m per --lambda (got {} and {}), or --preset / --mission",
            args.lambda.len(),
            args.range_m.len()
        )));
    }
    args.lambda
        .iter()
        .zip(&args.range_m)
        .map(|(&l, &r)| LayerSpec::fixed(l, r / 1000.0))
        .collect()
}

fn selected_strands(requested: &[StrandId], layers: usize) -> Result<Vec<StrandId>> {
    if requested.is_empty() {
        return Ok(StrandId::all(layers));
    }
    for s in requested {
        s.check(layers)?;
    }
    Ok(requested.to_vec())
}

fn file_tag(strand: StrandId) -> String {
    strand.to_string().replace(':', "_")
}

fn layer_echo(layers: &[LayerSpec]) -> serde_json::Value {
    serde_json::json!({
        "lambda_per_km2": layers.iter().map(|l| l.density).collect::<Vec<_>>(),
        "range_km": layers.iter().map(|l| l.range_km).collect::<Vec<_>>(),
    })
}

fn cmd_degree(cli: &Cli, a: &DegreeArgs, out: &mut Outputs) -> Result<serde_json::Value> {
    let layers = resolve_design(&a.design, a.delta)?;
    let strands = selected_strands(&a.strand, layers.len())?;
    let graph = if a.empirical {
        let window = Window::torus(a.side_km)?;
        let densities: Vec<f64> = layers.iter().map(|l| l.density).collect();
        let ranges: Vec<f64> = layers.iter().map(|l| l.range_km).collect();
        Some(build_graph(
            &sample_network(&densities, &window, cli.seed)?,
            &ranges,
            &window,
        )?)
    } else {
        None
    };
    let mut summary = Vec::new();
    for &strand in &strands {
        let model = strand_model(&layers, strand)?;
        let pmf = model.pmf_table();
        let hist = graph
            .as_ref()
            .map(|g| empirical_degree_histogram(g, strand))
            .transpose()?;
        let freq = hist.as_ref().map(|h| h.frequencies());
        out.write(&format!("degree_{}.csv", file_tag(strand)), |w| {
            if freq.is_some() {
                writeln!(w, "k,pmf,empirical")?;
            } else {
                writeln!(w, "k,pmf")?;
            }
            let len = pmf.len().max(freq.as_ref().map_or(0, Vec::len));
            for k in 0..len {
                let p = pmf.get(k).copied().unwrap_or(0.0);
                match &freq {
                    Some(f) => writeln!(w, "{k},{p},{}", f.get(k).copied().unwrap_or(0.0))?,
                    None => writeln!(w, "{k},{p}")?,
                }
            }
            Ok(())
        })?;
        let threshold = epidemic_threshold(&model).ok();
        summary.push((
            strand,
            model.mean(),
            model.second_moment(),
            model.k_max(),
            threshold,
            hist.map(|h| (h.mean(), h.total_variation(&model), h.total())),
        ));
    }
    out.write("degree_summary.csv", |w| {
        let empirical = a.empirical;
        write!(w, "strand,mean,second_moment,k_max,threshold")?;
        if empirical {
            write!(w, ",empirical_mean,tv_distance,samples")?;
        }
        writeln!(w)?;
        for (s, m, m2, kmax, th, emp) in &summary {
            write!(
                w,
                "{s},{m},{m2},{kmax},{}",
                th.map_or(String::new(), |t| t.to_string())
            )?;
            if let Some((em, tv, n)) = emp {
                write!(w, ",{em},{tv},{n}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    Ok(serde_json::json!({
        "layers": layer_echo(&layers),
        "strands": strands.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
        "empirical": a.empirical,
        "side_km": a.side_km,
    }))
}

/// `(λ, α, Θ exact, Θ lower bound)` for the Fig. 10 grid.
pub fn fig10_rows() -> Result<Vec<(f64, f64, f64, f64)>> {
    let mut rows = Vec::new();
    for lambda in [25.0, 50.0, 100.0] {
        let layer = LayerSpec::fixed(lambda, 0.2)?;
        let model = strand_model(&[layer], StrandId::Intra(0))?;
        for i in 1..=20 {
            let alpha = round12(0.05 * i as f64);
            let exact = solve_theta_exact(&model, alpha, SolveOptions::default())?;
            rows.push((lambda, alpha, exact.theta, theta_approx(&model, alpha)));
        }
    }
    Ok(rows)
}

fn cmd_equilibrium(a: &EquilibriumArgs, out: &mut Outputs) -> Result<serde_json::Value> {
    if a.fig10 {
        let rows = fig10_rows()?;
        out.write("fig10.csv", |w| {
            writeln!(w, "lambda,alpha,theta_exact,theta_approx,gap")?;
            for (l, al, e, ap) in &rows {
                writeln!(w, "{l},{al},{e},{ap},{}", e - ap)?;
            }
            Ok(())
        })?;
        return Ok(serde_json::json!({ "fig10": true, "range_km": 0.2, "lambda": [25, 50, 100] }));
    }
    let alpha = effective_rate(a.gamma, a.delta)?;
    let layers = resolve_design(&a.design, a.delta)?;
    let strands = selected_strands(&a.strand, layers.len())?;
    let mut rows = Vec::new();
    for &strand in &strands {
        let model = strand_model(&layers, strand)?;
        let eq = solve_theta_exact(&model, alpha, SolveOptions::default())?;
        rows.push((
            strand,
            eq.theta,
            theta_approx(&model, alpha),
            eq.average_informed,
        ));
    }
    out.write("equilibrium.csv", |w| {
        writeln!(w, "strand,alpha,theta_exact,theta_approx,avg_informed")?;
        for (s, t, ta, i) in &rows {
            writeln!(w, "{s},{alpha},{t},{ta},{i}")?;
        }
        Ok(())
    })?;
    Ok(serde_json::json!({
        "layers": layer_echo(&layers),
        "gamma": a.gamma,
        "delta": a.delta,
        "alpha": alpha,
    }))
}

fn write_verification(
    out: &mut Outputs,
    name: &str,
    rows: &[(f64, Vec<optimizer::VerificationRow>)],
) -> Result<()> {
    out.write(name, |w| {
        writeln!(w, "delta,strand,threshold,theta,avg_informed,pass")?;
        for (delta, report) in rows {
            for r in report {
                writeln!(
                    w,
                    "{delta},{},{},{},{},{}",
                    r.strand, r.threshold, r.theta, r.avg_informed, r.pass
                )?;
            }
        }
        Ok(())
    })
}

fn verification_thresholds(mission: &MissionSpec) -> &optimizer::Thresholds {
    mission
        .verify_thresholds
        .as_ref()
        .unwrap_or(&mission.thresholds)
}

fn cmd_optimize(a: &OptimizeArgs, out: &mut Outputs) -> Result<(serde_json::Value, i32)> {
    let mut mission = resolve_mission(&a.mission)?;
    if let Some(d) = a.delta {
        mission = mission.with_delta(d)?;
    }
    let outcome = optimizer::optimize(&mission, None);
    let code = match &outcome {
        Ok(_) => EXIT_OK,
        Err(Error::Infeasible(v)) => {
            eprintln!("infeasible: {}", v.join(", "));
            EXIT_INFEASIBLE
        }
        Err(Error::InfeasibleByThreat(s)) => {
            eprintln!("infeasible at zero spreading rate: {s}");
            EXIT_INFEASIBLE
        }
        Err(_) => return Err(outcome.unwrap_err()),
    };
    let row = SweepRow {
        delta: mission.threat.delta,
        alpha: mission.alpha(),
        outcome,
    };
    out.write("optimize.csv", |w| {
        optimizer::write_sweep_csv(std::slice::from_ref(&row), mission.layer_count(), w)
    })?;
    if let Ok(res) = &row.outcome {
        write_result_details(out, res)?;
        if a.verify {
            let report =
                optimizer::verify_original(res, &mission, verification_thresholds(&mission));
            write_verification(out, "verification.csv", &[(row.delta, report)])?;
        }
    }
    Ok((serde_json::json!({ "mission": mission }), code))
}

fn write_result_details(out: &mut Outputs, res: &OptimizationResult) -> Result<()> {
    out.write("cost_trace.csv", |w| {
        writeln!(w, "iteration,cost")?;
        for (i, c) in res.cost_trace.iter().enumerate() {
            writeln!(w, "{i},{c}")?;
        }
        Ok(())
    })?;
    out.write("residuals.csv", |w| {
        writeln!(w, "strand,residual")?;
        for (s, r) in &res.residuals {
            writeln!(w, "{s},{r}")?;
        }
        Ok(())
    })
}

fn cmd_sweep(cli: &Cli, a: &SweepArgs, out: &mut Outputs) -> Result<(serde_json::Value, i32)> {
    let mission = resolve_mission(&a.mission)?;
    let rows = optimizer::sweep_threat(&mission, &a.delta.0, cli.jobs as usize)?;
    for row in &rows {
        if let Err(e) = &row.outcome {
            match e {
                Error::Infeasible(_) | Error::InfeasibleByThreat(_) => {
                    eprintln!("delta {}: {e}", row.delta)
                }
                _ => return Err(e.clone()),
            }
        }
    }
    out.write("sweep.csv", |w| {
        optimizer::write_sweep_csv(&rows, mission.layer_count(), w)
    })?;
    if a.verify {
        let reports: Vec<_> = rows
            .iter()
            .filter_map(|r| {
                r.outcome.as_ref().ok().map(|res| {
                    let m = mission.with_delta(r.delta).expect("validated grid");
                    (
                        r.delta,
                        optimizer::verify_original(res, &m, verification_thresholds(&m)),
                    )
                })
            })
            .collect();
        write_verification(out, "sweep_verification.csv", &reports)?;
    }
    let code = if rows.iter().any(SweepRow::feasible) {
        EXIT_OK
    } else {
        EXIT_INFEASIBLE
    };
    Ok((
        serde_json::json!({ "mission": mission, "deltas": a.delta.0 }),
        code,
    ))
}

fn cmd_simulate(cli: &Cli, a: &SimulateArgs, out: &mut Outputs) -> Result<serde_json::Value> {
    let alpha = effective_rate(a.gamma, a.delta)?;
    let layers = resolve_design(&a.design, a.delta)?;
    a.strand.check(layers.len())?;
    if !(a.area_km2 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "area {} must be positive",
            a.area_km2
        )));
    }
    let config = SimConfig {
        slots: a.slots,
        burn_in: a.burn_in,
        trials: a.trials,
        seed: cli.seed,
        dt: a.dt,
        ..SimConfig::default()
    };
    config.validate()?;
    let window = Window::torus(a.area_km2.sqrt())?;
    let densities: Vec<f64> = layers.iter().map(|l| l.density).collect();
    let ranges: Vec<f64> = layers.iter().map(|l| l.range_km).collect();
    let graph = build_graph(
        &sample_network(&densities, &window, cli.seed)?,
        &ranges,
        &window,
    )?;
    let sim = run_sis(&graph, a.strand, alpha, &config)?;
    let (mc_mean, mc_stderr) = estimate_steady_state(&sim)?;
    let model = strand_model(&layers, a.strand)?;
    let meanfield = solve_theta_exact(&model, alpha, SolveOptions::default())?.average_informed;
    let tag = file_tag(a.strand);
    out.write(&format!("trajectory_{tag}.csv"), |w| {
        sim.write_trajectory_csv(w)
    })?;
    out.write("simulate_summary.csv", |w| {
        writeln!(w, "strand,alpha,mc_mean,mc_stderr,meanfield_avg_informed")?;
        writeln!(w, "{},{alpha},{mc_mean},{mc_stderr},{meanfield}", a.strand)
    })?;
    if a.dump_graph {
        out.write("points.csv", |w| graph.write_points_csv(w))?;
        out.write("edges.csv", |w| graph.write_edges_csv(w))?;
    }
    Ok(serde_json::json!({
        "layers": layer_echo(&layers),
        "strand": a.strand.to_string(),
        "gamma": a.gamma,
        "delta": a.delta,
        "alpha": alpha,
        "area_km2": a.area_km2,
        "config": config,
        "participants": sim.participants,
        "restarts": sim.restarts,
        "extinct_trials": sim.extinct_trials,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_grid_by_index() {
        let g = parse_delta_grid("0:0.8:0.1").unwrap();
        assert_eq!(g.0.len(), 9);
        assert_eq!(g.0[3], 0.3);
        assert_eq!(g.0[8], 0.8);
        assert_eq!(
            parse_delta_grid("0.2,0,0.1").unwrap().0,
            vec![0.0, 0.1, 0.2]
        );
        assert!(parse_delta_grid("0:1:0.5").is_err());
        assert!(parse_delta_grid("0:0.5").is_err());
    }

    #[test]
    fn delta_range_checked() {
        assert!(parse_delta("2").is_err());
        assert!(parse_delta("-0.1").is_err());
        assert_eq!(parse_delta("1").unwrap(), 1.0);
    }

    #[test]
    fn exit_codes_by_error() {
        assert_eq!(exit_code(&Error::Infeasible(vec![])), EXIT_INFEASIBLE);
        assert_eq!(
            exit_code(&Error::NonConvergence {
                iterations: 1,
                last_theta: 0.5
            }),
            EXIT_NONCONVERGENCE
        );
        assert_eq!(exit_code(&Error::InvalidParameter("x".into())), EXIT_USAGE);
    }
}
