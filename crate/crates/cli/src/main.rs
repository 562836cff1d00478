use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pkmkit::config::{geometry_hash, load_geometry};
use pkmkit::export::{map_from_json, map_to_csv, map_to_json, map_to_svg};
use pkmkit::jacobian::{build, classify, JacobianMode, SingularityReport, Tolerances};
use pkmkit::kinematics::{
    forward_kinematics, inverse_kinematics_with, AssemblySelector, Branch, WorkingMode,
};
use pkmkit::kinetostatics::{amplification, isotropy_locus_check, AmplificationProfile};
use pkmkit::model::{closure_residual, residual_norm, JointVector, MechanismGeometry, Pose};
use pkmkit::par::Parallelism;
use pkmkit::workspace::{
    joint_range_limits, max_square_with, scan, GridAxis, RangeSettings, ScanSettings,
    SquareOrientation, SquareWorkspace, WorkspaceMap,
};
use pkmkit::Error;

mod output;

use output::{factor, list, matrix, sig, Outputs};

#[derive(Parser)]
#[command(name = "pkmkit", version, about = "Kinetostatic analysis of modular 2T / 2T1R / 2T2R parallel kinematic machines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the geometry, isotropy check and design warnings.
    Describe(DescribeArgs),
    /// Inverse kinematics of a pose.
    Ik(IkArgs),
    /// Forward kinematics of a joint vector.
    Fk(FkArgs),
    /// Jacobian matrices, singularity report and amplification factors.
    Jacobian(JacobianArgs),
    /// Grid scan of the workspace.
    Scan(ScanArgs),
    /// Largest square useful workspaces.
    Square(SquareArgs),
    /// Joint range limits around the isotropic configuration.
    Ranges(RangesArgs),
}

#[derive(Args)]
struct Common {
    /// Geometry file; bare names are also looked up in $PKMKIT_CONFIG_DIR.
    #[arg(long)]
    config: PathBuf,
    /// Threshold on the normalized det A.
    #[arg(long)]
    tol_parallel: Option<f64>,
    /// Threshold on |(b_i - a_i).e_i| / L_i.
    #[arg(long)]
    tol_serial: Option<f64>,
    /// Write the result as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct DescribeArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct IkArgs {
    #[command(flatten)]
    common: Common,
    /// x,y[,beta[,gamma]] in meters and radians.
    #[arg(long, allow_hyphen_values = true)]
    pose: String,
    /// Stacked z coordinate.
    #[arg(long, allow_hyphen_values = true)]
    z: Option<f64>,
    /// Working mode, e.g. -1,-1; every mode when omitted.
    #[arg(long, allow_hyphen_values = true)]
    mode: Option<String>,
}

#[derive(Args)]
struct FkArgs {
    #[command(flatten)]
    common: Common,
    /// rho_1,...,rho_n in meters.
    #[arg(long, allow_hyphen_values = true)]
    joints: String,
    /// Planar assembly branch, optionally followed by the 2T1R orientation
    /// branch (e.g. +1 or +1,-1); every branch when omitted.
    #[arg(long, allow_hyphen_values = true)]
    assembly: Option<String>,
}

#[derive(Args)]
struct JacobianArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, allow_hyphen_values = true)]
    pose: String,
    /// Working mode (default: -1 on every leg).
    #[arg(long, allow_hyphen_values = true)]
    mode: Option<String>,
    /// Use the fixed gamma axis in the 2T2R angular columns.
    #[arg(long)]
    literal: bool,
    /// Characteristic length for the angular rows (default: tool link length).
    #[arg(long)]
    char_len: Option<f64>,
}

#[derive(Args)]
struct GridArgs {
    /// lo,hi for both axes or xlo,xhi,ylo,yhi.
    #[arg(long = "box", allow_hyphen_values = true, default_value = "-1.5,1.5")]
    bounds: String,
    /// Nodes per axis (at least 3).
    #[arg(long, default_value_t = 101)]
    resolution: usize,
    /// Fixed beta slice for spatial variants.
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    beta: f64,
    /// Fixed gamma slice for 2T2R.
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    gamma: f64,
    /// Working mode (default: -1 on every leg).
    #[arg(long, allow_hyphen_values = true)]
    mode: Option<String>,
    #[arg(long, default_value_t = 2.0)]
    psi: f64,
    #[arg(long)]
    literal: bool,
    #[arg(long)]
    char_len: Option<f64>,
    /// Condition number above which cells are marked degraded.
    #[arg(long, default_value_t = 100.0)]
    degraded: f64,
    /// Worker threads: 0 = all cores, 1 = sequential.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct ScanArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrientationArg {
    Axis,
    Oblique,
    Both,
}

#[derive(Args)]
struct SquareArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    grid: GridArgs,
    /// Reuse a map written by `scan --json` instead of scanning.
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "both")]
    orientation: OrientationArg,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct RangesArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 2.0)]
    psi: f64,
    #[arg(long, allow_hyphen_values = true)]
    mode: Option<String>,
    /// Joint grid nodes per axis during bisection.
    #[arg(long, default_value_t = 33)]
    grid: usize,
    /// Joint grid nodes per axis for the final check.
    #[arg(long, default_value_t = 65)]
    verify_grid: usize,
    #[arg(long)]
    char_len: Option<f64>,
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

/// An error with its exit status.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = error
            .chain()
            .find_map(|e| e.downcast_ref::<Error>())
            .map_or(2, exit_code);
        Failure { code, error }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: exit_code(&e),
            error: e.into(),
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Units(_) | Error::Io(_) | Error::EmptyWorkspace(_) => 2,
        Error::Unreachable { .. } | Error::JointLimit { .. } => 3,
        Error::AssemblyIndeterminate(_)
        | Error::Uncontrollable(_)
        | Error::InconsistentAssembly { .. } => 4,
        Error::NoAssembly(_) | Error::NewtonNoConvergence => 5,
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Describe(a) => describe(a),
        Command::Ik(a) => ik(a),
        Command::Fk(a) => fk(a),
        Command::Jacobian(a) => jacobian(a),
        Command::Scan(a) => scan_cmd(a),
        Command::Square(a) => square(a),
        Command::Ranges(a) => ranges(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn resolve_config(path: &Path) -> anyhow::Result<PathBuf> {
    if path.exists() {
        return Ok(path.to_path_buf());
    }
    if path.is_relative() {
        if let Some(dir) = std::env::var_os("PKMKIT_CONFIG_DIR") {
            let dir = PathBuf::from(dir);
            for candidate in [dir.join(path), dir.join(path).with_extension("json")] {
                if candidate.exists() {
                    return Ok(candidate);
                }
            }
        }
    }
    Err(anyhow!(Error::Config(format!(
        "config file {} not found (searched the working directory and $PKMKIT_CONFIG_DIR)",
        path.display()
    ))))
}

struct Loaded {
    path: PathBuf,
    geom: MechanismGeometry,
    tol: Tolerances,
}

impl Loaded {
    fn outputs(&self) -> Outputs {
        Outputs::new(&self.path, geometry_hash(&self.geom), self.tol)
    }
}

fn load(c: &Common) -> Result<Loaded, Failure> {
    let path = resolve_config(&c.config)?;
    let geom = load_geometry(&path)?;
    let mut tol = Tolerances::default();
    if let Some(t) = c.tol_parallel {
        tol.parallel = t;
    }
    if let Some(t) = c.tol_serial {
        tol.serial = t;
    }
    if !(tol.parallel > 0.0 && tol.serial > 0.0) {
        return Err(Error::Config("tolerances must be positive".into()).into());
    }
    Ok(Loaded { path, geom, tol })
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|p| {
            p.trim().parse::<f64>().map_err(|_| {
                Error::Config(format!("{what}: \"{p}\" is not a decimal number")).into()
            })
        })
        .collect()
}

fn parse_pose(geom: &MechanismGeometry, s: &str, z: Option<f64>) -> Result<Pose, Failure> {
    let t = parse_list(s, "--pose")?;
    let pose = Pose::from_task(geom.variant, &t)?;
    Ok(match z {
        Some(z) => pose.with_z(z),
        None => pose,
    })
}

fn parse_mode(geom: &MechanismGeometry, s: Option<&str>) -> Result<WorkingMode, Failure> {
    let mode = match s {
        Some(s) => WorkingMode::parse(s)?,
        None => WorkingMode::uniform(geom.leg_count(), Branch::Minus),
    };
    if mode.0.len() != geom.leg_count() {
        return Err(Error::Config(format!(
            "--mode has {} signs, the geometry has {} legs",
            mode.0.len(),
            geom.leg_count()
        ))
        .into());
    }
    Ok(mode)
}

fn signs(mode: &WorkingMode) -> Vec<i8> {
    mode.0.iter().map(|b| b.sign() as i8).collect()
}

fn describe(a: DescribeArgs) -> CmdResult {
    let l = load(&a.common)?;
    let g = &l.geom;
    println!("config   {}", l.path.display());
    println!("variant  {}", g.variant);
    println!("hash     {}", geometry_hash(g));
    println!();
    println!("{:<4} {:<28} {:<28} {:>10} {:>12} {:>12}", "leg", "rail origin", "rail axis", "L", "rho_min", "rho_max");
    for (i, leg) in g.legs().enumerate() {
        println!(
            "{:<4} {:<28} {:<28} {:>10} {:>12} {:>12}",
            i + 1,
            list(leg.rail_origin.as_slice()),
            list(leg.rail_axis.as_slice()),
            sig(leg.leg_length),
            sig(leg.rho_min),
            sig(leg.rho_max)
        );
    }
    if let Some(tool) = &g.tool {
        println!();
        println!("tool beta axis  {}", list(tool.beta_axis.as_slice()));
        if g.variant == pkmkit::Variant::Spatial2T2R {
            println!("tool gamma axis {}", list(tool.gamma_axis.as_slice()));
        }
        for (k, r) in tool.anchor_offsets.iter().enumerate() {
            println!("anchor r{}       {}", k + 3, list(r.as_slice()));
        }
        println!("characteristic length {}", sig(tool.characteristic_length()));
    }
    if let Some(s) = &g.stacked_z {
        println!("stacked z axis  {} in [{}, {}]", list(s.axis.as_slice()), sig(s.rho_min), sig(s.rho_max));
    }
    let iso = isotropy_locus_check(g);
    println!();
    println!("isotropy: {}", iso.message);
    for c in &iso.configurations {
        println!(
            "  mode {:?}: rho = {}, condition {}",
            c.mode,
            list(&c.joints),
            factor(c.condition)
        );
    }
    let warnings = g.warnings();
    if !warnings.is_empty() {
        println!();
        for w in &warnings {
            println!("warning: {w}");
        }
    }
    if let Some(p) = &a.common.json {
        #[derive(Serialize)]
        struct Report<'a> {
            variant: &'a str,
            geometry_hash: String,
            isotropy: &'a pkmkit::kinetostatics::IsotropyReport,
            warnings: &'a [String],
        }
        let mut out = l.outputs();
        out.write_json(
            p,
            &Report {
                variant: g.variant.name(),
                geometry_hash: geometry_hash(g),
                isotropy: &iso,
                warnings: &warnings,
            },
        )?;
        out.finish()?;
    }
    Ok(())
}

#[derive(Serialize)]
struct IkRow {
    mode: Vec<i8>,
    joints: Vec<f64>,
    stacked_z: Option<f64>,
    near_serial: Vec<usize>,
    residual_norm: f64,
}

fn ik(a: IkArgs) -> CmdResult {
    let l = load(&a.common)?;
    let g = &l.geom;
    let pose = parse_pose(g, &a.pose, a.z)?;
    let modes = match a.mode.as_deref() {
        Some(s) => vec![parse_mode(g, Some(s))?],
        None => WorkingMode::all(g.leg_count()),
    };
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for m in &modes {
        match inverse_kinematics_with(g, &pose, m, &l.tol) {
            Ok(sol) => {
                let res = residual_norm(&closure_residual(g, &pose, &sol.joints)?);
                rows.push(IkRow {
                    mode: signs(m),
                    joints: sol.joints.rho.clone(),
                    stacked_z: sol.joints.stacked,
                    near_serial: sol.near_serial,
                    residual_norm: res,
                });
            }
            Err(e) => failures.push((m.clone(), e)),
        }
    }
    if rows.is_empty() {
        let (_, e) = failures.into_iter().next().expect("at least one mode");
        return Err(e.into());
    }
    println!("pose {}", list(&pose.task_vector()));
    println!("{:<16} {:<48} {:>12}  notes", "mode", "rho", "residual");
    for r in &rows {
        let mut rho = list(&r.joints);
        if let Some(z) = r.stacked_z {
            rho = format!("{rho} z={}", sig(z));
        }
        let note = if r.near_serial.is_empty() {
            String::new()
        } else {
            format!("serial-singular leg(s) {:?}", r.near_serial)
        };
        println!("{:<16} {:<48} {:>12}  {note}", format!("{:?}", r.mode), rho, format!("{:.3e}", r.residual_norm));
    }
    for (m, e) in &failures {
        println!("{:<16} {e}", format!("{:?}", signs(m)));
    }
    if let Some(p) = &a.common.json {
        #[derive(Serialize)]
        struct Out<'a> {
            pose: Vec<f64>,
            solutions: &'a [IkRow],
            failures: Vec<(Vec<i8>, String)>,
        }
        let mut out = l.outputs();
        out.write_json(
            p,
            &Out {
                pose: pose.task_vector(),
                solutions: &rows,
                failures: failures.iter().map(|(m, e)| (signs(m), e.to_string())).collect(),
            },
        )?;
        out.finish()?;
    }
    Ok(())
}

#[derive(Serialize)]
struct FkRow {
    assembly: i8,
    orientation_branch: Option<i8>,
    pose: Vec<f64>,
    residual_norm: f64,
    branches_merged: bool,
}

fn fk(a: FkArgs) -> CmdResult {
    let l = load(&a.common)?;
    let g = &l.geom;
    let joints = JointVector::new(parse_list(&a.joints, "--joints")?);
    let selectors: Vec<AssemblySelector> = match a.assembly.as_deref() {
        Some(s) => {
            let parts: Vec<&str> = s.split(',').collect();
            let planar = Branch::parse(parts[0])?;
            let orientation = match parts.get(1) {
                Some(o) => Some(Branch::parse(o)?),
                None => None,
            };
            if parts.len() > 2 {
                return Err(Error::Config("--assembly takes at most two signs".into()).into());
            }
            vec![AssemblySelector { planar, orientation }]
        }
        None => Branch::both().into_iter().map(AssemblySelector::planar).collect(),
    };
    let mut rows = Vec::new();
    let mut first_err = None;
    for sel in &selectors {
        match forward_kinematics(g, &joints, sel) {
            Ok(sols) => rows.extend(sols.into_iter().map(|s| FkRow {
                assembly: s.assembly.sign() as i8,
                orientation_branch: s.orientation_branch.map(|b| b.sign() as i8),
                pose: s.pose.task_vector(),
                residual_norm: s.residual_norm,
                branches_merged: s.branches_merged,
            })),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if rows.is_empty() {
        return Err(first_err.expect("an error was recorded").into());
    }
    println!("joints {}", list(&joints.rho));
    println!("{:<10} {:<12} {:<52} {:>12}  notes", "assembly", "orientation", "pose", "residual");
    for r in &rows {
        println!(
            "{:<10} {:<12} {:<52} {:>12}  {}",
            format!("{:+}", r.assembly),
            r.orientation_branch.map_or("-".into(), |b| format!("{b:+}")),
            list(&r.pose),
            format!("{:.3e}", r.residual_norm),
            if r.branches_merged { "branches merged (parallel-singular)" } else { "" }
        );
    }
    if let Some(p) = &a.common.json {
        #[derive(Serialize)]
        struct Out<'a> {
            joints: &'a [f64],
            solutions: &'a [FkRow],
        }
        let mut out = l.outputs();
        out.write_json(
            p,
            &Out {
                joints: &joints.rho,
                solutions: &rows,
            },
        )?;
        out.finish()?;
    }
    Ok(())
}

fn jacobian(a: JacobianArgs) -> CmdResult {
    let l = load(&a.common)?;
    let g = &l.geom;
    let pose = parse_pose(g, &a.pose, None)?;
    let mode = parse_mode(g, a.mode.as_deref())?;
    let ik = inverse_kinematics_with(g, &pose, &mode, &l.tol)?;
    let jm = if a.literal {
        JacobianMode::Literal
    } else {
        JacobianMode::Consistent
    };
    let jp = build(g, &pose, &ik.joints, jm, &l.tol)?;
    let report = classify(&jp, g, &pose, &ik.joints, &l.tol)?;
    let char_len = match (a.char_len, &g.tool) {
        (Some(c), _) => Some(c),
        (None, Some(t)) if jp.has_rotational_rows() => Some(t.characteristic_length()),
        _ => None,
    };
    let amp = amplification(&jp, char_len)?;

    println!("pose   {}", list(&pose.task_vector()));
    println!("mode   {:?}", signs(&mode));
    println!("rho    {}", list(&ik.joints.rho));
    if jp.literal_mode {
        println!("angular columns use the fixed gamma axis (literal mode)");
    }
    println!();
    print!("{}", matrix("A", &jp.a));
    print!("{}", matrix("B", &jp.b));
    match &jp.j {
        Some(j) => print!("{}", matrix("J", j)),
        None => println!("J = undefined (A is singular)"),
    }
    println!("det A = {}   det B = {}   normalized det A = {}", sig(jp.det_a), sig(jp.det_b), sig(jp.normalized_det_a));
    println!();
    print_report(&report);
    println!();
    print_amplification(&amp);

    if let Some(p) = &a.common.json {
        #[derive(Serialize)]
        struct Out<'a> {
            pose: Vec<f64>,
            mode: Vec<i8>,
            joints: &'a [f64],
            literal: bool,
            a: Vec<Vec<f64>>,
            b: Vec<Vec<f64>>,
            j: Option<Vec<Vec<f64>>>,
            det_a: f64,
            det_b: f64,
            normalized_det_a: f64,
            singularities: &'a SingularityReport,
            amplification: &'a AmplificationProfile,
        }
        let rows = |m: &nalgebra::DMatrix<f64>| -> Vec<Vec<f64>> {
            m.row_iter().map(|r| r.iter().copied().collect()).collect()
        };
        let mut out = l.outputs();
        out.write_json(
            p,
            &Out {
                pose: pose.task_vector(),
                mode: signs(&mode),
                joints: &ik.joints.rho,
                literal: jp.literal_mode,
                a: rows(&jp.a),
                b: rows(&jp.b),
                j: jp.j.as_ref().map(rows),
                det_a: jp.det_a,
                det_b: jp.det_b,
                normalized_det_a: jp.normalized_det_a,
                singularities: &report,
                amplification: &amp,
            },
        )?;
        out.finish()?;
    }
    if report.any() {
        let kind = if report.parallel_singular {
            "parallel"
        } else {
            "serial"
        };
        return Err(Failure {
            code: 4,
            error: anyhow!("singular configuration ({kind})"),
        });
    }
    Ok(())
}

fn print_report(r: &SingularityReport) {
    println!(
        "serial singular:   {:?}",
        r.serial_singular
    );
    println!("parallel singular: {}", r.parallel_singular);
    for w in &r.geometric_witnesses {
        println!("  witness: {w}");
    }
}

fn print_amplification(p: &AmplificationProfile) {
    if let Some(c) = p.char_len {
        println!("characteristic length {}", sig(c));
    }
    let v: Vec<String> = p.singular_values.iter().map(|&f| factor(f)).collect();
    let f: Vec<String> = p.force_factors.iter().map(|&f| factor(f)).collect();
    println!("velocity factors  ({})", v.join(", "));
    println!("force factors     ({})", f.join(", "));
    println!("condition number  {}", factor(p.condition_number));
    println!("isotropy defect   {}", factor(p.isotropy_defect));
}

fn grid_axes(g: &MechanismGeometry, a: &GridArgs) -> Result<Vec<GridAxis>, Failure> {
    let b = parse_list(&a.bounds, "--box")?;
    let (x, y) = match b.as_slice() {
        [lo, hi] => ((*lo, *hi), (*lo, *hi)),
        [xl, xh, yl, yh] => ((*xl, *xh), (*yl, *yh)),
        _ => {
            return Err(Error::Config("--box takes lo,hi or xlo,xhi,ylo,yhi".into()).into())
        }
    };
    let mut axes = vec![
        GridAxis::new("x", x.0, x.1, a.resolution)?,
        GridAxis::new("y", y.0, y.1, a.resolution)?,
    ];
    let dim = g.variant.task_dim();
    if dim >= 3 {
        axes.push(GridAxis::new("beta", a.beta, a.beta, 1)?);
    }
    if dim >= 4 {
        axes.push(GridAxis::new("gamma", a.gamma, a.gamma, 1)?);
    }
    Ok(axes)
}

fn settings(g: &MechanismGeometry, a: &GridArgs, tol: Tolerances) -> Result<ScanSettings, Failure> {
    Ok(ScanSettings {
        tol,
        jacobian_mode: if a.literal {
            JacobianMode::Literal
        } else {
            JacobianMode::Consistent
        },
        char_len: a.char_len,
        degraded_condition: a.degraded,
        ..ScanSettings::new(parse_mode(g, a.mode.as_deref())?, a.psi)
    })
}

fn run_scan(l: &Loaded, a: &GridArgs) -> Result<WorkspaceMap, Failure> {
    let axes = grid_axes(&l.geom, a)?;
    let s = settings(&l.geom, a, l.tol)?;
    Ok(scan(&l.geom, &axes, &s, Parallelism::from_workers(a.workers))?)
}

fn summarize(map: &WorkspaceMap) {
    let psi = map.provenance.psi;
    let n = map.cells.len();
    let reach = map.cells.iter().filter(|c| c.reachable).count();
    let par = map.cells.iter().filter(|c| c.parallel_flag).count();
    let ser = map.cells.iter().filter(|c| c.serial_flags.iter().any(|&s| s)).count();
    let deg = map.cells.iter().filter(|c| c.degraded).count();
    let adm = map.cells.iter().filter(|c| c.admissible(psi)).count();
    let dims: Vec<String> = map.axes.iter().map(|a| a.count.to_string()).collect();
    println!("grid        {} ({} cells)", dims.join(" x "), n);
    println!("mode        {}", map.provenance.mode);
    println!("reachable   {reach}");
    println!("parallel    {par}");
    println!("serial      {ser}");
    println!("degraded    {deg} (condition > {})", sig(map.provenance.degraded_condition));
    println!("admissible  {adm} (psi = {})", sig(psi));
}

fn scan_cmd(a: ScanArgs) -> CmdResult {
    let l = load(&a.common)?;
    let map = run_scan(&l, &a.grid)?;
    summarize(&map);
    let mut out = l.outputs();
    if let Some(p) = &a.common.json {
        out.write(p, &map_to_json(&map))?;
    }
    if let Some(p) = &a.csv {
        out.write(p, &map_to_csv(&map))?;
    }
    if let Some(p) = &a.svg {
        out.write(p, &map_to_svg(&map, &[])?)?;
    }
    out.finish()?;
    Ok(())
}

fn square(a: SquareArgs) -> CmdResult {
    let l = load(&a.common)?;
    let map = match &a.map {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(Error::from)
                .with_context(|| format!("reading {}", p.display()))?;
            let map = map_from_json(&text)?;
            if map.provenance.geometry_hash != geometry_hash(&l.geom) {
                return Err(Error::Config(format!(
                    "{} was computed for a different geometry",
                    p.display()
                ))
                .into());
            }
            map
        }
        None => run_scan(&l, &a.grid)?,
    };
    let orientations = match a.orientation {
        OrientationArg::Axis => vec![SquareOrientation::AxisAligned],
        OrientationArg::Oblique => vec![SquareOrientation::Oblique45],
        OrientationArg::Both => vec![SquareOrientation::AxisAligned, SquareOrientation::Oblique45],
    };
    let par = Parallelism::from_workers(a.grid.workers);
    let squares: Vec<SquareWorkspace> = orientations
        .iter()
        .map(|&o| max_square_with(&map, o, a.grid.psi, par))
        .collect::<Result<_, _>>()?;
    println!("{:<16} {:<30} {:>12} {:>12} {:>8}", "orientation", "center", "half_side", "side", "cells");
    for s in &squares {
        println!(
            "{:<16} {:<30} {:>12} {:>12} {:>8}",
            s.orientation.name(),
            list(&s.center),
            sig(s.half_side),
            sig(2.0 * s.half_side),
            s.cells
        );
    }
    let mut out = l.outputs();
    if let Some(p) = &a.common.json {
        out.write_json(p, &squares)?;
    }
    if let Some(p) = &a.svg {
        out.write(p, &map_to_svg(&map, &squares)?)?;
    }
    out.finish()?;
    Ok(())
}

fn ranges(a: RangesArgs) -> CmdResult {
    let l = load(&a.common)?;
    let g = &l.geom;
    let mode = parse_mode(g, a.mode.as_deref())?;
    let settings = RangeSettings {
        grid: a.grid,
        verify_grid: a.verify_grid,
        tol: l.tol,
        char_len: a.char_len,
        ..RangeSettings::default()
    };
    let r = joint_range_limits(g, a.psi, &mode, &settings, Parallelism::from_workers(a.workers))?;
    println!(
        "anchor {} at pose {}{}",
        list(&r.anchor),
        list(&r.anchor_pose),
        if r.isotropic_anchor { " (isotropic)" } else { " (minimum condition)" }
    );
    println!("psi {}   scale {}   verified points {}", sig(r.psi), sig(r.scale), r.verified_points);
    println!("{:<4} {:>14} {:>14}", "leg", "rho_lo", "rho_hi");
    for (i, [lo, hi]) in r.ranges.iter().enumerate() {
        println!("{:<4} {:>14} {:>14}", i + 1, sig(*lo), sig(*hi));
    }
    if let Some(p) = &a.common.json {
        let mut out = l.outputs();
        out.write_json(p, &r)?;
        out.finish()?;
    }
    Ok(())
}
