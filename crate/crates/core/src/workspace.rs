//! Grid cartography of the workspace: reachability, singularity flags and
//! amplification fields, square useful workspaces and joint range limits.

use serde::{Deserialize, Serialize};

use crate::config::geometry_hash;
use crate::error::{Error, Result};
use crate::jacobian::{build, classify, JacobianMode, Tolerances};
use crate::kinematics::{forward_kinematics_near, inverse_kinematics_with, WorkingMode};
use crate::kinetostatics::{amplification, isotropy_locus_check, Factor};
use crate::model::{JointVector, MechanismGeometry, Pose, Variant};
use crate::par::{all_range, map_range, Parallelism};

/// Condition number above which a cell is reported as degraded.
pub const DEFAULT_DEGRADED_CONDITION: f64 = 100.0;
/// Largest psi used by the range search.
pub const PSI_CAP: f64 = 1e6;

const TASK_AXES: [&str; 4] = ["x", "y", "beta", "gamma"];

/// One sampled task coordinate. `count` nodes span `[lo, hi]` inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl GridAxis {
    /// A zero-length interval gives a single node regardless of `resolution`.
    pub fn new(name: &str, lo: f64, hi: f64, resolution: usize) -> Result<Self> {
        if !TASK_AXES.contains(&name) {
            return Err(Error::config(format!(
                "unknown grid axis \"{name}\" (expected x, y, beta or gamma)"
            )));
        }
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::config(format!(
                "axis {name}: bounds [{lo}, {hi}] must be finite and ordered"
            )));
        }
        let count = if lo == hi {
            1
        } else if resolution >= 3 {
            resolution
        } else {
            return Err(Error::config(format!(
                "axis {name}: resolution ≥ 3 required, got {resolution}"
            )));
        };
        Ok(GridAxis {
            name: name.to_string(),
            lo,
            hi,
            count,
        })
    }

    pub fn value(&self, k: usize) -> f64 {
        if self.count == 1 {
            self.lo
        } else if k + 1 == self.count {
            self.hi
        } else {
            self.lo + (self.hi - self.lo) * k as f64 / (self.count - 1) as f64
        }
    }

    /// Node spacing, 0 for a single node.
    pub fn step(&self) -> f64 {
        if self.count > 1 {
            (self.hi - self.lo) / (self.count - 1) as f64
        } else {
            0.0
        }
    }

    fn slot(&self) -> usize {
        TASK_AXES.iter().position(|a| *a == self.name).expect("checked in new")
    }
}

/// A square box in (x, y) with the same resolution on both axes.
pub fn square_box(lo: f64, hi: f64, resolution: usize) -> Result<Vec<GridAxis>> {
    Ok(vec![
        GridAxis::new("x", lo, hi, resolution)?,
        GridAxis::new("y", lo, hi, resolution)?,
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanSettings {
    pub mode: WorkingMode,
    pub psi: f64,
    pub tol: Tolerances,
    pub jacobian_mode: JacobianMode,
    /// Defaults to the tool's characteristic length for spatial variants.
    pub char_len: Option<f64>,
    pub degraded_condition: f64,
}

impl ScanSettings {
    pub fn new(mode: WorkingMode, psi: f64) -> Self {
        ScanSettings {
            mode,
            psi,
            tol: Tolerances::default(),
            jacobian_mode: JacobianMode::Consistent,
            char_len: None,
            degraded_condition: DEFAULT_DEGRADED_CONDITION,
        }
    }

    fn resolved_char_len(&self, geom: &MechanismGeometry) -> Option<f64> {
        match geom.variant {
            Variant::Planar2T => None,
            _ => self
                .char_len
                .or_else(|| geom.tool.as_ref().map(|t| t.characteristic_length())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub index: Vec<usize>,
    /// Task coordinates (x, y[, beta[, gamma]]).
    pub pose: Vec<f64>,
    pub reachable: bool,
    pub joints: Option<Vec<f64>>,
    pub sigma_min: Option<Factor>,
    pub sigma_max: Option<Factor>,
    pub condition: Option<Factor>,
    pub serial_flags: Vec<bool>,
    pub parallel_flag: bool,
    pub degraded: bool,
}

impl CellRecord {
    /// Reachable, free of singularity flags and with every velocity factor
    /// inside [1/psi, psi].
    pub fn admissible(&self, psi: f64) -> bool {
        let in_band = |f: Option<Factor>| matches!(f, Some(Factor::Finite(v)) if v >= 1.0 / psi && v <= psi);
        self.reachable
            && !self.parallel_flag
            && !self.serial_flags.iter().any(|&s| s)
            && in_band(self.sigma_min)
            && in_band(self.sigma_max)
    }

    fn unreachable(index: Vec<usize>, pose: Vec<f64>) -> Self {
        CellRecord {
            index,
            pose,
            reachable: false,
            joints: None,
            sigma_min: None,
            sigma_max: None,
            condition: None,
            serial_flags: vec![],
            parallel_flag: false,
            degraded: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub geometry_hash: String,
    pub variant: String,
    pub mode: String,
    pub psi: f64,
    pub tolerances: Tolerances,
    pub char_len: Option<f64>,
    pub literal_jacobian: bool,
    pub degraded_condition: f64,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceMap {
    pub axes: Vec<GridAxis>,
    /// Row-major, last axis fastest.
    pub cells: Vec<CellRecord>,
    pub provenance: Provenance,
}

impl WorkspaceMap {
    pub fn counts(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.count).collect()
    }

    pub fn flat_index(&self, index: &[usize]) -> usize {
        index
            .iter()
            .zip(&self.axes)
            .fold(0, |acc, (&i, a)| acc * a.count + i)
    }

    pub fn cell(&self, index: &[usize]) -> &CellRecord {
        &self.cells[self.flat_index(index)]
    }

    pub fn axis(&self, name: &str) -> Option<usize> {
        self.axes.iter().position(|a| a.name == name)
    }
}

fn unflatten(mut flat: usize, counts: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; counts.len()];
    for (k, &c) in counts.iter().enumerate().rev() {
        idx[k] = flat % c;
        flat /= c;
    }
    idx
}

fn check_axes(geom: &MechanismGeometry, axes: &[GridAxis]) -> Result<()> {
    for (k, a) in axes.iter().enumerate() {
        if axes[..k].iter().any(|b| b.name == a.name) {
            return Err(Error::config(format!("axis {} given twice", a.name)));
        }
        if a.slot() >= geom.variant.task_dim() {
            return Err(Error::config(format!(
                "axis {} does not exist for a {} geometry",
                a.name, geom.variant
            )));
        }
    }
    for needed in ["x", "y"] {
        if !axes.iter().any(|a| a.name == needed) {
            return Err(Error::config(format!("scan box needs an {needed} axis")));
        }
    }
    Ok(())
}

/// Evaluates one pose for a given working mode.
pub fn evaluate_pose(
    geom: &MechanismGeometry,
    pose: &Pose,
    settings: &ScanSettings,
    index: Vec<usize>,
) -> CellRecord {
    let task = pose.task_vector();
    let Ok(ik) = inverse_kinematics_with(geom, pose, &settings.mode, &settings.tol) else {
        return CellRecord::unreachable(index, task);
    };
    let Ok(jp) = build(geom, pose, &ik.joints, settings.jacobian_mode, &settings.tol) else {
        return CellRecord::unreachable(index, task);
    };
    let report = classify(&jp, geom, pose, &ik.joints, &settings.tol)
        .expect("legs already evaluated by build");
    let amp = amplification(&jp, settings.resolved_char_len(geom))
        .expect("square homogeneous Jacobian");
    let condition = amp.condition_number;
    CellRecord {
        index,
        pose: task,
        reachable: true,
        joints: Some(ik.joints.rho),
        sigma_min: Some(amp.sigma_min()),
        sigma_max: Some(amp.sigma_max()),
        condition: Some(condition),
        serial_flags: report.serial_singular,
        parallel_flag: report.parallel_singular,
        degraded: condition.value() > settings.degraded_condition,
    }
}

/// Samples every node of `axes` (task coordinates not listed are held at 0).
pub fn scan(
    geom: &MechanismGeometry,
    axes: &[GridAxis],
    settings: &ScanSettings,
    par: Parallelism,
) -> Result<WorkspaceMap> {
    check_axes(geom, axes)?;
    if settings.mode.0.len() != geom.leg_count() {
        return Err(Error::config(format!(
            "working mode has {} signs, geometry has {} legs",
            settings.mode.0.len(),
            geom.leg_count()
        )));
    }
    if !(settings.psi >= 1.0) {
        return Err(Error::config(format!("psi must be at least 1, got {}", settings.psi)));
    }
    let char_len = settings.resolved_char_len(geom);
    if let Some(c) = char_len {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::config(format!("characteristic length must be positive, got {c}")));
        }
    }
    let counts: Vec<usize> = axes.iter().map(|a| a.count).collect();
    let total: usize = counts.iter().product();
    let dim = geom.variant.task_dim();
    let cells = map_range(total, par, |flat| {
        let index = unflatten(flat, &counts);
        let mut task = vec![0.0; dim];
        for (a, &k) in axes.iter().zip(&index) {
            task[a.slot()] = a.value(k);
        }
        let pose = Pose::from_task(geom.variant, &task).expect("dimension checked");
        evaluate_pose(geom, &pose, settings, index)
    });
    Ok(WorkspaceMap {
        axes: axes.to_vec(),
        cells,
        provenance: Provenance {
            geometry_hash: geometry_hash(geom),
            variant: geom.variant.name().to_string(),
            mode: settings.mode.to_string(),
            psi: settings.psi,
            tolerances: settings.tol,
            char_len,
            literal_jacobian: settings.jacobian_mode == JacobianMode::Literal,
            degraded_condition: settings.degraded_condition,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SquareOrientation {
    AxisAligned,
    #[serde(rename = "oblique_45deg")]
    Oblique45,
}

impl SquareOrientation {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "axis" | "axis_aligned" | "axis-aligned" => Ok(SquareOrientation::AxisAligned),
            "oblique" | "oblique_45deg" | "oblique-45" | "45" => Ok(SquareOrientation::Oblique45),
            other => Err(Error::config(format!(
                "unknown square orientation \"{other}\" (expected axis_aligned or oblique_45deg)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SquareOrientation::AxisAligned => "axis_aligned",
            SquareOrientation::Oblique45 => "oblique_45deg",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareWorkspace {
    pub center: [f64; 2],
    /// Half the side length, in meters.
    pub half_side: f64,
    pub orientation: SquareOrientation,
    pub psi_bound: f64,
    /// Number of grid cells overlapping the square.
    pub cells: usize,
}

impl SquareWorkspace {
    /// Distance from the center to a vertex along the square's own
    /// diagonal frame: L-inf radius for axis-aligned squares, L1 radius for
    /// oblique ones.
    pub fn radius(&self) -> f64 {
        match self.orientation {
            SquareOrientation::AxisAligned => self.half_side,
            SquareOrientation::Oblique45 => self.half_side * std::f64::consts::SQRT_2,
        }
    }
}

/// Planar view of a map: node coordinates and cell widths.
struct PlaneGrid {
    xs: Vec<f64>,
    ys: Vec<f64>,
    wx: f64,
    wy: f64,
    /// Flat map index for (ix, iy).
    flat: Vec<usize>,
}

impl PlaneGrid {
    fn new(map: &WorkspaceMap) -> Result<Self> {
        let (Some(ax), Some(ay)) = (map.axis("x"), map.axis("y")) else {
            return Err(Error::config("square extraction needs x and y axes"));
        };
        if map
            .axes
            .iter()
            .enumerate()
            .any(|(k, a)| k != ax && k != ay && a.count != 1)
        {
            return Err(Error::config(
                "square extraction needs a single slice of the orientation axes",
            ));
        }
        let gx = &map.axes[ax];
        let gy = &map.axes[ay];
        let xs: Vec<f64> = (0..gx.count).map(|k| gx.value(k)).collect();
        let ys: Vec<f64> = (0..gy.count).map(|k| gy.value(k)).collect();
        let mut flat = Vec::with_capacity(xs.len() * ys.len());
        let mut idx = vec![0; map.axes.len()];
        for i in 0..xs.len() {
            for j in 0..ys.len() {
                idx[ax] = i;
                idx[ay] = j;
                flat.push(map.flat_index(&idx));
            }
        }
        Ok(PlaneGrid {
            wx: gx.step(),
            wy: gy.step(),
            xs,
            ys,
            flat,
        })
    }

    fn cell_box(&self, i: usize, j: usize) -> [f64; 4] {
        [
            self.xs[i] - self.wx / 2.0,
            self.xs[i] + self.wx / 2.0,
            self.ys[j] - self.wy / 2.0,
            self.ys[j] + self.wy / 2.0,
        ]
    }

    fn extent(&self) -> [f64; 4] {
        [
            self.xs[0] - self.wx / 2.0,
            self.xs[self.xs.len() - 1] + self.wx / 2.0,
            self.ys[0] - self.wy / 2.0,
            self.ys[self.ys.len() - 1] + self.wy / 2.0,
        ]
    }
}

/// Distance from `c` to an axis-aligned box, in the norm matching the
/// square orientation.
fn box_distance(c: [f64; 2], b: [f64; 4], orientation: SquareOrientation) -> f64 {
    let dx = (b[0] - c[0]).max(c[0] - b[1]).max(0.0);
    let dy = (b[2] - c[1]).max(c[1] - b[3]).max(0.0);
    match orientation {
        SquareOrientation::AxisAligned => dx.max(dy),
        SquareOrientation::Oblique45 => dx + dy,
    }
}

/// Largest square of the given orientation whose interior lies inside the
/// union of admissible cells (each node owning the cell around it).
///
/// Centers are searched on the quarter-cell lattice, so the radius is within
/// an eighth of a cell of the best possible (a quarter cell for oblique
/// squares); ties go to the smallest (x, y).
pub fn max_square(
    map: &WorkspaceMap,
    orientation: SquareOrientation,
    psi: f64,
) -> Result<SquareWorkspace> {
    max_square_with(map, orientation, psi, Parallelism::Auto)
}

pub fn max_square_with(
    map: &WorkspaceMap,
    orientation: SquareOrientation,
    psi: f64,
    par: Parallelism,
) -> Result<SquareWorkspace> {
    let grid = PlaneGrid::new(map)?;
    let (nx, ny) = (grid.xs.len(), grid.ys.len());
    let good: Vec<bool> = grid.flat.iter().map(|&f| map.cells[f].admissible(psi)).collect();
    let at = |i: usize, j: usize| good[i * ny + j];
    if !good.iter().any(|&g| g) {
        return Err(Error::EmptyWorkspace(format!(
            "no cell satisfies the psi = {psi} bound"
        )));
    }

    // Inadmissible cells touching an admissible one bound every square.
    let mut walls = Vec::new();
    for i in 0..nx {
        for j in 0..ny {
            if at(i, j) {
                continue;
            }
            let touches = (i.saturating_sub(1)..=(i + 1).min(nx - 1)).any(|a| {
                (j.saturating_sub(1)..=(j + 1).min(ny - 1)).any(|b| at(a, b))
            });
            if touches {
                walls.push(grid.cell_box(i, j));
            }
        }
    }

    let ext = grid.extent();
    let (qx, qy) = (4 * nx + 1, 4 * ny + 1);
    let cand = |k: usize| -> [f64; 2] {
        let (a, b) = (k / qy, k % qy);
        [
            ext[0] + (ext[1] - ext[0]) * a as f64 / (qx - 1) as f64,
            ext[2] + (ext[3] - ext[2]) * b as f64 / (qy - 1) as f64,
        ]
    };
    let radii = map_range(qx * qy, par, |k| {
        let c = cand(k);
        // Centers must sit in an admissible cell.
        let i = nearest(&grid.xs, c[0]);
        let j = nearest(&grid.ys, c[1]);
        if !at(i, j) {
            return -1.0;
        }
        let mut r = (c[0] - ext[0])
            .min(ext[1] - c[0])
            .min(c[1] - ext[2])
            .min(ext[3] - c[1]);
        for w in &walls {
            if r <= 0.0 {
                break;
            }
            r = r.min(box_distance(c, *w, orientation));
        }
        r
    });

    let scale = (ext[1] - ext[0]).max(ext[3] - ext[2]).max(1.0);
    let mut best: Option<(f64, [f64; 2])> = None;
    for (k, &r) in radii.iter().enumerate() {
        if r < 0.0 {
            continue;
        }
        let c = cand(k);
        let better = match best {
            None => true,
            Some((br, bc)) => {
                r > br + 1e-12 * scale
                    || ((r - br).abs() <= 1e-12 * scale
                        && (c[0] < bc[0] || (c[0] == bc[0] && c[1] < bc[1])))
            }
        };
        if better {
            best = Some((r, c));
        }
    }
    let (r, center) = best.expect("an admissible cell exists");
    let half_side = match orientation {
        SquareOrientation::AxisAligned => r,
        SquareOrientation::Oblique45 => r / std::f64::consts::SQRT_2,
    };
    let mut sq = SquareWorkspace {
        center,
        half_side,
        orientation,
        psi_bound: psi,
        cells: 0,
    };
    sq.cells = square_cells(map, &sq)?.len();
    Ok(sq)
}

fn nearest(nodes: &[f64], v: f64) -> usize {
    let mut best = 0;
    for (k, &n) in nodes.iter().enumerate() {
        if (n - v).abs() < (nodes[best] - v).abs() {
            best = k;
        }
    }
    best
}

/// Flat indices of the cells whose area meets the interior of the square.
pub fn square_cells(map: &WorkspaceMap, sq: &SquareWorkspace) -> Result<Vec<usize>> {
    let grid = PlaneGrid::new(map)?;
    let r = sq.radius();
    let slack = 1e-12 * r.max(1.0);
    let ny = grid.ys.len();
    let mut out = Vec::new();
    for i in 0..grid.xs.len() {
        for j in 0..ny {
            let d = box_distance(sq.center, grid.cell_box(i, j), sq.orientation);
            if d < r - slack || (r == 0.0 && d == 0.0) {
                out.push(grid.flat[i * ny + j]);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangeSettings {
    /// Joint grid nodes per axis for the bisection predicate.
    pub grid: usize,
    /// Joint grid nodes per axis for the final verification.
    pub verify_grid: usize,
    pub bisection_steps: usize,
    pub tol: Tolerances,
    pub jacobian_mode: JacobianMode,
    pub char_len: Option<f64>,
}

impl Default for RangeSettings {
    fn default() -> Self {
        RangeSettings {
            grid: 33,
            verify_grid: 65,
            bisection_steps: 40,
            tol: Tolerances::default(),
            jacobian_mode: JacobianMode::Consistent,
            char_len: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointRanges {
    pub psi: f64,
    /// Joint values at the anchor configuration.
    pub anchor: Vec<f64>,
    pub anchor_pose: Vec<f64>,
    /// True when the anchor is the isotropic configuration.
    pub isotropic_anchor: bool,
    /// Per-leg [rho_lo, rho_hi].
    pub ranges: Vec<[f64; 2]>,
    /// Box half-width as a fraction of each joint's half stroke.
    pub scale: f64,
    pub verified_points: usize,
}

/// Largest joint box around the anchor configuration whose FK images all
/// satisfy the psi bound with no singularity flag.
pub fn joint_range_limits(
    geom: &MechanismGeometry,
    psi: f64,
    mode: &WorkingMode,
    settings: &RangeSettings,
    par: Parallelism,
) -> Result<JointRanges> {
    if !(psi > 1.0) {
        return Err(Error::config(format!("psi must exceed 1, got {psi}")));
    }
    if settings.grid < 2 || settings.verify_grid < 2 {
        return Err(Error::config("range grids need at least 2 nodes per axis"));
    }
    let psi = psi.min(PSI_CAP);
    let scan_settings = ScanSettings {
        tol: settings.tol,
        jacobian_mode: settings.jacobian_mode,
        char_len: settings.char_len,
        ..ScanSettings::new(mode.clone(), psi)
    };
    let (anchor_pose, anchor, isotropic) = find_anchor(geom, mode, &scan_settings, settings, par)?;
    let n = anchor.len();
    let half: Vec<f64> = geom.legs().map(|l| 0.5 * (l.rho_max - l.rho_min)).collect();
    let s_max = geom
        .legs()
        .zip(&anchor)
        .zip(&half)
        .map(|((l, &a), &h)| ((a - l.rho_min).max(l.rho_max - a)) / h)
        .fold(0.0f64, f64::max);

    let bounds = |s: f64| -> Vec<[f64; 2]> {
        geom.legs()
            .zip(&anchor)
            .zip(&half)
            .map(|((l, &a), &h)| [(a - s * h).max(l.rho_min), (a + s * h).min(l.rho_max)])
            .collect()
    };
    let holds = |s: f64, nodes: usize| -> bool {
        let b = bounds(s);
        let nodes = if s == 0.0 { 1 } else { nodes };
        let total = nodes.pow(n as u32);
        all_range(total, par, |flat| {
            let idx = unflatten(flat, &vec![nodes; n]);
            let rho: Vec<f64> = idx
                .iter()
                .zip(&b)
                .map(|(&k, r)| {
                    if nodes == 1 {
                        0.5 * (r[0] + r[1])
                    } else {
                        r[0] + (r[1] - r[0]) * k as f64 / (nodes - 1) as f64
                    }
                })
                .collect();
            joint_point_ok(geom, &rho, &anchor_pose, &scan_settings)
        })
    };

    if !holds(0.0, 1) {
        return Err(Error::EmptyWorkspace(format!(
            "the anchor configuration {anchor:?} violates the psi = {psi} bound"
        )));
    }
    let mut lo = 0.0;
    if holds(s_max, settings.grid) {
        lo = s_max;
    } else {
        let mut hi = s_max;
        for _ in 0..settings.bisection_steps {
            let mid = 0.5 * (lo + hi);
            if holds(mid, settings.grid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let mut s = lo;
    let mut shrinks = 0;
    while s > 0.0 && !holds(s, settings.verify_grid) {
        s *= 0.98;
        shrinks += 1;
        if shrinks > 1000 {
            s = 0.0;
        }
    }
    let verified_points = if s == 0.0 { 1 } else { settings.verify_grid.pow(n as u32) };
    Ok(JointRanges {
        psi,
        anchor: anchor.clone(),
        anchor_pose: anchor_pose.task_vector(),
        isotropic_anchor: isotropic,
        ranges: if s == 0.0 {
            anchor.iter().map(|&a| [a, a]).collect()
        } else {
            bounds(s)
        },
        scale: s,
        verified_points,
    })
}

fn joint_point_ok(
    geom: &MechanismGeometry,
    rho: &[f64],
    reference: &Pose,
    settings: &ScanSettings,
) -> bool {
    let joints = JointVector::new(rho.to_vec());
    let Ok(sol) = forward_kinematics_near(geom, &joints, reference) else {
        return false;
    };
    if sol.branches_merged {
        return false;
    }
    let Ok(jp) = build(geom, &sol.pose, &joints, settings.jacobian_mode, &settings.tol) else {
        return false;
    };
    let Ok(report) = classify(&jp, geom, &sol.pose, &joints, &settings.tol) else {
        return false;
    };
    if report.any() {
        return false;
    }
    match amplification(&jp, settings.resolved_char_len(geom)) {
        Ok(a) => a.within(settings.psi),
        Err(_) => false,
    }
}

/// The isotropic configuration for `mode`, or the best-conditioned node of
/// a scan over the region the translation legs can reach.
fn find_anchor(
    geom: &MechanismGeometry,
    mode: &WorkingMode,
    scan_settings: &ScanSettings,
    settings: &RangeSettings,
    par: Parallelism,
) -> Result<(Pose, Vec<f64>, bool)> {
    let dim = geom.variant.task_dim();
    let iso = isotropy_locus_check(geom);
    if let Some([x, y]) = iso.isotropic_pose {
        let mut task = vec![0.0; dim];
        task[0] = x;
        task[1] = y;
        let pose = Pose::from_task(geom.variant, &task)?;
        if let Ok(ik) = inverse_kinematics_with(geom, &pose, mode, &settings.tol) {
            return Ok((pose, ik.joints.rho, true));
        }
    }

    let (mut lo, mut hi) = ([f64::NEG_INFINITY; 2], [f64::INFINITY; 2]);
    for (leg, off) in geom.translation_legs.iter().zip(&geom.platform_offsets) {
        let ends = [leg.foot(leg.rho_min) - off, leg.foot(leg.rho_max) - off];
        for k in 0..2 {
            let a = ends[0][k].min(ends[1][k]) - leg.leg_length;
            let b = ends[0][k].max(ends[1][k]) + leg.leg_length;
            lo[k] = lo[k].max(a);
            hi[k] = hi[k].min(b);
        }
    }
    if !(lo[0] < hi[0] && lo[1] < hi[1]) {
        return Err(Error::EmptyWorkspace("translation legs have no common reach".into()));
    }
    let res = settings.grid.max(3);
    let axes = vec![
        GridAxis::new("x", lo[0], hi[0], res)?,
        GridAxis::new("y", lo[1], hi[1], res)?,
    ];
    let map = scan(geom, &axes, scan_settings, par)?;
    let best = map
        .cells
        .iter()
        .filter(|c| c.reachable && !c.parallel_flag && !c.serial_flags.iter().any(|&s| s))
        .filter_map(|c| c.condition.and_then(Factor::finite).map(|k| (k, c)))
        .fold(None::<(f64, &CellRecord)>, |acc, (k, c)| match acc {
            Some((bk, _)) if bk <= k => acc,
            _ => Some((k, c)),
        });
    let Some((_, cell)) = best else {
        return Err(Error::EmptyWorkspace(
            "no nonsingular configuration found for this working mode".into(),
        ));
    };
    let pose = Pose::from_task(geom.variant, &cell.pose)?;
    Ok((pose, cell.joints.clone().expect("reachable cell"), false))
}
