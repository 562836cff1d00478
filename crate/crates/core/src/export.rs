//! Map export: CSV, JSON and SVG heat maps.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::kinetostatics::Factor;
use crate::workspace::{SquareOrientation, SquareWorkspace, WorkspaceMap};

fn factor_cell(f: Option<Factor>) -> String {
    match f {
        Some(Factor::Finite(v)) => v.to_string(),
        Some(Factor::Infinite) => "inf".into(),
        None => String::new(),
    }
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// One row per cell. Numbers use the shortest exact decimal form.
pub fn map_to_csv(map: &WorkspaceMap) -> String {
    let mut out = String::new();
    let mut header: Vec<String> = map.axes.iter().map(|a| format!("i_{}", a.name)).collect();
    header.extend(["x", "y", "beta", "gamma"].iter().take(map.cells.first().map_or(2, |c| c.pose.len())).map(|s| s.to_string()));
    header.extend(
        [
            "reachable",
            "serial_flags",
            "parallel_flag",
            "degraded",
            "sigma_min",
            "sigma_max",
            "condition",
        ]
        .map(String::from),
    );
    out.push_str(&header.join(","));
    out.push('\n');
    for c in &map.cells {
        let mut row: Vec<String> = c.index.iter().map(|i| i.to_string()).collect();
        row.extend(c.pose.iter().map(|v| v.to_string()));
        row.push(flag(c.reachable).into());
        row.push(c.serial_flags.iter().map(|&s| flag(s)).collect::<String>());
        row.push(flag(c.parallel_flag).into());
        row.push(flag(c.degraded).into());
        row.push(factor_cell(c.sigma_min));
        row.push(factor_cell(c.sigma_max));
        row.push(factor_cell(c.condition));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn map_to_json(map: &WorkspaceMap) -> String {
    let mut s = serde_json::to_string_pretty(map).expect("map serializes");
    s.push('\n');
    s
}

pub fn map_from_json(text: &str) -> Result<WorkspaceMap> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de)
        .map_err(|e| Error::Config(format!("workspace map {}: {}", e.path(), e.inner())))
}

const UNREACHABLE: &str = "#d9d9d9";
const SINGULAR: &str = "#d62728";
const RAMP: [(f64, [u8; 3]); 4] = [
    (0.0, [49, 54, 149]),
    (0.35, [69, 117, 180]),
    (0.7, [171, 217, 233]),
    (1.0, [254, 224, 144]),
];

fn ramp(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let k = RAMP.iter().position(|(s, _)| *s >= t).unwrap_or(RAMP.len() - 1).max(1);
    let (s0, c0) = RAMP[k - 1];
    let (s1, c1) = RAMP[k];
    let u = if s1 > s0 { (t - s0) / (s1 - s0) } else { 0.0 };
    let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * u).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(c0[0], c1[0]), mix(c0[1], c1[1]), mix(c0[2], c1[2]))
}

/// Heat map of log10(condition) over an (x, y) slice. Singular cells are
/// drawn in a reserved red, unreachable cells in grey; squares are outlined.
pub fn map_to_svg(map: &WorkspaceMap, squares: &[SquareWorkspace]) -> Result<String> {
    let (Some(ax), Some(ay)) = (map.axis("x"), map.axis("y")) else {
        return Err(Error::config("SVG export needs x and y axes"));
    };
    let gx = &map.axes[ax];
    let gy = &map.axes[ay];
    let wx = if gx.count > 1 { gx.step() } else { 1e-3 };
    let wy = if gy.count > 1 { gy.step() } else { 1e-3 };
    let (x0, x1) = (gx.lo - wx / 2.0, gx.hi + wx / 2.0);
    let (y0, y1) = (gy.lo - wy / 2.0, gy.hi + wy / 2.0);
    let px = 600.0 / (x1 - x0).max(y1 - y0);
    let (w, h) = ((x1 - x0) * px, (y1 - y0) * px);
    let tx = |x: f64| (x - x0) * px;
    let ty = |y: f64| (y1 - y) * px;
    let top = map.provenance.degraded_condition.max(10.0).log10();

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.2}" height="{h:.2}" viewBox="0 0 {w:.2} {h:.2}">"#
    )
    .unwrap();
    writeln!(s, r#"<g shape-rendering="crispEdges">"#).unwrap();
    for c in &map.cells {
        let fill = if !c.reachable {
            UNREACHABLE.to_string()
        } else if c.parallel_flag || c.serial_flags.iter().any(|&f| f) {
            SINGULAR.to_string()
        } else {
            match c.condition {
                Some(Factor::Finite(k)) => ramp(k.max(1.0).log10() / top),
                _ => SINGULAR.to_string(),
            }
        };
        let (x, y) = (c.pose[0], c.pose[1]);
        writeln!(
            s,
            r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="{fill}"/>"#,
            tx(x - wx / 2.0),
            ty(y + wy / 2.0),
            wx * px,
            wy * px
        )
        .unwrap();
    }
    writeln!(s, "</g>").unwrap();
    for sq in squares {
        let [cx, cy] = sq.center;
        let r = sq.radius();
        let pts: Vec<(f64, f64)> = match sq.orientation {
            SquareOrientation::AxisAligned => vec![
                (cx - r, cy - r),
                (cx + r, cy - r),
                (cx + r, cy + r),
                (cx - r, cy + r),
            ],
            SquareOrientation::Oblique45 => {
                vec![(cx, cy - r), (cx + r, cy), (cx, cy + r), (cx - r, cy)]
            }
        };
        let pts: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.3},{:.3}", tx(x), ty(y)))
            .collect();
        let dash = match sq.orientation {
            SquareOrientation::AxisAligned => "",
            SquareOrientation::Oblique45 => r#" stroke-dasharray="6,4""#,
        };
        writeln!(
            s,
            r#"<polygon points="{}" fill="none" stroke="black" stroke-width="2"{dash}/>"#,
            pts.join(" ")
        )
        .unwrap();
    }
    writeln!(s, "</svg>").unwrap();
    Ok(s)
}
