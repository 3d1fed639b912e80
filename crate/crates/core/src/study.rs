//! Convergence-study driver: configuration, the per-mesh pipeline, and CSV/SVG/VTK output.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::assembly::{assemble_system, build_rules, AssembledSystem, CellRules, MethodParams, ParamRule, ResolvedParams};
use crate::error::{Error, Result};
use crate::error_analysis::{compute_eoc_h, compute_errors, divergence_field, ErrorReport, ManufacturedSolution};
use crate::geometry::{classify, CutTopology, ImplicitCircle};
use crate::mesh::{build_type1_mesh, clough_tocher_refine, CtMesh, Point};
use crate::solver::{solve, SaddleSolution, DEFAULT_RTOL};
use crate::space::{build_space, SvSpace};

pub const CSV_HEADER: &str = "h,n_u,n_p,err_h1_u,rate_u,err_l2_p,rate_p,err_div,rate_div,err_div_interior,flux,seconds";

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub h_list: Vec<f64>,
    pub gamma: ParamRule,
    pub eta: ParamRule,
    pub degree: usize,
    pub center: Point,
    pub radius_squared: f64,
    pub quad_degree: usize,
    pub rtol: f64,
    pub out: PathBuf,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            h_list: vec![0.2, 0.1, 0.05, 0.025],
            gamma: ParamRule::Constant(0.0),
            eta: ParamRule::Constant(100.0),
            degree: 2,
            center: Point::new(0.5, 0.5),
            radius_squared: 0.2,
            quad_degree: 8,
            rtol: DEFAULT_RTOL,
            out: PathBuf::from("study_out"),
        }
    }
}

impl StudyConfig {
    pub fn method(&self) -> MethodParams {
        MethodParams { gamma: self.gamma, eta: self.eta, degree: self.degree }
    }

    pub fn domain(&self) -> Result<ImplicitCircle> {
        ImplicitCircle::from_radius_squared(self.center, self.radius_squared)
    }

    /// Checks the cross-field invariants; also run after CLI overrides.
    pub fn validate(&self) -> Result<()> {
        validate_h_list(&self.h_list).map_err(|m| Error::Config { line: 0, message: m })?;
        if self.degree < 2 {
            return Err(Error::InvalidDegree(self.degree));
        }
        for h in &self.h_list {
            self.method().resolve(*h)?;
        }
        if !(self.rtol > 0.0 && self.rtol < 1.0) {
            return Err(Error::Config { line: 0, message: format!("rtol must lie in (0, 1), got {}", self.rtol) });
        }
        self.domain()?;
        Ok(())
    }
}

/// Number of subdivisions `N` with `h = 1/N`.
pub fn subdivisions(h: f64) -> std::result::Result<usize, String> {
    if !(h > 0.0 && h <= 1.0) {
        return Err(format!("mesh size {h} outside (0, 1]"));
    }
    let n = (1.0 / h).round();
    if ((n * h) - 1.0).abs() > 1e-9 {
        return Err(format!("mesh size {h} is not 1/N for an integer N"));
    }
    Ok(n as usize)
}

fn validate_h_list(h: &[f64]) -> std::result::Result<(), String> {
    if h.is_empty() {
        return Err("h_list is empty".into());
    }
    for v in h {
        subdivisions(*v)?;
    }
    for w in h.windows(2) {
        if (w[1] * 2.0 - w[0]).abs() > 1e-9 * w[0] {
            return Err(format!("h_list must halve at each step, got {} then {}", w[0], w[1]));
        }
    }
    Ok(())
}

fn parse_number(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| format!("malformed number '{s}'"))?;
            let b: f64 = b.trim().parse().map_err(|_| format!("malformed number '{s}'"))?;
            a / b
        }
        None => s.parse().map_err(|_| format!("malformed number '{s}'"))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("non-finite number '{s}'"))
    }
}

/// Parses `c/h`, `c / h` or a literal.
pub fn parse_param(s: &str) -> std::result::Result<ParamRule, String> {
    let t = s.trim();
    if let Some((c, h)) = t.rsplit_once('/') {
        if h.trim() == "h" {
            return Ok(ParamRule::InverseH(parse_number(c)?));
        }
    }
    Ok(ParamRule::Constant(parse_number(t)?))
}

pub fn parse_h_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()).map(parse_number).collect()
}

fn parse_usize(s: &str) -> std::result::Result<usize, String> {
    s.trim().parse().map_err(|_| format!("malformed integer '{}'", s.trim()))
}

/// Parses flat `key = value` text with `#` comments.
pub fn parse_config(text: &str) -> Result<StudyConfig> {
    let mut cfg = StudyConfig::default();
    let mut h_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| Error::Config { line, message };
        let (key, value) = content.split_once('=').ok_or_else(|| err(format!("expected key = value, got '{content}'")))?;
        let value = value.trim();
        match key.trim() {
            "h_list" => {
                cfg.h_list = parse_h_list(value).map_err(err)?;
                h_line = line;
            }
            "gamma" => cfg.gamma = parse_param(value).map_err(err)?,
            "eta" => cfg.eta = parse_param(value).map_err(err)?,
            "degree" => cfg.degree = parse_usize(value).map_err(err)?,
            "center_x" => cfg.center.x = parse_number(value).map_err(err)?,
            "center_y" => cfg.center.y = parse_number(value).map_err(err)?,
            "radius_squared" => cfg.radius_squared = parse_number(value).map_err(err)?,
            "quad_degree" => cfg.quad_degree = parse_usize(value).map_err(err)?,
            "rtol" => cfg.rtol = parse_number(value).map_err(err)?,
            "out" => cfg.out = PathBuf::from(value),
            other => return Err(err(format!("unknown key '{other}'"))),
        }
        match key.trim() {
            "gamma" if !matches!(cfg.gamma, ParamRule::Constant(g) | ParamRule::InverseH(g) if g >= 0.0) => {
                return Err(err("gamma must be >= 0".into()));
            }
            "eta" if !matches!(cfg.eta, ParamRule::Constant(e) | ParamRule::InverseH(e) if e > 0.0) => {
                return Err(err("eta must be > 0".into()));
            }
            "degree" if cfg.degree < 2 => return Err(err(format!("degree must be >= 2, got {}", cfg.degree))),
            _ => {}
        }
    }
    validate_h_list(&cfg.h_list).map_err(|message| Error::Config { line: h_line, message })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Everything built for one mesh before the solve.
pub struct Discretization {
    pub ct: CtMesh,
    pub domain: ImplicitCircle,
    pub topo: CutTopology,
    pub space: SvSpace,
    pub rules: CellRules,
    pub system: AssembledSystem,
}

impl Discretization {
    pub fn new(n: usize, domain: ImplicitCircle, degree: usize, quad_degree: usize, exact: &ManufacturedSolution) -> Result<Self> {
        let ct = clough_tocher_refine(&build_type1_mesh(n)?);
        let topo = classify(&ct, &domain);
        let space = build_space(&ct, &topo, degree)?;
        let rules = build_rules(&ct, &topo, &domain, quad_degree.max(2 * degree));
        let f = |x: &Point| exact.forcing(x);
        let g = |x: &Point| exact.boundary(x);
        let system = assemble_system(&ct, &space, &topo, &rules, &f, &g)?;
        Ok(Self { ct, domain, topo, space, rules, system })
    }

    /// Full-cell areas of the active cells, in slot order.
    pub fn cell_areas(&self) -> Vec<f64> {
        self.space.cells.iter().map(|&c| self.ct.mesh.signed_area(c)).collect()
    }

    pub fn solve(&self, params: &ResolvedParams, rtol: f64) -> Result<SaddleSolution> {
        solve(&self.system, params, rtol)
    }

    pub fn errors(&self, solution: &SaddleSolution, exact: &ManufacturedSolution) -> Result<ErrorReport> {
        compute_errors(&self.ct, &self.space, &self.topo, &self.rules, solution, exact)
    }

    pub fn write_divergence_vtk(&self, velocity: &[f64], path: &Path) -> Result<()> {
        let field = divergence_field(&self.ct, &self.space, &self.rules, velocity);
        let file = BufWriter::new(fs::File::create(path)?);
        self.ct.mesh.write_vtk(file, &[("abs_div_u", &field)])?;
        Ok(())
    }
}

/// Writes the per-cell mean `|div u_h|` as legacy VTK cell data.
pub fn emit_divergence_field(disc: &Discretization, solution: &SaddleSolution, path: &Path) -> Result<()> {
    disc.write_divergence_vtk(&solution.velocity, path)
}

#[derive(Debug, Clone)]
pub struct StudyRow {
    pub h: f64,
    pub report: std::result::Result<ErrorReport, String>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub rows: Vec<StudyRow>,
    pub rate_u: Vec<Option<f64>>,
    pub rate_p: Vec<Option<f64>>,
    pub rate_div: Vec<Option<f64>>,
}

impl StudyResult {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(|r| r.report.is_ok())
    }

    fn column(&self, f: impl Fn(&ErrorReport) -> f64) -> Vec<f64> {
        self.rows.iter().map(|r| r.report.as_ref().map(&f).unwrap_or(f64::NAN)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        let rate = |r: Option<f64>| r.filter(|v| v.is_finite()).map(|v| format!("{v:.4}")).unwrap_or_default();
        for (i, row) in self.rows.iter().enumerate() {
            match &row.report {
                Ok(e) => {
                    let _ = writeln!(
                        s,
                        "{},{},{},{:.6e},{},{:.6e},{},{:.6e},{},{:.6e},{:.6e},{:.3}",
                        row.h,
                        e.n_u,
                        e.n_p,
                        e.err_h1_u,
                        rate(self.rate_u[i]),
                        e.err_l2_p,
                        rate(self.rate_p[i]),
                        e.err_div,
                        rate(self.rate_div[i]),
                        e.err_div_interior,
                        e.flux,
                        row.seconds
                    );
                }
                Err(_) => {
                    let _ = writeln!(s, "{},,,,,,,,,,,{:.3}", row.h, row.seconds);
                }
            }
        }
        s
    }
}

fn rates(h: &[f64], e: &[f64]) -> Vec<Option<f64>> {
    compute_eoc_h(h, e).into_iter().map(|r| r.filter(|v| v.is_finite())).collect()
}

/// Runs one mesh and optionally writes its divergence field to `vtk`.
pub fn run_row(cfg: &StudyConfig, h: f64, exact: &ManufacturedSolution, vtk: Option<&Path>) -> Result<ErrorReport> {
    let n = subdivisions(h).map_err(|m| Error::Config { line: 0, message: m })?;
    let params = cfg.method().resolve(h)?;
    let disc = Discretization::new(n, cfg.domain()?, cfg.degree, cfg.quad_degree, exact)?;
    let sol = disc.solve(&params, cfg.rtol)?;
    if let Some(path) = vtk {
        emit_divergence_field(&disc, &sol, path)?;
    }
    disc.errors(&sol, exact)
}

/// Runs every row without writing files.
pub fn run_rows(cfg: &StudyConfig, vtk_dir: Option<&Path>) -> StudyResult {
    let exact = ManufacturedSolution::default();
    let rows: Vec<StudyRow> = cfg
        .h_list
        .iter()
        .map(|&h| {
            let start = Instant::now();
            let vtk = vtk_dir.map(|d| d.join(format!("divergence_n{}.vtk", (1.0 / h).round() as usize)));
            let report = run_row(cfg, h, &exact, vtk.as_deref()).map_err(|e| e.to_string());
            StudyRow { h, report, seconds: start.elapsed().as_secs_f64() }
        })
        .collect();
    let mut result = StudyResult { rows, rate_u: vec![], rate_p: vec![], rate_div: vec![] };
    result.rate_u = rates(&cfg.h_list, &result.column(|e| e.err_h1_u));
    result.rate_p = rates(&cfg.h_list, &result.column(|e| e.err_l2_p));
    result.rate_div = rates(&cfg.h_list, &result.column(|e| e.err_div));
    result
}

/// Runs the study and writes `convergence.csv`, one SVG per error column, and VTK divergence fields.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyResult> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out)?;
    let result = run_rows(cfg, Some(&cfg.out));
    fs::write(cfg.out.join("convergence.csv"), result.to_csv())?;
    let plots = [
        ("err_h1_u", result.column(|e| e.err_h1_u)),
        ("err_l2_p", result.column(|e| e.err_l2_p)),
        ("err_div", result.column(|e| e.err_div)),
    ];
    for (name, values) in plots {
        fs::write(cfg.out.join(format!("{name}.svg")), loglog_svg(name, &cfg.h_list, &values))?;
    }
    Ok(result)
}

/// Log-log plot of `values` against `h` with decade grid lines and an `h^2` guide.
pub fn loglog_svg(title: &str, h: &[f64], values: &[f64]) -> String {
    let (w, ht, m) = (480.0, 360.0, 60.0);
    let pts: Vec<(f64, f64)> =
        h.iter().zip(values).filter(|(x, y)| **x > 0.0 && **y > 0.0 && y.is_finite()).map(|(x, y)| (x.log10(), y.log10())).collect();
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{ht}" viewBox="0 0 {w} {ht}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{title}</text>"#, w / 2.0);
    if pts.is_empty() {
        s.push_str("</svg>\n");
        return s;
    }
    let fold = |f: fn(f64, f64) -> f64, init: f64, sel: fn(&(f64, f64)) -> f64| pts.iter().map(sel).fold(init, f);
    let (x0, x1) = (fold(f64::min, f64::INFINITY, |p| p.0).floor(), fold(f64::max, f64::NEG_INFINITY, |p| p.0).ceil());
    let (y0, y1) = (fold(f64::min, f64::INFINITY, |p| p.1).floor(), fold(f64::max, f64::NEG_INFINITY, |p| p.1).ceil());
    let (x1, y1) = (x1.max(x0 + 1.0), y1.max(y0 + 1.0));
    let px = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let py = |y: f64| ht - m - (y - y0) / (y1 - y0) * (ht - 2.0 * m);
    for d in x0 as i32..=x1 as i32 {
        let x = px(d as f64);
        let _ = writeln!(s, r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#ddd"/>"##, py(y0), py(y1));
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">1e{d}</text>"#, ht - m + 16.0);
    }
    for d in y0 as i32..=y1 as i32 {
        let y = py(d as f64);
        let _ = writeln!(s, r##"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/>"##, px(x0), px(x1));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">1e{d}</text>"#, m - 6.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">h</text>"#, w / 2.0, ht - 12.0);
    let line: Vec<String> = pts.iter().map(|(x, y)| format!("{:.1},{:.1}", px(*x), py(*y))).collect();
    let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#1f4e9c" stroke-width="2"/>"##, line.join(" "));
    for (x, y) in &pts {
        let _ = writeln!(s, r##"<circle cx="{:.1}" cy="{:.1}" r="3.5" fill="#1f4e9c"/>"##, px(*x), py(*y));
    }
    // Slope-2 guide through the last point.
    let (lx, ly) = pts[pts.len() - 1];
    let (fx, fy) = (pts[0].0, ly + 2.0 * (pts[0].0 - lx));
    let _ = writeln!(
        s,
        r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#999" stroke-dasharray="5,4"/>"##,
        px(fx),
        py(fy.clamp(y0, y1)),
        px(lx),
        py(ly)
    );
    s.push_str("</svg>\n");
    s
}
