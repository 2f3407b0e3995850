//! Benchmark driver: mesh families, per-level systems, condition number
//! tables.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fespace::FeSpace;
use crate::geometry::{Geometry, GeometryKind};
use crate::gram::{lumped_from_mass, mass_matrix, InnerProductKind};
use crate::matrix::{DiagMatrix, SymMatrix};
use crate::mesh::{corner_schedule_from, uniform_schedule_from, Mesh, DEFAULT_CORNER_FACTOR};
use crate::operators::{assemble_operators, balanced_alpha, QuadConfig, StabilizationWeight, DEFAULT_ALPHA, DEFAULT_QUAD_N};
use crate::precond::{build_precond, parse_precond_list, richardson_weight, PrecondKind};
use crate::spectral::kappa;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RefineMode {
    Uniform,
    #[default]
    Corner,
}

impl FromStr for RefineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(Self::Uniform),
            "corner" => Ok(Self::Corner),
            other => Err(Error::InvalidParameter(format!("unknown refinement mode '{other}'"))),
        }
    }
}

impl fmt::Display for RefineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Uniform => "uniform",
            Self::Corner => "corner",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Markdown,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "md" | "markdown" => Ok(Self::Markdown),
            other => Err(Error::InvalidParameter(format!("unknown output format '{other}'"))),
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Csv => "csv",
            Self::Markdown => "md",
        })
    }
}

/// How the stabilization weight of the hypersingular operator is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaChoice {
    Fixed(f64),
    /// [`balanced_alpha`] of the level-1 single layer matrix.
    Balanced,
}

impl Default for AlphaChoice {
    fn default() -> Self {
        Self::Fixed(DEFAULT_ALPHA)
    }
}

impl FromStr for AlphaChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "balanced" => Ok(Self::Balanced),
            v => v
                .parse()
                .map(Self::Fixed)
                .map_err(|_| Error::InvalidParameter(format!("alpha must be a number or 'balanced', got '{v}'"))),
        }
    }
}

impl fmt::Display for AlphaChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Fixed(a) => write!(f, "{a}"),
            Self::Balanced => f.write_str("balanced"),
        }
    }
}

/// Everything that defines one benchmark run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub geometry: GeometryKind,
    pub scale: f64,
    pub ellipse_ratio: f64,
    pub degree: usize,
    pub levels: usize,
    pub refine: RefineMode,
    /// Initial panels per chart; `None` picks the geometry default.
    pub panels_per_chart: Option<usize>,
    pub corner_factor: usize,
    pub preconds: Vec<PrecondKind>,
    pub alpha: AlphaChoice,
    pub omega_override: Option<f64>,
    pub quad_n: usize,
    pub inner_product: InnerProductKind,
    pub format: OutputFormat,
    pub output: Option<PathBuf>,
    pub dump_matrices: Option<PathBuf>,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            geometry: GeometryKind::Square,
            scale: 0.5,
            ellipse_ratio: 2.0,
            degree: 1,
            levels: 6,
            refine: RefineMode::Corner,
            panels_per_chart: None,
            corner_factor: DEFAULT_CORNER_FACTOR,
            preconds: vec![PrecondKind::Lumped, PrecondKind::Mass],
            alpha: AlphaChoice::default(),
            omega_override: None,
            quad_n: DEFAULT_QUAD_N,
            inner_product: InnerProductKind::Exact,
            format: OutputFormat::Csv,
            output: None,
            dump_matrices: None,
            seed: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::InvalidParameter(format!("bad value '{value}' for '{key}'")))
}

impl ExperimentConfig {
    /// Keys understood by [`ExperimentConfig::set`].
    pub const KEYS: &'static [&'static str] = &[
        "geometry",
        "scale",
        "ellipse_ratio",
        "degree",
        "levels",
        "refine",
        "panels_per_chart",
        "corner_factor",
        "precond",
        "alpha",
        "omega_override",
        "quad_n",
        "inner_product",
        "format",
        "output",
        "dump_matrices",
        "seed",
    ];

    /// Sets one option by name; `-` and `_` are interchangeable in keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let v = value.trim();
        match key.as_str() {
            "geometry" => self.geometry = v.parse()?,
            "scale" => self.scale = parse(&key, v)?,
            "ellipse_ratio" => self.ellipse_ratio = parse(&key, v)?,
            "degree" => self.degree = parse(&key, v)?,
            "levels" => self.levels = parse(&key, v)?,
            "refine" => self.refine = v.parse()?,
            "panels_per_chart" => self.panels_per_chart = Some(parse(&key, v)?),
            "corner_factor" => self.corner_factor = parse(&key, v)?,
            "precond" => self.preconds = parse_precond_list(v)?,
            "alpha" => self.alpha = v.parse()?,
            "omega_override" => self.omega_override = Some(parse(&key, v)?),
            "quad_n" => self.quad_n = parse(&key, v)?,
            "inner_product" => self.inner_product = v.parse()?,
            "format" => self.format = v.parse()?,
            "output" => self.output = Some(PathBuf::from(v)),
            "dump_matrices" => self.dump_matrices = Some(PathBuf::from(v)),
            "seed" => self.seed = parse(&key, v)?,
            other => return Err(Error::InvalidParameter(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` text; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("config line {}: expected key = value", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(&std::fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.levels == 0 {
            return bad("levels must be at least 1".into());
        }
        if !(1..=4).contains(&self.degree) {
            return bad(format!("degree must be in 1..=4, got {}", self.degree));
        }
        if self.preconds.is_empty() {
            return bad("no preconditioner requested".into());
        }
        if self.quad_n < 4 || self.quad_n > 60 {
            return bad(format!("quad_n must be in 4..=60, got {}", self.quad_n));
        }
        if self.panels_per_chart == Some(0) {
            return bad("panels_per_chart must be positive".into());
        }
        if let Some(w) = self.omega_override {
            if !(w > 0.0 && w.is_finite()) {
                return bad(format!("omega_override must be positive, got {w}"));
            }
        }
        if let AlphaChoice::Fixed(a) = self.alpha {
            StabilizationWeight::new(a)?;
        }
        Geometry::new(self.geometry, self.scale, self.ellipse_ratio)?;
        Ok(())
    }

    pub fn geometry(&self) -> Result<Arc<Geometry>> {
        Ok(Arc::new(Geometry::new(self.geometry, self.scale, self.ellipse_ratio)?))
    }

    /// Meshes of levels `1..=levels`.
    pub fn meshes(&self) -> Result<Vec<Mesh>> {
        let g = self.geometry()?;
        let ppc = self.panels_per_chart.unwrap_or_else(|| g.default_panels_per_chart());
        let initial = Mesh::initial(g, ppc)?;
        (1..=self.levels)
            .map(|k| match self.refine {
                RefineMode::Uniform => Ok(uniform_schedule_from(&initial, k)),
                RefineMode::Corner => corner_schedule_from(&initial, k, self.corner_factor),
            })
            .collect()
    }

    /// The stabilization weight as a number.
    pub fn resolve_alpha(&self) -> Result<f64> {
        match self.alpha {
            AlphaChoice::Fixed(a) => Ok(a),
            AlphaChoice::Balanced => {
                let g = self.geometry()?;
                let ppc = self.panels_per_chart.unwrap_or_else(|| g.default_panels_per_chart());
                let mesh = corner_schedule_from(&Mesh::initial(g, ppc)?, 1, self.corner_factor)?;
                let s = FeSpace::new(&mesh, 1)?;
                let (a, _) = assemble_operators(&s, QuadConfig { base_n: self.quad_n }, StabilizationWeight::default())?;
                Ok(balanced_alpha(&a)?.value())
            }
        }
    }

    /// Damping of the Richardson preconditioners.
    pub fn omega(&self) -> Result<f64> {
        match self.omega_override {
            Some(w) => Ok(w),
            None => Ok(richardson_weight(1, self.degree)?.omega),
        }
    }
}

/// Operator and Gram matrices of one level.
pub struct LevelSystem {
    pub space: FeSpace,
    pub single_layer: SymMatrix,
    pub hypersingular: SymMatrix,
    pub mass: SymMatrix,
    pub lumped: DiagMatrix,
}

impl LevelSystem {
    pub fn build(mesh: &Mesh, degree: usize, q: QuadConfig, alpha: f64, kind: InnerProductKind) -> Result<Self> {
        let space = FeSpace::new(mesh, degree)?;
        let (a, b) = assemble_operators(&space, q, StabilizationWeight::new(alpha)?)?;
        let mass = mass_matrix(&space, kind);
        let lumped = lumped_from_mass(&mass);
        Ok(Self { space, single_layer: a, hypersingular: b, mass, lumped })
    }

    pub fn from_config(cfg: &ExperimentConfig, mesh: &Mesh) -> Result<Self> {
        Self::build(mesh, cfg.degree, QuadConfig { base_n: cfg.quad_n }, cfg.resolve_alpha()?, cfg.inner_product)
    }

    /// `κ_S(G A)` for the preconditioner of the given kind.
    pub fn kappa(&self, kind: PrecondKind, omega: f64) -> Result<f64> {
        let g = build_precond(kind, &self.hypersingular, &self.mass, &self.lumped, omega)?;
        kappa(&g.matrix, &self.single_layer)
    }

    /// Writes `A`, `B`, `M` and `D` of this level into `dir`.
    pub fn dump(&self, dir: &Path, level: usize) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.single_layer.write_text(&dir.join(format!("level{level}_A.txt")))?;
        self.hypersingular.write_text(&dir.join(format!("level{level}_B.txt")))?;
        self.mass.write_text(&dir.join(format!("level{level}_M.txt")))?;
        self.lumped.write_text(&dir.join(format!("level{level}_D.txt")))?;
        std::fs::write(dir.join(format!("level{level}_mesh.txt")), self.space.mesh().dump())?;
        Ok(())
    }
}

/// One table row.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub level: usize,
    pub h_min: f64,
    pub h_max: f64,
    pub dofs: usize,
    pub kappas: Vec<f64>,
}

/// Runs all levels sequentially and returns one row per level.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    cfg.validate()?;
    let cfg = &ExperimentConfig { alpha: AlphaChoice::Fixed(cfg.resolve_alpha()?), ..cfg.clone() };
    let omega = cfg.omega()?;
    let meshes = cfg.meshes()?;
    let mut rows = Vec::with_capacity(meshes.len());
    for (i, mesh) in meshes.iter().enumerate() {
        let level = i + 1;
        let row = (|| {
            let sys = LevelSystem::from_config(cfg, mesh)?;
            if let Some(dir) = &cfg.dump_matrices {
                sys.dump(dir, level)?;
            }
            let kappas = cfg.preconds.iter().map(|&k| sys.kappa(k, omega)).collect::<Result<Vec<_>>>()?;
            Ok(ReportRow { level, h_min: mesh.h_min(), h_max: mesh.h_max(), dofs: sys.space.ndofs(), kappas })
        })()
        .map_err(|e: Error| e.at_level(level))?;
        rows.push(row);
    }
    Ok(rows)
}

fn kappa_label(kind: PrecondKind) -> String {
    match kind {
        PrecondKind::Lumped => "G^D".into(),
        PrecondKind::Mass => "G^M".into(),
        PrecondKind::Jacobi => "G^J".into(),
        PrecondKind::Richardson(k) => format!("G^({k})"),
    }
}

/// Renders the rows as CSV or as a markdown table.
pub fn emit_table(rows: &[ReportRow], preconds: &[PrecondKind], format: OutputFormat) -> String {
    let mut out = String::new();
    match format {
        OutputFormat::Csv => {
            out.push_str("level,h_min,h_max,dofs");
            for p in preconds {
                let _ = write!(out, ",{p}");
            }
            out.push('\n');
            for r in rows {
                let _ = write!(out, "{},{:.3e},{:.3e},{}", r.level, r.h_min, r.h_max, r.dofs);
                for k in &r.kappas {
                    let _ = write!(out, ",{k:.3e}");
                }
                out.push('\n');
            }
        }
        OutputFormat::Markdown => {
            out.push_str("Spectral condition numbers κ_S(G A), operator pair of order ∓1 (s = 1/2)\n\n");
            out.push_str("| level | h_min | h_max | dofs |");
            for p in preconds {
                let _ = write!(out, " κ({} A) |", kappa_label(*p));
            }
            out.push('\n');
            out.push_str("|---:|---:|---:|---:|");
            for _ in preconds {
                out.push_str("---:|");
            }
            out.push('\n');
            for r in rows {
                let _ = write!(out, "| {} | {:.3e} | {:.3e} | {} |", r.level, r.h_min, r.h_max, r.dofs);
                for k in &r.kappas {
                    let _ = write!(out, " {k:.3e} |");
                }
                out.push('\n');
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_text_and_overrides() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text("# comment\ngeometry = ellipse\ndegree=3\nprecond = lumped, richardson:2\ninner-product = averaged\n")
            .unwrap();
        assert_eq!(cfg.geometry, GeometryKind::Ellipse);
        assert_eq!(cfg.degree, 3);
        assert_eq!(cfg.preconds, vec![PrecondKind::Lumped, PrecondKind::Richardson(2)]);
        assert_eq!(cfg.inner_product, InnerProductKind::MeshAveraged);
        assert!(cfg.apply_text("nonsense = 1").is_err());
        assert!(cfg.apply_text("degree").is_err());
        cfg.set("levels", "0").unwrap();
        assert!(cfg.validate().is_err());
        for key in ExperimentConfig::KEYS {
            assert!(!matches!(cfg.clone().set(key, "x"), Err(Error::InvalidParameter(m)) if m.starts_with("unknown config key")));
        }
    }

    #[test]
    fn alpha_choice() {
        assert_eq!("balanced".parse::<AlphaChoice>().unwrap(), AlphaChoice::Balanced);
        assert_eq!(" 0.2 ".parse::<AlphaChoice>().unwrap(), AlphaChoice::Fixed(0.2));
        assert!("heavy".parse::<AlphaChoice>().is_err());
        assert_eq!(AlphaChoice::Balanced.to_string(), "balanced");
        let mut cfg = ExperimentConfig::default();
        assert_eq!(cfg.resolve_alpha().unwrap(), DEFAULT_ALPHA);
        cfg.set("alpha", "-1").unwrap();
        assert!(cfg.validate().is_err());
        cfg.set("alpha", "balanced").unwrap();
        let a = cfg.resolve_alpha().unwrap();
        // 1 / (4 ⟨V1, 1⟩) with ⟨V1, 1⟩ ≈ 0.786 on the half-unit square
        assert!((a - 0.318).abs() < 1e-3, "{a}");
    }

    #[test]
    fn one_level_square() {
        let cfg = ExperimentConfig { levels: 1, preconds: vec![PrecondKind::Lumped], ..Default::default() };
        let rows = run_experiment(&cfg).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].kappas[0] >= 1.0);
        assert_eq!(rows[0].dofs, cfg.meshes().unwrap()[0].len());
    }

    #[test]
    fn tables() {
        let p = [PrecondKind::Lumped, PrecondKind::Richardson(2)];
        assert_eq!(emit_table(&[], &p, OutputFormat::Csv), "level,h_min,h_max,dofs,lumped,richardson:2\n");
        let row = ReportRow { level: 2, h_min: 1.0e-3, h_max: 0.25, dofs: 96, kappas: vec![15.8123, 7.25] };
        let csv = emit_table(&[row.clone()], &p, OutputFormat::Csv);
        assert_eq!(csv.lines().nth(1).unwrap(), "2,1.000e-3,2.500e-1,96,1.581e1,7.250e0");
        let md = emit_table(&[row], &p, OutputFormat::Markdown);
        let header = md.lines().find(|l| l.starts_with("| level")).unwrap();
        assert_eq!(header.matches('|').count() - 1, 4 + p.len());
    }
}
