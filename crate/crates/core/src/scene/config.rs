//! Scene files: TOML with the grammar documented in the README.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::contact::{BarrierParams, FrictionParams};
use crate::fluid::{FluidParams, FluidState};
use crate::integrator::{SchemeConfig, SchemeKind, System};
use crate::solid::{MaterialKind, MaterialModel, SolidMesh};
use crate::{Error, Result, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub dimension: usize,
    /// Simulated time between exported frames [s].
    pub frame_dt: f64,
    /// Frames after the initial one.
    pub frames: usize,
    /// Gravity [m/s²]; defaults to `-9.81` along the second axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gravity: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default)]
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub contact: ContactConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fluid: Option<FluidConfig>,
    #[serde(default, rename = "solid", skip_serializing_if = "Vec::is_empty")]
    pub solids: Vec<SolidConfig>,
    /// Directory that relative mesh paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidConfig {
    /// Particle spacing `d` [m].
    pub spacing: f64,
    #[serde(default = "default_rest_density")]
    pub rest_density: f64,
    #[serde(rename = "k_I")]
    pub k_incompressibility: f64,
    #[serde(default)]
    pub viscosity: f64,
    #[serde(rename = "box")]
    pub boxes: Vec<FluidBox>,
}

fn default_rest_density() -> f64 {
    1000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidBox {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolidConfig {
    /// ASCII mesh file; exclusive with `box`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<String>,
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub grid: Option<SolidBox>,
    /// Defaults to fixed corotated for the three-phase scheme, neo-Hookean otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<MaterialKind>,
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    pub density: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dirichlet: Vec<DirichletRegion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolidBox {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub cells: Vec<usize>,
}

/// Nodes inside `[min, max]` move with the constant `velocity`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirichletRegion {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactConfig {
    /// Barrier activation distance; defaults to half the particle spacing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dhat: Option<f64>,
    /// Barrier stiffness; defaults to `10⁴ k_I d^dim / d̂²`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    /// Friction coefficient `μ_t`.
    #[serde(default)]
    pub friction: f64,
    #[serde(default = "default_eps_v")]
    pub eps_v: f64,
}

fn default_eps_v() -> f64 {
    1e-3
}

impl Default for ContactConfig {
    fn default() -> Self {
        Self { dhat: None, kappa: None, friction: 0.0, eps_v: default_eps_v() }
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(field, "must be positive"))
    }
}

fn non_negative(field: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(field, "must be non-negative"))
    }
}

fn parse_error(text: &str, e: toml::de::Error) -> Error {
    let (line, column) = match e.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            (line, column)
        }
        None => (0, 0),
    };
    Error::Parse { line, column, message: e.message().to_string() }
}

impl SceneConfig {
    /// Reads, validates and fills defaults.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: PathBuf) -> Result<Self> {
        let mut cfg: SceneConfig = toml::from_str(text).map_err(|e| parse_error(text, e))?;
        cfg.base_dir = base_dir;
        cfg.fill_defaults();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene config serializes")
    }

    fn fill_defaults(&mut self) {
        if self.gravity.is_none() {
            let mut g = vec![0.0; self.dimension];
            if self.dimension >= 2 {
                g[1] = -9.81;
            }
            self.gravity = Some(g);
        }
        if let Some(f) = &self.fluid {
            let d = f.spacing;
            if self.contact.dhat.is_none() && d > 0.0 {
                self.contact.dhat = Some(0.5 * d);
            }
            if let (None, Some(dhat)) = (self.contact.kappa, self.contact.dhat) {
                let v0 = d.powi(self.dimension as i32);
                self.contact.kappa = Some(BarrierParams::default_kappa(f.k_incompressibility, v0, dhat));
            }
        }
    }

    fn check_vec(&self, field: &str, v: &[f64]) -> Result<()> {
        if v.len() != self.dimension {
            return Err(Error::validation(field, format!("expected {} components", self.dimension)));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation(field, "must be finite"));
        }
        Ok(())
    }

    fn check_box(&self, field: &str, lo: &[f64], hi: &[f64]) -> Result<()> {
        self.check_vec(&format!("{field}.min"), lo)?;
        self.check_vec(&format!("{field}.max"), hi)?;
        if lo.iter().zip(hi).any(|(a, b)| a >= b) {
            return Err(Error::validation(format!("{field}.max"), "must exceed min on every axis"));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension != 2 && self.dimension != 3 {
            return Err(Error::validation("dimension", "must be 2 or 3"));
        }
        positive("frame_dt", self.frame_dt)?;
        if let Some(g) = &self.gravity {
            self.check_vec("gravity", g)?;
        }
        self.scheme.validate()?;
        if let Some(f) = &self.fluid {
            positive("fluid.spacing", f.spacing)?;
            positive("fluid.rest_density", f.rest_density)?;
            positive("fluid.k_I", f.k_incompressibility)?;
            non_negative("fluid.viscosity", f.viscosity)?;
            if f.boxes.is_empty() {
                return Err(Error::validation("fluid.box", "at least one box is required"));
            }
            for b in &f.boxes {
                self.check_box("fluid.box", &b.min, &b.max)?;
                if let Some(v) = &b.velocity {
                    self.check_vec("fluid.box.velocity", v)?;
                }
            }
        }
        if let Some(d) = self.contact.dhat {
            positive("contact.dhat", d)?;
        }
        if let Some(k) = self.contact.kappa {
            positive("contact.kappa", k)?;
        }
        non_negative("contact.friction", self.contact.friction)?;
        positive("contact.eps_v", self.contact.eps_v)?;
        for s in &self.solids {
            match (&s.mesh, &s.grid) {
                (Some(_), None) => {}
                (None, Some(b)) => {
                    self.check_box("solid.box", &b.min, &b.max)?;
                    if b.cells.len() != self.dimension || b.cells.contains(&0) {
                        return Err(Error::validation("solid.box.cells", "needs one positive count per axis"));
                    }
                }
                _ => return Err(Error::validation("solid", "exactly one of `mesh` and `box` is required")),
            }
            positive("solid.youngs_modulus", s.youngs_modulus)?;
            positive("solid.density", s.density)?;
            if !(s.poisson_ratio > -1.0 && s.poisson_ratio < 0.5) {
                return Err(Error::validation("solid.poisson_ratio", "must lie in (-1, 0.5)"));
            }
            if let Some(v) = &s.velocity {
                self.check_vec("solid.velocity", v)?;
            }
            for r in &s.dirichlet {
                self.check_box("solid.dirichlet", &r.min, &r.max)?;
                if let Some(v) = &r.velocity {
                    self.check_vec("solid.dirichlet.velocity", v)?;
                }
            }
        }
        if self.fluid.is_none() && !self.solids.is_empty() {
            if self.contact.dhat.is_none() {
                return Err(Error::validation("contact.dhat", "required when the scene has no fluid"));
            }
            if self.contact.kappa.is_none() {
                return Err(Error::validation("contact.kappa", "required when the scene has no fluid"));
            }
        }
        Ok(())
    }

    /// The scheme in effect after an optional override.
    pub fn with_scheme(mut self, kind: Option<SchemeKind>) -> Self {
        if let Some(k) = kind {
            self.scheme.kind = k;
        }
        self
    }

    pub fn material_of(&self, s: &SolidConfig) -> MaterialKind {
        s.material.unwrap_or(match self.scheme.kind {
            SchemeKind::Tscp3 => MaterialKind::FixedCorotated,
            _ => MaterialKind::NeoHookean,
        })
    }

    /// Seeds particles, loads meshes and assembles the simulation state.
    pub fn build<const D: usize>(&self) -> Result<System<D>> {
        if D != self.dimension {
            return Err(Error::Config(format!("scene is {}D, requested {D}D", self.dimension)));
        }
        let vec = |v: &[f64]| Vector::<D>::from_fn(|k, _| v[k]);
        let (fluid, fluid_params) = match &self.fluid {
            Some(f) => {
                let mut pos = Vec::new();
                let mut vel = Vec::new();
                for b in &f.boxes {
                    let v = b.velocity.as_deref().map_or(Vector::<D>::zeros(), vec);
                    for x in seed_box(&vec(&b.min), &vec(&b.max), f.spacing) {
                        pos.push(x);
                        vel.push(v);
                    }
                }
                let params = FluidParams { k_incompressibility: f.k_incompressibility, viscosity: f.viscosity };
                (FluidState::new(pos, vel, f.spacing, f.rest_density)?, params)
            }
            None => (
                FluidState::new(Vec::new(), Vec::new(), 1.0, 1000.0)?,
                FluidParams { k_incompressibility: 1.0, viscosity: 0.0 },
            ),
        };
        let mut solid = SolidMesh::<D>::default();
        for s in &self.solids {
            let material = MaterialModel::new(self.material_of(s), s.youngs_modulus, s.poisson_ratio)?;
            let mut mesh = match (&s.mesh, &s.grid) {
                (Some(path), _) => SolidMesh::load_ascii(&self.base_dir.join(path), material, s.density)?,
                (None, Some(b)) => {
                    let cells: [usize; D] = std::array::from_fn(|k| b.cells[k]);
                    SolidMesh::grid_box(vec(&b.min), vec(&b.max), cells, material, s.density)?
                }
                (None, None) => unreachable!("validated"),
            };
            if let Some(v) = &s.velocity {
                mesh.velocities.iter_mut().for_each(|x| *x = vec(v));
            }
            for r in &s.dirichlet {
                let (lo, hi) = (vec(&r.min), vec(&r.max));
                let v = r.velocity.as_deref().map_or(Vector::<D>::zeros(), vec);
                for a in 0..mesh.len() {
                    let x = mesh.positions[a];
                    if (0..D).all(|k| x[k] >= lo[k] && x[k] <= hi[k]) {
                        mesh.fixed[a] = true;
                        mesh.prescribed_velocity[a] = v;
                        mesh.velocities[a] = v;
                    }
                }
            }
            solid.append(mesh);
        }
        let (dhat, kappa) = match (self.contact.dhat, self.contact.kappa) {
            (Some(d), Some(k)) => (d, k),
            // Nothing can touch; any positive values will do.
            _ => (1.0, 1.0),
        };
        let weight = if fluid.is_empty() { 1.0 } else { BarrierParams::fluid_weight_for(D, fluid.rest_volume) };
        let barrier = BarrierParams::new(dhat, kappa, weight)?;
        let friction = FrictionParams { mu: self.contact.friction, eps_v: self.contact.eps_v };
        let gravity = self.gravity.as_deref().map_or(Vector::<D>::zeros(), vec);
        System::new(fluid, fluid_params, solid, barrier, friction, gravity, self.scheme)
    }
}

/// Particles at `lo + (i + ½) d` that lie inside `[lo, hi]`.
pub fn seed_box<const D: usize>(lo: &Vector<D>, hi: &Vector<D>, d: f64) -> Vec<Vector<D>> {
    let counts: [usize; D] = std::array::from_fn(|k| ((hi[k] - lo[k]) / d + 1e-9).floor().max(0.0) as usize);
    let total: usize = counts.iter().product();
    let mut out = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        let mut x = *lo;
        for k in 0..D {
            x[k] += (rem % counts[k]) as f64 * d + 0.5 * d;
            rem /= counts[k];
        }
        out.push(x);
    }
    out
}
