//! Implicit time integration of the coupled system: the monolithic scheme, the
//! baseline operator split, and the two- and three-phase splits with contact
//! proxies.

mod context;
mod newton;
mod objective;
mod schemes;

use serde::{Deserialize, Serialize};

use crate::contact::{BarrierParams, ContactSet, FrictionParams};
use crate::fluid::{FluidParams, FluidState};
use crate::solid::{MaterialKind, SolidMesh};
use crate::{Error, Result, Vector};
use context::StepCtx;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum SchemeKind {
    /// One projected-Newton solve of the full incremental potential.
    #[serde(rename = "joint")]
    Joint,
    /// Fluid phase, then solids plus all contact.
    #[serde(rename = "ts")]
    BaselineTs,
    /// Fluid phase with half the solid–fluid barrier as a quadratic proxy.
    #[default]
    #[serde(rename = "tscp2")]
    Tscp2,
    /// Fluid, elasticity and contact in three phases.
    #[serde(rename = "tscp3")]
    Tscp3,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Joint => "joint",
            SchemeKind::BaselineTs => "ts",
            SchemeKind::Tscp2 => "tscp2",
            SchemeKind::Tscp3 => "tscp3",
        }
    }
}

impl std::str::FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(SchemeKind::Joint),
            "ts" => Ok(SchemeKind::BaselineTs),
            "tscp2" => Ok(SchemeKind::Tscp2),
            "tscp3" => Ok(SchemeKind::Tscp3),
            _ => Err(Error::validation("scheme", "expected joint, ts, tscp2 or tscp3")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    /// Newton stops once `‖p‖_∞ / h` falls below this [m/s].
    pub newton_tol: f64,
    /// Relative residual of the fluid-phase PCG solve.
    pub fluid_linear_tol: f64,
    /// Relative residual of PCG solves inside Newton (joint scheme).
    pub linear_tol: f64,
    pub max_newton: usize,
    pub pcg_max_iter: usize,
    pub dt_max: f64,
    pub cfl: f64,
    pub v_floor: f64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            kind: SchemeKind::Tscp2,
            newton_tol: 1e-4,
            fluid_linear_tol: 1e-4,
            linear_tol: 1e-8,
            max_newton: 500,
            pcg_max_iter: 20_000,
            dt_max: 1e-2,
            cfl: 0.4,
            v_floor: 1e-6,
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("newton_tol", self.newton_tol),
            ("fluid_linear_tol", self.fluid_linear_tol),
            ("linear_tol", self.linear_tol),
            ("dt_max", self.dt_max),
            ("cfl", self.cfl),
            ("v_floor", self.v_floor),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(field, "must be positive"));
            }
        }
        if self.max_newton == 0 {
            return Err(Error::validation("max_newton", "must be positive"));
        }
        if self.pcg_max_iter == 0 {
            return Err(Error::validation("pcg_max_iter", "must be positive"));
        }
        Ok(())
    }
}

/// Counters for one step (or, summed, for one frame).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepStats {
    pub h: f64,
    /// Newton iterations over all phases; a linear fluid phase counts as one.
    pub newton_iterations: usize,
    pub cg_iterations: usize,
    pub line_search_failures: usize,
    /// Smallest pair distance seen at any accepted iterate, if any pair was near.
    pub min_distance: Option<f64>,
}

impl StepStats {
    pub fn accumulate(&mut self, other: &StepStats) {
        self.h += other.h;
        self.newton_iterations += other.newton_iterations;
        self.cg_iterations += other.cg_iterations;
        self.line_search_failures += other.line_search_failures;
        self.min_distance = min_opt(self.min_distance, other.min_distance);
    }

    pub(crate) fn observe_distance(&mut self, d: Option<f64>) {
        self.min_distance = min_opt(self.min_distance, d);
    }
}

fn min_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Fluid particles, solid mesh and every parameter needed to step them.
#[derive(Debug, Clone)]
pub struct System<const D: usize> {
    pub fluid: FluidState<D>,
    pub fluid_params: FluidParams,
    pub solid: SolidMesh<D>,
    pub barrier: BarrierParams,
    pub friction: FrictionParams,
    pub gravity: Vector<D>,
    pub scheme: SchemeConfig,
    pub time: f64,
}

impl<const D: usize> System<D> {
    pub fn new(
        fluid: FluidState<D>,
        fluid_params: FluidParams,
        solid: SolidMesh<D>,
        barrier: BarrierParams,
        friction: FrictionParams,
        gravity: Vector<D>,
        scheme: SchemeConfig,
    ) -> Result<Self> {
        crate::assert_dim::<D>();
        let sys = Self { fluid, fluid_params, solid, barrier, friction, gravity, scheme, time: 0.0 };
        sys.validate()?;
        Ok(sys)
    }

    pub fn validate(&self) -> Result<()> {
        self.scheme.validate()?;
        if self.scheme.kind == SchemeKind::Tscp3 && self.solid.materials.iter().any(|m| m.kind != MaterialKind::FixedCorotated) {
            return Err(Error::Config(
                "the three-phase scheme requires the fixed corotated material for every solid".into(),
            ));
        }
        if !(self.fluid_params.k_incompressibility > 0.0) {
            return Err(Error::validation("k_I", "must be positive"));
        }
        if !(self.fluid_params.viscosity >= 0.0) {
            return Err(Error::validation("viscosity", "must be non-negative"));
        }
        if !(self.friction.mu >= 0.0) {
            return Err(Error::validation("mu", "must be non-negative"));
        }
        if self.friction.mu > 0.0 && !(self.friction.eps_v > 0.0) {
            return Err(Error::validation("eps_v", "must be positive"));
        }
        Ok(())
    }

    pub fn n_fluid(&self) -> usize {
        self.fluid.len()
    }

    pub fn n_solid(&self) -> usize {
        self.solid.len()
    }

    /// CFL-limited step for the current velocities.
    pub fn adaptive_dt(&self) -> f64 {
        let vmax = self
            .fluid
            .velocities
            .iter()
            .chain(&self.solid.velocities)
            .map(|v| v.norm())
            .fold(0.0, f64::max);
        if self.fluid.is_empty() {
            return self.scheme.dt_max;
        }
        adaptive_dt(vmax, self.fluid.spacing, &self.scheme)
    }

    /// Advance by `h` with the configured scheme.
    pub fn step(&mut self, h: f64) -> Result<StepStats> {
        self.step_with(self.scheme.kind, h)
    }

    /// Advance by `h` with an explicitly chosen scheme.
    pub fn step_with(&mut self, kind: SchemeKind, h: f64) -> Result<StepStats> {
        if kind == SchemeKind::Tscp3 {
            let mut check = self.scheme;
            check.kind = kind;
            Self { scheme: check, ..self.clone() }.validate()?;
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::validation("h", "must be positive"));
        }
        let (x, stats) = {
            let mut ctx = StepCtx::new(self, h)?;
            ctx.start()?;
            let mut stats = StepStats { h, ..StepStats::default() };
            let x = schemes::run(&ctx, kind, &mut stats)?;
            (x, stats)
        };
        let nf = self.n_fluid();
        let inv_h = 1.0 / h;
        for (i, xi) in x[..nf].iter().enumerate() {
            self.fluid.velocities[i] = (xi - self.fluid.positions[i]) * inv_h;
            self.fluid.positions[i] = *xi;
        }
        for (a, xa) in x[nf..].iter().enumerate() {
            self.solid.velocities[a] = (xa - self.solid.positions[a]) * inv_h;
            self.solid.positions[a] = *xa;
        }
        self.time += h;
        Ok(stats)
    }

    /// `Σ m v` over particles and nodes.
    pub fn total_momentum(&self) -> Vector<D> {
        let mut p = Vector::<D>::zeros();
        for v in &self.fluid.velocities {
            p += v * self.fluid.mass;
        }
        for (v, m) in self.solid.velocities.iter().zip(&self.solid.masses) {
            p += v * *m;
        }
        p
    }

    /// Mean `|J - 1|` of the current particle configuration.
    pub fn mean_volume_error(&self) -> f64 {
        if self.fluid.is_empty() {
            return 0.0;
        }
        let mut state = self.fluid.clone();
        let table = state.neighbor_table();
        state.reinit_density(&table);
        state.mean_volume_error()
    }

    /// Stacked `[fluid; solid]` positions, the indexing used by contact pairs.
    pub fn positions(&self) -> Vec<Vector<D>> {
        self.fluid.positions.iter().chain(&self.solid.positions).copied().collect()
    }

    /// Primitive pairs closer than `bound` in the current configuration.
    pub fn contact_pairs(&self, bound: f64) -> Result<ContactSet<D>> {
        let ctx = StepCtx::new(self, self.scheme.dt_max)?;
        Ok(ctx.pairs(&ctx.x_n, bound))
    }

    /// Smallest distance over primitive pairs closer than `d̂`.
    pub fn min_pair_distance(&self) -> Result<Option<f64>> {
        let ctx = StepCtx::new(self, self.scheme.dt_max)?;
        let pairs = ctx.pairs(&ctx.x_n, self.barrier.dhat);
        Ok(ctx.min_distance(&ctx.x_n, &pairs))
    }

    /// Rejects states where any pair is closer than `0.1 d̂`.
    pub fn check_initial_separation(&self) -> Result<()> {
        let ctx = StepCtx::new(self, self.scheme.dt_max)?;
        let x = &ctx.x_n;
        let pairs = ctx.pairs(x, self.barrier.dhat);
        let limit = 0.1 * self.barrier.dhat;
        let nf = self.n_fluid();
        let name = |i: usize| if i < nf { format!("particle {i}") } else { format!("node {}", i - nf) };
        let mut bad = Vec::new();
        for pair in pairs.solid_fluid.iter().chain(&pairs.solid_solid) {
            let d = crate::contact::pair_distance(x, pair);
            if d < limit {
                let nodes: Vec<String> = pair.stencil(D).iter().map(|&i| name(i)).collect();
                bad.push(format!("{} at distance {d:.3e}", nodes.join(" / ")));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InitialPenetration { pairs: bad })
        }
    }
}

/// `min(dt_max, cfl · spacing / max(v_max, v_floor))`.
pub fn adaptive_dt(max_speed: f64, spacing: f64, cfg: &SchemeConfig) -> f64 {
    cfg.dt_max.min(cfg.cfl * spacing / max_speed.max(cfg.v_floor))
}
