//! Phase objectives `½‖x - x̃‖²_M + h² (selected potentials)`.

use super::context::{Proxy, StepCtx};
use crate::contact::{friction_potential, solid_fluid_barrier, solid_solid_contact, ContactSet};
use crate::energy::{BlockTriplets, EnergyReport};
use crate::solid::elastic_potential;
use crate::{Result, Vector};

/// Which potentials a phase carries, with their weights.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Terms {
    pub fluid: bool,
    pub elastic: bool,
    /// Weight of the solid–fluid barrier plus friction.
    pub sf: f64,
    /// Weight of the solid–solid barrier.
    pub ss: f64,
}

pub(crate) struct Objective<'a, const D: usize> {
    pub ctx: &'a StepCtx<'a, D>,
    pub target: Vec<Vector<D>>,
    pub terms: Terms,
    pub proxy: Option<&'a Proxy<D>>,
}

pub(crate) struct Eval<const D: usize> {
    pub value: f64,
    pub grad: Vec<Vector<D>>,
    /// `h²` times the assembled potential Hessians; excludes `M` and the fluid part.
    pub hess: BlockTriplets<D>,
}

impl<const D: usize> Objective<'_, D> {
    pub fn has_barrier(&self) -> bool {
        self.terms.sf != 0.0 || self.terms.ss != 0.0
    }

    fn add(out: &mut Eval<D>, r: EnergyReport<D>, scale: f64, offset: usize) {
        out.value += scale * r.value;
        for (g, rg) in out.grad[offset..].iter_mut().zip(&r.gradient) {
            *g += rg * scale;
        }
        if offset == 0 {
            out.hess.extend(&r.hessian, scale);
        } else {
            out.hess.extend(&r.hessian.shifted(offset), scale);
        }
    }

    pub fn eval(&self, x: &[Vector<D>], pairs: &ContactSet<D>, with_hessian: bool) -> Result<Eval<D>> {
        let ctx = self.ctx;
        let h2 = ctx.h * ctx.h;
        let nf = ctx.nf;
        let mut out = Eval { value: 0.0, grad: Vec::with_capacity(x.len()), hess: BlockTriplets::new() };
        for i in 0..x.len() {
            let d = x[i] - self.target[i];
            out.value += 0.5 * ctx.mass[i] * d.norm_squared();
            out.grad.push(d * ctx.mass[i]);
        }
        if self.terms.fluid {
            if let Some(fs) = &ctx.fluid {
                let u: Vec<Vector<D>> = x[..nf].iter().zip(&ctx.x_n).map(|(a, b)| a - b).collect();
                let mut g = vec![Vector::<D>::zeros(); nf];
                out.value += h2 * fs.potential_disp(&u, &mut g);
                for (o, gi) in out.grad.iter_mut().zip(&g) {
                    *o += gi * h2;
                }
            }
        }
        if self.terms.elastic && !ctx.solid.is_empty() {
            let r = elastic_potential(ctx.solid, &x[nf..], with_hessian, true)?;
            Self::add(&mut out, r, h2, nf);
        }
        if self.terms.sf != 0.0 {
            let r = solid_fluid_barrier(x, pairs, &ctx.barrier, with_hessian)?;
            Self::add(&mut out, r, h2 * self.terms.sf, 0);
            if !ctx.friction.is_empty() {
                let r = friction_potential(x, &ctx.x_n, &ctx.friction, &ctx.friction_params, ctx.h, with_hessian);
                Self::add(&mut out, r, h2 * self.terms.sf, 0);
            }
        }
        if self.terms.ss != 0.0 {
            let r = solid_solid_contact(x, pairs, &ctx.barrier, with_hessian)?;
            Self::add(&mut out, r, h2 * self.terms.ss, 0);
        }
        if let Some(p) = self.proxy {
            out.value += p.eval(x, &mut out.grad, h2);
            if with_hessian {
                out.hess.extend(&p.quad.hess, h2);
            }
        }
        Ok(out)
    }
}
