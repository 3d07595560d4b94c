//! SPH fluid state and the two quadratic fluid potentials.
//!
//! Within a step all SPH coefficients are frozen at `x^n`, so the
//! incompressibility and viscosity potentials are exactly quadratic in the
//! displacement `u = x - x^n`. Their Hessians are constant and PSD.

use crate::energy::{BlockTriplets, EnergyReport};
use crate::kernels::{KernelKind, KernelSpec};
use crate::neighbors::NeighborTable;
use crate::{Error, Matrix, Result, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct FluidState<const D: usize> {
    pub positions: Vec<Vector<D>>,
    pub velocities: Vec<Vector<D>>,
    /// Particle spacing `d`.
    pub spacing: f64,
    pub rest_density: f64,
    /// `V_0 = d^D`.
    pub rest_volume: f64,
    /// `m = ρ_0 V_0`, shared by all particles.
    pub mass: f64,
    /// `ħ = 2d`.
    pub support_radius: f64,
    /// Density `ρ^n` from the last reinitialization.
    pub density: Vec<f64>,
    /// Volume ratio `J^n = ρ_0 / ρ^n`.
    pub volume_ratio: Vec<f64>,
}

impl<const D: usize> FluidState<D> {
    pub fn new(positions: Vec<Vector<D>>, velocities: Vec<Vector<D>>, spacing: f64, rest_density: f64) -> Result<Self> {
        crate::assert_dim::<D>();
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::validation("d", "particle spacing must be positive"));
        }
        if !(rest_density > 0.0 && rest_density.is_finite()) {
            return Err(Error::validation("rho_0", "rest density must be positive"));
        }
        if positions.len() != velocities.len() {
            return Err(Error::validation("velocities", "length differs from positions"));
        }
        let n = positions.len();
        let rest_volume = spacing.powi(D as i32);
        Ok(Self {
            positions,
            velocities,
            spacing,
            rest_density,
            rest_volume,
            mass: rest_density * rest_volume,
            support_radius: 2.0 * spacing,
            density: vec![rest_density; n],
            volume_ratio: vec![1.0; n],
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn density_kernel(&self) -> KernelSpec {
        KernelSpec::new(KernelKind::CubicSpline, self.support_radius, D).expect("validated support radius")
    }

    pub fn gradient_kernel(&self) -> KernelSpec {
        KernelSpec::new(KernelKind::Spiky, self.support_radius, D).expect("validated support radius")
    }

    pub fn neighbor_table(&self) -> NeighborTable {
        NeighborTable::build(&self.positions, self.support_radius)
    }

    /// `ρ_i = Σ_j m W_ij` including `j = i`, and `J_i = ρ_0 / ρ_i`.
    pub fn reinit_density(&mut self, table: &NeighborTable) {
        let w = self.density_kernel();
        let self_term = self.mass * w.value_at(0.0);
        for i in 0..self.len() {
            let xi = self.positions[i];
            let rho = self_term + table.neighbors(i).iter().map(|&j| self.mass * w.eval(&(xi - self.positions[j]))).sum::<f64>();
            self.density[i] = rho;
            self.volume_ratio[i] = self.rest_density / rho;
        }
    }

    /// `∇·v_i = Σ_j (m/ρ_j)(v_j - v_i)·∇_i W_ij` with coefficients at the current positions.
    pub fn divergence(&self, v: &[Vector<D>], table: &NeighborTable) -> Vec<f64> {
        let kernel = self.gradient_kernel();
        (0..self.len())
            .map(|i| {
                table
                    .neighbors(i)
                    .iter()
                    .map(|&j| {
                        let c = kernel.grad(&(self.positions[i] - self.positions[j])) * (self.mass / self.density[j]);
                        c.dot(&(v[j] - v[i]))
                    })
                    .sum()
            })
            .collect()
    }

    /// Mean `|J^n - 1|` over all particles.
    pub fn mean_volume_error(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.volume_ratio.iter().map(|j| (j - 1.0).abs()).sum::<f64>() / self.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidParams {
    /// Incompressibility stiffness `k_I`.
    pub k_incompressibility: f64,
    /// Viscosity `ν`.
    pub viscosity: f64,
}

/// Step-constant data of both fluid potentials, frozen at `x^n`.
#[derive(Debug, Clone)]
pub struct FluidStep<const D: usize> {
    table: NeighborTable,
    x_n: Vec<Vector<D>>,
    j_n: Vec<f64>,
    /// `c_ij = (m/ρ_j) ∇_i W_ij`, aligned with the neighbor rows.
    div_coef: Vec<Vector<D>>,
    /// `Σ_j c_ij`.
    div_sum: Vec<Vector<D>>,
    /// Scale `s_ij` with `V_ij = s_ij x_ij x_ijᵀ`, aligned with the neighbor rows.
    visc_scale: Vec<f64>,
    k_i: f64,
    nu: f64,
    v0: f64,
    h: f64,
}

impl<const D: usize> FluidStep<D> {
    /// Freeze coefficients. `state` must have been reinitialized on `table`.
    pub fn new(state: &FluidState<D>, table: NeighborTable, params: &FluidParams, h: f64) -> Self {
        let kernel = state.gradient_kernel();
        let hbar2 = state.support_radius * state.support_radius;
        let mut div_coef = Vec::new();
        let mut visc_scale = Vec::new();
        let mut div_sum = vec![Vector::<D>::zeros(); state.len()];
        let m = state.mass;
        for i in 0..state.len() {
            for &j in table.neighbors(i) {
                let xij = state.positions[i] - state.positions[j];
                let r = xij.norm();
                let c = kernel.grad(&xij) * (m / state.density[j]);
                div_sum[i] += c;
                div_coef.push(c);
                let s = if r > 0.0 {
                    let dw = kernel.derivative_at(r);
                    4.0 * (D as f64 + 2.0) * m * m / (state.density[i] + state.density[j]) * (-dw / r) / (r * r + 0.01 * hbar2)
                } else {
                    0.0
                };
                visc_scale.push(s);
            }
        }
        Self {
            table,
            x_n: state.positions.clone(),
            j_n: state.volume_ratio.clone(),
            div_coef,
            div_sum,
            visc_scale,
            k_i: params.k_incompressibility,
            nu: params.viscosity,
            v0: state.rest_volume,
            h,
        }
    }

    pub fn len(&self) -> usize {
        self.x_n.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_n.is_empty()
    }

    pub fn table(&self) -> &NeighborTable {
        &self.table
    }

    pub fn timestep(&self) -> f64 {
        self.h
    }

    fn row(&self, i: usize) -> std::ops::Range<usize> {
        self.table.row(i)
    }

    /// `div_i(u) = Σ_j c_ij·(u_j - u_i)`.
    fn div(&self, u: &[Vector<D>]) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let r = self.row(i);
                self.table.neighbors(i).iter().zip(&self.div_coef[r]).map(|(&j, c)| c.dot(&(u[j] - u[i]))).sum()
            })
            .collect()
    }

    /// `g += Σ_i a_i ∂div_i/∂u`.
    fn scatter_div(&self, a: &[f64], g: &mut [Vector<D>]) {
        for i in 0..self.len() {
            if a[i] == 0.0 {
                continue;
            }
            let r = self.row(i);
            for (&j, c) in self.table.neighbors(i).iter().zip(&self.div_coef[r]) {
                g[j] += c * a[i];
            }
            g[i] -= self.div_sum[i] * a[i];
        }
    }

    fn displacement(&self, x: &[Vector<D>]) -> Vec<Vector<D>> {
        x.iter().zip(&self.x_n).map(|(a, b)| a - b).collect()
    }

    /// Volume ratios `J_i(x) = J^n_i (1 + div_i(x - x^n))`.
    pub fn volume_ratios(&self, x: &[Vector<D>]) -> Vec<f64> {
        let u = self.displacement(x);
        self.div(&u).iter().zip(&self.j_n).map(|(d, j)| j * (1.0 + d)).collect()
    }

    fn incompressibility_disp(&self, u: &[Vector<D>], g: &mut [Vector<D>]) -> f64 {
        let div = self.div(u);
        let mut value = 0.0;
        let a: Vec<f64> = div
            .iter()
            .zip(&self.j_n)
            .map(|(d, jn)| {
                let e = jn * (1.0 + d) - 1.0;
                value += 0.5 * self.k_i * self.v0 * e * e;
                self.k_i * self.v0 * e * jn
            })
            .collect();
        self.scatter_div(&a, g);
        value
    }

    fn viscosity_disp(&self, u: &[Vector<D>], g: &mut [Vector<D>]) -> f64 {
        if self.nu == 0.0 {
            return 0.0;
        }
        let c = self.nu / self.h;
        let mut value = 0.0;
        for i in 0..self.len() {
            let r = self.row(i);
            for (&j, &s) in self.table.neighbors(i).iter().zip(&self.visc_scale[r]) {
                let xij = self.x_n[i] - self.x_n[j];
                let proj = xij.dot(&(u[i] - u[j]));
                value += 0.25 * c * s * proj * proj;
                g[i] += xij * (c * s * proj);
            }
        }
        value
    }

    /// `P_I(x) = Σ_i (k_I/2) V_0 (J_i(x) - 1)²`; the Hessian is applied matrix-free.
    pub fn incompressibility(&self, x: &[Vector<D>]) -> EnergyReport<D> {
        let u = self.displacement(x);
        let mut out = EnergyReport::zeros(self.len());
        out.value = self.incompressibility_disp(&u, &mut out.gradient);
        out
    }

    /// `P_V(x) = (ν/4h) Σ_i Σ_j (u_i - u_j)ᵀ V_ij (u_i - u_j)`.
    pub fn viscosity(&self, x: &[Vector<D>]) -> EnergyReport<D> {
        let u = self.displacement(x);
        let mut out = EnergyReport::zeros(self.len());
        out.value = self.viscosity_disp(&u, &mut out.gradient);
        out
    }

    /// `P = P_I + P_V` evaluated on a displacement from `x^n`; adds the gradient into `g`.
    pub fn potential_disp(&self, u: &[Vector<D>], g: &mut [Vector<D>]) -> f64 {
        self.incompressibility_disp(u, g) + self.viscosity_disp(u, g)
    }

    /// `∇²P p` computed from the linear part of the gradient.
    pub fn hessian_apply(&self, p: &[Vector<D>], out: &mut [Vector<D>]) {
        let div = self.div(p);
        let a: Vec<f64> = div.iter().zip(&self.j_n).map(|(d, jn)| self.k_i * self.v0 * jn * jn * d).collect();
        self.scatter_div(&a, out);
        if self.nu != 0.0 {
            let c = self.nu / self.h;
            for i in 0..self.len() {
                let r = self.row(i);
                for (&j, &s) in self.table.neighbors(i).iter().zip(&self.visc_scale[r]) {
                    let xij = self.x_n[i] - self.x_n[j];
                    out[i] += xij * (c * s * xij.dot(&(p[i] - p[j])));
                }
            }
        }
    }

    /// Diagonal `D x D` blocks of `∇²P`, for block-Jacobi preconditioning.
    pub fn diagonal_blocks(&self) -> Vec<Matrix<D>> {
        let kv = self.k_i * self.v0;
        let mut out: Vec<Matrix<D>> = (0..self.len())
            .map(|k| self.div_sum[k] * self.div_sum[k].transpose() * (kv * self.j_n[k] * self.j_n[k]))
            .collect();
        let c = self.nu / self.h;
        for i in 0..self.len() {
            let r = self.row(i);
            let w = kv * self.j_n[i] * self.j_n[i];
            for ((&k, cik), &s) in self.table.neighbors(i).iter().zip(&self.div_coef[r.clone()]).zip(&self.visc_scale[r]) {
                out[k] += cik * cik.transpose() * w;
                if c != 0.0 {
                    let xik = self.x_n[i] - self.x_n[k];
                    out[i] += xik * xik.transpose() * (c * s);
                }
            }
        }
        out
    }

    /// Assembled `∇²P_I` and `∇²P_V` blocks (dense in the 2-ring; for tests and small systems).
    pub fn assembled_hessians(&self) -> (BlockTriplets<D>, BlockTriplets<D>) {
        let kv = self.k_i * self.v0;
        let mut hi = BlockTriplets::new();
        for i in 0..self.len() {
            let r = self.row(i);
            let w = kv * self.j_n[i] * self.j_n[i];
            let mut stencil: Vec<(usize, Vector<D>)> =
                self.table.neighbors(i).iter().copied().zip(self.div_coef[r].iter().copied()).collect();
            stencil.push((i, -self.div_sum[i]));
            for &(a, ca) in &stencil {
                for &(b, cb) in &stencil {
                    hi.push(a, b, ca * cb.transpose() * w);
                }
            }
        }
        let mut hv = BlockTriplets::new();
        let c = self.nu / self.h;
        if c != 0.0 {
            for i in 0..self.len() {
                let r = self.row(i);
                for (&j, &s) in self.table.neighbors(i).iter().zip(&self.visc_scale[r]) {
                    let xij = self.x_n[i] - self.x_n[j];
                    let v = xij * xij.transpose() * (c * s);
                    hv.push(i, i, v);
                    hv.push(i, j, -v);
                }
            }
        }
        (hi, hv)
    }

    /// `V_ij` for a neighbor pair, or zero if `j` is not a neighbor of `i`.
    pub fn viscosity_weight(&self, i: usize, j: usize) -> Matrix<D> {
        let r = self.row(i);
        match self.table.neighbors(i).binary_search(&j) {
            Ok(k) => {
                let xij = self.x_n[i] - self.x_n[j];
                xij * xij.transpose() * self.visc_scale[r][k]
            }
            Err(_) => Matrix::<D>::zeros(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::eigen_range;
    use nalgebra::{DMatrix, DVector, Vector2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blob(n: usize, seed: u64) -> FluidState<2> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 0.1;
        let side = (n as f64).sqrt().ceil() as usize;
        let x: Vec<Vector2<f64>> = (0..n)
            .map(|k| {
                Vector2::new((k % side) as f64 * d, (k / side) as f64 * d)
                    + Vector2::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)) * d
            })
            .collect();
        let v = vec![Vector2::zeros(); n];
        let mut s = FluidState::new(x, v, d, 1000.0).unwrap();
        let t = s.neighbor_table();
        s.reinit_density(&t);
        s
    }

    fn step(s: &FluidState<2>, nu: f64) -> FluidStep<2> {
        FluidStep::new(s, s.neighbor_table(), &FluidParams { k_incompressibility: 1e4, viscosity: nu }, 0.01)
    }

    fn perturbed(s: &FluidState<2>, seed: u64, scale: f64) -> Vec<Vector2<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        s.positions
            .iter()
            .map(|x| x + Vector2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale)
            .collect()
    }

    #[test]
    fn isolated_particle_density() {
        let mut s = FluidState::new(vec![Vector2::new(0.3, 0.1)], vec![Vector2::zeros()], 0.02, 1000.0).unwrap();
        let t = s.neighbor_table();
        s.reinit_density(&t);
        let w0 = s.density_kernel().value_at(0.0);
        assert_eq!(s.density[0], s.mass * w0);
        let before = s.volume_ratio[0];
        s.mass *= 2.0;
        s.reinit_density(&t);
        assert!((s.volume_ratio[0] - before / 2.0).abs() < 1e-15);
    }

    #[test]
    fn interior_lattice_volume_ratio() {
        let d = 0.01;
        let x: Vec<Vector2<f64>> = (0..21 * 21).map(|k| Vector2::new((k % 21) as f64 * d, (k / 21) as f64 * d)).collect();
        let mut s = FluidState::new(x, vec![Vector2::zeros(); 441], d, 1000.0).unwrap();
        let t = s.neighbor_table();
        s.reinit_density(&t);
        let centre = 10 * 21 + 10;
        assert!((0.97..=1.03).contains(&s.volume_ratio[centre]));
    }

    // Dense divergence operator built from all-pairs loops, independent of the
    // neighbor table and of `FluidStep`.
    fn dense_divergence(s: &FluidState<2>) -> DMatrix<f64> {
        let n = s.len();
        let hbar = s.support_radius;
        let sigma = 10.0 / (std::f64::consts::PI * hbar * hbar);
        let mut dm = DMatrix::zeros(n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                let r = s.positions[i] - s.positions[j];
                let len = r.norm();
                if i == j || len >= hbar {
                    continue;
                }
                let q = 1.0 - len / hbar;
                let grad = r * (-3.0 * sigma * q * q / hbar / len) * (s.mass / s.density[j]);
                for c in 0..2 {
                    dm[(i, 2 * j + c)] += grad[c];
                    dm[(i, 2 * i + c)] -= grad[c];
                }
            }
        }
        dm
    }

    #[test]
    fn divergence_matches_dense_oracle() {
        let s = blob(30, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v: Vec<Vector2<f64>> = (0..30).map(|_| Vector2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let got = s.divergence(&v, &s.neighbor_table());
        let want = dense_divergence(&s) * crate::energy::flatten(&v);
        for i in 0..30 {
            assert!((got[i] - want[i]).abs() <= 1e-12 * want.amax());
        }
        let uniform = vec![Vector2::new(0.3, -2.0); 30];
        assert!(s.divergence(&uniform, &s.neighbor_table()).iter().all(|d| d.abs() < 1e-9));
    }

    #[test]
    fn incompressibility_matches_dense_oracle() {
        let s = blob(20, 3);
        let st = step(&s, 0.0);
        let x = perturbed(&s, 4, 0.01);
        let r = st.incompressibility(&x);
        let dm = dense_divergence(&s);
        let u = crate::energy::flatten(&x) - crate::energy::flatten(&s.positions);
        let div = &dm * &u;
        let kv = 1e4 * s.rest_volume;
        let jn = DVector::from_vec(s.volume_ratio.clone());
        let e = jn.component_mul(&div.add_scalar(1.0)).add_scalar(-1.0);
        let value = 0.5 * kv * e.norm_squared();
        let grad = dm.transpose() * e.component_mul(&jn) * kv;
        assert!((r.value - value).abs() <= 1e-12 * value);
        assert!((r.flat_gradient() - &grad).norm() <= 1e-12 * grad.norm());
        let hess = dm.transpose() * DMatrix::from_diagonal(&jn.component_mul(&jn)) * &dm * kv;
        let (hi, _) = st.assembled_hessians();
        assert!((hi.to_dense(20) - &hess).norm() <= 1e-12 * hess.norm());
    }

    #[test]
    fn rest_lattice_and_translation() {
        let s = blob(25, 5);
        let mut st = step(&s, 1.0);
        st.j_n.iter_mut().for_each(|j| *j = 1.0);
        let r = st.incompressibility(&s.positions);
        assert_eq!(r.value, 0.0);
        assert!(r.gradient.iter().all(|g| g.norm() == 0.0));
        let st = step(&s, 1.0);
        let base = st.incompressibility(&s.positions).value;
        let shifted: Vec<_> = s.positions.iter().map(|x| x + Vector2::new(0.07, -0.2)).collect();
        assert!((st.incompressibility(&shifted).value - base).abs() <= 1e-12 * base.max(1e-30));
        // Compare against the response to a non-rigid displacement of similar size.
        let reference = st.viscosity(&perturbed(&s, 12, 0.07));
        let gref = reference.gradient.iter().map(|g| g.norm()).fold(0.0, f64::max);
        let v = st.viscosity(&shifted);
        assert!(v.value.abs() <= 1e-12 * reference.value);
        assert!(v.gradient.iter().all(|g| g.norm() <= 1e-10 * gref));
    }

    #[test]
    fn zero_viscosity_is_zero() {
        let s = blob(20, 6);
        let st = step(&s, 0.0);
        let r = st.viscosity(&perturbed(&s, 7, 0.02));
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn viscosity_gradient_matches_fd_and_pairs_are_opposite() {
        let s = blob(20, 8);
        let st = step(&s, 0.7);
        let x = perturbed(&s, 9, 0.02);
        let r = st.viscosity(&x);
        let g = r.flat_gradient();
        let eps = 1e-6;
        for k in 0..40 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k / 2][k % 2] += eps;
            xm[k / 2][k % 2] -= eps;
            let fd = (st.viscosity(&xp).value - st.viscosity(&xm).value) / (2.0 * eps);
            assert!((fd - g[k]).abs() <= 1e-6 * g.amax());
        }
        for i in 0..20 {
            for j in 0..20 {
                assert_eq!(st.viscosity_weight(i, j), st.viscosity_weight(j, i));
            }
        }
    }

    #[test]
    fn hessian_apply_matches_assembly_and_diagonal() {
        let s = blob(25, 10);
        let st = step(&s, 0.5);
        let (hi, hv) = st.assembled_hessians();
        let mut h = hi.to_dense(25);
        h += hv.to_dense(25);
        let p = perturbed(&s, 11, 1.0).iter().zip(&s.positions).map(|(a, b)| a - b).collect::<Vec<_>>();
        let mut out = vec![Vector2::zeros(); 25];
        st.hessian_apply(&p, &mut out);
        let want = &h * crate::energy::flatten(&p);
        assert!((crate::energy::flatten(&out) - &want).norm() <= 1e-12 * want.norm());
        for (k, b) in st.diagonal_blocks().iter().enumerate() {
            let dense = h.view((2 * k, 2 * k), (2, 2));
            assert!((b - dense).norm() <= 1e-12 * h.amax());
        }
        let (lo, hi_ev) = eigen_range(&h);
        assert!(lo >= -1e-8 * hi_ev);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn total_force_vanishes(seed in any::<u64>(), nu in 0.0f64..2.0) {
            let s = blob(30, seed);
            let st = step(&s, nu);
            let x = perturbed(&s, seed ^ 1, 0.02);
            for r in [st.incompressibility(&x), st.viscosity(&x)] {
                let total: Vector2<f64> = r.gradient.iter().sum();
                let max = r.gradient.iter().map(|g| g.norm()).fold(0.0, f64::max);
                prop_assert!(total.norm() <= 1e-9 * max.max(1e-300));
            }
        }

        #[test]
        fn gradient_is_affine_along_lines(seed in any::<u64>(), t in 0.1f64..3.0) {
            let s = blob(20, seed);
            let st = step(&s, 0.3);
            let x0 = perturbed(&s, seed ^ 2, 0.02);
            let p = perturbed(&s, seed ^ 3, 0.02).iter().zip(&s.positions).map(|(a, b)| a - b).collect::<Vec<_>>();
            let g = |tt: f64| {
                let x: Vec<_> = x0.iter().zip(&p).map(|(a, b)| a + b * tt).collect();
                let mut out = st.incompressibility(&x).flat_gradient();
                out += st.viscosity(&x).flat_gradient();
                out
            };
            let (g0, g1, gt) = (g(0.0), g(1.0), g(t));
            let predicted = &g0 + (&g1 - &g0) * t;
            prop_assert!((gt - &predicted).norm() <= 1e-10 * predicted.norm().max(g0.norm()));
        }

        #[test]
        fn assembled_hessians_are_psd(seed in any::<u64>()) {
            let s = blob(30, seed);
            let st = step(&s, 1.0);
            let (hi, hv) = st.assembled_hessians();
            for h in [hi.to_dense(30), hv.to_dense(30)] {
                let (lo, hi_ev) = eigen_range(&h);
                prop_assert!(lo >= -1e-8 * hi_ev);
            }
        }
    }
}
