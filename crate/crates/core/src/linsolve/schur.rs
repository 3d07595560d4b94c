//! Direct solve of the coupled solid–fluid system by eliminating the
//! block-diagonal fluid block.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};

use super::block::BlockCsr;
use crate::energy::BlockTriplets;
use crate::small::inverse;
use crate::{Error, Matrix, Result, Vector};

/// `[[H_f, G], [Gᵀ, H_s]]` with `H_f` block-diagonal over fluid particles.
#[derive(Debug, Clone)]
pub struct BlockSystem<const D: usize> {
    pub hf: Vec<Matrix<D>>,
    /// `G` blocks as `(fluid, solid, block)`, sorted and duplicate-free.
    pub coupling: Vec<(usize, usize, Matrix<D>)>,
    pub hs: BlockCsr<D>,
    /// Dirichlet solid nodes, eliminated from the solve (their update is zero).
    pub fixed_s: Vec<bool>,
}

impl<const D: usize> BlockSystem<D> {
    /// Split a global Hessian over `[fluid..; solid..]` nodes. Panics if the
    /// fluid–fluid part is not block-diagonal.
    pub fn from_global(nf: usize, ns: usize, triplets: &BlockTriplets<D>, fixed_s: Vec<bool>) -> Self {
        let mut hf = vec![Matrix::<D>::zeros(); nf];
        let mut g: BTreeMap<(usize, usize), Matrix<D>> = BTreeMap::new();
        let mut hs = BlockTriplets::new();
        for &(i, j, b) in &triplets.entries {
            match (i < nf, j < nf) {
                (true, true) => {
                    assert_eq!(i, j, "fluid block must be block-diagonal");
                    hf[i] += b;
                }
                (true, false) => *g.entry((i, j - nf)).or_insert_with(Matrix::<D>::zeros) += b,
                // The transposed coupling entries carry the same information.
                (false, true) => {}
                (false, false) => hs.push(i - nf, j - nf, b),
            }
        }
        assert_eq!(fixed_s.len(), ns);
        Self {
            hf,
            coupling: g.into_iter().map(|((i, a), b)| (i, a, b)).collect(),
            hs: BlockCsr::from_triplets(ns, &hs),
            fixed_s,
        }
    }

    pub fn fluid_len(&self) -> usize {
        self.hf.len()
    }

    pub fn solid_len(&self) -> usize {
        self.hs.block_rows()
    }

    /// `Gᵀ H_f⁻¹ G` keyed by solid node pair; `S = H_s - (this)`.
    pub fn schur_correction(&self) -> Result<BTreeMap<(usize, usize), Matrix<D>>> {
        let hf_inv = self.fluid_inverses("schur")?;
        let mut out = BTreeMap::new();
        for row in self.coupling_rows() {
            let i = row[0].0;
            for &(_, a, ga) in row {
                for &(_, b, gb) in row {
                    *out.entry((a, b)).or_insert_with(Matrix::<D>::zeros) += ga.transpose() * hf_inv[i] * gb;
                }
            }
        }
        Ok(out)
    }

    fn coupling_rows(&self) -> impl Iterator<Item = &[(usize, usize, Matrix<D>)]> {
        self.coupling.chunk_by(|a, b| a.0 == b.0)
    }

    fn fluid_inverses(&self, phase: &'static str) -> Result<Vec<Matrix<D>>> {
        self.hf.iter().map(|b| inverse(b).ok_or(Error::Factorization { phase })).collect()
    }

    /// `[H_f G; Gᵀ H_s] [p_f; p_s]` with fixed solid rows and columns dropped.
    pub fn apply(&self, pf: &[Vector<D>], ps: &[Vector<D>]) -> (Vec<Vector<D>>, Vec<Vector<D>>) {
        let ps_free: Vec<Vector<D>> =
            ps.iter().zip(&self.fixed_s).map(|(v, &f)| if f { Vector::<D>::zeros() } else { *v }).collect();
        let mut rf: Vec<Vector<D>> = self.hf.iter().zip(pf).map(|(h, p)| h * p).collect();
        let mut rs = self.hs.mul(&ps_free);
        for &(i, a, g) in &self.coupling {
            rf[i] += g * ps_free[a];
            rs[a] += g.transpose() * pf[i];
        }
        for (r, &f) in rs.iter_mut().zip(&self.fixed_s) {
            if f {
                *r = Vector::<D>::zeros();
            }
        }
        (rf, rs)
    }

    /// Dense matrix of the full system with fixed solid rows/columns replaced by identity.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let nf = self.fluid_len();
        let n = nf + self.solid_len();
        let mut m = DMatrix::zeros(D * n, D * n);
        for (i, b) in self.hf.iter().enumerate() {
            m.view_mut((D * i, D * i), (D, D)).copy_from(b);
        }
        for &(i, a, g) in &self.coupling {
            if self.fixed_s[a] {
                continue;
            }
            m.view_mut((D * i, D * (nf + a)), (D, D)).copy_from(&g);
            m.view_mut((D * (nf + a), D * i), (D, D)).copy_from(&g.transpose());
        }
        for a in 0..self.solid_len() {
            if self.fixed_s[a] {
                m.view_mut((D * (nf + a), D * (nf + a)), (D, D)).copy_from(&Matrix::<D>::identity());
                continue;
            }
            for (b, blk) in self.hs.row(a) {
                if !self.fixed_s[b] {
                    m.view_mut((D * (nf + a), D * (nf + b)), (D, D)).copy_from(blk);
                }
            }
        }
        m
    }
}

/// Solution of a block system together with the achieved relative residual.
#[derive(Debug, Clone)]
pub struct SchurOutcome<const D: usize> {
    pub fluid: Vec<Vector<D>>,
    pub solid: Vec<Vector<D>>,
    pub relative_residual: f64,
}

struct Factored<const D: usize> {
    chol: Option<CscCholesky<f64>>,
    hf_inv: Vec<Matrix<D>>,
    free: Vec<Option<usize>>,
}

impl<const D: usize> Factored<D> {
    fn solve(&self, sys: &BlockSystem<D>, rf: &[Vector<D>], rs: &[Vector<D>]) -> (Vec<Vector<D>>, Vec<Vector<D>>) {
        let nfree = self.free.iter().flatten().count();
        let mut b = DMatrix::zeros(D * nfree, 1);
        for (a, k) in self.free.iter().enumerate() {
            if let Some(k) = k {
                for c in 0..D {
                    b[D * k + c] = rs[a][c];
                }
            }
        }
        let hinv_rf: Vec<Vector<D>> = self.hf_inv.iter().zip(rf).map(|(m, r)| m * r).collect();
        for &(i, a, g) in &sys.coupling {
            if let Some(k) = self.free[a] {
                let v = g.transpose() * hinv_rf[i];
                for c in 0..D {
                    b[D * k + c] -= v[c];
                }
            }
        }
        let x = match &self.chol {
            Some(chol) => chol.solve(&b),
            None => b,
        };
        let ps: Vec<Vector<D>> = self
            .free
            .iter()
            .map(|k| k.map_or_else(Vector::<D>::zeros, |k| Vector::<D>::from_fn(|c, _| x[D * k + c])))
            .collect();
        let mut tmp = rf.to_vec();
        for &(i, a, g) in &sys.coupling {
            tmp[i] -= g * ps[a];
        }
        let pf = self.hf_inv.iter().zip(&tmp).map(|(m, r)| m * r).collect();
        (pf, ps)
    }
}

fn norm<const D: usize>(a: &[Vector<D>], b: &[Vector<D>]) -> f64 {
    a.iter().chain(b).map(|v| v.norm_squared()).sum::<f64>().sqrt()
}

/// Solve `[H_f G; Gᵀ H_s] [p_f; p_s] = [r_f; r_s]` by forming and factorizing
/// `S = H_s - Gᵀ H_f⁻¹ G`, followed by at most three refinement sweeps against
/// the full system. Fixed solid nodes get `p_s = 0`.
pub fn schur_solve<const D: usize>(
    sys: &BlockSystem<D>,
    rf: &[Vector<D>],
    rs: &[Vector<D>],
    phase: &'static str,
) -> Result<SchurOutcome<D>> {
    let hf_inv = sys.fluid_inverses(phase)?;
    let mut free = vec![None; sys.solid_len()];
    let mut nfree = 0;
    for (a, f) in free.iter_mut().enumerate() {
        if !sys.fixed_s[a] {
            *f = Some(nfree);
            nfree += 1;
        }
    }
    let chol = if nfree > 0 {
        let mut coo = CooMatrix::new(D * nfree, D * nfree);
        let mut push_block = |ka: usize, kb: usize, m: &Matrix<D>, sign: f64| {
            for r in 0..D {
                for c in 0..D {
                    if m[(r, c)] != 0.0 {
                        coo.push(D * ka + r, D * kb + c, sign * m[(r, c)]);
                    }
                }
            }
        };
        for a in 0..sys.solid_len() {
            let Some(ka) = free[a] else { continue };
            for (b, blk) in sys.hs.row(a) {
                if let Some(kb) = free[b] {
                    push_block(ka, kb, blk, 1.0);
                }
            }
        }
        for row in sys.coupling_rows() {
            let i = row[0].0;
            for &(_, a, ga) in row {
                let Some(ka) = free[a] else { continue };
                let left = ga.transpose() * hf_inv[i];
                for &(_, b, gb) in row {
                    if let Some(kb) = free[b] {
                        push_block(ka, kb, &(left * gb), -1.0);
                    }
                }
            }
        }
        let csc = CscMatrix::from(&coo);
        Some(CscCholesky::factor(&csc).map_err(|_| Error::Factorization { phase })?)
    } else {
        None
    };
    let fac = Factored { chol, hf_inv, free };
    let mask = |v: &[Vector<D>]| -> Vec<Vector<D>> {
        v.iter().zip(&sys.fixed_s).map(|(x, &f)| if f { Vector::<D>::zeros() } else { *x }).collect()
    };
    let rs = mask(rs);
    let bnorm = norm(rf, &rs);
    let (mut pf, mut ps) = fac.solve(sys, rf, &rs);
    let mut rel = 0.0;
    if bnorm > 0.0 {
        for sweep in 0..=3 {
            let (af, as_) = sys.apply(&pf, &ps);
            let ef: Vec<Vector<D>> = rf.iter().zip(&af).map(|(b, a)| b - a).collect();
            let es: Vec<Vector<D>> = rs.iter().zip(&as_).map(|(b, a)| b - a).collect();
            rel = norm(&ef, &es) / bnorm;
            if rel <= 1e-13 || sweep == 3 || !rel.is_finite() {
                break;
            }
            let (cf, cs) = fac.solve(sys, &ef, &es);
            pf.iter_mut().zip(&cf).for_each(|(p, c)| *p += c);
            ps.iter_mut().zip(&cs).for_each(|(p, c)| *p += c);
        }
    }
    if !rel.is_finite() {
        return Err(Error::Factorization { phase });
    }
    Ok(SchurOutcome { fluid: pf, solid: ps, relative_residual: rel })
}
