//! Total elastic potential `Ψ_s(x) = Σ_e V_e ψ(F_e)`.

use nalgebra::{DMatrix, DVector};

use super::mesh::SolidMesh;
use crate::energy::{project_psd, EnergyReport};
use crate::{Error, Matrix, Result, Vector};

/// `∂vec(F)/∂x_e` for one element: a `D² x D(D+1)` matrix, column-major `vec`.
fn shape_jacobian<const D: usize>(dm_inv: &Matrix<D>) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(D * D, D * (D + 1));
    for k in 0..D {
        for col in 0..D {
            let g = dm_inv[(k, col)];
            for c in 0..D {
                let row = col * D + c;
                b[(row, (k + 1) * D + c)] += g;
                b[(row, c)] -= g;
            }
        }
    }
    b
}

/// Value, gradient and (optionally) assembled element Hessians. With `project`
/// each element block is clamped to PSD before assembly. Elements whose nodes
/// are all fixed are skipped.
pub fn elastic_potential<const D: usize>(
    mesh: &SolidMesh<D>,
    x: &[Vector<D>],
    with_hessian: bool,
    project: bool,
) -> Result<EnergyReport<D>> {
    let mut out = EnergyReport::zeros(x.len());
    for e in 0..mesh.elements.len() {
        let nodes = mesh.element_nodes(e);
        if nodes.iter().all(|&i| mesh.fixed[i]) {
            continue;
        }
        let f = mesh.deformation_gradient(x, e);
        let mat = mesh.material_of(e);
        let tag = |err: Error| match err {
            Error::ElementInversion { det, .. } => Error::ElementInversion { element: e, det },
            other => other,
        };
        let vol = mesh.rest_volume[e];
        out.value += vol * mat.psi(&f).map_err(tag)?;
        let p = mat.first_piola(&f).map_err(tag)?;
        let b = shape_jacobian(&mesh.dm_inv[e]);
        let vec_p = DVector::from_column_slice(p.as_slice());
        let g = b.transpose() * vec_p;
        out.add_gradient(nodes, &g, vol);
        if with_hessian {
            let c = mat.stress_derivative(&f).map_err(tag)?;
            let mut h = b.transpose() * c * &b * vol;
            if project {
                h = project_psd(&h);
            }
            out.hessian.add_dense(nodes, &h, 1.0);
        }
    }
    Ok(out)
}
