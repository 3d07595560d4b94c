//! Linear simplex meshes: rest-shape data, lumped masses, boundary extraction,
//! box generators and the ASCII node/element format.

use std::collections::BTreeMap;
use std::path::Path;

use super::material::MaterialModel;
use crate::{Error, Matrix, Result, Vector};

/// Simplex connectivity; the first `D + 1` entries are used.
pub type Element = [usize; 4];

#[derive(Debug, Clone, PartialEq)]
pub struct SolidMesh<const D: usize> {
    pub rest: Vec<Vector<D>>,
    pub positions: Vec<Vector<D>>,
    pub velocities: Vec<Vector<D>>,
    pub elements: Vec<Element>,
    pub rest_volume: Vec<f64>,
    pub dm_inv: Vec<Matrix<D>>,
    pub masses: Vec<f64>,
    /// Outward-oriented boundary facets (edges in 2D, triangles in 3D).
    pub boundary: Vec<[usize; D]>,
    /// Boundary edges (3D only; in 2D the facets are the edges).
    pub boundary_edges: Vec<[usize; 2]>,
    pub materials: Vec<MaterialModel>,
    pub element_material: Vec<usize>,
    /// Body id per node; contact is only evaluated between different bodies.
    pub body: Vec<usize>,
    /// Dirichlet nodes move with `prescribed_velocity` and are removed from solves.
    pub fixed: Vec<bool>,
    pub prescribed_velocity: Vec<Vector<D>>,
}

impl<const D: usize> Default for SolidMesh<D> {
    fn default() -> Self {
        Self {
            rest: Vec::new(),
            positions: Vec::new(),
            velocities: Vec::new(),
            elements: Vec::new(),
            rest_volume: Vec::new(),
            dm_inv: Vec::new(),
            masses: Vec::new(),
            boundary: Vec::new(),
            boundary_edges: Vec::new(),
            materials: Vec::new(),
            element_material: Vec::new(),
            body: Vec::new(),
            fixed: Vec::new(),
            prescribed_velocity: Vec::new(),
        }
    }
}

fn simplex_volume<const D: usize>(x: &[Vector<D>], e: &Element) -> f64 {
    let ds = edge_matrix(x, e);
    let fact = if D == 2 { 2.0 } else { 6.0 };
    crate::small::det(&ds) / fact
}

fn edge_matrix<const D: usize>(x: &[Vector<D>], e: &Element) -> Matrix<D> {
    Matrix::<D>::from_fn(|r, c| x[e[c + 1]][r] - x[e[0]][r])
}

/// Faces of a positively oriented simplex, each ordered so its normal points out.
fn oriented_faces<const D: usize>(e: &Element) -> Vec<[usize; D]> {
    let pick = |ids: &[usize]| -> [usize; D] { std::array::from_fn(|k| e[ids[k]]) };
    if D == 2 {
        vec![pick(&[0, 1]), pick(&[1, 2]), pick(&[2, 0])]
    } else {
        vec![pick(&[0, 2, 1]), pick(&[0, 1, 3]), pick(&[0, 3, 2]), pick(&[1, 2, 3])]
    }
}

fn face_key<const D: usize>(f: &[usize; D]) -> Vec<usize> {
    let mut k = f.to_vec();
    k.sort_unstable();
    k
}

impl<const D: usize> SolidMesh<D> {
    /// Single-body mesh at rest with uniform material and density.
    pub fn new(rest: Vec<Vector<D>>, elements: Vec<Element>, material: MaterialModel, density: f64) -> Result<Self> {
        crate::assert_dim::<D>();
        if !(density > 0.0) {
            return Err(Error::validation("rho_s", "solid density must be positive"));
        }
        let n = rest.len();
        let mut elements = elements;
        let mut rest_volume = Vec::with_capacity(elements.len());
        let mut dm_inv = Vec::with_capacity(elements.len());
        let mut masses = vec![0.0; n];
        for e in elements.iter_mut() {
            if e[..=D].iter().any(|&i| i >= n) {
                return Err(Error::validation("elements", format!("node index out of range in element {:?}", &e[..=D])));
            }
            let mut vol = simplex_volume(&rest, e);
            if vol < 0.0 {
                e.swap(1, 2);
                vol = -vol;
            }
            let scale = rest.iter().map(|x| x.amax()).fold(0.0, f64::max).max(1.0);
            if vol <= 1e-14 * scale.powi(D as i32) {
                return Err(Error::DegenerateElement { measure: vol });
            }
            let dm = edge_matrix(&rest, e);
            dm_inv.push(crate::small::inverse(&dm).ok_or(Error::DegenerateElement { measure: vol })?);
            rest_volume.push(vol);
            let share = density * vol / (D + 1) as f64;
            for &i in &e[..=D] {
                masses[i] += share;
            }
        }
        if let Some(i) = masses.iter().position(|&m| m == 0.0) {
            return Err(Error::validation("elements", format!("node {i} belongs to no element")));
        }
        let ne = elements.len();
        let mut mesh = Self {
            positions: rest.clone(),
            velocities: vec![Vector::<D>::zeros(); n],
            rest,
            elements,
            rest_volume,
            dm_inv,
            masses,
            boundary: Vec::new(),
            boundary_edges: Vec::new(),
            materials: vec![material],
            element_material: vec![0; ne],
            body: vec![0; n],
            fixed: vec![false; n],
            prescribed_velocity: vec![Vector::<D>::zeros(); n],
        };
        mesh.boundary = mesh.extract_boundary();
        mesh.boundary_edges = mesh.extract_boundary_edges();
        Ok(mesh)
    }

    /// Axis-aligned box split into `cells` cells per axis; triangles in 2D,
    /// six Kuhn tetrahedra per cube in 3D.
    pub fn grid_box(lo: Vector<D>, hi: Vector<D>, cells: [usize; D], material: MaterialModel, density: f64) -> Result<Self> {
        crate::assert_dim::<D>();
        if cells.contains(&0) || (0..D).any(|k| hi[k] <= lo[k]) {
            return Err(Error::validation("box", "box needs positive extent and at least one cell per axis"));
        }
        let stride: Vec<usize> = (0..D).scan(1, |s, k| {
            let out = *s;
            *s *= cells[k] + 1;
            Some(out)
        })
        .collect();
        let count: usize = cells.iter().map(|c| c + 1).product();
        let mut rest = Vec::with_capacity(count);
        for id in 0..count {
            rest.push(Vector::<D>::from_fn(|k, _| {
                let ik = (id / stride[k]) % (cells[k] + 1);
                lo[k] + (hi[k] - lo[k]) * ik as f64 / cells[k] as f64
            }));
        }
        let corner = |base: &[usize], off: usize| -> usize { (0..D).map(|k| (base[k] + ((off >> k) & 1)) * stride[k]).sum() };
        let mut elements = Vec::new();
        let ncell: usize = cells.iter().product();
        for c in 0..ncell {
            let mut rem = c;
            let base: Vec<usize> = (0..D)
                .map(|k| {
                    let v = rem % cells[k];
                    rem /= cells[k];
                    v
                })
                .collect();
            if D == 2 {
                elements.push([corner(&base, 0), corner(&base, 1), corner(&base, 3), 0]);
                elements.push([corner(&base, 0), corner(&base, 3), corner(&base, 2), 0]);
            } else {
                for perm in [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
                    let mut off = 0;
                    let mut e = [corner(&base, 0); 4];
                    for (k, &axis) in perm.iter().enumerate() {
                        off |= 1 << axis;
                        e[k + 1] = corner(&base, off);
                    }
                    elements.push(e);
                }
            }
        }
        Self::new(rest, elements, material, density)
    }

    pub fn len(&self) -> usize {
        self.rest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rest.is_empty()
    }

    pub fn element_nodes(&self, e: usize) -> &[usize] {
        &self.elements[e][..=D]
    }

    pub fn material_of(&self, e: usize) -> &MaterialModel {
        &self.materials[self.element_material[e]]
    }

    pub fn num_bodies(&self) -> usize {
        self.body.iter().max().map_or(0, |b| b + 1)
    }

    /// Pin every node of the mesh (e.g. a static wall).
    pub fn fix_all(&mut self) {
        self.fixed.iter_mut().for_each(|f| *f = true);
    }

    /// Append another mesh as a new body; returns the node offset.
    pub fn append(&mut self, other: SolidMesh<D>) -> usize {
        let off = self.len();
        let body_off = if self.is_empty() { 0 } else { self.num_bodies() };
        let mat_off = self.materials.len();
        self.rest.extend(other.rest);
        self.positions.extend(other.positions);
        self.velocities.extend(other.velocities);
        self.elements.extend(other.elements.into_iter().map(|mut e| {
            e[..=D].iter_mut().for_each(|i| *i += off);
            e
        }));
        self.rest_volume.extend(other.rest_volume);
        self.dm_inv.extend(other.dm_inv);
        self.masses.extend(other.masses);
        self.boundary.extend(other.boundary.into_iter().map(|f| f.map(|i| i + off)));
        self.boundary_edges.extend(other.boundary_edges.into_iter().map(|f| f.map(|i| i + off)));
        self.materials.extend(other.materials);
        self.element_material.extend(other.element_material.into_iter().map(|m| m + mat_off));
        self.body.extend(other.body.into_iter().map(|b| b + body_off));
        self.fixed.extend(other.fixed);
        self.prescribed_velocity.extend(other.prescribed_velocity);
        off
    }

    /// `F_e = D_s(x) D_m⁻¹`.
    pub fn deformation_gradient(&self, x: &[Vector<D>], e: usize) -> Matrix<D> {
        edge_matrix(x, &self.elements[e]) * self.dm_inv[e]
    }

    /// Faces owned by exactly one element, oriented outward.
    fn extract_boundary(&self) -> Vec<[usize; D]> {
        let mut seen: BTreeMap<Vec<usize>, (usize, [usize; D])> = BTreeMap::new();
        for e in &self.elements {
            for f in oriented_faces::<D>(e) {
                seen.entry(face_key(&f)).and_modify(|c| c.0 += 1).or_insert((1, f));
            }
        }
        seen.into_values().filter(|(c, _)| *c == 1).map(|(_, f)| f).collect()
    }

    fn extract_boundary_edges(&self) -> Vec<[usize; 2]> {
        if D == 2 {
            return self.boundary.iter().map(|f| [f[0], f[1]]).collect();
        }
        let mut edges: Vec<[usize; 2]> = self
            .boundary
            .iter()
            .flat_map(|f| (0..3).map(move |k| {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                [a.min(b), a.max(b)]
            }))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Boundary nodes in increasing order.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.boundary.iter().flatten().copied().collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Boundary measure attributed to each node (facet measure split evenly).
    pub fn nodal_boundary_area(&self) -> Vec<f64> {
        let mut area = vec![0.0; self.len()];
        for f in &self.boundary {
            let pts: Vec<Vector<D>> = f.iter().map(|&i| self.rest[i]).collect();
            let a = crate::contact::distance::facet_measure(&pts) / D as f64;
            for &i in f {
                area[i] += a;
            }
        }
        area
    }

    /// Outward normal (unnormalized, length = facet measure scaled) of a facet.
    pub fn facet_normal(x: &[Vector<D>], f: &[usize; D]) -> Vector<D> {
        if D == 2 {
            let t = x[f[1]] - x[f[0]];
            Vector::<D>::from_fn(|k, _| if k == 0 { t[1] } else { -t[0] })
        } else {
            let a = x[f[1]] - x[f[0]];
            let b = x[f[2]] - x[f[0]];
            Vector::<D>::from_fn(|k, _| {
                let (i, j) = ((k + 1) % 3, (k + 2) % 3);
                a[i] * b[j] - a[j] * b[i]
            })
        }
    }

    /// Read the ASCII format:
    ///
    /// ```text
    /// dim 2
    /// nodes 3
    /// 0.0 0.0
    /// 1.0 0.0
    /// 0.0 1.0
    /// elements 1
    /// 0 1 2
    /// ```
    ///
    /// Indices are 0-based; blank lines and lines starting with `#` are ignored.
    pub fn parse_ascii(text: &str, material: MaterialModel, density: f64) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let err = |line: usize, msg: String| Error::Parse { line, column: 1, message: msg };
        let mut header = |key: &str| -> Result<usize> {
            let (ln, l) = lines.next().ok_or_else(|| err(0, format!("missing `{key}` header")))?;
            let mut it = l.split_whitespace();
            if it.next() != Some(key) {
                return Err(err(ln, format!("expected `{key} <count>`")));
            }
            it.next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| err(ln, format!("invalid count after `{key}`")))
        };
        let dim = header("dim")?;
        if dim != D {
            return Err(err(1, format!("mesh dimension {dim} does not match scene dimension {D}")));
        }
        let n = header("nodes")?;
        drop(header);
        let mut rest = Vec::with_capacity(n);
        for _ in 0..n {
            let (ln, l) = lines.next().ok_or_else(|| err(0, "unexpected end of node list".into()))?;
            let vals: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| err(ln, format!("bad coordinate `{t}`: {e}"))))
                .collect::<Result<_>>()?;
            if vals.len() != D {
                return Err(err(ln, format!("expected {D} coordinates, found {}", vals.len())));
            }
            rest.push(Vector::<D>::from_column_slice(&vals));
        }
        let (ln, l) = lines.next().ok_or_else(|| err(0, "missing `elements` header".into()))?;
        let mut it = l.split_whitespace();
        if it.next() != Some("elements") {
            return Err(err(ln, "expected `elements <count>`".into()));
        }
        let m: usize = it.next().and_then(|v| v.parse().ok()).ok_or_else(|| err(ln, "invalid element count".into()))?;
        let mut elements = Vec::with_capacity(m);
        for _ in 0..m {
            let (ln, l) = lines.next().ok_or_else(|| err(0, "unexpected end of element list".into()))?;
            let ids: Vec<usize> = l
                .split_whitespace()
                .map(|t| t.parse::<usize>().map_err(|e| err(ln, format!("bad index `{t}`: {e}"))))
                .collect::<Result<_>>()?;
            if ids.len() != D + 1 {
                return Err(err(ln, format!("expected {} indices, found {}", D + 1, ids.len())));
            }
            let mut e = [0; 4];
            e[..=D].copy_from_slice(&ids);
            elements.push(e);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(err(ln, "trailing content after element list".into()));
        }
        Self::new(rest, elements, material, density)
    }

    pub fn load_ascii(path: &Path, material: MaterialModel, density: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_ascii(&text, material, density)
    }

    /// Serialize the rest shape in the ASCII format.
    pub fn to_ascii(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "dim {D}\nnodes {}", self.len());
        for x in &self.rest {
            let row: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        let _ = writeln!(s, "elements {}", self.elements.len());
        for e in &self.elements {
            let row: Vec<String> = e[..=D].iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        s
    }
}
