//! Uniform hash grid for fluid neighbor lists and boundary candidate pairs.

use std::collections::HashMap;

use crate::contact::distance::{point_segment_sq, stencil_distance_sq};
use crate::Vector;

type Cell<const D: usize> = [i64; D];

fn cell_of<const D: usize>(x: &Vector<D>, size: f64) -> Cell<D> {
    std::array::from_fn(|k| (x[k] / size).floor() as i64)
}

/// Points bucketed by cell.
struct HashGrid<const D: usize> {
    size: f64,
    cells: HashMap<Cell<D>, Vec<usize>>,
}

impl<const D: usize> HashGrid<D> {
    fn new(points: &[Vector<D>], size: f64) -> Self {
        let mut cells: HashMap<Cell<D>, Vec<usize>> = HashMap::new();
        for (i, x) in points.iter().enumerate() {
            cells.entry(cell_of(x, size)).or_default().push(i);
        }
        Self { size, cells }
    }

    /// Visit every point whose cell intersects the box `[lo, hi]`.
    fn for_each_in_box(&self, lo: &Vector<D>, hi: &Vector<D>, mut f: impl FnMut(usize)) {
        let a = cell_of(lo, self.size);
        let b = cell_of(hi, self.size);
        let mut c = a;
        loop {
            if let Some(list) = self.cells.get(&c) {
                list.iter().for_each(|&i| f(i));
            }
            let mut k = 0;
            loop {
                if k == D {
                    return;
                }
                if c[k] < b[k] {
                    c[k] += 1;
                    break;
                }
                c[k] = a[k];
                k += 1;
            }
        }
    }
}

/// Symmetric fluid–fluid neighbor lists in compressed row form. Self entries
/// are excluded and each row is sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborTable {
    offsets: Vec<usize>,
    indices: Vec<usize>,
}

impl NeighborTable {
    /// All `j != i` with `|x_i - x_j| < radius`.
    pub fn build<const D: usize>(positions: &[Vector<D>], radius: f64) -> Self {
        Self::build_with_cell(positions, radius, radius)
    }

    /// As [`NeighborTable::build`] with an explicit grid cell size.
    pub fn build_with_cell<const D: usize>(positions: &[Vector<D>], radius: f64, cell: f64) -> Self {
        assert!(radius > 0.0 && cell > 0.0, "radius and cell size must be positive");
        let grid = HashGrid::new(positions, cell);
        let r2 = radius * radius;
        let reach = Vector::<D>::repeat(radius);
        let mut offsets = Vec::with_capacity(positions.len() + 1);
        let mut indices = Vec::new();
        offsets.push(0);
        let mut row = Vec::new();
        for (i, xi) in positions.iter().enumerate() {
            row.clear();
            grid.for_each_in_box(&(xi - reach), &(xi + reach), |j| {
                if j != i && (positions[j] - xi).norm_squared() < r2 {
                    row.push(j);
                }
            });
            row.sort_unstable();
            indices.extend_from_slice(&row);
            offsets.push(indices.len());
        }
        Self { offsets, indices }
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Position of row `i` within the flat storage; per-pair data can be kept
    /// in arrays aligned with it.
    pub fn row(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.indices[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Unordered pairs `(i, j)` with `i < j`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.len()).flat_map(move |i| self.neighbors(i).iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }
}

fn bbox<const D: usize>(pts: impl Iterator<Item = Vector<D>>) -> (Vector<D>, Vector<D>) {
    let mut lo = Vector::<D>::repeat(f64::INFINITY);
    let mut hi = Vector::<D>::repeat(f64::NEG_INFINITY);
    for p in pts {
        lo = lo.inf(&p);
        hi = hi.sup(&p);
    }
    (lo, hi)
}

/// `(point, facet)` pairs with point–facet distance `< bound`, sorted.
/// Facets are lists of `D` indices into `nodes`.
pub fn boundary_candidates<const D: usize>(
    points: &[Vector<D>],
    nodes: &[Vector<D>],
    facets: &[[usize; D]],
    bound: f64,
) -> Vec<(usize, usize)> {
    if points.is_empty() || facets.is_empty() {
        return Vec::new();
    }
    let extent = facets
        .iter()
        .map(|f| {
            let (lo, hi) = bbox(f.iter().map(|&n| nodes[n]));
            (hi - lo).max()
        })
        .sum::<f64>()
        / facets.len() as f64;
    boundary_candidates_with_cell(points, nodes, facets, bound, bound.max(extent))
}

pub fn boundary_candidates_with_cell<const D: usize>(
    points: &[Vector<D>],
    nodes: &[Vector<D>],
    facets: &[[usize; D]],
    bound: f64,
    cell: f64,
) -> Vec<(usize, usize)> {
    let grid = HashGrid::new(points, cell);
    let reach = Vector::<D>::repeat(bound);
    let b2 = bound * bound;
    let mut out = Vec::new();
    let mut stencil = vec![Vector::<D>::zeros(); D + 1];
    for (f, facet) in facets.iter().enumerate() {
        for (k, &n) in facet.iter().enumerate() {
            stencil[k + 1] = nodes[n];
        }
        let (lo, hi) = bbox(facet.iter().map(|&n| nodes[n]));
        grid.for_each_in_box(&(lo - reach), &(hi + reach), |p| {
            stencil[0] = points[p];
            if stencil_distance_sq(&stencil, false) < b2 {
                out.push((p, f));
            }
        });
    }
    out.sort_unstable();
    out
}

/// Segment–segment distance squared (3D edges).
pub fn segment_distance_sq<const D: usize>(a0: &Vector<D>, a1: &Vector<D>, b0: &Vector<D>, b1: &Vector<D>) -> f64 {
    if D == 3 {
        stencil_distance_sq(&[*a0, *a1, *b0, *b1], true)
    } else {
        // Planar segments either cross or attain the minimum at an endpoint.
        let e = [
            point_segment_sq(a0, b0, b1).0,
            point_segment_sq(a1, b0, b1).0,
            point_segment_sq(b0, a0, a1).0,
            point_segment_sq(b1, a0, a1).0,
        ];
        e.into_iter().fold(f64::INFINITY, f64::min)
    }
}

/// Edge pairs `(e1, e2)`, `e1 < e2`, with segment distance `< bound`, sorted.
pub fn edge_edge_candidates<const D: usize>(nodes: &[Vector<D>], edges: &[[usize; 2]], bound: f64) -> Vec<(usize, usize)> {
    if edges.len() < 2 {
        return Vec::new();
    }
    let avg = edges.iter().map(|e| (nodes[e[0]] - nodes[e[1]]).norm()).sum::<f64>() / edges.len() as f64;
    let size = bound.max(avg);
    let reach = Vector::<D>::repeat(bound * 0.5);
    let mut cells: HashMap<Cell<D>, Vec<usize>> = HashMap::new();
    for (i, e) in edges.iter().enumerate() {
        let (lo, hi) = bbox(e.iter().map(|&n| nodes[n]));
        let a = cell_of(&(lo - reach), size);
        let b = cell_of(&(hi + reach), size);
        let mut c = a;
        'outer: loop {
            cells.entry(c).or_default().push(i);
            let mut k = 0;
            loop {
                if k == D {
                    break 'outer;
                }
                if c[k] < b[k] {
                    c[k] += 1;
                    break;
                }
                c[k] = a[k];
                k += 1;
            }
        }
    }
    let b2 = bound * bound;
    let mut out = Vec::new();
    for list in cells.values() {
        for (x, &i) in list.iter().enumerate() {
            for &j in &list[x + 1..] {
                let (i, j) = (i.min(j), i.max(j));
                let (ei, ej) = (edges[i], edges[j]);
                if segment_distance_sq(&nodes[ei[0]], &nodes[ei[1]], &nodes[ej[0]], &nodes[ej[1]]) < b2 {
                    out.push((i, j));
                }
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}
