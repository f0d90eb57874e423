//! Simplicial meshes: uniform interval meshes in 1D and triangle meshes in 2D.
//!
//! A [`Mesh`] is immutable once constructed. Construction checks that every
//! element references valid, distinct nodes, that every element has strictly
//! positive measure (triangles must be counterclockwise), that every node is
//! used by some element, and that the mesh forms a single connected piece.

mod grid;

pub use grid::{triangulate_grid, triangulate_grid_mapped, GridImage, GridMesh};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    dim: usize,
    coords: Vec<f64>,
    connectivity: Vec<usize>,
    measures: Vec<f64>,
}

impl Mesh {
    /// Builds a mesh from flat coordinate and connectivity arrays.
    ///
    /// `coords` holds `dim` values per node and `connectivity` holds `dim + 1`
    /// node indices per element.
    pub fn new(dim: usize, coords: Vec<f64>, connectivity: Vec<usize>) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::invalid(format!("mesh dimension must be 1 or 2, got {dim}")));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::invalid("coordinate array length is not a multiple of dim"));
        }
        let nv = dim + 1;
        if !connectivity.len().is_multiple_of(nv) {
            return Err(Error::invalid("connectivity length is not a multiple of dim + 1"));
        }
        if connectivity.is_empty() {
            return Err(Error::EmptyMesh("mesh has no elements".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("non-finite node coordinate"));
        }
        let n_nodes = coords.len() / dim;
        let mut used = vec![false; n_nodes];
        let mut dsu = DisjointSets::new(n_nodes);
        let mut measures = Vec::with_capacity(connectivity.len() / nv);
        for (e, elem) in connectivity.chunks_exact(nv).enumerate() {
            for (a, &i) in elem.iter().enumerate() {
                if i >= n_nodes {
                    return Err(Error::invalid(format!(
                        "element {e} references node {i} but the mesh has {n_nodes} nodes"
                    )));
                }
                if elem[..a].contains(&i) {
                    return Err(Error::invalid(format!("element {e} repeats node {i}")));
                }
                used[i] = true;
                dsu.union(elem[0], i);
            }
            let measure = signed_measure(dim, &coords, elem);
            let measure = if dim == 1 { measure.abs() } else { measure };
            if measure.is_nan() || measure <= 0.0 {
                return Err(Error::invalid(format!(
                    "element {e} has non-positive measure {measure:e} (triangles must be counterclockwise)"
                )));
            }
            measures.push(measure);
        }
        if let Some(i) = used.iter().position(|u| !u) {
            return Err(Error::invalid(format!("node {i} is not part of any element")));
        }
        let root = dsu.find(0);
        if (1..n_nodes).any(|i| dsu.find(i) != root) {
            return Err(Error::invalid("mesh is not connected"));
        }
        Ok(Mesh {
            dim,
            coords,
            connectivity,
            measures,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn n_elements(&self) -> usize {
        self.measures.len()
    }

    pub fn nodes_per_element(&self) -> usize {
        self.dim + 1
    }

    /// Coordinates of node `i` (length `dim`).
    pub fn node(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    /// Node indices of element `e`.
    pub fn element(&self, e: usize) -> &[usize] {
        let nv = self.nodes_per_element();
        &self.connectivity[e * nv..(e + 1) * nv]
    }

    pub fn elements(&self) -> impl Iterator<Item = &[usize]> + '_ {
        self.connectivity.chunks_exact(self.nodes_per_element())
    }

    /// Length (1D) or area (2D) of every element.
    pub fn element_measures(&self) -> &[f64] {
        &self.measures
    }

    /// Total measure of the meshed region.
    pub fn measure(&self) -> f64 {
        self.measures.iter().sum()
    }

    /// Diameter (longest edge) of element `e`.
    pub fn element_diameter(&self, e: usize) -> f64 {
        let elem = self.element(e);
        let mut diam = 0.0_f64;
        for a in 0..elem.len() {
            for b in a + 1..elem.len() {
                let (p, q) = (self.node(elem[a]), self.node(elem[b]));
                let d2: f64 = p.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum();
                diam = diam.max(d2.sqrt());
            }
        }
        diam
    }

    /// Maximum element diameter `h`.
    pub fn mesh_size(&self) -> f64 {
        (0..self.n_elements())
            .map(|e| self.element_diameter(e))
            .fold(0.0, f64::max)
    }

    /// Largest difference between node indices sharing an element.
    pub fn bandwidth(&self) -> usize {
        self.elements()
            .map(|elem| {
                let lo = elem.iter().min().copied().unwrap_or(0);
                let hi = elem.iter().max().copied().unwrap_or(0);
                hi - lo
            })
            .max()
            .unwrap_or(0)
    }
}

/// Maximum element diameter of `mesh`.
pub fn mesh_size(mesh: &Mesh) -> f64 {
    mesh.mesh_size()
}

/// Uniform partition of `[a, b]` into `n_elements` segments.
pub fn build_interval_mesh(n_elements: usize, a: f64, b: f64) -> Result<Mesh> {
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::invalid("interval bounds must be finite"));
    }
    if a >= b {
        return Err(Error::invalid(format!("interval requires a < b, got [{a}, {b}]")));
    }
    if n_elements == 0 {
        return Err(Error::invalid("interval mesh needs at least one element"));
    }
    let h = (b - a) / n_elements as f64;
    let coords: Vec<f64> = (0..=n_elements)
        .map(|i| if i == n_elements { b } else { a + i as f64 * h })
        .collect();
    let connectivity = (0..n_elements).flat_map(|i| [i, i + 1]).collect();
    Mesh::new(1, coords, connectivity)
}

fn signed_measure(dim: usize, coords: &[f64], elem: &[usize]) -> f64 {
    match dim {
        1 => coords[elem[1]] - coords[elem[0]],
        _ => {
            let p = |i: usize| (coords[2 * elem[i]], coords[2 * elem[i] + 1]);
            let (x0, y0) = p(0);
            let (x1, y1) = p(1);
            let (x2, y2) = p(2);
            0.5 * ((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0))
        }
    }
}

pub(crate) struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    pub(crate) fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller index as root so component labels are deterministic
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn interval_two_elements() {
        let mesh = build_interval_mesh(2, 0.0, 1.0).unwrap();
        assert_eq!(mesh.n_nodes(), 3);
        let xs: Vec<f64> = mesh.nodes().map(|p| p[0]).collect();
        assert_eq!(xs, vec![0.0, 0.5, 1.0]);
        assert_eq!(mesh.element_measures(), &[0.5, 0.5]);
        assert_eq!(mesh_size(&mesh), 0.5);
    }

    #[test]
    fn interval_single_element() {
        let mesh = build_interval_mesh(1, 0.0, 1.0).unwrap();
        assert_eq!(mesh.n_nodes(), 2);
        assert_eq!(mesh.n_elements(), 1);
        assert_eq!(mesh.element_measures(), &[1.0]);
    }

    #[test]
    fn interval_160_elements() {
        let mesh = build_interval_mesh(160, 0.0, 1.0).unwrap();
        assert_eq!(mesh.n_nodes(), 161);
        for &m in mesh.element_measures() {
            assert_relative_eq!(m, 1.0 / 160.0, max_relative = 1e-12);
        }
        assert_relative_eq!(mesh.mesh_size(), 1.0 / 160.0, max_relative = 1e-12);
        assert_relative_eq!(mesh.measure(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn interval_rejects_bad_arguments() {
        assert!(matches!(build_interval_mesh(0, 0.0, 1.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(build_interval_mesh(4, 1.0, 1.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(build_interval_mesh(4, 2.0, 1.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(build_interval_mesh(4, f64::NAN, 1.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(
            build_interval_mesh(4, 0.0, f64::INFINITY),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn unit_right_triangle_size() {
        let mesh = Mesh::new(2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0], vec![0, 1, 2]).unwrap();
        assert_relative_eq!(mesh.mesh_size(), 2f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(mesh.element_measures()[0], 0.5);
    }

    #[test]
    fn rejects_clockwise_and_invalid_elements() {
        let coords = vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0];
        assert!(Mesh::new(2, coords.clone(), vec![0, 2, 1]).is_err());
        assert!(Mesh::new(2, coords.clone(), vec![0, 1, 3]).is_err());
        assert!(Mesh::new(2, coords.clone(), vec![0, 1, 1]).is_err());
        assert!(Mesh::new(2, coords, vec![]).is_err());
    }

    #[test]
    fn rejects_disconnected_and_unused_nodes() {
        // two separate segments
        let err = Mesh::new(1, vec![0.0, 1.0, 2.0, 3.0], vec![0, 1, 2, 3]).unwrap_err();
        assert!(err.to_string().contains("not connected"));
        let err = Mesh::new(1, vec![0.0, 1.0, 2.0], vec![0, 1]).unwrap_err();
        assert!(err.to_string().contains("not part of any element"));
    }
}
