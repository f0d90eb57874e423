//! P1 finite elements on simplices: exact element integrals, sparse assembly,
//! L² products and SPD solves.
//!
//! All element integrals use the closed form for products of barycentric
//! coordinates on a `d`-simplex `T`:
//!
//! ```text
//! ∫_T λ₀^a λ₁^b λ₂^c dx = |T| d! a! b! c! / (d + a + b + c)!
//! ```
//!
//! which gives the consistent mass matrix (two factors) and the
//! state-weighted mass matrix `∫ U φᵢ φⱼ` (three factors) without quadrature.

mod field;
mod solve;
mod sparse;

pub use field::{DiffusionField, FeField};
pub use solve::{relative_residual, solve_spd, BandedCholesky, SolveMethod, SpdSolver, SOLVE_TOL};
pub use sparse::CsrMatrix;

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Consistent P1 mass matrix `Mᵢⱼ = ∫ φᵢ φⱼ`.
pub fn assemble_mass(mesh: &Mesh) -> CsrMatrix {
    let (mut m, slots) = pattern_with_slots(mesh);
    let nv = mesh.nodes_per_element();
    let local = local_mass(mesh.dim());
    for (e, &measure) in mesh.element_measures().iter().enumerate() {
        let s = &slots[e * nv * nv..(e + 1) * nv * nv];
        for (k, &slot) in s.iter().enumerate() {
            m.values_mut()[slot] += measure * local[k];
        }
    }
    m
}

/// P1 stiffness matrix `Kᵢⱼ = ∫ D ∇φⱼ · ∇φᵢ` with `D` constant per element.
pub fn assemble_stiffness(mesh: &Mesh, diffusion: &DiffusionField) -> Result<CsrMatrix> {
    diffusion.check_on(mesh)?;
    let (mut k, slots) = pattern_with_slots(mesh);
    let nv = mesh.nodes_per_element();
    for e in 0..mesh.n_elements() {
        let local = local_stiffness(mesh, e);
        let d = diffusion.on_element(e);
        let s = &slots[e * nv * nv..(e + 1) * nv * nv];
        for (idx, &slot) in s.iter().enumerate() {
            k.values_mut()[slot] += d * local[idx];
        }
    }
    Ok(k)
}

/// `∫_Ω f g dx = fᵀ M g` on `mesh`.
pub fn l2_inner(mesh: &Mesh, f: &FeField, g: &FeField) -> Result<f64> {
    f.check_on(mesh)?;
    g.check_on(mesh)?;
    Ok(assemble_mass(mesh).bilinear(f.values(), g.values()))
}

/// Mesh plus the operators every time step needs, assembled once.
#[derive(Debug, Clone)]
pub struct Discretization {
    mesh: Mesh,
    diffusion: DiffusionField,
    mass: CsrMatrix,
    stiffness: CsrMatrix,
    /// `M·1`, i.e. `∫ φᵢ`.
    mass_row_sums: Vec<f64>,
    /// CSR value index of every local entry, `nv²` per element.
    slots: Vec<usize>,
    /// `∫_T λa λb λc / |T|`, indexed `(a·nv + b)·nv + c`.
    triple: Vec<f64>,
}

impl Discretization {
    pub fn new(mesh: Mesh, diffusion: DiffusionField) -> Result<Self> {
        let stiffness = assemble_stiffness(&mesh, &diffusion)?;
        let mass = assemble_mass(&mesh);
        let (_, slots) = pattern_with_slots(&mesh);
        let mass_row_sums = mass.mul_vec(&vec![1.0; mesh.n_nodes()]);
        let triple = local_triple(mesh.dim());
        Ok(Discretization {
            mesh,
            diffusion,
            mass,
            stiffness,
            mass_row_sums,
            slots,
            triple,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn diffusion(&self) -> &DiffusionField {
        &self.diffusion
    }

    pub fn n_nodes(&self) -> usize {
        self.mesh.n_nodes()
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn mass_row_sums(&self) -> &[f64] {
        &self.mass_row_sums
    }

    /// `∫_Ω u dx = 1ᵀ M u`.
    pub fn integral(&self, u: &[f64]) -> f64 {
        self.mass_row_sums.iter().zip(u).map(|(m, v)| m * v).sum()
    }

    pub fn l2_inner(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        let n = self.n_nodes();
        if f.len() != n || g.len() != n {
            return Err(Error::invalid(format!(
                "fields of length {} and {} on a mesh with {n} nodes",
                f.len(),
                g.len()
            )));
        }
        Ok(self.mass.bilinear(f, g))
    }

    /// Zero matrix with the shared sparsity pattern.
    pub fn zeros_like(&self) -> CsrMatrix {
        let mut m = self.mass.clone();
        m.values_mut().fill(0.0);
        m
    }

    /// Writes the weighted mass matrix `∫ w φᵢ φⱼ` (P1 weight `w`) into `out`.
    pub fn weighted_mass_into(&self, weight: &[f64], out: &mut CsrMatrix) {
        debug_assert!(out.same_pattern(&self.mass));
        let nv = self.mesh.nodes_per_element();
        let values = out.values_mut();
        values.fill(0.0);
        for (e, elem) in self.mesh.elements().enumerate() {
            let measure = self.mesh.element_measures()[e];
            let s = &self.slots[e * nv * nv..(e + 1) * nv * nv];
            for a in 0..nv {
                for b in 0..nv {
                    let t = &self.triple[(a * nv + b) * nv..(a * nv + b + 1) * nv];
                    let w: f64 = t.iter().zip(elem).map(|(t, &c)| t * weight[c]).sum();
                    values[s[a * nv + b]] += measure * w;
                }
            }
        }
    }

    pub fn weighted_mass(&self, weight: &[f64]) -> CsrMatrix {
        let mut m = self.zeros_like();
        self.weighted_mass_into(weight, &mut m);
        m
    }

    /// Exact `∫_Ω a b c dx` for three P1 fields.
    pub fn triple_integral(&self, a: &[f64], b: &[f64], c: &[f64]) -> f64 {
        let nv = self.mesh.nodes_per_element();
        let mut total = 0.0;
        for (e, elem) in self.mesh.elements().enumerate() {
            let mut acc = 0.0;
            for i in 0..nv {
                for j in 0..nv {
                    for k in 0..nv {
                        acc += self.triple[(i * nv + j) * nv + k]
                            * a[elem[i]]
                            * b[elem[j]]
                            * c[elem[k]];
                    }
                }
            }
            total += self.mesh.element_measures()[e] * acc;
        }
        total
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `∫_T Π λ_{idx} / |T|` for a multiset of local vertex indices.
fn barycentric_moment(dim: usize, idx: &[usize]) -> f64 {
    let mut counts = [0usize; 3];
    for &i in idx {
        counts[i] += 1;
    }
    let num: f64 = counts.iter().map(|&c| factorial(c)).product();
    factorial(dim) * num / factorial(dim + idx.len())
}

fn local_mass(dim: usize) -> Vec<f64> {
    let nv = dim + 1;
    (0..nv * nv)
        .map(|k| barycentric_moment(dim, &[k / nv, k % nv]))
        .collect()
}

fn local_triple(dim: usize) -> Vec<f64> {
    let nv = dim + 1;
    (0..nv * nv * nv)
        .map(|k| barycentric_moment(dim, &[k / (nv * nv), (k / nv) % nv, k % nv]))
        .collect()
}

/// `|T| ∇λa · ∇λb` for element `e`, row-major `nv × nv`.
fn local_stiffness(mesh: &Mesh, e: usize) -> Vec<f64> {
    let elem = mesh.element(e);
    let measure = mesh.element_measures()[e];
    match mesh.dim() {
        1 => {
            let h = measure;
            vec![1.0 / h, -1.0 / h, -1.0 / h, 1.0 / h]
        }
        _ => {
            let p: Vec<&[f64]> = elem.iter().map(|&i| mesh.node(i)).collect();
            let twice_area = 2.0 * measure;
            let grads: Vec<[f64; 2]> = (0..3)
                .map(|i| {
                    let (j, k) = ((i + 1) % 3, (i + 2) % 3);
                    [
                        (p[j][1] - p[k][1]) / twice_area,
                        (p[k][0] - p[j][0]) / twice_area,
                    ]
                })
                .collect();
            let mut local = vec![0.0; 9];
            for a in 0..3 {
                for b in 0..3 {
                    local[a * 3 + b] =
                        measure * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]);
                }
            }
            local
        }
    }
}

/// Node-adjacency sparsity pattern and the slot of every local entry.
fn pattern_with_slots(mesh: &Mesh) -> (CsrMatrix, Vec<usize>) {
    let mut rows = vec![Vec::new(); mesh.n_nodes()];
    for elem in mesh.elements() {
        for &i in elem {
            rows[i].extend_from_slice(elem);
        }
    }
    for r in &mut rows {
        r.sort_unstable();
        r.dedup();
    }
    let m = CsrMatrix::from_pattern(&rows);
    let mut slots = Vec::with_capacity(mesh.n_elements() * mesh.nodes_per_element().pow(2));
    for elem in mesh.elements() {
        for &i in elem {
            for &j in elem {
                slots.push(m.slot(i, j).expect("pattern covers element"));
            }
        }
    }
    (m, slots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_interval_mesh, triangulate_grid, GridImage};
    use approx::assert_relative_eq;

    fn unit_triangle() -> Mesh {
        Mesh::new(2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0], vec![0, 1, 2]).unwrap()
    }

    fn assert_dense_eq(m: &CsrMatrix, expected: &[&[f64]], tol: f64) {
        let d = m.to_dense();
        for (row, exp) in d.iter().zip(expected) {
            for (a, b) in row.iter().zip(exp.iter()) {
                assert!((a - b).abs() <= tol, "{d:?} vs {expected:?}");
            }
        }
    }

    #[test]
    fn interval_mass_and_stiffness() {
        let mesh = build_interval_mesh(2, 0.0, 1.0).unwrap();
        let m = assemble_mass(&mesh);
        assert_dense_eq(
            &m,
            &[
                &[1.0 / 6.0, 1.0 / 12.0, 0.0],
                &[1.0 / 12.0, 1.0 / 3.0, 1.0 / 12.0],
                &[0.0, 1.0 / 12.0, 1.0 / 6.0],
            ],
            1e-14,
        );
        let k = assemble_stiffness(&mesh, &DiffusionField::uniform(1.0).unwrap()).unwrap();
        assert_dense_eq(&k, &[&[2.0, -2.0, 0.0], &[-2.0, 4.0, -2.0], &[0.0, -2.0, 2.0]], 1e-14);
    }

    #[test]
    fn unit_triangle_matrices() {
        let mesh = unit_triangle();
        let m = assemble_mass(&mesh);
        let c = 0.5 / 12.0;
        assert_dense_eq(
            &m,
            &[&[2.0 * c, c, c], &[c, 2.0 * c, c], &[c, c, 2.0 * c]],
            1e-14,
        );
        let k = assemble_stiffness(&mesh, &DiffusionField::uniform(1.0).unwrap()).unwrap();
        assert_dense_eq(
            &k,
            &[&[1.0, -0.5, -0.5], &[-0.5, 0.5, 0.0], &[-0.5, 0.0, 0.5]],
            1e-14,
        );
    }

    #[test]
    fn mass_total_is_domain_measure() {
        let img = GridImage::new(5, 4, vec![1.0; 20]).unwrap();
        for mesh in [build_interval_mesh(7, -1.0, 2.5).unwrap(), triangulate_grid(&img, 0.0).unwrap()] {
            let m = assemble_mass(&mesh);
            let ones = vec![1.0; mesh.n_nodes()];
            assert_relative_eq!(m.bilinear(&ones, &ones), mesh.measure(), max_relative = 1e-12);
            assert!(m.is_symmetric(0.0));
        }
    }

    #[test]
    fn stiffness_rejects_bad_diffusion() {
        let mesh = build_interval_mesh(3, 0.0, 1.0).unwrap();
        assert!(DiffusionField::uniform(0.0).is_err());
        assert!(DiffusionField::uniform(f64::NAN).is_err());
        let wrong_len = DiffusionField::PerElement(vec![1.0, 1.0]);
        assert!(assemble_stiffness(&mesh, &wrong_len).is_err());
        let negative = DiffusionField::PerElement(vec![1.0, -1.0, 1.0]);
        assert!(matches!(assemble_stiffness(&mesh, &negative), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn l2_inner_examples() {
        let mesh = build_interval_mesh(64, 0.0, 1.0).unwrap();
        let one = FeField::constant(65, 1.0);
        let zero = FeField::zeros(65);
        assert_relative_eq!(l2_inner(&mesh, &one, &one).unwrap(), 1.0, max_relative = 1e-13);
        assert_eq!(l2_inner(&mesh, &zero, &one).unwrap(), 0.0);
        let x = FeField::interpolate(&mesh, |p| p[0]).unwrap();
        let h: f64 = 1.0 / 64.0;
        // P1 interpolant of x is exact, so ∫x² is exact too
        assert!((l2_inner(&mesh, &x, &x).unwrap() - 1.0 / 3.0).abs() <= h * h);
        assert!(matches!(
            l2_inner(&mesh, &x, &FeField::zeros(3)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn weighted_mass_of_ones_is_mass() {
        let img = GridImage::new(4, 3, vec![1.0; 12]).unwrap();
        let disc = Discretization::new(triangulate_grid(&img, 0.0).unwrap(), DiffusionField::Uniform(1.0)).unwrap();
        let wm = disc.weighted_mass(&vec![1.0; disc.n_nodes()]);
        for (a, b) in wm.values().iter().zip(disc.mass().values()) {
            assert_relative_eq!(a, b, max_relative = 1e-14);
        }
    }

    #[test]
    fn triple_integral_matches_weighted_mass() {
        let disc = Discretization::new(build_interval_mesh(5, 0.0, 2.0).unwrap(), DiffusionField::Uniform(1.0)).unwrap();
        let a: Vec<f64> = (0..6).map(|i| (i as f64).sin()).collect();
        let b: Vec<f64> = (0..6).map(|i| (i as f64 * 0.3).cos()).collect();
        let c: Vec<f64> = (0..6).map(|i| i as f64 * 0.1).collect();
        let via_matrix = disc.weighted_mass(&c).bilinear(&a, &b);
        assert_relative_eq!(disc.triple_integral(&a, &b, &c), via_matrix, max_relative = 1e-13);
        // x is represented exactly, so ∫₀² x³ dx = 4 is too
        let x: Vec<f64> = (0..6).map(|i| i as f64 * 0.4).collect();
        assert_relative_eq!(disc.triple_integral(&x, &x, &x), 4.0, max_relative = 1e-13);
    }
}
