use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Nodal coefficients of a P1 finite-element function.
#[derive(Debug, Clone, PartialEq)]
pub struct FeField(Vec<f64>);

impl FeField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("field value at node {i} is not finite")));
        }
        Ok(FeField(values))
    }

    pub fn zeros(n: usize) -> Self {
        FeField(vec![0.0; n])
    }

    pub fn constant(n: usize, value: f64) -> Self {
        FeField(vec![value; n])
    }

    /// Nodal interpolant of `f` on `mesh`.
    pub fn interpolate(mesh: &Mesh, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        Self::new(mesh.nodes().map(f).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        FeField(values)
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub(crate) fn check_on(&self, mesh: &Mesh) -> Result<()> {
        if self.len() != mesh.n_nodes() {
            return Err(Error::invalid(format!(
                "field has {} coefficients but the mesh has {} nodes",
                self.len(),
                mesh.n_nodes()
            )));
        }
        Ok(())
    }
}

impl AsRef<[f64]> for FeField {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Diffusion coefficient, constant on each element.
#[derive(Debug, Clone, PartialEq)]
pub enum DiffusionField {
    Uniform(f64),
    PerElement(Vec<f64>),
}

impl DiffusionField {
    pub fn uniform(value: f64) -> Result<Self> {
        let d = DiffusionField::Uniform(value);
        d.validate()?;
        Ok(d)
    }

    pub fn per_element(values: Vec<f64>) -> Result<Self> {
        let d = DiffusionField::PerElement(values);
        d.validate()?;
        Ok(d)
    }

    /// Lower bound θ of the field.
    pub fn min_value(&self) -> f64 {
        match self {
            DiffusionField::Uniform(v) => *v,
            DiffusionField::PerElement(v) => v.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self, DiffusionField::Uniform(_))
    }

    pub fn on_element(&self, e: usize) -> f64 {
        match self {
            DiffusionField::Uniform(v) => *v,
            DiffusionField::PerElement(v) => v[e],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        match self {
            DiffusionField::Uniform(v) if !ok(*v) => Err(Error::invalid(format!(
                "diffusion coefficient must be positive and finite, got {v}"
            ))),
            DiffusionField::PerElement(vs) => match vs.iter().position(|&v| !ok(v)) {
                Some(e) => Err(Error::invalid(format!(
                    "diffusion on element {e} must be positive and finite, got {}",
                    vs[e]
                ))),
                None if vs.is_empty() => Err(Error::invalid("empty per-element diffusion field")),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }

    pub(crate) fn check_on(&self, mesh: &Mesh) -> Result<()> {
        self.validate()?;
        if let DiffusionField::PerElement(v) = self {
            if v.len() != mesh.n_elements() {
                return Err(Error::invalid(format!(
                    "diffusion field has {} values but the mesh has {} elements",
                    v.len(),
                    mesh.n_elements()
                )));
            }
        }
        Ok(())
    }
}
