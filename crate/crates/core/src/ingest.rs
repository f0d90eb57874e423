//! Grayscale image to initial condition on a generated triangle mesh.

use std::fmt;

use crate::error::{Error, Result};
use crate::fem::{Discretization, DiffusionField, FeField};
use crate::mesh::{triangulate_grid_mapped, GridImage, Mesh};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalize {
    /// Divide by the largest intensity.
    Max,
    /// Divide by a fixed scale, then clamp to 1.
    Fixed(f64),
}

impl std::str::FromStr for Normalize {
    type Err = Error;

    /// Accepts `max` or `fixed:<scale>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "max" {
            return Ok(Normalize::Max);
        }
        if let Some(v) = s.strip_prefix("fixed:") {
            let scale: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad normalization scale {v:?}")))?;
            return Ok(Normalize::Fixed(scale));
        }
        Err(Error::Config(format!(
            "normalization must be `max` or `fixed:<scale>`, got {s:?}"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestConfig {
    /// Mask cutoff applied to normalized intensities.
    pub threshold: f64,
    pub normalize: Normalize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            threshold: 0.0,
            normalize: Normalize::Max,
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold >= 0.0 && self.threshold < 1.0) {
            return Err(Error::invalid(format!(
                "threshold must lie in [0, 1), got {}",
                self.threshold
            )));
        }
        if let Normalize::Fixed(s) = self.normalize {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::invalid(format!("normalization scale must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

/// Scales intensities into `[0, 1]`.
pub fn normalize_image(image: &GridImage, normalize: Normalize) -> Result<GridImage> {
    match normalize {
        Normalize::Max => {
            let max = image.intensities().iter().copied().fold(0.0, f64::max);
            if max <= 0.0 {
                return Err(Error::DegenerateInput(
                    "image has no positive intensity to normalize by".into(),
                ));
            }
            image.map(|v| v / max)
        }
        Normalize::Fixed(scale) => image.map(|v| (v / scale).min(1.0)),
    }
}

/// Normalizes `image`, meshes the cells above the threshold and samples the
/// normalized intensity at every mesh node.
pub fn build_initial_condition(image: &GridImage, config: &IngestConfig) -> Result<(Mesh, FeField)> {
    config.validate()?;
    let normalized = normalize_image(image, config.normalize)?;
    let grid = triangulate_grid_mapped(&normalized, config.threshold)?;
    let values = grid
        .node_pixels
        .iter()
        .map(|&p| normalized.intensities()[p])
        .collect();
    Ok((grid.mesh, FeField::new(values)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestSummary {
    pub n_nodes: usize,
    pub n_elements: usize,
    pub min: f64,
    pub max: f64,
    /// Arithmetic mean of the nodal values.
    pub mean: f64,
    /// `∫_Ω u0 dx`.
    pub integral: f64,
    pub area: f64,
}

impl IngestSummary {
    pub fn new(mesh: &Mesh, u0: &FeField) -> Result<Self> {
        u0.check_on(mesh)?;
        let disc = Discretization::new(mesh.clone(), DiffusionField::Uniform(1.0))?;
        let v = u0.values();
        Ok(IngestSummary {
            n_nodes: mesh.n_nodes(),
            n_elements: mesh.n_elements(),
            min: u0.min(),
            max: u0.max(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            integral: disc.integral(v),
            area: mesh.measure(),
        })
    }
}

impl fmt::Display for IngestSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "nodes = {}", self.n_nodes)?;
        writeln!(f, "elements = {}", self.n_elements)?;
        writeln!(f, "area = {}", self.area)?;
        writeln!(f, "u0.min = {}", self.min)?;
        writeln!(f, "u0.max = {}", self.max)?;
        writeln!(f, "u0.mean = {}", self.mean)?;
        writeln!(f, "u0.integral = {}", self.integral)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_gives_unit_field() {
        let img = GridImage::new(4, 3, vec![7.0; 12]).unwrap();
        let (mesh, u0) = build_initial_condition(&img, &IngestConfig::default()).unwrap();
        assert_eq!(mesh.n_nodes(), 12);
        assert_eq!(mesh.n_elements(), 12);
        assert!(u0.values().iter().all(|&v| v == 1.0));
        let s = IngestSummary::new(&mesh, &u0).unwrap();
        assert_eq!((s.min, s.max, s.mean), (1.0, 1.0, 1.0));
        assert!((s.integral - 6.0).abs() < 1e-12);
    }

    #[test]
    fn isolated_block() {
        let mut px = vec![0.0; 36];
        for (c, r) in [(2, 2), (3, 2), (2, 3), (3, 3)] {
            px[r * 6 + c] = 3.0;
        }
        let img = GridImage::new(6, 6, px).unwrap();
        let (mesh, u0) = build_initial_condition(&img, &IngestConfig::default()).unwrap();
        assert_eq!(mesh.n_nodes(), 4);
        assert_eq!(mesh.n_elements(), 2);
        assert_eq!(u0.values(), &[1.0; 4]);
    }

    #[test]
    fn zero_image() {
        let img = GridImage::new(3, 3, vec![0.0; 9]).unwrap();
        let max = build_initial_condition(&img, &IngestConfig::default());
        assert!(matches!(max, Err(Error::DegenerateInput(_))));
        let fixed = IngestConfig {
            threshold: 0.0,
            normalize: Normalize::Fixed(10.0),
        };
        assert!(matches!(build_initial_condition(&img, &fixed), Err(Error::EmptyMesh(_))));
    }

    #[test]
    fn fixed_scale_clamps() {
        let img = GridImage::new(2, 2, vec![5.0, 20.0, 10.0, 1.0]).unwrap();
        let cfg = IngestConfig {
            threshold: 0.0,
            normalize: Normalize::Fixed(10.0),
        };
        let (_, u0) = build_initial_condition(&img, &cfg).unwrap();
        assert_eq!(u0.values(), &[0.5, 1.0, 1.0, 0.1]);
    }

    #[test]
    fn threshold_range() {
        let img = GridImage::new(2, 2, vec![1.0; 4]).unwrap();
        for t in [-0.1, 1.0, f64::NAN] {
            let cfg = IngestConfig {
                threshold: t,
                normalize: Normalize::Max,
            };
            assert!(matches!(build_initial_condition(&img, &cfg), Err(Error::InvalidArgument(_))));
        }
    }

    #[test]
    fn parse_normalize() {
        assert_eq!("max".parse::<Normalize>().unwrap(), Normalize::Max);
        assert_eq!("fixed: 2.5".parse::<Normalize>().unwrap(), Normalize::Fixed(2.5));
        assert!("mean".parse::<Normalize>().is_err());
    }
}
