use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{cos, sin, sqrt, PI};

/// Centers of the meta-atoms of a planar array.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayLayout {
    pub centers: Vec<[f64; 3]>,
    pub sphere_radius: f64,
    /// Radial scale `c` of a Vogel spiral, `None` for hand-built layouts.
    pub scale: Option<f64>,
}

impl ArrayLayout {
    pub fn new(centers: Vec<[f64; 3]>, sphere_radius: f64) -> Self {
        Self { centers, sphere_radius, scale: None }
    }

    pub fn atom_count(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Largest distance of a center from the origin.
    pub fn outer_radius(&self) -> f64 {
        self.centers
            .iter()
            .map(|c| sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2]))
            .fold(0.0, f64::max)
    }
}

/// Golden angle `2π/φ²` with `φ = (1 + √5)/2`.
pub fn golden_angle() -> f64 {
    let phi = (1.0 + sqrt(5.0)) / 2.0;
    2.0 * PI / (phi * phi)
}

/// Sunflower arrangement: atom `i` (1-based) sits at radius `c√i` and angle
/// `i·α`, with `c = R√3` and `α` the golden angle.
pub fn vogel_spiral(atoms: usize, radius: f64) -> Result<ArrayLayout> {
    if atoms == 0 {
        return Err(Error::InvalidInput("atom count must be at least 1".into()));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidInput("sphere radius must be positive".into()));
    }
    let scale = radius * sqrt(3.0);
    let alpha = golden_angle();
    let centers = (1..=atoms)
        .map(|i| {
            let r = scale * sqrt(i as f64);
            let t = i as f64 * alpha;
            [r * cos(t), r * sin(t), 0.0]
        })
        .collect();
    Ok(ArrayLayout { centers, sphere_radius: radius, scale: Some(scale) })
}
