//! Run configuration: a flat TOML document of scalar and 3-vector keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qrvie_core::assembly::{Excitation, Material, QuadConfig};
use qrvie_core::compression::CompressionOptions;
use qrvie_core::geometry::{build_voxel_sphere_on, vogel_spiral, ArrayLayout, Mesh, VoxelLattice};
use qrvie_core::math::c;

use crate::error::{io_err, CliError, CliResult, Stage};

/// Environment variable that overrides `workers`.
pub const WORKERS_ENV: &str = "QRVIE_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lattice {
    /// A voxel centered on the sphere center.
    Cell,
    /// A lattice node on the sphere center.
    Node,
}

/// Every knob of a run. Missing keys take the defaults of [`Scenario::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    /// Sphere radius in meters.
    pub radius: f64,
    pub voxel_size: f64,
    pub lattice: Lattice,
    pub atoms: usize,
    pub eps_r_re: f64,
    pub eps_r_im: f64,
    /// Static conductivity in S/m.
    pub sigma: f64,
    pub frequency: f64,
    pub amplitude_re: [f64; 3],
    pub amplitude_im: [f64; 3],
    pub direction: [f64; 3],
    /// Level-1 grid blocks per side.
    pub level1: usize,
    /// QR truncation tolerance.
    pub eps: f64,
    pub force_dense: bool,
    pub rel_tol: f64,
    pub max_iter: usize,
    pub preconditioner: bool,
    pub workers: usize,
    /// Reduce partial products in worker order.
    pub deterministic: bool,
    /// Largest DoF count for which the dense oracle is built.
    pub dense_cap: usize,
    pub quad_order: usize,
    pub eps_quad: f64,
    pub quad_max_depth: u32,
    pub near_factor: f64,
    pub output_dir: PathBuf,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            radius: 100e-9,
            voxel_size: 80e-9,
            lattice: Lattice::Cell,
            atoms: 8,
            eps_r_re: -9.428,
            eps_r_im: 1.513,
            sigma: 0.0,
            frequency: 5e14,
            amplitude_re: [1.0, 0.0, 0.0],
            amplitude_im: [0.0; 3],
            direction: [0.0, 0.0, 1.0],
            level1: 4,
            eps: 1e-6,
            force_dense: false,
            rel_tol: 1e-8,
            max_iter: 2000,
            preconditioner: true,
            workers: 1,
            deterministic: true,
            dense_cap: 5000,
            quad_order: 5,
            eps_quad: 1e-6,
            quad_max_depth: 8,
            near_factor: 2.0,
            output_dir: PathBuf::from("out"),
        }
    }
}

/// `key=value` override, value in TOML syntax; bare words are read as strings.
fn parse_override(kv: &str) -> CliResult<(String, toml::Value)> {
    let (k, v) = kv.split_once('=').ok_or_else(|| CliError::Config(format!("override `{kv}` is not key=value")))?;
    let (k, v) = (k.trim(), v.trim());
    let value = toml::from_str::<toml::Table>(&format!("x = {v}"))
        .ok()
        .and_then(|mut t| t.remove("x"))
        .unwrap_or_else(|| toml::Value::String(v.to_string()));
    Ok((k.to_string(), value))
}

impl Scenario {
    /// Builds a scenario from optional file text, then the worker environment
    /// variable, then `overrides` in order.
    pub fn resolve(text: Option<&str>, env_workers: Option<&str>, overrides: &[String]) -> CliResult<Scenario> {
        let mut table = match text {
            Some(t) => toml::from_str::<toml::Table>(t).map_err(|e| CliError::Config(e.to_string()))?,
            None => toml::Table::new(),
        };
        if let Some(w) = env_workers {
            let w: i64 = w.trim().parse().map_err(|_| CliError::Config(format!("{WORKERS_ENV}={w} is not an integer")))?;
            table.insert("workers".into(), toml::Value::Integer(w));
        }
        for kv in overrides {
            let (k, v) = parse_override(kv)?;
            table.insert(k, v);
        }
        let s: Scenario = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    /// Reads `path` (if any) and applies the environment and overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Scenario> {
        let text = path.map(|p| std::fs::read_to_string(p).map_err(io_err(p))).transpose()?;
        let env = std::env::var(WORKERS_ENV).ok();
        Scenario::resolve(text.as_deref(), env.as_deref(), overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        let positive = [
            ("radius", self.radius),
            ("voxel_size", self.voxel_size),
            ("frequency", self.frequency),
            ("eps", self.eps),
            ("rel_tol", self.rel_tol),
            ("eps_quad", self.eps_quad),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(CliError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let counts = [("atoms", self.atoms), ("workers", self.workers), ("quad_order", self.quad_order), ("max_iter", self.max_iter)];
        for (name, v) in counts {
            if v == 0 {
                return Err(CliError::Config(format!("{name} must be at least 1")));
            }
        }
        if self.sigma < 0.0 || !self.sigma.is_finite() {
            return Err(CliError::Config("sigma must be nonnegative".into()));
        }
        if !(self.eps_r_re.is_finite() && self.eps_r_im.is_finite()) {
            return Err(CliError::Config("permittivity must be finite".into()));
        }
        Ok(())
    }

    pub fn with_atoms(&self, atoms: usize) -> Scenario {
        Scenario { atoms, ..self.clone() }
    }

    pub fn with_eps(&self, eps: f64) -> Scenario {
        Scenario { eps, ..self.clone() }
    }

    pub fn mesh(&self) -> CliResult<Mesh> {
        let lattice = match self.lattice {
            Lattice::Cell => VoxelLattice::CellCentered,
            Lattice::Node => VoxelLattice::NodeCentered,
        };
        build_voxel_sphere_on(self.radius, self.voxel_size, lattice).stage("geometry")
    }

    pub fn layout(&self) -> CliResult<ArrayLayout> {
        vogel_spiral(self.atoms, self.radius).stage("geometry")
    }

    /// Material with `χ = ε_r − 1`.
    pub fn material(&self) -> Material {
        let m = Material::from_permittivity(c(self.eps_r_re, self.eps_r_im));
        Material::new(self.sigma, m.chi)
    }

    pub fn excitation(&self) -> CliResult<Excitation> {
        let a = [0, 1, 2].map(|i| c(self.amplitude_re[i], self.amplitude_im[i]));
        Excitation::plane_wave(self.frequency, a, self.direction).stage("assembly")
    }

    pub fn quad(&self) -> QuadConfig {
        QuadConfig {
            order: self.quad_order,
            eps_quad: self.eps_quad,
            max_depth: self.quad_max_depth,
            near_factor: self.near_factor,
        }
    }

    pub fn compression(&self) -> CompressionOptions {
        CompressionOptions { eps: self.eps, force_dense: self.force_dense }
    }
}
