//! Coordinate networks for displacement, strain and elasticity.

pub mod encoding;
pub mod mlp;

pub use encoding::{cell_coords, encode_batch, node_coords, positional_encode, CoordinateFrame, EncodingConfig};
pub use mlp::{inverse_softplus, parameter_gradients, softplus, ForwardCache, Head, LayerSlot, Network, NetworkConfig};

use crate::error::Result;

pub const DISPLACEMENT: &str = "displacement";
pub const STRAIN: &str = "strain";
pub const ELASTICITY: &str = "elasticity";

/// Architecture shared by the three networks; only the head differs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Architecture {
    pub encoding: EncodingConfig,
    pub depth: usize,
    pub width: usize,
    pub sine_scale: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            encoding: EncodingConfig::default(),
            depth: 16,
            width: 128,
            sine_scale: 30.0,
        }
    }
}

impl Architecture {
    pub fn network_config(&self, head: Head) -> NetworkConfig {
        NetworkConfig {
            depth: self.depth,
            width: self.width,
            head,
            sine_scale: self.sine_scale,
        }
    }
}

/// The displacement (2 outputs), strain (3 outputs) and elasticity
/// (2 softplus outputs) networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Networks {
    pub displacement: Network,
    pub strain: Network,
    pub elasticity: Network,
}

impl Networks {
    pub fn init(arch: &Architecture, seed: u64) -> Result<Self> {
        Ok(Networks {
            displacement: Network::init(DISPLACEMENT, arch.encoding, arch.network_config(Head::Linear), 2, seed)?,
            strain: Network::init(STRAIN, arch.encoding, arch.network_config(Head::Linear), 3, seed.wrapping_add(1))?,
            elasticity: Network::init(
                ELASTICITY,
                arch.encoding,
                arch.network_config(Head::Softplus),
                2,
                seed.wrapping_add(2),
            )?,
        })
    }

    pub fn zeros(arch: &Architecture) -> Result<Self> {
        Ok(Networks {
            displacement: Network::zeros(DISPLACEMENT, arch.encoding, arch.network_config(Head::Linear), 2)?,
            strain: Network::zeros(STRAIN, arch.encoding, arch.network_config(Head::Linear), 3)?,
            elasticity: Network::zeros(ELASTICITY, arch.encoding, arch.network_config(Head::Softplus), 2)?,
        })
    }

    pub fn iter(&self) -> [&Network; 3] {
        [&self.displacement, &self.strain, &self.elasticity]
    }

    pub fn iter_mut(&mut self) -> [&mut Network; 3] {
        [&mut self.displacement, &mut self.strain, &mut self.elasticity]
    }
}

fn rows<const N: usize>(out: ndarray::Array2<f64>) -> Vec<[f64; N]> {
    out.rows()
        .into_iter()
        .map(|r| std::array::from_fn(|k| r[k]))
        .collect()
}

/// `(u_x, u_y)` at each coordinate.
pub fn forward_displacement(coords: &[(f64, f64)], net: &Network) -> Result<Vec<[f64; 2]>> {
    net.forward(coords).map(rows)
}

/// `(eps_xx, eps_yy, gamma_xy)` at each coordinate.
pub fn forward_strain(coords: &[(f64, f64)], net: &Network) -> Result<Vec<[f64; 3]>> {
    net.forward(coords).map(rows)
}

/// `(E, nu)` at each coordinate, both strictly positive.
pub fn forward_elasticity(coords: &[(f64, f64)], net: &Network) -> Result<Vec<[f64; 2]>> {
    net.forward(coords).map(rows)
}
