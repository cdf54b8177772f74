use super::Mesh;
use crate::error::{Result, TmopError};

/// 64-bit linear congruential generator (Knuth's MMIX constants).
///
/// `state <- state * 6364136223846793005 + 1442695040888963407 (mod 2^64)`;
/// uniform doubles come from the top 53 bits of the new state.
#[derive(Clone, Debug)]
pub struct Lcg64 {
    state: u64,
}

impl Lcg64 {
    pub const MULTIPLIER: u64 = 6364136223846793005;
    pub const INCREMENT: u64 = 1442695040888963407;

    pub fn new(seed: u64) -> Self {
        Lcg64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_mul(Self::MULTIPLIER).wrapping_add(Self::INCREMENT);
        self.state
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[-1, 1)`.
    pub fn next_symmetric(&mut self) -> f64 {
        2.0 * self.next_f64() - 1.0
    }
}

/// Moves every interior node by a pseudo-random vector whose max-norm is at
/// most `amplitude` times the shortest lattice edge incident to the node.
///
/// Nodes are visited in ascending index order, drawing `dim` numbers each.
/// Inverted elements are not rejected here; check with
/// [`Mesh::min_det_jacobian`].
pub fn perturb_interior(mesh: &Mesh, amplitude: f64, seed: u64) -> Result<Mesh> {
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        return Err(TmopError::invalid(format!("perturbation amplitude must be >= 0, got {amplitude}")));
    }
    let h = mesh.local_edge_lengths();
    let d = mesh.dim();
    let mut rng = Lcg64::new(seed);
    let mut coords = mesh.coords().to_vec();
    for n in 0..mesh.num_nodes() {
        if mesh.is_boundary(n) {
            continue;
        }
        for a in 0..d {
            coords[n * d + a] += amplitude * h[n] * rng.next_symmetric();
        }
    }
    Ok(mesh.with_coords(coords))
}
