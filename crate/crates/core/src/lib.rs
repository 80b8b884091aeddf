//! Numerical laboratory for singular holomorphic foliations of the complex
//! projective plane: polynomial forms and their singularities, the model-leaf
//! geometry near hyperbolic points, Poisson extension on sectors, leaf tracing,
//! leafwise diffusion, plaque intersection counting and the leafwise metric
//! built from a positive harmonic function.

pub mod algebra;
pub mod current;
pub mod error;
pub mod foliation;
pub mod harmonic;
pub mod intersection;
pub mod leafgeom;
pub mod metric;
pub mod ode;
pub mod quad;
pub mod singularity;
pub mod tracer;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// Deterministic generator used for every stochastic computation.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Generator for stream `stream` of a run seeded with `seed`.
pub fn rng_for(seed: u64, stream: u64) -> Rng {
    use rand::SeedableRng;
    let mut r = Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}
