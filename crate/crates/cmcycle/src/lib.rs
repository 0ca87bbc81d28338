//! Exact p-adic computation of intersection numbers of CM cycles on
//! Lubin-Tate towers, with brute-force oracles for every computed quantity.
//!
//! Modules, bottom up:
//! - [`localfield`]: precision-tracked arithmetic in `Q_p` and quadratic extensions.
//! - [`linalg`]: matrices, characteristic polynomials, resultants, Smith forms.
//! - [`cda`]: the cyclic division algebra of invariant `1/2h` and its reduced norm.
//! - [`cycles`]: equi-height pairs, relative resultants and the stable level.
//! - [`integrate`]: Haar integration over `GL_2h(O_F)` cosets.
//! - [`formula`]: the intersection-number evaluators.
//! - [`orbital`]: the `h = 1` orbital integral and the linear AFL check.
//! - [`sample`]: seeded random inputs.

pub mod cda;
pub mod cycles;
pub mod error;
pub mod exec;
pub mod formula;
pub mod integrate;
pub mod linalg;
pub mod localfield;
pub mod orbital;
mod residue;
pub mod sample;

pub use error::{ErrorClass, MathError, Result};
