#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod ensemble;
pub mod error;
pub mod fft;
pub mod grid;
pub mod io;
pub mod lattice;
pub mod modspace;
pub mod psido;
pub mod spaces;
pub mod stft;
pub mod tfconv;
pub mod weights;

pub use error::{Error, Result};
pub use grid::{dft, inner, inverse_dft, make_grid, Grid, PhaseField, Signal};
pub use weights::{parse_weight, polynomial_weight, subexp_weight, ScanBox, Weight};
