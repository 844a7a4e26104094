//! Conic dual of the moment problem and its solvers.

pub mod cones;
pub mod cutting;
pub mod dual;
pub mod ipm;
pub mod polycheck;
pub mod sos;

pub use cutting::{cutting_plane_solve, solve_discretized, CuttingResult, CuttingSettings};
pub use dual::{dualize, DualProgram};
pub use ipm::{ConeProgram, IpmSettings, IpmSolution, IpmStatus};
pub use polycheck::{check_poly_nonneg, NonnegCheck};
pub use sos::{solve_sos, sos_reformulate, SosProgram, SosSolution};
