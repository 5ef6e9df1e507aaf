pub mod basis;
pub mod commands;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod jet;
pub mod nonlinearity;
pub mod quadrature;
pub mod propagator;
pub mod solver;
pub mod weights;
