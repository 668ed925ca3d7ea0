pub mod cantor;
pub mod cli;
pub mod energy;
pub mod error;
pub mod functional;
pub mod grid;
pub mod mollifier;
pub mod quadrature;
pub mod reduce;
pub mod smoothing;
pub mod space;
