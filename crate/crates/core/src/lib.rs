//! Discrete flux functionals and affine moduli charts for special
//! Lagrangian submanifolds with Lagrangian boundary conditions.

pub mod expr;
pub mod mesh;
pub mod dec;
pub mod fixtures;
pub mod linalg;
pub mod ambient;
pub mod immersion;
pub mod flux;
pub mod charts;
