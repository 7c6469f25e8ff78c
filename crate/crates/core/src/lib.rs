//! Finite models of bundle gerbes, their 2-category, descent, bundle 2-gerbes,
//! and a numerical Chern-Simons 2-gerbe on S⁴ built from SU(2) homotopies.

pub mod bicat;
pub mod cech;
pub mod cli;
pub mod descent;
pub mod gerbe;
pub mod path_su2;
pub mod pontryagin;
pub mod report;
pub mod snf;
pub mod two_gerbe;
