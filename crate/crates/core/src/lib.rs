pub mod dd;
pub mod geodesic;
pub mod geometry;
pub mod normmap;
pub mod ode;
pub mod potential;
pub mod quad;
pub mod reduced;
pub mod weyl;
