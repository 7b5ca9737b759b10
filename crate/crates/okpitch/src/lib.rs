//! Cyclic-symmetry-breaking pitchforks of 1-D diblock copolymer equilibria:
//! spectral Galerkin branches, an extended system for the bifurcation
//! points, and interval-arithmetic validation certificates.

pub mod interval;
pub mod spectral;
pub mod symmetry;
pub mod model;
pub mod equilibria;
pub mod extended;
pub mod validation;
pub mod cli;
