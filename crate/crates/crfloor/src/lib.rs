//! Counting rational tropical space curves with cross-ratio floor diagrams,
//! cross-checked against brute-force enumeration of tropical stable maps.

pub mod cli;
pub mod crossratios;
pub mod cutting;
pub mod floordiagrams;
pub mod flows;
pub mod linalg;
pub mod maps;
pub mod model;
pub mod tree;
