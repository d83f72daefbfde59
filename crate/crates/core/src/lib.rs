//! Coding trees for rational maps of the Riemann sphere.

pub mod census;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod lifting;
pub mod map;
pub mod output;
pub mod periodics;
pub mod pipeline;
pub mod pixmap;
pub mod roots;
pub mod sphere;
pub mod tree;
pub mod word;

pub use error::{Error, Result};
pub use map::RationalMap;
pub use sphere::SpherePoint;
pub use tree::{BuildMode, CodingTree};
pub use word::SymbolWord;
