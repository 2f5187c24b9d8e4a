//! Geometric tail decompositions on finite affine towers.

pub mod decompose;
pub mod export;
pub mod laws;
pub mod plan;
pub mod tower;
pub mod water;

pub use decompose::{decompose, split_lem_w, DecomposeOptions, LemWSplit, WordDecomposition};
pub use export::{export_geometric_law, ExportOptions, TimeZeroReport};
pub use laws::{enumerate_clock_masses, geom_sum_convolution, geom_sum_law, r_law, GeomSumLaw, RLaw};
pub use plan::{admissible_xi, check_r_xi, find_n_eps, find_r_xi, p_sequence, RedistributionPlan, SearchOptions};
pub use tower::{transfer_apply, Density, FiniteTower};
pub use water::water_fill;
