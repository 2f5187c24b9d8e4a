//! Shared fixtures for the benchmarks.

use bytower_core::geometric::{FiniteTower, RedistributionPlan};
use bytower_core::map_models::{doubling_first_return, truncate_renormalized};
use bytower_core::rational::rat;

/// The doubling first-return tower cut to its first three letters.
pub fn doubling_tower() -> FiniteTower {
    FiniteTower::new(truncate_renormalized(&doubling_first_return(), 3).expect("three letters")).expect("mixing")
}

/// The plan the pipeline finds for [`doubling_tower`].
pub fn doubling_plan() -> RedistributionPlan {
    RedistributionPlan::new(0.05, rat(2, 5), 2, rat(27, 50)).expect("valid plan")
}
