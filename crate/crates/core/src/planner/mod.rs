//! Scan-path selection: greedy view choice and A* base navigation.

mod astar;
mod greedy;

pub use astar::{astar_cells, navigation_grid, nearest_free_cell, plan_base_path};
pub use greedy::{estimate_plan_time, estimate_plan_time_with, greedy_select, PlanStop, ScanPlan, TimingSettings};
pub(crate) use greedy::percent;
