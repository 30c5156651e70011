//! Shared fixtures for the benchmark suite: one place that builds the
//! workloads, grids, and partitions the benches all evaluate.

use mcm_core::costmodel::{CostParams, Partition};
use mcm_core::optimize::uniform_partition;
use mcm_core::workload::{bundled_tasks, TaskSequence};
use mcm_core::{GridSpec, GridType, Topology};

/// A bundled workload by name, with the grid and parameters the benches
/// evaluate it on.
pub fn fixture(name: &str, side: usize) -> (TaskSequence, Topology, CostParams) {
    let task = bundled_tasks().remove(name).expect("bundled workload");
    let topo = Topology::build(GridSpec::new(side, side, GridType::A, false)).unwrap();
    (task, topo, CostParams::hbm_defaults())
}

/// Even splits for every op of `task` on a `side` x `side` grid.
pub fn even_partitions(task: &TaskSequence, side: usize, params: &CostParams) -> Vec<Partition> {
    task.ops
        .iter()
        .map(|op| uniform_partition(op, side, side, params.r, params.c))
        .collect()
}
