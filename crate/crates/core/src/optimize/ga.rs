//! Genetic search over the partition lattice.
//!
//! A genome carries one unit vector per operator axis plus the gather
//! columns of every chained boundary. All operators preserve lattice
//! feasibility by construction: crossover swaps whole per-operator
//! vectors, and mutation moves single units between rows only when both
//! rows stay inside their window, so no repair is ever needed after
//! initialization. The seed population always contains the even split, so
//! the best genome can never cost more than the uniform baseline.

use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::costmodel::{self, CostParams, ModelOptions, Partition};
use crate::error::Result;
use crate::redistribute;
use crate::topology::Topology;
use crate::workload::TaskSequence;

use super::{op_bounds, AxisBounds, Objective, SolveResult, SolveStatus};

/// Search knobs. The defaults keep the search in the seconds range on
/// desk-scale instances while still covering small lattices exhaustively
/// in practice.
#[derive(Debug, Clone)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    /// Per-axis (and per-boundary) chance of one mutation step.
    pub mutation_rate: f64,
    /// Tournament size for parent selection.
    pub tournament: usize,
    /// Number of best genomes copied unchanged into the next generation.
    pub elitism: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 64,
            generations: 200,
            mutation_rate: 0.2,
            tournament: 4,
            elitism: 2,
            seed: 0,
        }
    }
}

/// One candidate: per-operator unit vectors for both axes (empty for tiny
/// axes, whose layout is forced) and per-chained-boundary gather columns.
///
/// The derived ordering is the deterministic tie-break: among equal-cost
/// genomes the lexicographically smallest wins everywhere.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Genome {
    pub units_x: Vec<Vec<u64>>,
    pub units_y: Vec<Vec<u64>>,
    pub gathers: Vec<Vec<usize>>,
}

impl Genome {
    /// Expands the unit vectors into per-operator partitions.
    pub fn decode(&self, bounds: &[(AxisBounds, AxisBounds)]) -> Vec<Partition> {
        bounds
            .iter()
            .enumerate()
            .map(|(i, (bx, by))| {
                Partition::new(bx.decode(&self.units_x[i]), by.decode(&self.units_y[i]))
            })
            .collect()
    }
}

/// Evolves partitions (and gather columns) for `task` under the caller's
/// evaluation options, minimizing `objective` of the end-to-end cost.
/// Deterministic for a fixed config: the generator is seeded and fitness
/// evaluation is pure.
pub fn ga_optimize(
    task: &TaskSequence,
    topo: &Topology,
    params: &CostParams,
    objective: Objective,
    options: &ModelOptions,
    config: &GaConfig,
) -> Result<SolveResult> {
    let start = Instant::now();
    let bounds: Vec<(AxisBounds, AxisBounds)> = task
        .ops
        .iter()
        .map(|op| op_bounds(op, topo.spec().x, topo.spec().y, params.r, params.c))
        .collect();
    let pairs = task.chained_pairs();
    let grid_x = topo.spec().x;
    let grid_y = topo.spec().y;
    let pop_size = config.population.max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let seed_genome = even_genome(task, &bounds, &pairs, topo, params, options)?;
    let mut population = Vec::with_capacity(pop_size);
    population.push(seed_genome);
    while population.len() < pop_size {
        population.push(random_genome(&bounds, &pairs, grid_x, grid_y, &mut rng));
    }

    let evaluate = |pop: &[Genome]| -> Result<Vec<f64>> {
        pop.par_iter()
            .map(|g| {
                let parts = g.decode(&bounds);
                let breakdown = costmodel::end_to_end_with_gathers(
                    task,
                    &parts,
                    topo,
                    params,
                    options,
                    Some(&g.gathers),
                )?;
                Ok(objective.value_of(&breakdown))
            })
            .collect()
    };

    let mut fitness = evaluate(&population)?;
    let mut best = best_of(&population, &fitness);
    for _ in 0..config.generations {
        let mut order: Vec<usize> = (0..population.len()).collect();
        order.sort_by(|&a, &b| {
            fitness[a]
                .total_cmp(&fitness[b])
                .then_with(|| population[a].cmp(&population[b]))
        });
        let mut next = Vec::with_capacity(pop_size);
        for &i in order.iter().take(config.elitism.min(pop_size)) {
            next.push(population[i].clone());
        }
        while next.len() < pop_size {
            let a = tournament(&population, &fitness, config.tournament, &mut rng);
            let b = tournament(&population, &fitness, config.tournament, &mut rng);
            let mut child = crossover(&population[a], &population[b], &mut rng);
            mutate(&mut child, &bounds, config.mutation_rate, grid_y, &mut rng);
            next.push(child);
        }
        population = next;
        fitness = evaluate(&population)?;
        let gen_best = best_of(&population, &fitness);
        if (gen_best.1, &gen_best.0) < (best.1, &best.0) {
            best = gen_best;
        }
    }

    let (genome, value) = best;
    let partitions = genome.decode(&bounds);
    let breakdown = costmodel::end_to_end_with_gathers(
        task,
        &partitions,
        topo,
        params,
        options,
        Some(&genome.gathers),
    )?;
    Ok(SolveResult {
        partitions,
        gathers: genome.gathers,
        objective,
        value,
        model_value: None,
        breakdown,
        wall_s: start.elapsed().as_secs_f64(),
        status: SolveStatus::FeasibleTimeout,
    })
}

/// The even-split genome with each boundary's gather columns set to the
/// columns the redistribution planner would pick on its own, so this
/// genome evaluates exactly like the uniform baseline.
fn even_genome(
    task: &TaskSequence,
    bounds: &[(AxisBounds, AxisBounds)],
    pairs: &[usize],
    topo: &Topology,
    params: &CostParams,
    options: &ModelOptions,
) -> Result<Genome> {
    let units_x: Vec<Vec<u64>> =
        bounds.iter().map(|(bx, _)| if bx.tiny { Vec::new() } else { bx.even_units() }).collect();
    let units_y: Vec<Vec<u64>> =
        bounds.iter().map(|(_, by)| if by.tiny { Vec::new() } else { by.even_units() }).collect();
    let genome = Genome { units_x, units_y, gathers: Vec::new() };
    let parts = genome.decode(bounds);
    let mut gathers = Vec::with_capacity(pairs.len());
    for &i in pairs {
        if options.redistribute {
            let plan = redistribute::redistribution_cost(
                &task.ops[i],
                &task.ops[i + 1],
                &parts[i],
                &parts[i + 1],
                topo,
                params,
                None,
            )?;
            gathers.push(plan.gather_cols);
        } else {
            gathers.push(vec![0; topo.spec().x]);
        }
    }
    Ok(Genome { gathers, ..genome })
}

fn random_genome(
    bounds: &[(AxisBounds, AxisBounds)],
    pairs: &[usize],
    grid_x: usize,
    grid_y: usize,
    rng: &mut ChaCha8Rng,
) -> Genome {
    let mut axis = |b: &AxisBounds| -> Vec<u64> {
        if b.tiny {
            return Vec::new();
        }
        let mut units = b.even_units();
        for _ in 0..b.parts * 2 {
            move_one_unit(&mut units, b, rng);
        }
        units
    };
    let units_x = bounds.iter().map(|(bx, _)| axis(bx)).collect();
    let units_y = bounds.iter().map(|(_, by)| axis(by)).collect();
    let gathers =
        pairs.iter().map(|_| (0..grid_x).map(|_| rng.gen_range(0..grid_y)).collect()).collect();
    Genome { units_x, units_y, gathers }
}

/// Moves one unit between two distinct rows if both stay in their window;
/// a no-op when the axis has no slack.
fn move_one_unit(units: &mut [u64], b: &AxisBounds, rng: &mut ChaCha8Rng) {
    if units.len() < 2 {
        return;
    }
    for _ in 0..8 {
        let from = rng.gen_range(0..units.len());
        let to = rng.gen_range(0..units.len());
        if from != to && units[from] > b.lo_at(from) && units[to] < b.hi {
            units[from] -= 1;
            units[to] += 1;
            return;
        }
    }
}

fn tournament(
    population: &[Genome],
    fitness: &[f64],
    size: usize,
    rng: &mut ChaCha8Rng,
) -> usize {
    let mut best = rng.gen_range(0..population.len());
    for _ in 1..size.max(1) {
        let i = rng.gen_range(0..population.len());
        if (fitness[i], &population[i]) < (fitness[best], &population[best]) {
            best = i;
        }
    }
    best
}

/// Uniform crossover at operator granularity: the child takes each
/// operator's axis pair, and each boundary's gather columns, from one
/// parent or the other.
fn crossover(a: &Genome, b: &Genome, rng: &mut ChaCha8Rng) -> Genome {
    let mut child = a.clone();
    for i in 0..child.units_x.len() {
        if rng.gen_bool(0.5) {
            child.units_x[i] = b.units_x[i].clone();
            child.units_y[i] = b.units_y[i].clone();
        }
    }
    for i in 0..child.gathers.len() {
        if rng.gen_bool(0.5) {
            child.gathers[i] = b.gathers[i].clone();
        }
    }
    child
}

fn mutate(
    genome: &mut Genome,
    bounds: &[(AxisBounds, AxisBounds)],
    rate: f64,
    grid_y: usize,
    rng: &mut ChaCha8Rng,
) {
    for (i, (bx, by)) in bounds.iter().enumerate() {
        if rng.gen_bool(rate) {
            move_one_unit(&mut genome.units_x[i], bx, rng);
        }
        if rng.gen_bool(rate) {
            move_one_unit(&mut genome.units_y[i], by, rng);
        }
    }
    for cols in &mut genome.gathers {
        if rng.gen_bool(rate) {
            let row = rng.gen_range(0..cols.len());
            cols[row] = rng.gen_range(0..grid_y);
        }
    }
}

fn best_of(population: &[Genome], fitness: &[f64]) -> (Genome, f64) {
    let mut best = 0usize;
    for i in 1..population.len() {
        if (fitness[i], &population[i]) < (fitness[best], &population[best]) {
            best = i;
        }
    }
    (population[best].clone(), fitness[best])
}
