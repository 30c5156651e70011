//! Package topology: chiplet grids, global-chiplet placement, and hop counts.
//!
//! Chiplets form an X-by-Y mesh (row-major coordinates, row 0 at the top
//! edge). A subset of chiplets are *global* chiplets: they carry the
//! package's connection to off-package memory, so every byte entering or
//! leaving the package crosses the links around the global set. Four
//! placements are supported:
//!
//! * `A` — a single global chiplet in the corner at (0, 0);
//! * `B` — one global chiplet per row, along column 0;
//! * `C` — a single global chiplet at the grid center (stacked memory);
//! * `D` — the union of `B` and `C`.
//!
//! Every chiplet is assigned to its nearest global chiplet (Manhattan
//! distance, ties resolved toward the lowest row then lowest column), and
//! its *local index* is the pair of absolute row/column offsets toward that
//! global. All hop formulas are expressed in local indices.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid coordinate: (row, column).
pub type Coord = (usize, usize);

/// Global-chiplet placement variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GridType {
    /// One global chiplet in the corner at (0, 0).
    A,
    /// One global chiplet per row, along column 0.
    B,
    /// One global chiplet at the center (stacked memory attach).
    C,
    /// Union of `B` and `C`.
    D,
}

impl std::fmt::Display for GridType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GridType::A => write!(f, "A"),
            GridType::B => write!(f, "B"),
            GridType::C => write!(f, "C"),
            GridType::D => write!(f, "D"),
        }
    }
}

/// How a global chiplet connects to off-package memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttachKind {
    /// Edge attach over an interposer link; transfers from memory spend one
    /// extra link hop before entering the mesh.
    Interposer,
    /// Memory stacked directly on the global chiplet; no extra link hop.
    Stacked,
}

/// Mesh shape and link options.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridSpec {
    /// Number of rows (X).
    pub x: usize,
    /// Number of columns (Y).
    pub y: usize,
    /// Global-chiplet placement.
    pub grid_type: GridType,
    /// Whether unit-cell diagonal links are populated.
    pub diagonal_links: bool,
}

impl GridSpec {
    pub fn new(x: usize, y: usize, grid_type: GridType, diagonal_links: bool) -> Self {
        GridSpec { x, y, grid_type, diagonal_links }
    }
}

/// Data-distribution strategies whose delivery cost is counted in hops.
///
/// `LowBw` models the contention-free case where the off-package link is the
/// bottleneck and data trickles to each chiplet along a shortest path.
/// `RowShared`/`ColShared` model broadcast of data shared by a whole grid
/// row/column under the farthest-first issue order, which adds a waiting
/// term for the rows/columns issued earlier. `DiagonalShared` routes
/// row-shared data over the diagonal links instead of the first column.
/// `NonShared` transfers are bandwidth-bound across the entry links, so
/// their hop count is only used for route validation, never for cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HopStrategy {
    LowBw,
    RowShared,
    ColShared,
    DiagonalShared,
    NonShared,
}

impl HopStrategy {
    /// All strategies, in a stable order.
    pub const ALL: [HopStrategy; 5] = [
        HopStrategy::LowBw,
        HopStrategy::RowShared,
        HopStrategy::ColShared,
        HopStrategy::DiagonalShared,
        HopStrategy::NonShared,
    ];
}

/// A built package topology.
#[derive(Debug, Clone)]
pub struct Topology {
    spec: GridSpec,
    globals: Vec<Coord>,
    /// Assigned global per chiplet, row-major.
    assigned: Vec<Coord>,
    /// Local index per chiplet, row-major.
    local: Vec<(usize, usize)>,
    entry_links: usize,
    /// Diagonal links with normalized (lexicographically smaller first)
    /// endpoints. Empty when `spec.diagonal_links` is false.
    diagonals: BTreeSet<(Coord, Coord)>,
}

impl Topology {
    /// Builds the topology for `spec`.
    pub fn build(spec: GridSpec) -> Result<Topology> {
        if spec.x == 0 || spec.y == 0 {
            return Err(Error::InvalidWorkload(format!(
                "grid must be at least 1x1, got {}x{}",
                spec.x, spec.y
            )));
        }
        let globals = global_positions(&spec);
        let mut assigned = Vec::with_capacity(spec.x * spec.y);
        let mut local = Vec::with_capacity(spec.x * spec.y);
        for r in 0..spec.x {
            for c in 0..spec.y {
                let g = nearest_global(&globals, (r, c));
                assigned.push(g);
                local.push((r.abs_diff(g.0), c.abs_diff(g.1)));
            }
        }
        let diagonals = if spec.diagonal_links {
            diagonal_link_set(&spec, &globals, &assigned)
        } else {
            BTreeSet::new()
        };
        let entry_links = count_entry_links(&spec, &globals, &diagonals);
        Ok(Topology { spec, globals, assigned, local, entry_links, diagonals })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// Global chiplet positions, sorted by (row, column).
    pub fn globals(&self) -> &[Coord] {
        &self.globals
    }

    /// Number of mesh links (plus diagonal links, when enabled) that cross
    /// from the global set into the rest of the grid. This is the package's
    /// effective fan-out for collection and non-shared transfers.
    pub fn entry_links(&self) -> usize {
        self.entry_links
    }

    /// Iterates all chiplet coordinates in row-major order.
    pub fn chiplets(&self) -> impl Iterator<Item = Coord> + '_ {
        let y = self.spec.y;
        (0..self.spec.x * self.spec.y).map(move |i| (i / y, i % y))
    }

    fn index_of(&self, chiplet: Coord) -> Result<usize> {
        if chiplet.0 >= self.spec.x || chiplet.1 >= self.spec.y {
            return Err(Error::ChipletOutsideGrid {
                row: chiplet.0,
                col: chiplet.1,
                x: self.spec.x,
                y: self.spec.y,
            });
        }
        Ok(chiplet.0 * self.spec.y + chiplet.1)
    }

    /// The global chiplet assigned to `chiplet`.
    pub fn global_of(&self, chiplet: Coord) -> Result<Coord> {
        Ok(self.assigned[self.index_of(chiplet)?])
    }

    /// Absolute (row, column) offsets from `chiplet` toward its assigned
    /// global chiplet. Global chiplets map to (0, 0).
    pub fn local_index(&self, chiplet: Coord) -> Result<(usize, usize)> {
        Ok(self.local[self.index_of(chiplet)?])
    }

    /// Whether `chiplet` is a global chiplet.
    pub fn is_global(&self, chiplet: Coord) -> bool {
        self.globals.binary_search(&chiplet).is_ok()
    }

    /// How `global` connects to memory. Row-periphery globals sit on the
    /// package edge behind an interposer link; central globals carry stacked
    /// memory with no extra link hop.
    pub fn attach_kind(&self, global: Coord) -> AttachKind {
        match self.spec.grid_type {
            GridType::A | GridType::B => AttachKind::Interposer,
            GridType::C => AttachKind::Stacked,
            GridType::D => {
                if global.1 == 0 {
                    AttachKind::Interposer
                } else {
                    AttachKind::Stacked
                }
            }
        }
    }

    /// Delivery cost in hops for one chunk of data reaching `chiplet` under
    /// `strategy`, counting both transit links and the waiting slots imposed
    /// by the farthest-first issue order of shared transfers.
    ///
    /// With diagonal links enabled, `RowShared` returns the cheaper of the
    /// first-column route and the diagonal route, since the two use disjoint
    /// link sets and can be chosen per chiplet.
    pub fn hops(&self, chiplet: Coord, strategy: HopStrategy) -> Result<u64> {
        let (x, y) = self.local_index(chiplet)?;
        let big_x = self.spec.x;
        let big_y = self.spec.y;
        let row_shared = (big_x + y) as u64;
        let diag_shared = (big_x - x + x.max(y)) as u64;
        Ok(match strategy {
            HopStrategy::LowBw | HopStrategy::NonShared => (x + y) as u64,
            HopStrategy::RowShared => {
                if self.spec.diagonal_links {
                    row_shared.min(diag_shared)
                } else {
                    row_shared
                }
            }
            HopStrategy::ColShared => (big_y + x) as u64,
            HopStrategy::DiagonalShared => diag_shared,
        })
    }

    /// Whether the normalized pair (a, b) is a populated diagonal link.
    pub fn has_diagonal(&self, a: Coord, b: Coord) -> bool {
        self.diagonals.contains(&normalize(a, b))
    }

    /// All populated diagonal links, normalized and sorted.
    pub fn diagonal_links(&self) -> impl Iterator<Item = (Coord, Coord)> + '_ {
        self.diagonals.iter().copied()
    }

    /// Orthogonal mesh neighbors of `chiplet`.
    pub fn mesh_neighbors(&self, chiplet: Coord) -> Vec<Coord> {
        let (r, c) = chiplet;
        let mut out = Vec::with_capacity(4);
        if r > 0 {
            out.push((r - 1, c));
        }
        if r + 1 < self.spec.x {
            out.push((r + 1, c));
        }
        if c > 0 {
            out.push((r, c - 1));
        }
        if c + 1 < self.spec.y {
            out.push((r, c + 1));
        }
        out
    }

    /// Neighbors over mesh links plus populated diagonal links.
    pub fn all_neighbors(&self, chiplet: Coord) -> Vec<Coord> {
        let mut out = self.mesh_neighbors(chiplet);
        let (r, c) = chiplet;
        let mut candidates = Vec::with_capacity(4);
        if r > 0 && c > 0 {
            candidates.push((r - 1, c - 1));
        }
        if r > 0 && c + 1 < self.spec.y {
            candidates.push((r - 1, c + 1));
        }
        if r + 1 < self.spec.x && c > 0 {
            candidates.push((r + 1, c - 1));
        }
        if r + 1 < self.spec.x && c + 1 < self.spec.y {
            candidates.push((r + 1, c + 1));
        }
        for n in candidates {
            if self.has_diagonal(chiplet, n) {
                out.push(n);
            }
        }
        out
    }
}

fn normalize(a: Coord, b: Coord) -> (Coord, Coord) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn global_positions(spec: &GridSpec) -> Vec<Coord> {
    let mut globals: Vec<Coord> = match spec.grid_type {
        GridType::A => vec![(0, 0)],
        GridType::B => (0..spec.x).map(|r| (r, 0)).collect(),
        GridType::C => vec![(spec.x / 2, spec.y / 2)],
        GridType::D => {
            let mut v: Vec<Coord> = (0..spec.x).map(|r| (r, 0)).collect();
            v.push((spec.x / 2, spec.y / 2));
            v
        }
    };
    globals.sort();
    globals.dedup();
    globals
}

/// Nearest global by Manhattan distance; ties go to the global with the
/// lowest row, then the lowest column. `globals` is sorted, so the first
/// minimum found is the tie winner.
fn nearest_global(globals: &[Coord], chiplet: Coord) -> Coord {
    let mut best = globals[0];
    let mut best_d = usize::MAX;
    for &g in globals {
        let d = g.0.abs_diff(chiplet.0) + g.1.abs_diff(chiplet.1);
        if d < best_d {
            best_d = d;
            best = g;
        }
    }
    best
}

/// Populates one diagonal per unit cell, oriented away from the global
/// region that owns the cell (judged by the cell's low corner): when the
/// outward direction has matching row/column signs the main diagonal is
/// used, otherwise the anti diagonal. This is the orientation the diagonal
/// routes need, so only it is populated.
fn diagonal_link_set(
    spec: &GridSpec,
    _globals: &[Coord],
    assigned: &[Coord],
) -> BTreeSet<(Coord, Coord)> {
    let mut set = BTreeSet::new();
    for r in 0..spec.x.saturating_sub(1) {
        for c in 0..spec.y.saturating_sub(1) {
            let g = assigned[r * spec.y + c];
            let sr = if r >= g.0 { 1i8 } else { -1 };
            let sc = if c >= g.1 { 1i8 } else { -1 };
            let link = if sr == sc {
                normalize((r, c), (r + 1, c + 1))
            } else {
                normalize((r + 1, c), (r, c + 1))
            };
            set.insert(link);
        }
    }
    set
}

/// Counts links with exactly one endpoint in the global set: mesh links
/// always, diagonal links when populated. Links joining two globals are
/// internal to the set and carry no entering traffic.
fn count_entry_links(
    spec: &GridSpec,
    globals: &[Coord],
    diagonals: &BTreeSet<(Coord, Coord)>,
) -> usize {
    let is_global = |c: Coord| globals.binary_search(&c).is_ok();
    let mut count = 0;
    for &(r, c) in globals {
        let mut neighbors = Vec::new();
        if r > 0 {
            neighbors.push((r - 1, c));
        }
        if r + 1 < spec.x {
            neighbors.push((r + 1, c));
        }
        if c > 0 {
            neighbors.push((r, c - 1));
        }
        if c + 1 < spec.y {
            neighbors.push((r, c + 1));
        }
        for n in neighbors {
            if !is_global(n) {
                count += 1;
            }
        }
    }
    for &(a, b) in diagonals {
        let a_g = is_global(a);
        let b_g = is_global(b);
        if a_g != b_g {
            count += 1;
        }
    }
    count
}
