//! Structured Cartesian grids with masked solid cells.
//!
//! Cells are indexed `(i, j)` with `i` along x and `j` along y. Only fluid
//! cells carry unknowns; they are numbered compactly in row-major order and
//! every [`crate::Field`] stores one value per fluid cell. A one-dimensional
//! grid is a grid with `ny = 1` that is periodic in y, so y-differences
//! vanish identically.
//!
//! Domains have unit depth: face "areas" are lengths and volumes are areas.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Labels of the boundaries a grid can carry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryLabel {
    West,
    East,
    South,
    North,
    Body,
}

impl BoundaryLabel {
    pub const ALL: [BoundaryLabel; 5] = [
        BoundaryLabel::West,
        BoundaryLabel::East,
        BoundaryLabel::South,
        BoundaryLabel::North,
        BoundaryLabel::Body,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryLabel::West => "west",
            BoundaryLabel::East => "east",
            BoundaryLabel::South => "south",
            BoundaryLabel::North => "north",
            BoundaryLabel::Body => "body",
        }
    }
}

impl fmt::Display for BoundaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BoundaryLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BoundaryLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown boundary label '{s}'")))
    }
}

/// Boundary condition for one scalar component.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition<T> {
    FixedValue(T),
    ZeroGradient,
    Periodic,
}

impl<T: Real> BoundaryCondition<T> {
    /// Value of the ghost cell mirrored across the face from an interior
    /// value `inner`. Affine in `inner`.
    #[inline]
    pub fn ghost(&self, inner: T) -> T {
        match *self {
            BoundaryCondition::FixedValue(g) => g + g - inner,
            BoundaryCondition::ZeroGradient => inner,
            // periodic sides never produce boundary neighbours
            BoundaryCondition::Periodic => inner,
        }
    }

    /// Same condition with the prescribed value set to zero.
    pub fn homogeneous(&self) -> Self {
        match *self {
            BoundaryCondition::FixedValue(_) => BoundaryCondition::FixedValue(T::zero()),
            other => other,
        }
    }

    pub fn cast<U: Real>(&self) -> BoundaryCondition<U> {
        match *self {
            BoundaryCondition::FixedValue(g) => BoundaryCondition::FixedValue(U::lit(g.as_f64())),
            BoundaryCondition::ZeroGradient => BoundaryCondition::ZeroGradient,
            BoundaryCondition::Periodic => BoundaryCondition::Periodic,
        }
    }
}

/// Boundary conditions of one scalar component, keyed by boundary label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundarySpec<T> {
    conditions: BTreeMap<BoundaryLabel, BoundaryCondition<T>>,
}

impl<T: Real> Default for BoundarySpec<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> BoundarySpec<T> {
    pub fn new() -> Self {
        BoundarySpec {
            conditions: BTreeMap::new(),
        }
    }

    /// Spec for a grid without any boundary faces.
    pub fn periodic() -> Self {
        Self::new()
    }

    pub fn with(mut self, label: BoundaryLabel, bc: BoundaryCondition<T>) -> Self {
        self.conditions.insert(label, bc);
        self
    }

    /// Builds a spec from textual labels, rejecting unknown ones.
    pub fn from_pairs<'a>(
        pairs: impl IntoIterator<Item = (&'a str, BoundaryCondition<T>)>,
    ) -> Result<Self> {
        let mut spec = Self::new();
        for (name, bc) in pairs {
            spec.conditions.insert(name.parse()?, bc);
        }
        Ok(spec)
    }

    pub fn get(&self, label: BoundaryLabel) -> Option<&BoundaryCondition<T>> {
        self.conditions.get(&label)
    }

    pub fn iter(&self) -> impl Iterator<Item = (BoundaryLabel, &BoundaryCondition<T>)> {
        self.conditions.iter().map(|(l, c)| (*l, c))
    }

    /// Same spec with every prescribed value zeroed; used for fluctuation
    /// fields whose boundary values are absorbed into a mean.
    pub fn homogeneous(&self) -> Self {
        BoundarySpec {
            conditions: self
                .conditions
                .iter()
                .map(|(l, c)| (*l, c.homogeneous()))
                .collect(),
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        self.conditions
            .values()
            .all(|c| !matches!(c, BoundaryCondition::FixedValue(g) if *g != T::zero()))
    }

    /// Checks that every boundary label the grid carries has a usable
    /// condition and that no periodic condition is set on a bounded side.
    pub fn validate(&self, grid: &StructuredGrid<T>) -> Result<()> {
        for label in grid.boundary_labels() {
            match self.conditions.get(&label) {
                None => {
                    return Err(Error::config(format!(
                        "no boundary condition for label '{label}'"
                    )))
                }
                Some(BoundaryCondition::Periodic) => {
                    return Err(Error::config(format!(
                        "periodic condition on non-periodic boundary '{label}'"
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn condition(&self, label: BoundaryLabel) -> &BoundaryCondition<T> {
        self.conditions
            .get(&label)
            .unwrap_or(&BoundaryCondition::ZeroGradient)
    }

    pub fn cast<U: Real>(&self) -> BoundarySpec<U> {
        BoundarySpec {
            conditions: self.conditions.iter().map(|(l, c)| (*l, c.cast())).collect(),
        }
    }
}

/// Boundary conditions of a flow: one spec per velocity component plus the
/// kinematic pressure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowBoundaries<T> {
    pub velocity: Vec<BoundarySpec<T>>,
    pub pressure: BoundarySpec<T>,
}

impl<T: Real> FlowBoundaries<T> {
    /// Builds the pressure spec that makes the discrete pressure gradient
    /// the negative adjoint of the homogeneous velocity divergence: a
    /// prescribed normal velocity pairs with zero-gradient pressure, a
    /// zero-gradient normal velocity with `p = 0`.
    pub fn with_dual_pressure(velocity: Vec<BoundarySpec<T>>) -> Result<Self> {
        let mut pressure = BoundarySpec::new();
        let normal_axis = |label: BoundaryLabel| match label {
            BoundaryLabel::West | BoundaryLabel::East => Some(0),
            BoundaryLabel::South | BoundaryLabel::North => Some(1),
            BoundaryLabel::Body => None,
        };
        for label in BoundaryLabel::ALL {
            let bc = match normal_axis(label) {
                Some(axis) if axis < velocity.len() => velocity[axis].get(label).copied(),
                Some(_) => None,
                None => {
                    let first = velocity.first().and_then(|s| s.get(label).copied());
                    let same_kind = velocity.iter().all(|s| {
                        s.get(label).map(std::mem::discriminant)
                            == first.as_ref().map(std::mem::discriminant)
                    });
                    if !same_kind {
                        return Err(Error::config(
                            "body condition must have the same kind for every velocity component",
                        ));
                    }
                    first
                }
            };
            let dual = match bc {
                None => continue,
                Some(BoundaryCondition::FixedValue(_)) => BoundaryCondition::ZeroGradient,
                Some(BoundaryCondition::ZeroGradient) => BoundaryCondition::FixedValue(T::zero()),
                Some(BoundaryCondition::Periodic) => BoundaryCondition::Periodic,
            };
            pressure = pressure.with(label, dual);
        }
        Ok(FlowBoundaries { velocity, pressure })
    }

    /// Fully periodic flow of `d` components.
    pub fn periodic(d: usize) -> Self {
        FlowBoundaries {
            velocity: vec![BoundarySpec::periodic(); d],
            pressure: BoundarySpec::periodic(),
        }
    }

    pub fn validate(&self, grid: &StructuredGrid<T>) -> Result<()> {
        for v in &self.velocity {
            v.validate(grid)?;
        }
        self.pressure.validate(grid)
    }

    /// Velocity specs with prescribed values zeroed.
    pub fn homogeneous_velocity(&self) -> Vec<BoundarySpec<T>> {
        self.velocity.iter().map(|s| s.homogeneous()).collect()
    }

    pub fn cast<U: Real>(&self) -> FlowBoundaries<U> {
        FlowBoundaries {
            velocity: self.velocity.iter().map(|s| s.cast()).collect(),
            pressure: self.pressure.cast(),
        }
    }
}

/// Fluid properties.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluidConstants<T> {
    /// Density [kg/m³].
    pub rho: T,
    /// Molecular kinematic viscosity [m²/s].
    pub nu_m: T,
}

impl<T: Real> FluidConstants<T> {
    pub fn new(rho: T, nu_m: T) -> Result<Self> {
        if !(rho > T::zero()) || !(nu_m > T::zero()) {
            return Err(Error::config(format!(
                "fluid constants must be positive (rho = {rho}, nu_m = {nu_m})"
            )));
        }
        Ok(FluidConstants { rho, nu_m })
    }
}

/// Face directions of a cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    East = 0,
    West = 1,
    North = 2,
    South = 3,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::East,
        Direction::West,
        Direction::North,
        Direction::South,
    ];

    /// Axis (0 = x, 1 = y) and sign of the outward normal.
    pub fn axis_sign(self) -> (usize, i32) {
        match self {
            Direction::East => (0, 1),
            Direction::West => (0, -1),
            Direction::North => (1, 1),
            Direction::South => (1, -1),
        }
    }
}

/// What lies across a cell face.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Neighbor {
    Cell(usize),
    Boundary(BoundaryLabel),
}

/// A face on a domain or body boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryFace<T> {
    /// Area vector pointing out of the fluid [m² per unit depth].
    pub area: [T; 2],
    /// Adjacent fluid cell.
    pub cell: usize,
    pub label: BoundaryLabel,
    pub direction: Direction,
}

/// Axis-aligned block of solid cells, half-open index ranges.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellRect {
    pub i0: usize,
    pub i1: usize,
    pub j0: usize,
    pub j1: usize,
}

/// Serializable description of a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub periodic_x: bool,
    pub periodic_y: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obstacle: Option<CellRect>,
}

impl GridSpec {
    pub fn build<T: Real>(&self) -> Result<StructuredGrid<T>> {
        let mut solid = vec![false; self.nx * self.ny];
        if let Some(r) = self.obstacle {
            if r.i1 > self.nx || r.j1 > self.ny || r.i0 >= r.i1 || r.j0 >= r.j1 {
                return Err(Error::config(format!("obstacle {r:?} outside grid")));
            }
            for j in r.j0..r.j1 {
                for i in r.i0..r.i1 {
                    solid[j * self.nx + i] = true;
                }
            }
        }
        StructuredGrid::from_mask(
            self.nx,
            self.ny,
            T::lit(self.dx),
            T::lit(self.dy),
            self.periodic_x,
            self.periodic_y,
            solid,
        )
    }
}

/// Uniform structured grid with a fluid/solid cell mask.
#[derive(Clone, Debug)]
pub struct StructuredGrid<T> {
    nx: usize,
    ny: usize,
    dx: T,
    dy: T,
    periodic_x: bool,
    periodic_y: bool,
    solid: Vec<bool>,
    fluid_index: Vec<Option<usize>>,
    cells: Vec<(usize, usize)>,
    neighbors: Vec<[Neighbor; 4]>,
    boundary_faces: Vec<BoundaryFace<T>>,
    cell_volumes: Vec<T>,
}

impl<T: Real> StructuredGrid<T> {
    /// Grid without solid cells.
    pub fn new(
        nx: usize,
        ny: usize,
        dx: T,
        dy: T,
        periodic_x: bool,
        periodic_y: bool,
    ) -> Result<Self> {
        Self::from_mask(nx, ny, dx, dy, periodic_x, periodic_y, vec![false; nx * ny])
    }

    /// Periodic one-dimensional grid of `n` cells covering `length`.
    pub fn periodic_line(n: usize, length: T) -> Result<Self> {
        Self::new(n, 1, length / T::count(n), T::one(), true, true)
    }

    pub fn from_mask(
        nx: usize,
        ny: usize,
        dx: T,
        dy: T,
        periodic_x: bool,
        periodic_y: bool,
        solid: Vec<bool>,
    ) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::config("grid needs at least one cell per axis"));
        }
        if !(dx > T::zero()) || !(dy > T::zero()) {
            return Err(Error::config("cell sizes must be positive"));
        }
        if solid.len() != nx * ny {
            return Err(Error::dim("solid mask length differs from cell count"));
        }
        let mut fluid_index = vec![None; nx * ny];
        let mut cells = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                if !solid[j * nx + i] {
                    fluid_index[j * nx + i] = Some(cells.len());
                    cells.push((i, j));
                }
            }
        }
        if cells.is_empty() {
            return Err(Error::config("grid has no fluid cells"));
        }

        let mut neighbors = Vec::with_capacity(cells.len());
        let mut boundary_faces = Vec::new();
        for (c, &(i, j)) in cells.iter().enumerate() {
            let mut nb = [Neighbor::Boundary(BoundaryLabel::Body); 4];
            for dir in Direction::ALL {
                let (axis, sign) = dir.axis_sign();
                let (n_axis, periodic, pos) = if axis == 0 {
                    (nx, periodic_x, i)
                } else {
                    (ny, periodic_y, j)
                };
                let target = pos as i64 + sign as i64;
                let domain_label = match dir {
                    Direction::East => BoundaryLabel::East,
                    Direction::West => BoundaryLabel::West,
                    Direction::North => BoundaryLabel::North,
                    Direction::South => BoundaryLabel::South,
                };
                let wrapped = if target < 0 || target >= n_axis as i64 {
                    if periodic {
                        Some(target.rem_euclid(n_axis as i64) as usize)
                    } else {
                        None
                    }
                } else {
                    Some(target as usize)
                };
                nb[dir as usize] = match wrapped {
                    None => Neighbor::Boundary(domain_label),
                    Some(t) => {
                        let (ti, tj) = if axis == 0 { (t, j) } else { (i, t) };
                        match fluid_index[tj * nx + ti] {
                            Some(k) => Neighbor::Cell(k),
                            None => Neighbor::Boundary(BoundaryLabel::Body),
                        }
                    }
                };
                if let Neighbor::Boundary(label) = nb[dir as usize] {
                    let len = if axis == 0 { dy } else { dx };
                    let s = if sign > 0 { len } else { -len };
                    let area = if axis == 0 {
                        [s, T::zero()]
                    } else {
                        [T::zero(), s]
                    };
                    boundary_faces.push(BoundaryFace {
                        area,
                        cell: c,
                        label,
                        direction: dir,
                    });
                }
            }
            neighbors.push(nb);
        }
        let vol = dx * dy;
        let cell_volumes = vec![vol; cells.len()];
        Ok(StructuredGrid {
            nx,
            ny,
            dx,
            dy,
            periodic_x,
            periodic_y,
            solid,
            fluid_index,
            cells,
            neighbors,
            boundary_faces,
            cell_volumes,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn dx(&self) -> T {
        self.dx
    }
    pub fn dy(&self) -> T {
        self.dy
    }
    pub fn periodic_x(&self) -> bool {
        self.periodic_x
    }
    pub fn periodic_y(&self) -> bool {
        self.periodic_y
    }

    /// Spacing along an axis.
    #[inline]
    pub fn spacing(&self, axis: usize) -> T {
        if axis == 0 {
            self.dx
        } else {
            self.dy
        }
    }

    /// Number of fluid cells (unknowns per scalar field).
    #[inline]
    pub fn n_fluid(&self) -> usize {
        self.cells.len()
    }

    pub fn is_fully_periodic(&self) -> bool {
        self.periodic_x && self.periodic_y && self.boundary_faces.is_empty()
    }

    pub fn is_solid(&self, i: usize, j: usize) -> bool {
        self.solid[j * self.nx + i]
    }

    pub fn fluid_index(&self, i: usize, j: usize) -> Option<usize> {
        self.fluid_index[j * self.nx + i]
    }

    /// `(i, j)` of a fluid cell.
    #[inline]
    pub fn cell_ij(&self, c: usize) -> (usize, usize) {
        self.cells[c]
    }

    /// Cell-centre coordinates with the origin at the lower-left corner.
    pub fn cell_center(&self, c: usize) -> (T, T) {
        let (i, j) = self.cells[c];
        let half = T::lit(0.5);
        (
            (T::count(i) + half) * self.dx,
            (T::count(j) + half) * self.dy,
        )
    }

    #[inline]
    pub fn neighbor(&self, c: usize, dir: Direction) -> Neighbor {
        self.neighbors[c][dir as usize]
    }

    #[inline]
    pub fn neighbors(&self, c: usize) -> &[Neighbor; 4] {
        &self.neighbors[c]
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace<T>] {
        &self.boundary_faces
    }

    pub fn faces_with_label(&self, label: BoundaryLabel) -> impl Iterator<Item = &BoundaryFace<T>> {
        self.boundary_faces.iter().filter(move |f| f.label == label)
    }

    /// Labels that actually occur on this grid, sorted.
    pub fn boundary_labels(&self) -> Vec<BoundaryLabel> {
        let mut labels: Vec<_> = self.boundary_faces.iter().map(|f| f.label).collect();
        labels.sort();
        labels.dedup();
        labels
    }

    pub fn cell_volumes(&self) -> &[T] {
        &self.cell_volumes
    }

    pub fn total_volume(&self) -> T {
        self.cell_volumes.iter().fold(T::zero(), |a, &v| a + v)
    }

    /// Number of spatial dimensions carrying non-trivial differences.
    pub fn dimension(&self) -> usize {
        if self.ny == 1 && self.periodic_y {
            1
        } else {
            2
        }
    }
}
