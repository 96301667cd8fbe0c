use crate::error::{Error, Result};
use crate::grid::{BoundarySpec, FlowBoundaries, StructuredGrid};
use crate::ops::{convection_into, diffusion_into, divergence_into, gradient_into, ConvectionScheme};
use crate::scalar::Real;

/// Boundary treatment of a stacked field: the mean carries the prescribed
/// values, fluctuation modes the homogeneous ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lift {
    Full,
    Homogeneous,
}

/// Discrete operators applied to stacked velocity fields, exactly the ones
/// the full-order solver uses (with skew-symmetric convection).
#[derive(Clone, Debug)]
pub struct FlowOperators<T> {
    grid: StructuredGrid<T>,
    full: FlowBoundaries<T>,
    homogeneous: Vec<BoundarySpec<T>>,
    d: usize,
}

impl<T: Real> FlowOperators<T> {
    pub fn new(grid: StructuredGrid<T>, bcs: FlowBoundaries<T>) -> Result<Self> {
        bcs.validate(&grid)?;
        let d = bcs.velocity.len();
        if d < grid.dimension() || d > 2 {
            return Err(Error::dim(format!(
                "{d} velocity components on a {}-D grid",
                grid.dimension()
            )));
        }
        let homogeneous = bcs.homogeneous_velocity();
        Ok(FlowOperators {
            grid,
            full: bcs,
            homogeneous,
            d,
        })
    }

    pub fn grid(&self) -> &StructuredGrid<T> {
        &self.grid
    }

    pub fn n_components(&self) -> usize {
        self.d
    }

    pub fn n_cells(&self) -> usize {
        self.grid.n_fluid()
    }

    fn specs(&self, lift: Lift) -> &[BoundarySpec<T>] {
        match lift {
            Lift::Full => &self.full.velocity,
            Lift::Homogeneous => &self.homogeneous,
        }
    }

    fn split<'a>(&self, v: &'a [T]) -> Vec<&'a [T]> {
        v.chunks(self.n_cells()).collect()
    }

    pub fn check(&self, v: &[T]) -> Result<()> {
        if v.len() != self.d * self.n_cells() {
            return Err(Error::dim(format!(
                "stacked field of {} values, expected {}",
                v.len(),
                self.d * self.n_cells()
            )));
        }
        Ok(())
    }

    /// `(a·∇) b`, skew-symmetric central form.
    pub fn convection(&self, a: &[T], a_lift: Lift, b: &[T], b_lift: Lift) -> Vec<T> {
        let n = self.n_cells();
        let adv = self.split(a);
        let f = self.split(b);
        let mut out = vec![T::zero(); self.d * n];
        for (k, chunk) in out.chunks_mut(n).enumerate() {
            convection_into(
                &self.grid,
                &adv,
                self.specs(a_lift),
                f[k],
                &self.specs(b_lift)[k],
                ConvectionScheme::SkewCentral,
                chunk,
            );
        }
        out
    }

    /// `∇·(ν ∇b)` per component.
    pub fn diffusion(&self, nu: &[T], b: &[T], b_lift: Lift) -> Vec<T> {
        let n = self.n_cells();
        let f = self.split(b);
        let mut out = vec![T::zero(); self.d * n];
        for (k, chunk) in out.chunks_mut(n).enumerate() {
            diffusion_into(&self.grid, nu, f[k], &self.specs(b_lift)[k], chunk);
        }
        out
    }

    /// Central pressure gradient as a stacked field.
    pub fn pressure_gradient(&self, p: &[T]) -> Vec<T> {
        let n = self.n_cells();
        let mut g = vec![vec![T::zero(); n]; self.grid.dimension()];
        gradient_into(&self.grid, p, &self.full.pressure, &mut g);
        let mut out: Vec<T> = g.into_iter().flatten().collect();
        out.resize(self.d * n, T::zero());
        out
    }

    /// Divergence of a stacked time-derivative field (homogeneous specs).
    pub fn divergence_h(&self, f: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_cells()];
        divergence_into(&self.grid, &self.split(f)[..self.grid.dimension()], &self.homogeneous, &mut out);
        out
    }

    /// Momentum right-hand side `-(u·∇)u + ∇·(ν ∇u) - ∇p` on full fields.
    pub fn momentum_rhs(&self, u: &[T], nu: &[T], p: Option<&[T]>) -> Vec<T> {
        let conv = self.convection(u, Lift::Full, u, Lift::Full);
        let mut out = self.diffusion(nu, u, Lift::Full);
        for (o, c) in out.iter_mut().zip(conv) {
            *o -= c;
        }
        if let Some(p) = p {
            for (o, g) in out.iter_mut().zip(self.pressure_gradient(p)) {
                *o -= g;
            }
        }
        out
    }
}
