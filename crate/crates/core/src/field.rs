//! Cell-centred fields and the volume-weighted inner product.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::StructuredGrid;
use crate::scalar::Real;

/// Physical variable carried by a field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variable {
    #[serde(rename = "u")]
    U,
    #[serde(rename = "v")]
    V,
    #[serde(rename = "w")]
    W,
    #[serde(rename = "p")]
    P,
    #[serde(rename = "nu_t")]
    NuT,
}

impl Variable {
    pub fn as_str(self) -> &'static str {
        match self {
            Variable::U => "u",
            Variable::V => "v",
            Variable::W => "w",
            Variable::P => "p",
            Variable::NuT => "nu_t",
        }
    }

    /// Velocity component labels in axis order.
    pub fn velocity(axis: usize) -> Variable {
        [Variable::U, Variable::V, Variable::W][axis]
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "u" => Ok(Variable::U),
            "v" => Ok(Variable::V),
            "w" => Ok(Variable::W),
            "p" => Ok(Variable::P),
            "nu_t" => Ok(Variable::NuT),
            _ => Err(Error::config(format!("unknown variable '{s}'"))),
        }
    }
}

/// One value per fluid cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T> {
    pub label: Variable,
    pub values: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn new(label: Variable, values: Vec<T>) -> Self {
        Field { label, values }
    }

    pub fn zeros(label: Variable, n: usize) -> Self {
        Field {
            label,
            values: vec![T::zero(); n],
        }
    }

    pub fn constant(label: Variable, n: usize, value: T) -> Self {
        Field {
            label,
            values: vec![value; n],
        }
    }

    /// Samples `f(x, y)` at the fluid cell centres.
    pub fn from_fn(label: Variable, grid: &StructuredGrid<T>, f: impl Fn(T, T) -> T) -> Self {
        let values = (0..grid.n_fluid())
            .map(|c| {
                let (x, y) = grid.cell_center(c);
                f(x, y)
            })
            .collect();
        Field { label, values }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_grid(&self, grid: &StructuredGrid<T>) -> Result<()> {
        if self.values.len() != grid.n_fluid() {
            return Err(Error::dim(format!(
                "field '{}' has {} values, grid has {} fluid cells",
                self.label,
                self.values.len(),
                grid.n_fluid()
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, s: T) -> Self {
        Field {
            label: self.label,
            values: self.values.iter().map(|&v| v * s).collect(),
        }
    }
}

/// A tuple of component fields sharing a grid (velocity, gradients).
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField<T> {
    pub components: Vec<Field<T>>,
}

impl<T: Real> VectorField<T> {
    pub fn new(components: Vec<Field<T>>) -> Self {
        VectorField { components }
    }

    /// Velocity field of `d` zero components.
    pub fn zeros(d: usize, n: usize) -> Self {
        VectorField {
            components: (0..d).map(|a| Field::zeros(Variable::velocity(a), n)).collect(),
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn n_cells(&self) -> usize {
        self.components.first().map_or(0, |c| c.len())
    }

    /// Components concatenated in axis order.
    pub fn stacked(&self) -> Vec<T> {
        self.components
            .iter()
            .flat_map(|c| c.values.iter().copied())
            .collect()
    }

    /// Inverse of [`VectorField::stacked`].
    pub fn from_stacked(d: usize, data: &[T]) -> Result<Self> {
        if d == 0 || !data.len().is_multiple_of(d) {
            return Err(Error::dim(format!(
                "{} values cannot be split into {d} components",
                data.len()
            )));
        }
        let n = data.len() / d;
        Ok(VectorField {
            components: (0..d)
                .map(|a| Field::new(Variable::velocity(a), data[a * n..(a + 1) * n].to_vec()))
                .collect(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(|c| c.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.components
            .iter()
            .fold(T::zero(), |m, c| m.max(c.max_abs()))
    }
}

/// Volume-weighted inner product `Σ_c w_c f_c g_c`.
pub fn inner_product<T: Real>(f: &Field<T>, g: &Field<T>, grid: &StructuredGrid<T>) -> Result<T> {
    f.check_grid(grid)?;
    g.check_grid(grid)?;
    Ok(weighted_dot(&f.values, &g.values, grid.cell_volumes()))
}

/// Inner product of vector fields: sum of the component inner products.
pub fn vector_inner_product<T: Real>(
    f: &VectorField<T>,
    g: &VectorField<T>,
    grid: &StructuredGrid<T>,
) -> Result<T> {
    if f.dim() != g.dim() {
        return Err(Error::dim(format!(
            "vector fields with {} and {} components",
            f.dim(),
            g.dim()
        )));
    }
    let mut s = T::zero();
    for (a, b) in f.components.iter().zip(&g.components) {
        s += inner_product(a, b, grid)?;
    }
    Ok(s)
}

/// Weighted dot product of stacked data; `weights` repeats per component
/// when the data is longer than the weight vector.
#[inline]
pub fn weighted_dot<T: Real>(a: &[T], b: &[T], weights: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let n = weights.len();
    let mut s = T::zero();
    for (k, (&x, &y)) in a.iter().zip(b).enumerate() {
        s += weights[k % n] * x * y;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid2() -> StructuredGrid<f64> {
        StructuredGrid::new(2, 1, 0.5, 1.0, true, true).unwrap()
    }

    #[test]
    fn ones_give_volume() {
        let g = StructuredGrid::<f64>::new(5, 4, 0.2, 0.3, false, false).unwrap();
        let one = Field::constant(Variable::P, g.n_fluid(), 1.0);
        let v = inner_product(&one, &one, &g).unwrap();
        assert!((v - g.total_volume()).abs() < 1e-14);
    }

    #[test]
    fn hand_sum() {
        let g = grid2();
        let f = Field::new(Variable::U, vec![1.0, 2.0]);
        let h = Field::new(Variable::U, vec![3.0, 4.0]);
        assert_eq!(inner_product(&f, &h, &g).unwrap(), 5.5);
        let z = Field::zeros(Variable::U, 2);
        assert_eq!(inner_product(&f, &z, &g).unwrap(), 0.0);
    }

    #[test]
    fn mismatch_is_dimension_error() {
        let g = grid2();
        let f = Field::new(Variable::U, vec![1.0, 2.0, 3.0]);
        assert!(matches!(inner_product(&f, &f, &g), Err(Error::Dimension(_))));
    }

    #[test]
    fn stacking_round_trips() {
        let v = VectorField::new(vec![
            Field::new(Variable::U, vec![1.0, 2.0]),
            Field::new(Variable::V, vec![3.0, 4.0]),
        ]);
        assert_eq!(VectorField::from_stacked(2, &v.stacked()).unwrap(), v);
    }

    proptest! {
        #[test]
        fn inner_product_is_symmetric_bilinear_positive(
            a in proptest::collection::vec(-10.0f64..10.0, 12),
            b in proptest::collection::vec(-10.0f64..10.0, 12),
            s in -3.0f64..3.0,
        ) {
            let g = StructuredGrid::<f64>::new(4, 3, 0.3, 0.7, false, true).unwrap();
            let f = Field::new(Variable::P, a.clone());
            let h = Field::new(Variable::P, b.clone());
            let fh = inner_product(&f, &h, &g).unwrap();
            let hf = inner_product(&h, &f, &g).unwrap();
            prop_assert!((fh - hf).abs() <= 1e-12 * (1.0 + fh.abs()));
            let sf = f.scaled(s);
            let lhs = inner_product(&sf, &h, &g).unwrap();
            prop_assert!((lhs - s * fh).abs() <= 1e-10 * (1.0 + fh.abs()));
            let ff = inner_product(&f, &f, &g).unwrap();
            if a.iter().any(|&x| x != 0.0) {
                prop_assert!(ff > 0.0);
            }
        }
    }
}
