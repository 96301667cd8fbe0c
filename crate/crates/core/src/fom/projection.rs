//! Exact collocated projection.
//!
//! The pressure matrix is `A = -D G`, with `D` the central divergence under
//! homogeneous velocity conditions and `G` the central gradient under the
//! dual pressure conditions. On uniform cells `G = -Dᵀ`, so `A = D Dᵀ` is
//! symmetric positive semi-definite and a projected velocity satisfies the
//! discrete divergence constraint to the solver residual.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BoundaryCondition, BoundarySpec, Direction, FlowBoundaries, Neighbor, StructuredGrid};
use crate::ops::{divergence_into, gradient_into};
use crate::scalar::{lit, Real};

/// Pressure-solve settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoissonSettings {
    /// Relative residual target; the absolute residual is also held below it.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

fn default_tolerance() -> f64 {
    1e-8
}

fn default_max_iterations() -> usize {
    10_000
}

impl Default for PoissonSettings {
    fn default() -> Self {
        PoissonSettings {
            tolerance: default_tolerance(),
            max_iterations: default_max_iterations(),
        }
    }
}

/// Compressed sparse rows.
#[derive(Clone, Debug)]
pub(crate) struct Csr<T> {
    ptr: Vec<usize>,
    idx: Vec<usize>,
    val: Vec<T>,
}

impl<T: Real> Csr<T> {
    fn from_rows(rows: Vec<Vec<(usize, T)>>) -> Self {
        let mut ptr = Vec::with_capacity(rows.len() + 1);
        let mut idx = Vec::new();
        let mut val = Vec::new();
        ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (k, v) in row {
                if last == Some(k) {
                    *val.last_mut().expect("entry exists") += v;
                } else {
                    idx.push(k);
                    val.push(v);
                    last = Some(k);
                }
            }
            ptr.push(idx.len());
        }
        Csr { ptr, idx, val }
    }

    fn n_rows(&self) -> usize {
        self.ptr.len() - 1
    }

    fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let (a, b) = (self.ptr[r], self.ptr[r + 1]);
        self.idx[a..b].iter().copied().zip(self.val[a..b].iter().copied())
    }

    pub(crate) fn matvec(&self, x: &[T], y: &mut [T]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut s = T::zero();
            for (k, v) in self.row(r) {
                s += v * x[k];
            }
            *yr = s;
        }
    }

    fn diagonal(&self) -> Vec<T> {
        (0..self.n_rows())
            .map(|r| self.row(r).find(|e| e.0 == r).map_or(T::zero(), |e| e.1))
            .collect()
    }
}

/// Rows of the central difference along `axis` under a homogeneous spec.
fn central_rows<T: Real>(grid: &StructuredGrid<T>, axis: usize, bc: &BoundarySpec<T>) -> Vec<Vec<(usize, T)>> {
    let (plus, minus) = if axis == 0 {
        (Direction::East, Direction::West)
    } else {
        (Direction::North, Direction::South)
    };
    let inv2h = T::one() / (grid.spacing(axis) + grid.spacing(axis));
    let reflect = |label| match bc.condition(label).homogeneous() {
        BoundaryCondition::FixedValue(_) => -T::one(),
        _ => T::one(),
    };
    (0..grid.n_fluid())
        .map(|c| {
            let mut row = Vec::with_capacity(2);
            for (dir, sign) in [(plus, T::one()), (minus, -T::one())] {
                match grid.neighbor(c, dir) {
                    Neighbor::Cell(k) => row.push((k, sign * inv2h)),
                    Neighbor::Boundary(label) => row.push((c, sign * reflect(label) * inv2h)),
                }
            }
            row
        })
        .collect()
}

/// Assembled pressure operator and its solver state.
#[derive(Clone, Debug)]
pub struct PressureSolver<T> {
    matrix: Csr<T>,
    inv_diag: Vec<T>,
    settings: PoissonSettings,
    singular: bool,
}

/// Outcome of a pressure solve.
#[derive(Clone, Copy, Debug)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual: f64,
}

impl<T: Real> PressureSolver<T> {
    pub fn new(grid: &StructuredGrid<T>, bcs: &FlowBoundaries<T>, settings: PoissonSettings) -> Result<Self> {
        bcs.validate(grid)?;
        let d = grid.dimension();
        if bcs.velocity.len() < d {
            return Err(Error::dim("one velocity boundary spec per grid dimension"));
        }
        let n = grid.n_fluid();
        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
        for axis in 0..d {
            let div = central_rows(grid, axis, &bcs.velocity[axis].homogeneous());
            let grad = central_rows(grid, axis, &bcs.pressure);
            for (c, drow) in div.iter().enumerate() {
                for &(m, dv) in drow {
                    for &(k, gv) in &grad[m] {
                        rows[c].push((k, -dv * gv));
                    }
                }
            }
        }
        let matrix = Csr::from_rows(rows);
        let inv_diag = matrix
            .diagonal()
            .into_iter()
            .map(|v| if v > T::zero() { T::one() / v } else { T::one() })
            .collect();
        let singular = !bcs
            .pressure
            .iter()
            .any(|(label, bc)| matches!(bc, BoundaryCondition::FixedValue(_)) && grid.faces_with_label(label).next().is_some());
        Ok(PressureSolver {
            matrix,
            inv_diag,
            settings,
            singular,
        })
    }

    pub fn settings(&self) -> PoissonSettings {
        self.settings
    }

    /// Solves `A x = b` by Jacobi-preconditioned conjugate gradients,
    /// starting from the contents of `x`.
    pub fn solve(&self, b: &[T], x: &mut [T]) -> Result<SolveReport> {
        let n = b.len();
        let tol: T = lit(self.settings.tolerance);
        let b_norm = norm2(b);
        let threshold = (tol * b_norm.min(T::one())).max(tol * lit::<T>(1e-6));
        if b_norm == T::zero() {
            x.iter_mut().for_each(|v| *v = T::zero());
            return Ok(SolveReport {
                iterations: 0,
                residual: 0.0,
            });
        }
        let mut r = vec![T::zero(); n];
        self.matrix.matvec(x, &mut r);
        for k in 0..n {
            r[k] = b[k] - r[k];
        }
        let mut z: Vec<T> = r.iter().zip(&self.inv_diag).map(|(&a, &d)| a * d).collect();
        let mut p = z.clone();
        let mut ap = vec![T::zero(); n];
        let mut rz = dot(&r, &z);
        let mut res = norm2(&r);
        let mut it = 0;
        while res > threshold {
            if it >= self.settings.max_iterations {
                return Err(Error::Solver {
                    message: "pressure Poisson solve did not converge".into(),
                    residual: res.as_f64(),
                    iterations: it,
                });
            }
            self.matrix.matvec(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > T::zero()) {
                if res <= lit::<T>(1e3) * threshold {
                    break;
                }
                return Err(Error::Solver {
                    message: "pressure operator lost positive definiteness".into(),
                    residual: res.as_f64(),
                    iterations: it,
                });
            }
            let alpha = rz / pap;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            for k in 0..n {
                z[k] = r[k] * self.inv_diag[k];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
            res = norm2(&r);
            it += 1;
            if !res.is_finite() {
                return Err(Error::NonFinite("pressure residual".into()));
            }
        }
        if self.singular {
            let mean = x.iter().fold(T::zero(), |a, &v| a + v) / T::count(n.max(1));
            x.iter_mut().for_each(|v| *v -= mean);
        }
        Ok(SolveReport {
            iterations: it,
            residual: res.as_f64(),
        })
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Removes the discrete divergence of `w` in place and returns the
/// potential `φ` with `w ← w - G φ`. `phi` holds the warm start.
pub(crate) fn project<T: Real>(
    grid: &StructuredGrid<T>,
    bcs: &FlowBoundaries<T>,
    solver: &PressureSolver<T>,
    w: &mut [Vec<T>],
    phi: &mut [T],
) -> Result<SolveReport> {
    let n = grid.n_fluid();
    let comps: Vec<&[T]> = w.iter().map(|c| c.as_slice()).collect();
    let mut b = vec![T::zero(); n];
    divergence_into(grid, &comps, &bcs.velocity, &mut b);
    b.iter_mut().for_each(|v| *v = -*v);
    let report = solver.solve(&b, phi)?;
    let mut g = vec![vec![T::zero(); n]; grid.dimension()];
    gradient_into(grid, phi, &bcs.pressure, &mut g);
    for (wa, ga) in w.iter_mut().zip(&g) {
        for (x, &y) in wa.iter_mut().zip(ga) {
            *x -= y;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BoundaryLabel, CellRect, GridSpec};

    fn channel_bcs() -> FlowBoundaries<f64> {
        use BoundaryCondition::*;
        let u = BoundarySpec::new()
            .with(BoundaryLabel::West, FixedValue(1.0))
            .with(BoundaryLabel::East, ZeroGradient)
            .with(BoundaryLabel::South, ZeroGradient)
            .with(BoundaryLabel::North, ZeroGradient)
            .with(BoundaryLabel::Body, FixedValue(0.0));
        let v = BoundarySpec::new()
            .with(BoundaryLabel::West, FixedValue(0.0))
            .with(BoundaryLabel::East, ZeroGradient)
            .with(BoundaryLabel::South, FixedValue(0.0))
            .with(BoundaryLabel::North, FixedValue(0.0))
            .with(BoundaryLabel::Body, FixedValue(0.0));
        FlowBoundaries::with_dual_pressure(vec![u, v]).unwrap()
    }

    fn channel_grid() -> StructuredGrid<f64> {
        GridSpec {
            nx: 16,
            ny: 10,
            dx: 0.25,
            dy: 0.25,
            periodic_x: false,
            periodic_y: false,
            obstacle: Some(CellRect {
                i0: 5,
                i1: 7,
                j0: 4,
                j1: 6,
            }),
        }
        .build()
        .unwrap()
    }

    #[test]
    fn pressure_matrix_is_symmetric() {
        let g = channel_grid();
        let s = PressureSolver::new(&g, &channel_bcs(), PoissonSettings::default()).unwrap();
        let n = g.n_fluid();
        for r in 0..n {
            for (k, v) in s.matrix.row(r) {
                let back = s.matrix.row(k).find(|e| e.0 == r).map_or(0.0, |e| e.1);
                assert!((v - back).abs() < 1e-12 * v.abs().max(1.0), "({r},{k})");
            }
        }
        assert!(!s.singular);
    }

    #[test]
    fn projection_removes_divergence() {
        let g = channel_grid();
        let bcs = channel_bcs();
        let s = PressureSolver::new(&g, &bcs, PoissonSettings::default()).unwrap();
        let n = g.n_fluid();
        let mut w: Vec<Vec<f64>> = (0..2)
            .map(|a| (0..n).map(|c| ((c * 7 + a * 3) % 11) as f64 / 11.0).collect())
            .collect();
        let mut phi = vec![0.0; n];
        project(&g, &bcs, &s, &mut w, &mut phi).unwrap();
        let comps: Vec<&[f64]> = w.iter().map(|c| c.as_slice()).collect();
        let mut div = vec![0.0; n];
        divergence_into(&g, &comps, &bcs.velocity, &mut div);
        let m = div.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(m <= 1e-8, "max divergence {m}");
    }

    #[test]
    fn periodic_projection_is_idempotent() {
        let g = StructuredGrid::<f64>::new(12, 12, 0.5, 0.5, true, true).unwrap();
        let bcs = FlowBoundaries::periodic(2);
        let s = PressureSolver::new(&g, &bcs, PoissonSettings::default()).unwrap();
        assert!(s.singular);
        let n = g.n_fluid();
        let mut w: Vec<Vec<f64>> = (0..2)
            .map(|a| (0..n).map(|c| (((c + 1) * (a + 5)) % 13) as f64 - 6.0).collect())
            .collect();
        let mut phi = vec![0.0; n];
        project(&g, &bcs, &s, &mut w, &mut phi).unwrap();
        let once = w.clone();
        let mut phi2 = vec![0.0; n];
        project(&g, &bcs, &s, &mut w, &mut phi2).unwrap();
        for (a, b) in once.iter().flatten().zip(w.iter().flatten()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let g = channel_grid();
        let bcs = channel_bcs();
        let settings = PoissonSettings {
            tolerance: 1e-14,
            max_iterations: 2,
        };
        let s = PressureSolver::new(&g, &bcs, settings).unwrap();
        let n = g.n_fluid();
        let b: Vec<f64> = (0..n).map(|c| (c % 5) as f64 - 2.0).collect();
        let mut x = vec![0.0; n];
        match s.solve(&b, &mut x) {
            Err(Error::Solver {
                residual, iterations, ..
            }) => {
                assert_eq!(iterations, 2);
                assert!(residual > 0.0);
            }
            other => panic!("expected solver error, got {other:?}"),
        }
    }
}
