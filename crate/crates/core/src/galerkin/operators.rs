use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::field::weighted_dot;
use crate::pod::PodBasis;
use crate::scalar::{lit, Real};

use super::discrete::{FlowOperators, Lift};
use super::viscosity::ViscosityModelSpec;

/// Offline tensors of the projected momentum and pressure equations.
///
/// Dense row-major storage: `l[i*r + j]`, `q[(i*r + j)*r + k]`,
/// `p[i*rp + m]`, `a_p[l*rp + m]`, `l_p[l*r + j]`, `q_p[(l*r + j)*r + k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GalerkinOperators<T> {
    pub r: usize,
    pub rp: usize,
    pub c: Vec<T>,
    pub l: Vec<T>,
    pub q: Vec<T>,
    pub p: Vec<T>,
    /// Variant-3 terms scaled online by `a₁(t)`.
    pub c_nu1: Option<Vec<T>>,
    pub l_nu1: Option<Vec<T>>,
    /// Boundary forcing (zero for steady boundary data).
    pub g: Vec<T>,
    pub a_p: Vec<T>,
    pub c_p: Vec<T>,
    pub l_p: Vec<T>,
    pub q_p: Vec<T>,
    pub c_nu1_p: Option<Vec<T>>,
    pub l_nu1_p: Option<Vec<T>>,
    a_p_inv: Vec<T>,
}

fn project_onto<T: Real>(modes: &[Vec<T>], f: &[T], w: &[T]) -> Vec<T> {
    modes.iter().map(|m| weighted_dot(m, f, w)).collect()
}

fn sub_assign<T: Real>(a: &mut [T], b: &[T]) {
    for (x, &y) in a.iter_mut().zip(b) {
        *x -= y;
    }
}

impl<T: Real> GalerkinOperators<T> {
    /// Assembles from raw tensors, checking shapes, finiteness and the
    /// invertibility of the pressure matrix.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        r: usize,
        rp: usize,
        c: Vec<T>,
        l: Vec<T>,
        q: Vec<T>,
        p: Vec<T>,
        c_nu1: Option<Vec<T>>,
        l_nu1: Option<Vec<T>>,
        g: Vec<T>,
        a_p: Vec<T>,
        c_p: Vec<T>,
        l_p: Vec<T>,
        q_p: Vec<T>,
        c_nu1_p: Option<Vec<T>>,
        l_nu1_p: Option<Vec<T>>,
    ) -> Result<Self> {
        let shape = |name: &str, v: &[T], len: usize| -> Result<()> {
            if v.len() != len {
                return Err(Error::dim(format!("{name} has {} entries, expected {len}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("operator {name}")));
            }
            Ok(())
        };
        shape("c", &c, r)?;
        shape("L", &l, r * r)?;
        shape("Q", &q, r * r * r)?;
        shape("P", &p, r * rp)?;
        shape("g", &g, r)?;
        shape("A_p", &a_p, rp * rp)?;
        shape("c_p", &c_p, rp)?;
        shape("L_p", &l_p, rp * r)?;
        shape("Q_p", &q_p, rp * r * r)?;
        if c_nu1.is_some() != l_nu1.is_some() {
            return Err(Error::dim("variant-3 terms must come in pairs"));
        }
        if let Some(v) = &c_nu1 {
            shape("c_nu1", v, r)?;
        }
        if let Some(v) = &l_nu1 {
            shape("L_nu1", v, r * r)?;
        }
        if let Some(v) = &c_nu1_p {
            shape("c_nu1_p", v, rp)?;
        }
        if let Some(v) = &l_nu1_p {
            shape("L_nu1_p", v, rp * r)?;
        }
        let a_p_inv = if rp == 0 {
            Vec::new()
        } else {
            let m = DMatrix::from_row_slice(rp, rp, &a_p);
            let sv = m.clone().svd(false, false).singular_values;
            let smax = sv.iter().fold(T::zero(), |a, &s| a.max(s));
            let smin = sv.iter().fold(smax, |a, &s| a.min(s));
            if !(smin > lit::<T>(1e-12) * smax) {
                return Err(Error::Degenerate(format!(
                    "pressure matrix singular (sigma_min {smin:e}, sigma_max {smax:e})"
                )));
            }
            let inv = m
                .try_inverse()
                .ok_or_else(|| Error::Degenerate("pressure matrix not invertible".into()))?;
            (0..rp).flat_map(|i| (0..rp).map(move |j| (i, j))).map(|(i, j)| inv[(i, j)]).collect()
        };
        Ok(GalerkinOperators {
            r,
            rp,
            c,
            l,
            q,
            p,
            c_nu1,
            l_nu1,
            g,
            a_p,
            c_p,
            l_p,
            q_p,
            c_nu1_p,
            l_nu1_p,
            a_p_inv,
        })
    }

    pub fn has_mode1_terms(&self) -> bool {
        self.l_nu1.is_some()
    }

    /// Pressure coefficients from the projected pressure Poisson equation.
    pub fn solve_pressure(&self, a: &[T], a1: T) -> Vec<T> {
        let (r, rp) = (self.r, self.rp);
        if rp == 0 {
            return Vec::new();
        }
        let mut rhs = self.c_p.clone();
        for l in 0..rp {
            let mut s = T::zero();
            for j in 0..r {
                s += self.l_p[l * r + j] * a[j];
                let row = &self.q_p[(l * r + j) * r..(l * r + j + 1) * r];
                let mut t = T::zero();
                for k in 0..r {
                    t += row[k] * a[k];
                }
                s += t * a[j];
            }
            rhs[l] += s;
        }
        if let (Some(cp), Some(lp)) = (&self.c_nu1_p, &self.l_nu1_p) {
            for l in 0..rp {
                let mut s = cp[l];
                for j in 0..r {
                    s += lp[l * r + j] * a[j];
                }
                rhs[l] += a1 * s;
            }
        }
        (0..rp)
            .map(|l| (0..rp).fold(T::zero(), |s, m| s + self.a_p_inv[l * rp + m] * rhs[m]))
            .collect()
    }
}

/// `ℜ_i = c_i + L_ij a_j + Q_ijk a_j a_k + P_il a^p_l + a₁(c_ν1 + L_ν1 a)_i + g_i`.
pub fn eval_rhs<T: Real>(ops: &GalerkinOperators<T>, a: &[T], a_p: &[T], a1: T) -> Result<Vec<T>> {
    let r = ops.r;
    if a.len() != r || a_p.len() != ops.rp {
        return Err(Error::dim(format!(
            "coefficients ({}, {}) for ranks ({r}, {})",
            a.len(),
            a_p.len(),
            ops.rp
        )));
    }
    if a.iter().chain(a_p).any(|x| !x.is_finite()) || !a1.is_finite() {
        return Err(Error::NonFinite("reduced-model coefficients".into()));
    }
    Ok(eval_rhs_unchecked(ops, a, a_p, a1))
}

pub(crate) fn eval_rhs_unchecked<T: Real>(ops: &GalerkinOperators<T>, a: &[T], a_p: &[T], a1: T) -> Vec<T> {
    let (r, rp) = (ops.r, ops.rp);
    let mut out = vec![T::zero(); r];
    for i in 0..r {
        let mut s = ops.c[i] + ops.g[i];
        let lrow = &ops.l[i * r..(i + 1) * r];
        for j in 0..r {
            s += lrow[j] * a[j];
        }
        for j in 0..r {
            let qrow = &ops.q[(i * r + j) * r..(i * r + j + 1) * r];
            let mut t = T::zero();
            for k in 0..r {
                t += qrow[k] * a[k];
            }
            s += t * a[j];
        }
        for m in 0..rp {
            s += ops.p[i * rp + m] * a_p[m];
        }
        if let (Some(c1), Some(l1)) = (&ops.c_nu1, &ops.l_nu1) {
            let mut t = c1[i];
            for j in 0..r {
                t += l1[i * r + j] * a[j];
            }
            s += a1 * t;
        }
        out[i] = s;
    }
    out
}

/// Right-hand side with the pressure coefficients solved on the fly.
pub fn eval_rhs_closed<T: Real>(ops: &GalerkinOperators<T>, a: &[T], a1: T) -> Result<(Vec<T>, Vec<T>)> {
    if a.len() != ops.r {
        return Err(Error::dim(format!("{} coefficients for rank {}", a.len(), ops.r)));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("reduced-model coefficients".into()));
    }
    let a_p = ops.solve_pressure(a, a1);
    let rhs = eval_rhs_unchecked(ops, a, &a_p, a1);
    Ok((rhs, a_p))
}

fn check_basis<T: Real>(ctx: &FlowOperators<T>, basis: &PodBasis<T>, comps: usize) -> Result<()> {
    if basis.n_components != comps || basis.len() != comps * ctx.n_cells() {
        return Err(Error::dim(format!(
            "{} basis with {} components and {} values does not fit the grid",
            basis.variable,
            basis.n_components,
            basis.len()
        )));
    }
    Ok(())
}

/// Projects the momentum equation onto the velocity modes.
pub fn build_momentum_operators<T: Real>(
    ctx: &FlowOperators<T>,
    velocity: &PodBasis<T>,
    pressure: Option<&PodBasis<T>>,
    viscosity: &ViscosityModelSpec<T>,
) -> Result<GalerkinOperators<T>> {
    build_operators(ctx, velocity, pressure, viscosity)
}

/// Projects momentum and pressure Poisson equations.
///
/// The pressure equation is the projection of `D G p = D F(u)`, the
/// discrete compatibility condition the full-order solver enforces, so
/// `A_p` is `(ψ_l, D G ψ_m)` and the right-hand side collects the mean,
/// linear, quadratic and variant-3 parts of `D F`.
pub fn build_operators<T: Real>(
    ctx: &FlowOperators<T>,
    velocity: &PodBasis<T>,
    pressure: Option<&PodBasis<T>>,
    viscosity: &ViscosityModelSpec<T>,
) -> Result<GalerkinOperators<T>> {
    let d = ctx.n_components();
    let n = ctx.n_cells();
    check_basis(ctx, velocity, d)?;
    if let Some(pb) = pressure {
        check_basis(ctx, pb, 1)?;
    }
    if viscosity.nu_t_mean.len() != n {
        return Err(Error::dim("viscosity model does not fit the grid"));
    }
    let w = velocity.weights.clone();
    let r = velocity.rank();
    let phi = &velocity.modes;
    let ubar = &velocity.mean;
    let nu_s = viscosity.static_field();
    let psi: &[Vec<T>] = pressure.map_or(&[], |p| p.modes.as_slice());
    let rp = psi.len();
    let pbar = pressure.map(|p| p.mean.clone());

    // mean-flow residual
    let mut f0 = ctx.diffusion(&nu_s, ubar, Lift::Full);
    sub_assign(&mut f0, &ctx.convection(ubar, Lift::Full, ubar, Lift::Full));
    let mut f0_with_p = f0.clone();
    if let Some(pb) = &pbar {
        sub_assign(&mut f0_with_p, &ctx.pressure_gradient(pb));
    }
    let c = project_onto(phi, &f0_with_p, &w);

    // linear fields
    let lin: Vec<Vec<T>> = phi
        .iter()
        .map(|pj| {
            let mut f = ctx.diffusion(&nu_s, pj, Lift::Homogeneous);
            sub_assign(&mut f, &ctx.convection(ubar, Lift::Full, pj, Lift::Homogeneous));
            sub_assign(&mut f, &ctx.convection(pj, Lift::Homogeneous, ubar, Lift::Full));
            f
        })
        .collect();
    let mut l = vec![T::zero(); r * r];
    for (j, f) in lin.iter().enumerate() {
        for (i, v) in project_onto(phi, f, &w).into_iter().enumerate() {
            l[i * r + j] = v;
        }
    }

    let mut q = vec![T::zero(); r * r * r];
    let mut q_p = vec![T::zero(); rp * r * r];
    let pw: Vec<T> = w.clone();
    for j in 0..r {
        for k in 0..r {
            let mut f = ctx.convection(&phi[j], Lift::Homogeneous, &phi[k], Lift::Homogeneous);
            f.iter_mut().for_each(|x| *x = -*x);
            for (i, v) in project_onto(phi, &f, &w).into_iter().enumerate() {
                q[(i * r + j) * r + k] = v;
            }
            if rp > 0 {
                let div = ctx.divergence_h(&f);
                for (m, v) in project_onto(psi, &div, &pw).into_iter().enumerate() {
                    q_p[(m * r + j) * r + k] = v;
                }
            }
        }
    }

    let grad_psi: Vec<Vec<T>> = psi.iter().map(|p| ctx.pressure_gradient(p)).collect();
    let mut p = vec![T::zero(); r * rp];
    for (m, g) in grad_psi.iter().enumerate() {
        for (i, v) in project_onto(phi, g, &w).into_iter().enumerate() {
            p[i * rp + m] = -v;
        }
    }

    let (c_nu1, l_nu1, lin_nu1, f_nu1) = match (&viscosity.mode1, viscosity.has_mode1()) {
        (Some(m1), true) => {
            let f1 = ctx.diffusion(m1, ubar, Lift::Full);
            let lin1: Vec<Vec<T>> = phi.iter().map(|pj| ctx.diffusion(m1, pj, Lift::Homogeneous)).collect();
            let mut l1 = vec![T::zero(); r * r];
            for (j, f) in lin1.iter().enumerate() {
                for (i, v) in project_onto(phi, f, &w).into_iter().enumerate() {
                    l1[i * r + j] = v;
                }
            }
            (Some(project_onto(phi, &f1, &w)), Some(l1), Some(lin1), Some(f1))
        }
        _ => (None, None, None, None),
    };

    // pressure Poisson projection
    let mut a_p = vec![T::zero(); rp * rp];
    for (m, g) in grad_psi.iter().enumerate() {
        let dg = ctx.divergence_h(g);
        for (l_idx, v) in project_onto(psi, &dg, &pw).into_iter().enumerate() {
            a_p[l_idx * rp + m] = v;
        }
    }
    let c_p = if rp > 0 {
        let mut v = project_onto(psi, &ctx.divergence_h(&f0), &pw);
        if let Some(pb) = &pbar {
            let dgp = ctx.divergence_h(&ctx.pressure_gradient(pb));
            sub_assign(&mut v, &project_onto(psi, &dgp, &pw));
        }
        v
    } else {
        Vec::new()
    };
    let mut l_p = vec![T::zero(); rp * r];
    if rp > 0 {
        for (j, f) in lin.iter().enumerate() {
            for (m, v) in project_onto(psi, &ctx.divergence_h(f), &pw).into_iter().enumerate() {
                l_p[m * r + j] = v;
            }
        }
    }
    let (c_nu1_p, l_nu1_p) = match (&f_nu1, &lin_nu1) {
        (Some(f1), Some(lin1)) if rp > 0 => {
            let cp = project_onto(psi, &ctx.divergence_h(f1), &pw);
            let mut lp = vec![T::zero(); rp * r];
            for (j, f) in lin1.iter().enumerate() {
                for (m, v) in project_onto(psi, &ctx.divergence_h(f), &pw).into_iter().enumerate() {
                    lp[m * r + j] = v;
                }
            }
            (Some(cp), Some(lp))
        }
        (Some(_), Some(_)) => (Some(Vec::new()), Some(Vec::new())),
        _ => (None, None),
    };
    GalerkinOperators::from_parts(
        r,
        rp,
        c,
        l,
        q,
        p,
        c_nu1,
        l_nu1,
        vec![T::zero(); r],
        a_p,
        c_p,
        l_p,
        q_p,
        c_nu1_p,
        l_nu1_p,
    )
}

/// Oracle: projects the grid right-hand side of the reconstructed fields.
pub fn direct_rhs<T: Real>(
    ctx: &FlowOperators<T>,
    velocity: &PodBasis<T>,
    pressure: Option<&PodBasis<T>>,
    viscosity: &ViscosityModelSpec<T>,
    a: &[T],
    a_p: &[T],
    a1: T,
) -> Result<Vec<T>> {
    let u = crate::pod::reconstruct(velocity, a)?;
    let p = match pressure {
        Some(pb) => Some(crate::pod::reconstruct(pb, a_p)?),
        None => None,
    };
    let nu = viscosity.field_at(a1);
    let f = ctx.momentum_rhs(&u, &nu, p.as_deref());
    Ok(project_onto(&velocity.modes, &f, &velocity.weights))
}

/// Oracle for the pressure equation: `(ψ_l, D F(u) - D G p)`.
pub fn direct_pressure_residual<T: Real>(
    ctx: &FlowOperators<T>,
    pressure: &PodBasis<T>,
    viscosity: &ViscosityModelSpec<T>,
    u: &[T],
    p: &[T],
    a1: T,
) -> Result<Vec<T>> {
    ctx.check(u)?;
    let nu = viscosity.field_at(a1);
    let f = ctx.momentum_rhs(u, &nu, Some(p));
    let div = ctx.divergence_h(&f);
    Ok(project_onto(&pressure.modes, &div, &pressure.weights))
}
