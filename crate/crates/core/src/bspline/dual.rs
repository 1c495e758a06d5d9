//! Local L2 projections used as dual functionals, and the associated quasi-interpolant.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::quadrature::QuadratureRule;
use super::tensor::TensorSpace;
use crate::error::{Error, Result};
use crate::grid::MultiIndex;

/// Coefficients of the L2 projection of `f` onto the functions not vanishing on element `e`.
/// Returns `(linear basis ids, coefficients)`.
///
/// The projection is computed against an orthonormal Legendre basis of the element, so the
/// solved system has the conditioning of the basis change instead of the Gram matrix.
pub fn local_projection<F>(space: &TensorSpace, e: &MultiIndex, f: F) -> Result<(Vec<usize>, Vec<f64>)>
where
    F: Fn(&[f64; 3]) -> f64,
{
    let d = space.dim();
    let bounds = space.element_bounds(e);
    let rule = QuadratureRule::gauss_legendre(space.max_degree() + 2);
    let (pts, wts) = rule.on_box(d, &bounds);
    let eb = space.element_basis(e, &pts, 0);
    let n = eb.len();
    let mut deg = [0usize; 3];
    for k in 0..d {
        deg[k] = space.degree(k);
    }
    let mut v = DMatrix::<f64>::zeros(n, n);
    let mut g = DVector::<f64>::zeros(n);
    let mut leg = [Vec::new(), Vec::new(), Vec::new()];
    for (q, (x, &w)) in pts.iter().zip(&wts).enumerate() {
        for k in 0..3 {
            leg[k] = if k < d {
                legendre_orthonormal(deg[k], x[k], bounds[k])
            } else {
                vec![1.0]
            };
        }
        let vals = &eb.values[q * n..(q + 1) * n];
        let fx = f(x);
        let mut l = 0;
        for l2 in 0..=deg[2] {
            for l1 in 0..=deg[1] {
                for l0 in 0..=deg[0] {
                    let lv = w * leg[0][l0] * leg[1][l1] * leg[2][l2];
                    g[l] += lv * fx;
                    for a in 0..n {
                        v[(l, a)] += lv * vals[a];
                    }
                    l += 1;
                }
            }
        }
    }
    let lu = v.full_piv_lu();
    let c = lu
        .solve(&g)
        .ok_or_else(|| Error::Singular(format!("local projection on element {e:?}")))?;
    if c.iter().any(|x| !x.is_finite()) {
        return Err(Error::Singular(format!("local projection on element {e:?}")));
    }
    Ok((eb.indices, c.iter().copied().collect()))
}

/// Legendre polynomials of degree `0..=p` at `x`, orthonormal in L2 on `[a, b]`.
fn legendre_orthonormal(p: usize, x: f64, (a, b): (f64, f64)) -> Vec<f64> {
    let t = 2.0 * (x - a) / (b - a) - 1.0;
    let mut out = vec![0.0; p + 1];
    out[0] = 1.0;
    if p >= 1 {
        out[1] = t;
    }
    for k in 2..=p {
        let kf = k as f64;
        out[k] = ((2.0 * kf - 1.0) * t * out[k - 1] - (kf - 1.0) * out[k - 2]) / kf;
    }
    for (k, v) in out.iter_mut().enumerate() {
        *v *= ((2 * k + 1) as f64 / (b - a)).sqrt();
    }
    out
}

/// Dual functional of basis function `func` realised as the local projection on element `q`.
pub fn dual_functional<F>(space: &TensorSpace, func: &MultiIndex, q: &MultiIndex, f: F) -> Result<f64>
where
    F: Fn(&[f64; 3]) -> f64,
{
    let (lo, hi) = space.support_box(func);
    if (0..space.dim()).any(|k| q[k] < lo[k] || q[k] > hi[k]) {
        return Err(Error::InvalidArgument(format!(
            "element {q:?} is not inside the support of function {func:?}"
        )));
    }
    let target = space.basis_grid().linear(func);
    let (ids, coeffs) = local_projection(space, q, f)?;
    let pos = ids
        .iter()
        .position(|&i| i == target)
        .ok_or_else(|| Error::Internal("function missing from its support element".into()))?;
    Ok(coeffs[pos])
}

/// Default element choice: the first element (lexicographically) of the support.
pub fn first_support_element(space: &TensorSpace, func: &MultiIndex) -> MultiIndex {
    space.support_box(func).0
}

/// Quasi-interpolant coefficients; `element_choice` picks the element for each function.
pub fn quasi_interpolant<F, C>(space: &TensorSpace, f: F, element_choice: C) -> Result<Vec<f64>>
where
    F: Fn(&[f64; 3]) -> f64,
    C: Fn(&MultiIndex) -> MultiIndex,
{
    let bgrid = space.basis_grid();
    let egrid = space.element_grid();
    let mut cache: HashMap<usize, (Vec<usize>, Vec<f64>)> = HashMap::new();
    let mut out = vec![0.0; bgrid.len()];
    for (lin, c) in out.iter_mut().enumerate() {
        let func = bgrid.multi(lin);
        let q = element_choice(&func);
        let (lo, hi) = space.support_box(&func);
        if (0..space.dim()).any(|k| q[k] < lo[k] || q[k] > hi[k]) {
            return Err(Error::InvalidArgument(format!(
                "element {q:?} is not inside the support of function {func:?}"
            )));
        }
        let key = egrid.linear(&q);
        if !cache.contains_key(&key) {
            cache.insert(key, local_projection(space, &q, &f)?);
        }
        let (ids, coeffs) = &cache[&key];
        let pos = ids.iter().position(|&i| i == lin).expect("function on its support element");
        *c = coeffs[pos];
    }
    Ok(out)
}
