//! Spline and rational spline maps from the parametric unit cube to the physical domain.

use std::path::Path;

use nalgebra::Matrix3;

use crate::bspline::{KnotVector, TensorSpace};
use crate::error::{Error, Result};

/// Map values at one parametric point. Unused dimensions carry identity entries.
#[derive(Clone, Copy, Debug)]
pub struct GeoPoint {
    pub x: [f64; 3],
    /// `jac[i][j] = dF_i / dxi_j`.
    pub jac: [[f64; 3]; 3],
    /// `hess[i][j][k] = d^2 F_i / dxi_j dxi_k`.
    pub hess: [[[f64; 3]; 3]; 3],
    pub det: f64,
}

impl GeoPoint {
    pub fn jacobian(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.jac[i][j])
    }

    /// `J^{-T}`, used to push parametric gradients forward.
    pub fn inverse_transpose(&self) -> Result<Matrix3<f64>> {
        self.jacobian()
            .try_inverse()
            .map(|m| m.transpose())
            .ok_or_else(|| Error::Singular("degenerate Jacobian".into()))
    }
}

#[derive(Clone, Debug)]
pub enum GeometryMap {
    Identity { dim: usize },
    Spline {
        space: TensorSpace,
        points: Vec<[f64; 3]>,
        weights: Option<Vec<f64>>,
    },
}

impl GeometryMap {
    pub fn identity(dim: usize) -> Self {
        Self::Identity { dim }
    }

    pub fn spline(space: TensorSpace, points: Vec<[f64; 3]>, weights: Option<Vec<f64>>) -> Result<Self> {
        let n = space.num_basis();
        if points.len() != n {
            return Err(Error::InvalidArgument(format!(
                "geometry has {} control points, space needs {n}",
                points.len()
            )));
        }
        if let Some(w) = &weights {
            if w.len() != n || w.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::InvalidArgument("weights must be positive, one per control point".into()));
            }
        }
        Ok(Self::Spline { space, points, weights })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Identity { dim } => *dim,
            Self::Spline { space, .. } => space.dim(),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Self::Identity { .. })
    }

    /// Evaluates the map at `xi`; `order` 1 adds the Jacobian, 2 adds second derivatives.
    pub fn eval(&self, xi: &[f64; 3], order: usize) -> Result<GeoPoint> {
        let mut out = GeoPoint {
            x: *xi,
            jac: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            hess: [[[0.0; 3]; 3]; 3],
            det: 1.0,
        };
        let (space, points, weights) = match self {
            Self::Identity { .. } => return Ok(out),
            Self::Spline { space, points, weights } => (space, points, weights),
        };
        let d = space.dim();
        let e = space.locate(&xi[..d])?;
        let eb = space.element_basis(&e, &[*xi], order.max(1));
        // homogeneous numerator A (first d components) and denominator W
        let mut a = [0.0; 3];
        let mut da = [[0.0; 3]; 3];
        let mut dda = [[[0.0; 3]; 3]; 3];
        let (mut w, mut dw, mut ddw) = (0.0, [0.0; 3], [[0.0; 3]; 3]);
        for (loc, &i) in eb.indices.iter().enumerate() {
            let wi = weights.as_ref().map_or(1.0, |v| v[i]);
            let n = eb.values[loc] * wi;
            let g = eb.gradients[loc];
            w += n;
            for j in 0..d {
                dw[j] += wi * g[j];
            }
            if order >= 2 {
                let h = eb.hessians[loc];
                for j in 0..d {
                    for k in 0..d {
                        ddw[j][k] += wi * h[j][k];
                    }
                }
            }
            for c in 0..d {
                let p = points[i][c] * wi;
                a[c] += p * eb.values[loc];
                for j in 0..d {
                    da[c][j] += p * g[j];
                }
                if order >= 2 {
                    let h = eb.hessians[loc];
                    for j in 0..d {
                        for k in 0..d {
                            dda[c][j][k] += p * h[j][k];
                        }
                    }
                }
            }
        }
        for c in 0..d {
            out.x[c] = a[c] / w;
        }
        for c in 0..d {
            for j in 0..d {
                out.jac[c][j] = (da[c][j] - out.x[c] * dw[j]) / w;
            }
        }
        if order >= 2 {
            for c in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        out.hess[c][j][k] = (dda[c][j][k]
                            - out.jac[c][j] * dw[k]
                            - out.jac[c][k] * dw[j]
                            - out.x[c] * ddw[j][k])
                            / w;
                    }
                }
            }
        }
        out.det = out.jacobian().determinant();
        Ok(out)
    }

    /// Parses the plain-text geometry format: `d p1..pd`, one knot line per direction,
    /// then one control point per line (`x y [z] [w]`, first index fastest).
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty());
        let nums = |l: &str| -> Result<Vec<f64>> {
            l.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("'{t}': {e}"))))
                .collect()
        };
        let head = nums(lines.next().ok_or_else(|| Error::Parse("empty geometry file".into()))?)?;
        let d = *head.first().ok_or_else(|| Error::Parse("missing dimension".into()))? as usize;
        if !(1..=3).contains(&d) || head.len() != d + 1 {
            return Err(Error::Parse("header must read `d p1 .. pd` with 1 <= d <= 3".into()));
        }
        let mut knots = Vec::with_capacity(d);
        for k in 0..d {
            let line = lines.next().ok_or_else(|| Error::Parse(format!("missing knot vector {k}")))?;
            knots.push(KnotVector::new(head[k + 1] as usize, nums(line)?)?);
        }
        let space = TensorSpace::new(knots)?;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for line in lines {
            let v = nums(line)?;
            if v.len() != d && v.len() != d + 1 {
                return Err(Error::Parse(format!("control point line '{line}' needs {d} or {} values", d + 1)));
            }
            let mut p = [0.0; 3];
            p[..d].copy_from_slice(&v[..d]);
            points.push(p);
            weights.push(v.get(d).copied());
        }
        let weights = if weights.iter().all(Option::is_none) {
            None
        } else if weights.iter().all(Option::is_some) {
            Some(weights.into_iter().map(Option::unwrap).collect())
        } else {
            return Err(Error::Parse("either all or no control points carry a weight".into()));
        };
        Self::spline(space, points, weights)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const QUARTER_ANNULUS: &str = "2 2 1
0 0 0 1 1 1
0 0 1 1
0 1 1
1 1 0.7071067811865476
1 0 1
0 2 1
2 2 0.7071067811865476
2 0 1
";

    #[test]
    fn bilinear_square_is_identity() {
        let g = GeometryMap::parse("2 1 1\n0 0 1 1\n0 0 1 1\n0 0\n1 0\n0 1\n1 1\n").unwrap();
        let p = g.eval(&[0.3, 0.6, 0.0], 2).unwrap();
        assert!((p.x[0] - 0.3).abs() < 1e-15 && (p.x[1] - 0.6).abs() < 1e-15);
        assert!((p.det - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rational_quarter_annulus_is_exact() {
        let g = GeometryMap::parse(QUARTER_ANNULUS).unwrap();
        for &(s, t) in &[(0.1, 0.2), (0.5, 0.5), (0.93, 0.7)] {
            let p = g.eval(&[s, t, 0.0], 2).unwrap();
            let r = (p.x[0] * p.x[0] + p.x[1] * p.x[1]).sqrt();
            assert!((r - (1.0 + t)).abs() < 1e-12);
            assert!(p.det > 0.0);
            // compare derivatives with central differences
            let h = 1e-5;
            for j in 0..2 {
                let mut a = [s, t, 0.0];
                let mut b = [s, t, 0.0];
                a[j] += h;
                b[j] -= h;
                let (pa, pb) = (g.eval(&a, 1).unwrap(), g.eval(&b, 1).unwrap());
                for c in 0..2 {
                    assert!(((pa.x[c] - pb.x[c]) / (2.0 * h) - p.jac[c][j]).abs() < 1e-8);
                    for k in 0..2 {
                        let fd = (pa.jac[c][k] - pb.jac[c][k]) / (2.0 * h);
                        assert!((fd - p.hess[c][k][j]).abs() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(GeometryMap::parse("").is_err());
        assert!(GeometryMap::parse("2 1 1\n0 0 1 1\n0 0 1 1\n0 0\n1 0\n0 1\n").is_err());
        assert!(GeometryMap::parse("2 1 1\n0 0 1 1\n0 0 1 1\n0 0 1\n1 0\n0 1\n1 1\n").is_err());
    }
}
