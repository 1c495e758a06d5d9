use super::knots::{subdivision_matrix, KnotVector, Subdivision1D};
use crate::error::{Error, Result};
use crate::grid::{box_iter, Grid, MultiIndex};

/// Tensor-product B-spline space on `[0, 1]^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorSpace {
    knots: Vec<KnotVector>,
}

/// Values (and optionally derivatives) of the functions not vanishing at a point.
#[derive(Clone, Debug, Default)]
pub struct BasisValues {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    pub gradients: Vec<[f64; 3]>,
    pub hessians: Vec<[[f64; 3]; 3]>,
}

/// The `prod(p_k + 1)` functions of one element evaluated at several points.
///
/// Arrays are point-major: entry `pt * len() + a` belongs to local function `a`.
#[derive(Clone, Debug)]
pub struct ElementBasis {
    pub first: MultiIndex,
    pub counts: [usize; 3],
    pub indices: Vec<usize>,
    pub num_points: usize,
    pub values: Vec<f64>,
    pub gradients: Vec<[f64; 3]>,
    pub hessians: Vec<[[f64; 3]; 3]>,
}

impl ElementBasis {
    #[inline]
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

impl TensorSpace {
    pub fn new(knots: Vec<KnotVector>) -> Result<Self> {
        if !(1..=3).contains(&knots.len()) {
            return Err(Error::InvalidArgument(format!(
                "dimension {} not in 1..=3",
                knots.len()
            )));
        }
        Ok(Self { knots })
    }

    /// Uniform open knots with `elements[k]` intervals and degree `degrees[k]` per direction.
    pub fn uniform(degrees: &[usize], elements: &[usize]) -> Self {
        assert_eq!(degrees.len(), elements.len());
        Self::new(
            degrees
                .iter()
                .zip(elements)
                .map(|(&p, &n)| KnotVector::uniform(p, n))
                .collect(),
        )
        .expect("uniform space")
    }

    pub fn dyadic_refinement(&self) -> Self {
        Self {
            knots: self.knots.iter().map(KnotVector::dyadic_refinement).collect(),
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.knots.len()
    }

    #[inline]
    pub fn knots(&self, k: usize) -> &KnotVector {
        &self.knots[k]
    }

    #[inline]
    pub fn degree(&self, k: usize) -> usize {
        self.knots[k].degree()
    }

    pub fn max_degree(&self) -> usize {
        self.knots.iter().map(KnotVector::degree).max().unwrap_or(0)
    }

    pub fn basis_grid(&self) -> Grid {
        Grid::new(&self.knots.iter().map(|k| k.num_basis()).collect::<Vec<_>>())
    }

    pub fn element_grid(&self) -> Grid {
        Grid::new(&self.knots.iter().map(|k| k.num_elements()).collect::<Vec<_>>())
    }

    #[inline]
    pub fn num_basis(&self) -> usize {
        self.basis_grid().len()
    }

    /// Largest element edge.
    pub fn mesh_size(&self) -> f64 {
        self.knots
            .iter()
            .map(KnotVector::max_element_size)
            .fold(0.0, f64::max)
    }

    pub fn element_bounds(&self, e: &MultiIndex) -> [(f64, f64); 3] {
        let mut b = [(0.0, 0.0); 3];
        for k in 0..self.dim() {
            b[k] = self.knots[k].element_bounds(e[k]);
        }
        b
    }

    pub fn locate(&self, x: &[f64]) -> Result<MultiIndex> {
        if x.len() != self.dim() || x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain(x.to_vec()));
        }
        let mut e = [0; 3];
        for k in 0..self.dim() {
            e[k] = self.knots[k].locate(x[k])?;
        }
        Ok(e)
    }

    /// Inclusive box of basis multi-indices not vanishing on element `e`.
    pub fn nonzero_on_element(&self, e: &MultiIndex) -> (MultiIndex, MultiIndex) {
        let mut lo = [0; 3];
        let mut hi = [0; 3];
        for k in 0..self.dim() {
            lo[k] = self.knots[k].first_basis(e[k]);
            hi[k] = lo[k] + self.knots[k].degree();
        }
        (lo, hi)
    }

    /// Inclusive element box forming the support of basis function `i`.
    pub fn support_box(&self, i: &MultiIndex) -> (MultiIndex, MultiIndex) {
        let mut lo = [0; 3];
        let mut hi = [0; 3];
        for k in 0..self.dim() {
            let (a, b) = self.knots[k].support(i[k]);
            lo[k] = a;
            hi[k] = b;
        }
        (lo, hi)
    }

    /// Inclusive element box of the support extension of element `e`.
    pub fn support_extension_box(&self, e: &MultiIndex) -> (MultiIndex, MultiIndex) {
        let mut lo = [0; 3];
        let mut hi = [0; 3];
        for k in 0..self.dim() {
            let (a, b) = self.knots[k].support_extension(e[k]);
            lo[k] = a;
            hi[k] = b;
        }
        (lo, hi)
    }

    /// Support extension of element `e` as sorted linear element indices.
    pub fn support_extension(&self, e: &MultiIndex) -> Result<Vec<usize>> {
        let grid = self.element_grid();
        if !grid.contains(e) {
            return Err(Error::InvalidArgument(format!("element {e:?} outside the grid")));
        }
        let (lo, hi) = self.support_extension_box(e);
        let mut out: Vec<usize> = box_iter(lo, hi).map(|q| grid.linear(&q)).collect();
        out.sort_unstable();
        Ok(out)
    }

    /// Evaluates the functions of element `e` at `points` (global parametric coordinates).
    /// `order` selects values (0), plus gradients (1), plus Hessians (2).
    pub fn element_basis(&self, e: &MultiIndex, points: &[[f64; 3]], order: usize) -> ElementBasis {
        let d = self.dim();
        let bgrid = self.basis_grid();
        let (first, last) = self.nonzero_on_element(e);
        let mut counts = [1; 3];
        for k in 0..d {
            counts[k] = last[k] - first[k] + 1;
        }
        let nloc = counts[0] * counts[1] * counts[2];
        let indices: Vec<usize> = box_iter(first, last).map(|i| bgrid.linear(&i)).collect();
        let npts = points.len();
        let mut values = vec![0.0; npts * nloc];
        let mut gradients = if order >= 1 { vec![[0.0; 3]; npts * nloc] } else { Vec::new() };
        let mut hessians = if order >= 2 {
            vec![[[0.0; 3]; 3]; npts * nloc]
        } else {
            Vec::new()
        };
        let mut ders: [Vec<f64>; 3] = [vec![1.0], vec![1.0], vec![1.0]];
        let stride = [counts[0], counts[1], counts[2]];
        for (pt, x) in points.iter().enumerate() {
            for k in 0..d {
                ders[k] = self.knots[k].basis_ders(e[k], x[k], order);
            }
            // component derivative tables: ders[k][n * stride_k + a_k], missing dims are constant 1
            let val = |k: usize, n: usize, a: usize| -> f64 {
                if k >= d {
                    if n == 0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    ders[k][n * stride[k] + a]
                }
            };
            for (a, loc) in box_iter([0; 3], [counts[0] - 1, counts[1] - 1, counts[2] - 1]).enumerate() {
                let v0 = [val(0, 0, loc[0]), val(1, 0, loc[1]), val(2, 0, loc[2])];
                values[pt * nloc + a] = v0[0] * v0[1] * v0[2];
                if order >= 1 {
                    let v1 = [
                        val(0, 1.min(order), loc[0]),
                        val(1, 1.min(order), loc[1]),
                        val(2, 1.min(order), loc[2]),
                    ];
                    let g = &mut gradients[pt * nloc + a];
                    for m in 0..d {
                        let mut prod = 1.0;
                        for k in 0..3 {
                            prod *= if k == m { v1[k] } else { v0[k] };
                        }
                        g[m] = prod;
                    }
                    if order >= 2 {
                        let h = &mut hessians[pt * nloc + a];
                        for m in 0..d {
                            for n in 0..d {
                                let mut prod = 1.0;
                                for k in 0..3 {
                                    let ord = (k == m) as usize + (k == n) as usize;
                                    prod *= val(k, ord, loc[k]);
                                }
                                h[m][n] = prod;
                            }
                        }
                    }
                }
            }
        }
        ElementBasis {
            first,
            counts,
            indices,
            num_points: npts,
            values,
            gradients,
            hessians,
        }
    }

    /// Functions not vanishing at `x` with values and derivatives up to `deriv_order`.
    pub fn eval_nonzero_basis(&self, x: &[f64], deriv_order: usize) -> Result<BasisValues> {
        let min_deg = self.knots.iter().map(KnotVector::degree).min().unwrap_or(0);
        if deriv_order > 2 || deriv_order > min_deg {
            return Err(Error::InvalidArgument(format!(
                "derivative order {deriv_order} exceeds supported order for degree {min_deg}"
            )));
        }
        let e = self.locate(x)?;
        let mut p = [0.0; 3];
        p[..x.len()].copy_from_slice(x);
        let eb = self.element_basis(&e, &[p], deriv_order);
        Ok(BasisValues {
            indices: eb.indices,
            values: eb.values,
            gradients: eb.gradients,
            hessians: eb.hessians,
        })
    }

    /// Evaluates the spline with coefficients `coeffs` at `x`.
    pub fn evaluate(&self, coeffs: &[f64], x: &[f64]) -> Result<f64> {
        let bv = self.eval_nonzero_basis(x, 0)?;
        Ok(bv.indices.iter().zip(&bv.values).map(|(&i, v)| coeffs[i] * v).sum())
    }

    /// Tensor subdivision operator into the nested space `fine`.
    pub fn subdivision(&self, fine: &TensorSpace) -> Result<TensorSubdivision> {
        if fine.dim() != self.dim() {
            return Err(Error::NotNested("dimension mismatch".into()));
        }
        let dirs = (0..self.dim())
            .map(|k| subdivision_matrix(&self.knots[k], &fine.knots[k]))
            .collect::<Result<Vec<_>>>()?;
        Ok(TensorSubdivision {
            coarse: self.basis_grid(),
            fine: fine.basis_grid(),
            dirs,
        })
    }
}

/// Tensor product of univariate subdivision matrices.
#[derive(Clone, Debug)]
pub struct TensorSubdivision {
    coarse: Grid,
    fine: Grid,
    dirs: Vec<Subdivision1D>,
}

impl TensorSubdivision {
    pub fn coarse_grid(&self) -> Grid {
        self.coarse
    }

    pub fn fine_grid(&self) -> Grid {
        self.fine
    }

    pub fn direction(&self, k: usize) -> &Subdivision1D {
        &self.dirs[k]
    }

    /// Calls `f(fine_index, weight)` for every nonzero of column `coarse_index`.
    #[inline]
    pub fn for_each_in_column(&self, coarse_index: usize, mut f: impl FnMut(usize, f64)) {
        let i = self.coarse.multi(coarse_index);
        let empty = vec![(0usize, 1.0f64)];
        let cols: Vec<&Vec<(usize, f64)>> = (0..3)
            .map(|k| if k < self.dirs.len() { &self.dirs[k].columns[i[k]] } else { &empty })
            .collect();
        for &(j2, w2) in cols[2] {
            for &(j1, w1) in cols[1] {
                for &(j0, w0) in cols[0] {
                    f(self.fine.linear(&[j0, j1, j2]), w0 * w1 * w2);
                }
            }
        }
    }

    /// Fine coefficients of a coarse coefficient vector.
    pub fn apply(&self, coarse: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.fine.len()];
        for (i, &c) in coarse.iter().enumerate() {
            if c != 0.0 {
                self.for_each_in_column(i, |j, w| out[j] += w * c);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hat_functions_at_midpoint() {
        let s = TensorSpace::uniform(&[1], &[2]);
        let bv = s.eval_nonzero_basis(&[0.25], 0).unwrap();
        assert_eq!(bv.indices, vec![0, 1]);
        assert_relative_eq!(bv.values[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(bv.values[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn outside_domain_is_error() {
        let s = TensorSpace::uniform(&[2, 2], &[3, 3]);
        assert!(matches!(
            s.eval_nonzero_basis(&[0.5, 1.2], 0),
            Err(Error::Domain(_))
        ));
        assert!(s.eval_nonzero_basis(&[0.5, 0.5], 3).is_err());
    }

    #[test]
    fn support_extension_examples() {
        let s = TensorSpace::uniform(&[1], &[8]);
        assert_eq!(s.support_extension(&[3, 0, 0]).unwrap(), vec![2, 3, 4]);
        let s = TensorSpace::uniform(&[2], &[8]);
        assert_eq!(s.support_extension(&[0, 0, 0]).unwrap(), vec![0, 1, 2]);
        let s = TensorSpace::uniform(&[2, 2], &[8, 8]);
        let ext = s.support_extension(&[4, 4, 0]).unwrap();
        assert_eq!(ext.len(), 25);
        let g = s.element_grid();
        for e in ext {
            let m = g.multi(e);
            assert!((2..=6).contains(&m[0]) && (2..=6).contains(&m[1]));
        }
    }

    #[test]
    fn boundary_point_uses_last_element() {
        let s = TensorSpace::uniform(&[2, 3], &[4, 5]);
        let bv = s.eval_nonzero_basis(&[1.0, 1.0], 0).unwrap();
        let sum: f64 = bv.values.iter().sum();
        assert_relative_eq!(sum, 1.0, epsilon = 1e-14);
        let g = s.basis_grid();
        assert!(bv.indices.contains(&g.linear(&[5, 7, 0])));
    }
}
