use crate::error::{Error, Result};

/// Open, non-decreasing knot vector on `[0, 1]` together with its element structure.
#[derive(Clone, Debug, PartialEq)]
pub struct KnotVector {
    degree: usize,
    knots: Vec<f64>,
    breakpoints: Vec<f64>,
    /// Knot span index `s` of every element, i.e. `knots[s] < knots[s + 1]` bounds the element.
    spans: Vec<usize>,
}

impl KnotVector {
    pub fn new(degree: usize, knots: Vec<f64>) -> Result<Self> {
        if degree == 0 {
            return Err(Error::Knots("degree must be at least 1".into()));
        }
        let p = degree;
        if knots.len() < 2 * p + 2 {
            return Err(Error::Knots(format!(
                "{} knots cannot hold {} basis functions of degree {p}",
                knots.len(),
                p + 1
            )));
        }
        if knots.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::Knots("knots must be non-decreasing".into()));
        }
        let n = knots.len();
        if knots[..=p].iter().any(|&k| k != 0.0) || knots[n - p - 1..].iter().any(|&k| k != 1.0) {
            return Err(Error::Knots(format!(
                "knot vector must be {p}-open on [0, 1]"
            )));
        }
        let mut breakpoints = knots.clone();
        breakpoints.dedup();
        let mut spans = Vec::with_capacity(breakpoints.len() - 1);
        for s in 0..n - 1 {
            if knots[s] < knots[s + 1] {
                spans.push(s);
            }
        }
        // interior multiplicity above p would break continuity of the basis
        for (e, &s) in spans.iter().enumerate().skip(1) {
            let mult = knots[..=s].iter().rev().take_while(|&&k| k == knots[s]).count();
            if mult > p {
                return Err(Error::Knots(format!(
                    "interior knot {} (element {e}) has multiplicity {mult} > degree {p}",
                    knots[s]
                )));
            }
        }
        Ok(Self {
            degree,
            knots,
            breakpoints,
            spans,
        })
    }

    /// Open knot vector with `elements` equal intervals and no interior repetition.
    pub fn uniform(degree: usize, elements: usize) -> Self {
        assert!(elements >= 1 && degree >= 1);
        let mut knots = vec![0.0; degree + 1];
        for i in 1..elements {
            knots.push(i as f64 / elements as f64);
        }
        knots.extend(std::iter::repeat(1.0).take(degree + 1));
        Self::new(degree, knots).expect("uniform knot vector is valid")
    }

    /// Bisects every element, inserting each midpoint once.
    pub fn dyadic_refinement(&self) -> Self {
        let mut knots = Vec::with_capacity(self.knots.len() + self.num_elements());
        for s in 0..self.knots.len() {
            knots.push(self.knots[s]);
            if s + 1 < self.knots.len() && self.knots[s] < self.knots[s + 1] {
                knots.push(0.5 * (self.knots[s] + self.knots[s + 1]));
            }
        }
        Self::new(self.degree, knots).expect("refinement of a valid knot vector is valid")
    }

    #[inline]
    pub fn degree(&self) -> usize {
        self.degree
    }

    #[inline]
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    #[inline]
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    #[inline]
    pub fn num_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    #[inline]
    pub fn num_elements(&self) -> usize {
        self.spans.len()
    }

    #[inline]
    pub fn element_bounds(&self, e: usize) -> (f64, f64) {
        (self.breakpoints[e], self.breakpoints[e + 1])
    }

    pub fn max_element_size(&self) -> f64 {
        self.breakpoints
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Local quasi-uniformity constant: largest ratio between neighbouring element sizes.
    pub fn quasi_uniformity(&self) -> f64 {
        self.breakpoints
            .windows(3)
            .map(|w| {
                let a = w[1] - w[0];
                let b = w[2] - w[1];
                (a / b).max(b / a)
            })
            .fold(1.0, f64::max)
    }

    /// Element containing `x`; elements are half-open except the last one.
    pub fn locate(&self, x: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(vec![x]));
        }
        let e = self.breakpoints.partition_point(|&b| b <= x);
        Ok(e.saturating_sub(1).min(self.num_elements() - 1))
    }

    /// Index of the first of the `degree + 1` basis functions not vanishing on element `e`.
    #[inline]
    pub fn first_basis(&self, e: usize) -> usize {
        self.spans[e] - self.degree
    }

    /// Inclusive range of elements forming the support of basis function `i`.
    pub fn support(&self, i: usize) -> (usize, usize) {
        let a = self.knots[i];
        let b = self.knots[i + self.degree + 1];
        let first = self.breakpoints.partition_point(|&x| x < a);
        let last = self.breakpoints.partition_point(|&x| x < b) - 1;
        (first, last)
    }

    /// Inclusive element range covered by the supports of all functions not vanishing on `e`.
    pub fn support_extension(&self, e: usize) -> (usize, usize) {
        let f = self.first_basis(e);
        let (lo, _) = self.support(f);
        let (_, hi) = self.support(f + self.degree);
        (lo, hi)
    }

    /// Greville abscissa of basis function `i`.
    pub fn greville(&self, i: usize) -> f64 {
        let p = self.degree;
        self.knots[i + 1..=i + p].iter().sum::<f64>() / p as f64
    }

    /// Values and derivatives up to order `n` of the `degree + 1` functions not vanishing on
    /// element `e`, evaluated at `x`. Row-major `(n + 1) x (degree + 1)`.
    pub fn basis_ders(&self, e: usize, x: f64, n: usize) -> Vec<f64> {
        let p = self.degree;
        let s = self.spans[e];
        let u = &self.knots;
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - u[s + 1 - j];
            right[j] = u[s + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![0.0; (n + 1) * (p + 1)];
        for j in 0..=p {
            ders[j] = ndu[j][p];
        }
        let nn = n.min(p);
        let mut a = [vec![0.0; p + 1], vec![0.0; p + 1]];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=nn {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if rk >= 0 {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k * (p + 1) + r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for k in 1..=nn {
            for j in 0..=p {
                ders[k * (p + 1) + j] *= factor;
            }
            factor *= (p - k) as f64;
        }
        ders
    }

    /// Whether every knot of `self` appears in `fine` with at least the same multiplicity.
    pub fn is_nested_in(&self, fine: &KnotVector) -> bool {
        if self.degree != fine.degree {
            return false;
        }
        let mut j = 0;
        for &k in &self.knots {
            while j < fine.knots.len() && fine.knots[j] < k {
                j += 1;
            }
            if j == fine.knots.len() || fine.knots[j] != k {
                return false;
            }
            j += 1;
        }
        true
    }
}

/// Knot-insertion (subdivision) matrix stored by columns: column `i` lists the fine
/// coefficients of coarse basis function `i`.
#[derive(Clone, Debug)]
pub struct Subdivision1D {
    pub n_fine: usize,
    pub columns: Vec<Vec<(usize, f64)>>,
}

impl Subdivision1D {
    pub fn n_coarse(&self) -> usize {
        self.columns.len()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.columns.len()]; self.n_fine];
        for (i, col) in self.columns.iter().enumerate() {
            for &(j, v) in col {
                m[j][i] = v;
            }
        }
        m
    }
}

/// Oslo-algorithm subdivision matrix from `coarse` to the nested knot vector `fine`.
pub fn subdivision_matrix(coarse: &KnotVector, fine: &KnotVector) -> Result<Subdivision1D> {
    if !coarse.is_nested_in(fine) {
        return Err(Error::NotNested(format!(
            "degree {} with {} knots is not contained in degree {} with {} knots",
            coarse.degree,
            coarse.knots.len(),
            fine.degree,
            fine.knots.len()
        )));
    }
    let p = coarse.degree;
    let xi = &coarse.knots;
    let tau = &fine.knots;
    let nc = coarse.num_basis();
    let mut columns = vec![Vec::new(); nc];
    let mut v = Vec::with_capacity(p + 1);
    let mut nv = Vec::with_capacity(p + 1);
    for j in 0..fine.num_basis() {
        let mu = (xi.partition_point(|&k| k <= tau[j]) - 1).min(nc - 1);
        v.clear();
        v.push(1.0);
        for k in 1..=p {
            let x = tau[j + k];
            nv.clear();
            nv.resize(k + 1, 0.0);
            for (a, &va) in v.iter().enumerate() {
                let i = mu + 1 + a - k;
                let denom = xi[i + k] - xi[i];
                if denom > 0.0 {
                    nv[a] += va * (xi[i + k] - x) / denom;
                    nv[a + 1] += va * (x - xi[i]) / denom;
                }
            }
            std::mem::swap(&mut v, &mut nv);
        }
        for (a, &w) in v.iter().enumerate() {
            if w != 0.0 {
                columns[mu - p + a].push((j, w));
            }
        }
    }
    Ok(Subdivision1D {
        n_fine: fine.num_basis(),
        columns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_bad_vectors() {
        assert!(KnotVector::new(0, vec![0.0, 1.0]).is_err());
        assert!(KnotVector::new(2, vec![0.0, 0.0, 0.5, 1.0, 1.0, 1.0]).is_err());
        assert!(KnotVector::new(1, vec![0.0, 0.0, 0.6, 0.4, 1.0, 1.0]).is_err());
        assert!(KnotVector::new(1, vec![0.0, 0.0, 0.5, 0.5, 1.0, 1.0]).is_err());
    }

    #[test]
    fn uniform_structure() {
        let kv = KnotVector::uniform(2, 4);
        assert_eq!(kv.num_basis(), 6);
        assert_eq!(kv.num_elements(), 4);
        assert_eq!(kv.support(0), (0, 0));
        assert_eq!(kv.support(2), (0, 2));
        assert_eq!(kv.support(5), (3, 3));
        assert_eq!(kv.first_basis(3), 3);
        assert_eq!(kv.locate(1.0).unwrap(), 3);
        assert_eq!(kv.locate(0.25).unwrap(), 1);
        assert!(kv.locate(1.5).is_err());
        assert_relative_eq!(kv.quasi_uniformity(), 1.0);
    }

    #[test]
    fn quadratic_values_at_quarter() {
        let kv = KnotVector::new(2, vec![0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0]).unwrap();
        let d = kv.basis_ders(0, 0.25, 0);
        assert_relative_eq!(d[0], 0.25, epsilon = 1e-15);
        assert_relative_eq!(d[1], 0.625, epsilon = 1e-15);
        assert_relative_eq!(d[2], 0.125, epsilon = 1e-15);
    }

    #[test]
    fn identity_subdivision() {
        let kv = KnotVector::uniform(3, 5);
        let s = subdivision_matrix(&kv, &kv).unwrap();
        for (i, col) in s.columns.iter().enumerate() {
            assert_eq!(col.len(), 1);
            assert_eq!(col[0].0, i);
            assert_relative_eq!(col[0].1, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn non_nested_is_rejected() {
        let a = KnotVector::uniform(2, 3);
        let b = KnotVector::uniform(2, 4);
        assert!(matches!(
            subdivision_matrix(&a, &b),
            Err(Error::NotNested(_))
        ));
    }
}
