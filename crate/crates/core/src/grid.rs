//! Multi-indices over Cartesian grids of dimension 1 to 3.
//!
//! Linear indices are lexicographic with the first coordinate running fastest.

/// Multi-index; entries beyond the grid dimension are always zero.
pub type MultiIndex = [usize; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Grid {
    dim: usize,
    shape: [usize; 3],
}

impl Grid {
    pub fn new(shape: &[usize]) -> Self {
        assert!(
            (1..=3).contains(&shape.len()),
            "grid dimension must be 1, 2 or 3"
        );
        let mut s = [1; 3];
        s[..shape.len()].copy_from_slice(shape);
        Self {
            dim: shape.len(),
            shape: s,
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.shape[0] * self.shape[1] * self.shape[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn linear(&self, idx: &MultiIndex) -> usize {
        idx[0] + self.shape[0] * (idx[1] + self.shape[1] * idx[2])
    }

    #[inline]
    pub fn multi(&self, lin: usize) -> MultiIndex {
        let i0 = lin % self.shape[0];
        let rest = lin / self.shape[0];
        [i0, rest % self.shape[1], rest / self.shape[1]]
    }

    #[inline]
    pub fn contains(&self, idx: &MultiIndex) -> bool {
        (0..3).all(|k| idx[k] < self.shape[k])
    }

    /// Clamps the inclusive box `[lo - pad, hi + pad]` to the grid.
    pub fn clamp_box(&self, lo: &[isize; 3], hi: &[isize; 3]) -> (MultiIndex, MultiIndex) {
        let mut a = [0; 3];
        let mut b = [0; 3];
        for k in 0..self.dim {
            a[k] = lo[k].max(0) as usize;
            b[k] = (hi[k].min(self.shape[k] as isize - 1)).max(0) as usize;
        }
        (a, b)
    }
}

/// Iterates the inclusive box `lo..=hi` in lexicographic order (first index fastest).
pub fn box_iter(lo: MultiIndex, hi: MultiIndex) -> impl Iterator<Item = MultiIndex> {
    let empty = (0..3).any(|k| lo[k] > hi[k]);
    let mut cur = lo;
    let mut done = empty;
    std::iter::from_fn(move || {
        if done {
            return None;
        }
        let out = cur;
        let mut k = 0;
        loop {
            if k == 3 {
                done = true;
                break;
            }
            if cur[k] < hi[k] {
                cur[k] += 1;
                break;
            }
            cur[k] = lo[k];
            k += 1;
        }
        Some(out)
    })
}
