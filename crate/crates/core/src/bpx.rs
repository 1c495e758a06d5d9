//! Subspace decompositions, level smoothers and the additive BPX preconditioner.
//!
//! Level subspaces live inside the intermediate spaces of the hierarchical construction.
//! Embeddings into the final space are products of two-level prolongations, so applying
//! the preconditioner restricts the residual level by level, smooths on every level, and
//! prolongates the corrections back while accumulating them.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sparse::{Csr, EnvelopeCholesky};
use crate::space::{BasisKind, FnId, HierarchicalSpace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DecompositionKind {
    New,
    Mod,
    Tsupp,
    Hsupp,
    All,
}

impl DecompositionKind {
    pub const ALL: [DecompositionKind; 5] = [Self::New, Self::Mod, Self::Tsupp, Self::Hsupp, Self::All];

    pub fn name(self) -> &'static str {
        match self {
            Self::New => "new",
            Self::Mod => "mod",
            Self::Tsupp => "tsupp",
            Self::Hsupp => "hsupp",
            Self::All => "all",
        }
    }

    /// Basis the decomposition is defined for.
    pub fn basis(self) -> BasisKind {
        match self {
            Self::Hsupp => BasisKind::Hb,
            _ => BasisKind::Thb,
        }
    }
}

impl std::str::FromStr for DecompositionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Parse(format!("unknown decomposition '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SmootherKind {
    Jacobi,
    Sgs,
}

impl SmootherKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Jacobi => "jacobi",
            Self::Sgs => "sgs",
        }
    }
}

impl std::str::FromStr for SmootherKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jacobi" => Ok(Self::Jacobi),
            "sgs" | "gauss-seidel" => Ok(Self::Sgs),
            other => Err(Error::Parse(format!("unknown smoother '{other}'"))),
        }
    }
}

/// Treatment of the coarsest level.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CoarseSolve {
    /// Cholesky solve with the level-0 matrix.
    #[default]
    Direct,
    /// Same smoother as on the other levels.
    Smooth,
}

impl CoarseSolve {
    pub fn name(self) -> &'static str {
        match self {
            Self::Direct => "direct",
            Self::Smooth => "smooth",
        }
    }
}

impl std::str::FromStr for CoarseSolve {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "direct" | "exact" => Ok(Self::Direct),
            "smooth" | "smoother" => Ok(Self::Smooth),
            other => Err(Error::Parse(format!("unknown coarse solve '{other}'"))),
        }
    }
}

/// Symmetric operator `r -> B r`.
pub trait Preconditioner: Sync {
    fn apply(&self, r: &[f64]) -> Vec<f64>;
}

pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        r.to_vec()
    }
}

/// One level subspace.
#[derive(Clone, Debug)]
pub struct LevelSubspace {
    /// Generating functions (mother level and index) in construction order.
    pub funcs: Vec<FnId>,
    /// Positions of the generators among the interior functions of the intermediate space.
    pub select: Vec<usize>,
    pub h: f64,
}

impl LevelSubspace {
    pub fn len(&self) -> usize {
        self.select.len()
    }

    pub fn is_empty(&self) -> bool {
        self.select.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    pub kind: DecompositionKind,
    pub levels: Vec<LevelSubspace>,
    /// Interior two-level prolongations between successive intermediate spaces.
    pub prolongations: Vec<Csr>,
    /// Interior dimension of each intermediate space.
    pub dims: Vec<usize>,
}

impl Decomposition {
    pub fn build(space: &HierarchicalSpace, kind: DecompositionKind) -> Result<Self> {
        if space.kind() != kind.basis() {
            return Err(Error::InvalidArgument(format!(
                "decomposition '{}' requires a {:?} basis, got {:?}",
                kind.name(),
                kind.basis(),
                space.kind()
            )));
        }
        let steps = space.steps();
        let interior: Vec<Vec<usize>> = steps
            .iter()
            .map(|s| (0..s.len()).filter(|&n| !s.boundary[n]).collect())
            .collect();
        let mut levels = Vec::with_capacity(steps.len());
        for (l, s) in steps.iter().enumerate() {
            let mut funcs = Vec::new();
            let mut select = Vec::new();
            for (pos, &n) in interior[l].iter().enumerate() {
                let keep = match kind {
                    DecompositionKind::All => true,
                    DecompositionKind::Tsupp | DecompositionKind::Hsupp => s.supp[n],
                    DecompositionKind::Mod => l == 0 || s.modified[n],
                    DecompositionKind::New => s.new[n],
                };
                if keep {
                    funcs.push(s.funcs[n]);
                    select.push(pos);
                }
            }
            levels.push(LevelSubspace {
                funcs,
                select,
                h: space.mesh().mesh_size(l),
            });
        }
        let prolongations = (0..steps.len().saturating_sub(1))
            .map(|k| {
                let p = steps[k].prolongation.as_ref().expect("prolongation of inner step");
                p.select(&interior[k + 1], &interior[k])
            })
            .collect();
        Ok(Self {
            kind,
            levels,
            prolongations,
            dims: interior.iter().map(Vec::len).collect(),
        })
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Selection of the level generators inside their intermediate space.
    pub fn selection(&self, l: usize) -> Csr {
        let trip: Vec<_> = self.levels[l].select.iter().enumerate().map(|(c, &r)| (r, c, 1.0)).collect();
        Csr::from_triplets(self.dims[l], self.levels[l].len(), &trip)
    }

    /// Explicit embedding of level `l` into interior coefficients of the final space.
    pub fn embedding(&self, l: usize) -> Csr {
        let mut e = self.selection(l);
        for p in &self.prolongations[l..] {
            e = p.matmul(&e);
        }
        e
    }

    /// Galerkin matrices of the intermediate spaces, finest first computed from `a`.
    pub fn intermediate_matrices(&self, a: &Csr) -> Vec<Csr> {
        let n = self.num_levels();
        let mut out = vec![Csr::zeros(0, 0); n];
        out[n - 1] = a.clone();
        for k in (0..n - 1).rev() {
            out[k] = out[k + 1].congruence(&self.prolongations[k]);
        }
        out
    }

    /// Level stiffness matrices `A_l = E_l^T A E_l`.
    pub fn level_matrices(&self, a: &Csr) -> Vec<Csr> {
        self.intermediate_matrices(a)
            .iter()
            .zip(&self.levels)
            .map(|(m, lv)| m.select(&lv.select, &lv.select))
            .collect()
    }
}

/// One Jacobi or symmetric Gauss-Seidel sweep as a linear operator.
#[derive(Clone, Debug)]
pub struct Smoother {
    kind: SmootherKind,
    matrix: Csr,
    diag: Vec<f64>,
}

impl Smoother {
    pub fn new(kind: SmootherKind, matrix: Csr) -> Result<Self> {
        let diag = matrix.diagonal();
        if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
            return Err(Error::Singular(format!("non-positive diagonal entry at {i}")));
        }
        Ok(Self { kind, matrix, diag })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn matrix(&self) -> &Csr {
        &self.matrix
    }

    /// Jacobi: `D^{-1} r`. SGS: `(D-U)^{-1} D (D-L)^{-1} r`.
    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        match self.kind {
            SmootherKind::Jacobi => r.iter().zip(&self.diag).map(|(v, d)| v / d).collect(),
            SmootherKind::Sgs => {
                let n = r.len();
                let a = &self.matrix;
                let mut y = vec![0.0; n];
                for i in 0..n {
                    let (cols, vals) = a.row(i);
                    let mut s = r[i];
                    for (&j, &v) in cols.iter().zip(vals) {
                        if j < i {
                            s -= v * y[j];
                        }
                    }
                    y[i] = s / self.diag[i];
                }
                for (yi, d) in y.iter_mut().zip(&self.diag) {
                    *yi *= d;
                }
                let mut z = vec![0.0; n];
                for i in (0..n).rev() {
                    let (cols, vals) = a.row(i);
                    let mut s = y[i];
                    for (&j, &v) in cols.iter().zip(vals) {
                        if j > i {
                            s -= v * z[j];
                        }
                    }
                    z[i] = s / self.diag[i];
                }
                z
            }
        }
    }
}

/// Additive multilevel preconditioner `B = sum_l E_l R_l E_l^T`. `R_0` is an exact solve
/// unless built with [`CoarseSolve::Smooth`].
#[derive(Clone, Debug)]
pub struct Bpx {
    decomposition: Decomposition,
    smoothers: Vec<Smoother>,
    coarse: Option<EnvelopeCholesky>,
}

impl Bpx {
    pub fn new(decomposition: Decomposition, a: &Csr, kind: SmootherKind) -> Result<Self> {
        Self::with_coarse(decomposition, a, kind, CoarseSolve::Direct)
    }

    pub fn with_coarse(decomposition: Decomposition, a: &Csr, kind: SmootherKind, coarse: CoarseSolve) -> Result<Self> {
        let n = decomposition.dims.last().copied().unwrap_or(0);
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::InvalidArgument(format!(
                "matrix is {}x{}, decomposition expects {n} unknowns",
                a.nrows(),
                a.ncols()
            )));
        }
        let smoothers = decomposition
            .level_matrices(a)
            .into_iter()
            .map(|m| Smoother::new(kind, m))
            .collect::<Result<Vec<_>>>()?;
        let coarse = match coarse {
            CoarseSolve::Direct if !smoothers[0].is_empty() => Some(EnvelopeCholesky::new(smoothers[0].matrix())?),
            _ => None,
        };
        Ok(Self {
            decomposition,
            smoothers,
            coarse,
        })
    }

    pub fn coarse_solve(&self) -> CoarseSolve {
        if self.coarse.is_some() {
            CoarseSolve::Direct
        } else {
            CoarseSolve::Smooth
        }
    }

    pub fn decomposition(&self) -> &Decomposition {
        &self.decomposition
    }

    pub fn smoothers(&self) -> &[Smoother] {
        &self.smoothers
    }
}

impl Preconditioner for Bpx {
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        let d = &self.decomposition;
        let nl = d.num_levels();
        let mut res = vec![Vec::new(); nl];
        res[nl - 1] = r.to_vec();
        for k in (0..nl - 1).rev() {
            res[k] = d.prolongations[k].matvec_transpose(&res[k + 1]);
        }
        let corr: Vec<Vec<f64>> = (0..nl)
            .into_par_iter()
            .map(|k| {
                let sel = &d.levels[k].select;
                let local: Vec<f64> = sel.iter().map(|&i| res[k][i]).collect();
                let z = match (&self.coarse, k) {
                    (Some(c), 0) => c.solve(&local),
                    _ => self.smoothers[k].apply(&local),
                };
                let mut y = vec![0.0; d.dims[k]];
                for (&i, v) in sel.iter().zip(z) {
                    y[i] = v;
                }
                y
            })
            .collect();
        let mut acc = corr[0].clone();
        for k in 0..nl - 1 {
            acc = d.prolongations[k].matvec(&acc);
            for (a, c) in acc.iter_mut().zip(&corr[k + 1]) {
                *a += c;
            }
        }
        acc
    }
}
