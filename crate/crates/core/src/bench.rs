//! Benchmark drivers: mesh recipes of the numerical tests, spectral runs and CSV output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::adaptivity::{self, AdaptiveConfig};
use crate::bpx::{Bpx, CoarseSolve, Decomposition, DecompositionKind, IdentityPreconditioner, SmootherKind};
use crate::bspline::TensorSpace;
use crate::error::{Error, Result};
use crate::galerkin::{self, Forms};
use crate::geometry::GeometryMap;
use crate::krylov::{self, LanczosOptions, SpectralEstimate};
use crate::mesh::{AdmissibilityClass, ElementId, HierarchicalMesh};
use crate::sparse::Csr;
use crate::space::{BasisKind, HierarchicalSpace};

/// Bilinear L-shaped domain `[-1,1]^2 \ [0,1]x[-1,0]` with a C0 line at `xi_1 = 1/2`.
pub const LSHAPE_C0: &str = "# L-shaped domain, bilinear, C0 line at xi_1 = 1/2
2 1 1
0 0 0.5 1 1
0 0 1 1
0 -1
0 0
1 0
-1 -1
-1 1
1 1
";

/// Unit square.
pub const SQUARE: &str = "2 1 1
0 0 1 1
0 0 1 1
0 0
1 0
0 1
1 1
";

/// Unit cube.
pub const CUBE: &str = "3 1 1 1
0 0 1 1
0 0 1 1
0 0 1 1
0 0 0
1 0 0
0 1 0
1 1 0
0 0 1
1 0 1
0 1 1
1 1 1
";

/// Unknown count up to which unpreconditioned extremes come from a dense eigensolve.
pub const DENSE_LIMIT: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestId {
    Test1,
    Test2,
    Test3,
    Test4,
    Test5,
    Custom,
}

impl TestId {
    pub fn name(self) -> &'static str {
        match self {
            Self::Test1 => "test1",
            Self::Test2 => "test2",
            Self::Test3 => "test3",
            Self::Test4 => "test4",
            Self::Test5 => "test5",
            Self::Custom => "custom",
        }
    }
}

impl std::str::FromStr for TestId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [Self::Test1, Self::Test2, Self::Test3, Self::Test4, Self::Test5, Self::Custom]
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown test '{s}'")))
    }
}

#[derive(Clone, Debug)]
pub struct RunSpec {
    pub test: TestId,
    pub dim: usize,
    pub degree: usize,
    pub levels: usize,
    pub decomp: DecompositionKind,
    pub smoother: SmootherKind,
    pub coarse: CoarseSolve,
    pub adm: Option<AdmissibilityClass>,
    pub basis: BasisKind,
    pub geometry: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    /// Compute the unpreconditioned condition number.
    pub noprec: bool,
    /// Compute both smoothers (otherwise only `smoother`).
    pub both_smoothers: bool,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            test: TestId::Test1,
            dim: 2,
            degree: 2,
            levels: 4,
            decomp: DecompositionKind::Tsupp,
            smoother: SmootherKind::Sgs,
            coarse: CoarseSolve::Direct,
            adm: None,
            basis: BasisKind::Thb,
            geometry: None,
            out: PathBuf::from("out"),
            seed: LanczosOptions::default().seed,
            noprec: true,
            both_smoothers: true,
        }
    }
}

impl RunSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::InvalidArgument(format!("{field}: {msg}")));
        if !(1..=3).contains(&self.dim) {
            return bad("dim", format!("{} is not in 1..=3", self.dim));
        }
        if self.degree == 0 {
            return bad("degree", "must be at least 1".into());
        }
        if self.levels == 0 {
            return bad("levels", "must be at least 1".into());
        }
        let cap = if self.dim == 3 { 4 } else { 12 };
        if self.levels > cap {
            return bad("levels", format!("{} exceeds the cap of {cap} for d = {}", self.levels, self.dim));
        }
        if self.decomp.basis() != self.basis {
            return bad(
                "decomp",
                format!("'{}' requires the {:?} basis, got {:?}", self.decomp.name(), self.decomp.basis(), self.basis),
            );
        }
        match self.test {
            TestId::Test2 | TestId::Test3 | TestId::Test4 if self.dim != 2 => {
                return bad("dim", format!("{} is defined for d = 2", self.test.name()));
            }
            TestId::Test3 | TestId::Test4 if self.adm.is_none() => {
                return bad("adm", format!("{} needs an admissibility class", self.test.name()));
            }
            TestId::Test5 if self.dim != 2 => return bad("dim", "test5 is defined for d = 2".into()),
            _ => {}
        }
        Ok(())
    }

    pub fn tag(&self) -> String {
        let adm = match self.adm {
            None => "none".to_string(),
            Some(c) => format!("{:?}{}", c.kind, c.m),
        };
        format!(
            "{}_d{}_p{}_{}_{}_{}_adm{}",
            self.test.name(),
            self.dim,
            self.degree,
            match self.basis {
                BasisKind::Hb => "hb",
                BasisKind::Thb => "thb",
            },
            self.decomp.name(),
            self.smoother.name(),
            adm
        )
    }

    pub fn geometry_map(&self) -> Result<GeometryMap> {
        match (&self.geometry, self.test) {
            (Some(p), _) => GeometryMap::read(p),
            (None, TestId::Test5) => GeometryMap::parse(LSHAPE_C0),
            (None, _) => Ok(GeometryMap::identity(self.dim)),
        }
    }
}

/// Test 1 mesh: `(2p+1)^d` elements; step `l` refines the level-`l` corner block of
/// `p + 2^l` elements per direction.
pub fn gen_test1_mesh(p: usize, d: usize, levels: usize) -> Result<HierarchicalMesh> {
    let n = 2 * p + 1;
    let mut mesh = HierarchicalMesh::new(TensorSpace::uniform(&vec![p; d], &vec![n; d]));
    for l in 0..levels.saturating_sub(1) {
        let lim = p + (1 << l);
        let marked = corner_block(&mesh, l, lim, d);
        mesh = mesh.refine_raw(&marked)?;
    }
    Ok(mesh)
}

/// Active level-`l` elements whose indices are all below `lim`.
fn corner_block(mesh: &HierarchicalMesh, l: usize, lim: usize, d: usize) -> Vec<ElementId> {
    let g = mesh.element_grid(l);
    mesh.active(l)
        .iter()
        .copied()
        .filter(|&e| {
            let m = g.multi(e);
            (0..d).all(|k| m[k] < lim)
        })
        .map(|e| (l, e))
        .collect()
}

/// Marked set of Tests 2-4 at step `l`: active level-`l` elements inside `(0,1/3)^2`.
fn test2_marking(mesh: &HierarchicalMesh, l: usize) -> Vec<ElementId> {
    corner_block(mesh, l, 3 << l, 2)
}

/// Test 2 mesh: `9 x 9` elements of degree `p`, refining `(0,1/3)^2` at every step.
pub fn gen_test2_mesh(p: usize, levels: usize) -> Result<HierarchicalMesh> {
    gen_test34_mesh(p, levels, None)
}

/// Test 3/4 mesh: as Test 2 followed by admissible refinement of `class`.
pub fn gen_test34_mesh(p: usize, levels: usize, class: Option<AdmissibilityClass>) -> Result<HierarchicalMesh> {
    Ok(test34_sequence(p, levels, class)?.pop().unwrap())
}

/// Meshes with 1, 2, ..., `levels` levels of the Test 2-4 recipe.
pub fn test34_sequence(p: usize, levels: usize, class: Option<AdmissibilityClass>) -> Result<Vec<HierarchicalMesh>> {
    let mut mesh = HierarchicalMesh::new(TensorSpace::uniform(&[p, p], &[9, 9]));
    let mut out = vec![mesh.clone()];
    for l in 0..levels.saturating_sub(1) {
        let marked = test2_marking(&mesh, l);
        mesh = match class {
            None => mesh.refine_raw(&marked)?,
            Some(c) => mesh.admissible_refine(&marked, c)?,
        };
        out.push(mesh.clone());
    }
    Ok(out)
}

/// Custom recipe: Test 1 corner refinement, optionally closed under admissibility.
pub fn gen_custom_mesh(spec: &RunSpec) -> Result<HierarchicalMesh> {
    let (p, d) = (spec.degree, spec.dim);
    let n = 2 * p + 1;
    let mut mesh = HierarchicalMesh::new(TensorSpace::uniform(&vec![p; d], &vec![n; d]));
    for l in 0..spec.levels.saturating_sub(1) {
        let marked = corner_block(&mesh, l, p + (1 << l), d);
        mesh = match spec.adm {
            None => mesh.refine_raw(&marked)?,
            Some(c) => mesh.admissible_refine(&marked, c)?,
        };
    }
    Ok(mesh)
}

/// Meshes for `L = 1..=spec.levels` (not used by Test 5).
pub fn mesh_sequence(spec: &RunSpec) -> Result<Vec<HierarchicalMesh>> {
    match spec.test {
        TestId::Test1 => (1..=spec.levels).map(|l| gen_test1_mesh(spec.degree, spec.dim, l)).collect(),
        TestId::Test2 => test34_sequence(spec.degree, spec.levels, None),
        TestId::Test3 | TestId::Test4 => test34_sequence(spec.degree, spec.levels, spec.adm),
        TestId::Custom => (1..=spec.levels)
            .map(|l| gen_custom_mesh(&RunSpec { levels: l, ..spec.clone() }))
            .collect(),
        TestId::Test5 => Err(Error::Unsupported("test5 meshes come from the adaptive loop".into())),
    }
}

/// Interior stiffness matrix of a mesh.
pub fn stiffness(space: &HierarchicalSpace, geom: &GeometryMap) -> Result<Csr> {
    let quad = galerkin::default_quadrature(space);
    let forms = Forms {
        stiffness: true,
        ..Default::default()
    };
    let a = galerkin::assemble(space, geom, &quad, &forms)?.stiffness.unwrap();
    let dofs = space.interior_ids();
    Ok(a.select(&dofs, &dofs))
}

/// One output row.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub level: usize,
    pub noprec: Option<f64>,
    pub gauss_seidel: Option<f64>,
    pub jacobi: Option<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub dofs: usize,
    pub iters: usize,
}

pub const CSV_HEADER: &str = "level,NoPrec,Gauss-Seidel,Jacobi,lambda_min,lambda_max,dofs,iters";

fn fmt_float(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.5e}"),
        None => "nan".into(),
    }
}

impl Row {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.level,
            fmt_float(self.noprec),
            fmt_float(self.gauss_seidel),
            fmt_float(self.jacobi),
            fmt_float(Some(self.lambda_min)),
            fmt_float(Some(self.lambda_max)),
            self.dofs,
            self.iters
        )
    }
}

pub fn to_csv(rows: &[Row]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv());
        s.push('\n');
    }
    s
}

/// Spectrum of `B A` for a given interior stiffness matrix.
pub fn preconditioned_spectrum(
    space: &HierarchicalSpace,
    a: &Csr,
    decomp: DecompositionKind,
    smoother: SmootherKind,
    coarse: CoarseSolve,
    opts: &LanczosOptions,
) -> Result<(SpectralEstimate, Bpx)> {
    let d = Decomposition::build(space, decomp)?;
    let bpx = Bpx::with_coarse(d, a, smoother, coarse)?;
    Ok((krylov::estimate_spectrum(a, &bpx, opts), bpx))
}

/// Condition number of the unpreconditioned matrix: dense for small systems, otherwise
/// Lanczos for the top and inverse Lanczos (inner solves preconditioned by `bpx`) for the bottom.
pub fn unpreconditioned_kappa(a: &Csr, bpx: &Bpx, opts: &LanczosOptions) -> f64 {
    if a.nrows() <= DENSE_LIMIT {
        let ev = krylov::dense_eigenvalues(a);
        return ev[ev.len() - 1] / ev[0];
    }
    let top = krylov::estimate_spectrum(a, &IdentityPreconditioner, opts);
    let bottom = krylov::smallest_eigenvalue_inverse(a, bpx, 1e-10, opts);
    top.lambda_max / bottom.lambda_min
}

/// Row for one mesh.
pub fn run_mesh(spec: &RunSpec, mesh: HierarchicalMesh, geom: &GeometryMap) -> Result<Row> {
    let level = mesh.num_levels();
    let space = HierarchicalSpace::new(mesh, spec.basis)?;
    let a = stiffness(&space, geom)?;
    spectral_row(spec, &space, &a, level)
}

pub fn spectral_row(spec: &RunSpec, space: &HierarchicalSpace, a: &Csr, level: usize) -> Result<Row> {
    let opts = LanczosOptions {
        seed: spec.seed,
        ..Default::default()
    };
    let (main, bpx) = preconditioned_spectrum(space, a, spec.decomp, spec.smoother, spec.coarse, &opts)?;
    let other = if spec.both_smoothers {
        let k = match spec.smoother {
            SmootherKind::Sgs => SmootherKind::Jacobi,
            SmootherKind::Jacobi => SmootherKind::Sgs,
        };
        Some(preconditioned_spectrum(space, a, spec.decomp, k, spec.coarse, &opts)?.0.kappa())
    } else {
        None
    };
    let (gauss_seidel, jacobi) = match spec.smoother {
        SmootherKind::Sgs => (Some(main.kappa()), other),
        SmootherKind::Jacobi => (other, Some(main.kappa())),
    };
    let b = krylov::random_vector(a.nrows(), spec.seed.wrapping_add(1));
    let iters = krylov::pcg(a, &b, &bpx, 1e-8, 10_000).iterations;
    Ok(Row {
        level,
        noprec: spec.noprec.then(|| unpreconditioned_kappa(a, &bpx, &opts)),
        gauss_seidel,
        jacobi,
        lambda_min: main.lambda_min,
        lambda_max: main.lambda_max,
        dofs: a.nrows(),
        iters,
    })
}

/// Minimal SVG drawing of the active elements of a 2D mesh.
pub fn mesh_svg(mesh: &HierarchicalMesh) -> String {
    let size = 600.0;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">\n"
    );
    for (l, e) in mesh.active_elements() {
        let b = mesh.element_bounds(l, e);
        let (y0, y1) = if mesh.dim() >= 2 { b[1] } else { (0.0, 1.0) };
        let _ = writeln!(
            s,
            "<rect x=\"{:.3}\" y=\"{:.3}\" width=\"{:.3}\" height=\"{:.3}\" fill=\"none\" stroke=\"black\" stroke-width=\"0.3\"/>",
            b[0].0 * size,
            (1.0 - y1) * size,
            (b[0].1 - b[0].0) * size,
            (y1 - y0) * size
        );
    }
    s.push_str("</svg>\n");
    s
}

fn write_mesh(dir: &Path, name: &str, mesh: &HierarchicalMesh) -> Result<()> {
    mesh.write_text(&dir.join(format!("{name}.mesh")))?;
    if mesh.dim() == 2 {
        std::fs::write(dir.join(format!("{name}.svg")), mesh_svg(mesh))?;
    }
    Ok(())
}

/// Runs a spec, writing `<tag>.csv` and mesh snapshots into `spec.out`. Returns the rows.
pub fn run(spec: &RunSpec) -> Result<Vec<Row>> {
    spec.validate()?;
    std::fs::create_dir_all(&spec.out)?;
    let geom = spec.geometry_map()?;
    let tag = spec.tag();
    let rows = if spec.test == TestId::Test5 {
        let cfg = AdaptiveConfig {
            max_levels: spec.levels,
            adm: spec.adm,
            coarse: spec.coarse,
            ..AdaptiveConfig::test5(spec.degree)
        };
        let mut rows = Vec::new();
        let mut step = 0;
        adaptivity::adaptive_loop(&cfg, &geom, &|_| 1.0, &mut |space, a| {
            rows.push(spectral_row(spec, space, a, space.num_levels())?);
            write_mesh(&spec.out, &format!("{tag}_step{step}"), space.mesh())?;
            step += 1;
            Ok(())
        })?;
        rows
    } else {
        let mut rows = Vec::new();
        for mesh in mesh_sequence(spec)?.into_iter().skip(1) {
            write_mesh(&spec.out, &format!("{tag}_L{}", mesh.num_levels()), &mesh)?;
            rows.push(run_mesh(spec, mesh, &geom)?);
        }
        rows
    };
    std::fs::write(spec.out.join(format!("{tag}.csv")), to_csv(&rows))?;
    Ok(rows)
}
