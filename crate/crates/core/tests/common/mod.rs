//! Property checks shared by the proptest suites and the acceptance target. Each check
//! returns the measured quantity so callers can print it next to the tolerance.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use thbbpx_core::bench::{self, RunSpec, TestId};
use thbbpx_core::bpx::{Bpx, Decomposition, DecompositionKind, IdentityPreconditioner, Preconditioner, SmootherKind};
use thbbpx_core::bspline::{QuadratureRule, TensorSpace};
use thbbpx_core::galerkin::{self, Forms, LinearSystem};
use thbbpx_core::geometry::GeometryMap;
use thbbpx_core::krylov::{self, LanczosOptions};
use thbbpx_core::mesh::{AdmissibilityClass, ElementId, HierarchicalMesh};
use thbbpx_core::sparse::Csr;
use thbbpx_core::space::{BasisKind, HierarchicalSpace};

/// Random 2D hierarchy: each step refines every active element of the newest level with
/// probability `frac`.
pub fn random_mesh(p: usize, n: usize, levels: usize, frac: f64, seed: u64) -> HierarchicalMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mesh = HierarchicalMesh::new(TensorSpace::uniform(&[p, p], &[n, n]));
    for l in 0..levels.saturating_sub(1) {
        let marked: Vec<ElementId> = mesh
            .active(l)
            .iter()
            .filter(|_| rng.gen_bool(frac))
            .map(|&e| (l, e))
            .collect();
        if marked.is_empty() {
            break;
        }
        mesh = mesh.refine_raw(&marked).unwrap();
    }
    mesh
}

fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 3]> {
    (0..n).map(|_| [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), 0.0]).collect()
}

/// Largest `|sum_T T(x) - 1|` over random points.
pub fn partition_of_unity(space: &HierarchicalSpace, npts: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ones = vec![1.0; space.num_functions()];
    random_points(&mut rng, npts)
        .iter()
        .map(|x| (space.evaluate(&ones, &x[..2]).unwrap() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Largest difference between a random coarse spline and its subdivided fine version.
pub fn subdivision_commutation(p: usize, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coarse = TensorSpace::uniform(&[p, p], &[n, n]);
    let fine = coarse.dyadic_refinement();
    let sub = coarse.subdivision(&fine).unwrap();
    let c: Vec<f64> = (0..coarse.num_basis()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let f = sub.apply(&c);
    random_points(&mut rng, 100)
        .iter()
        .map(|x| (coarse.evaluate(&c, &x[..2]).unwrap() - fine.evaluate(&f, &x[..2]).unwrap()).abs())
        .fold(0.0, f64::max)
}

/// Like [`random_mesh`], but every step goes through the strictly admissible closure of `class`.
pub fn random_admissible_mesh(
    p: usize,
    n: usize,
    levels: usize,
    frac: f64,
    class: AdmissibilityClass,
    seed: u64,
) -> HierarchicalMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mesh = HierarchicalMesh::new(TensorSpace::uniform(&[p, p], &[n, n]));
    for l in 0..levels.saturating_sub(1) {
        let marked: Vec<ElementId> = mesh
            .active(l)
            .iter()
            .filter(|_| rng.gen_bool(frac))
            .map(|&e| (l, e))
            .collect();
        if marked.is_empty() {
            break;
        }
        mesh = mesh.admissible_refine(&marked, class).unwrap();
    }
    mesh
}

/// Relative residual of each column of `b` after orthogonal projection onto the span of `a`.
pub fn span_residual(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if b.ncols() == 0 {
        return 0.0;
    }
    if a.ncols() == 0 {
        return if b.norm() == 0.0 { 0.0 } else { 1.0 };
    }
    let mut a = a.clone();
    for mut c in a.column_iter_mut() {
        let n = c.norm();
        if n > 0.0 {
            c /= n;
        }
    }
    let svd = a.svd(true, false);
    let u = svd.u.unwrap();
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-10 * smax)
        .collect();
    let q = u.select_columns(&keep);
    let r = b - &q * (q.transpose() * b);
    (0..b.ncols())
        .map(|j| r.column(j).norm() / b.column(j).norm().max(1e-300))
        .fold(0.0, f64::max)
}

fn finest_matrix(space: &HierarchicalSpace) -> DMatrix<f64> {
    let cols: Vec<Vec<f64>> = (0..space.num_functions()).map(|g| space.finest_coefficients(g)).collect();
    let rows = cols.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

/// Span mismatch between HB and THB bases on `mesh`, both directions.
pub fn hb_thb_span(mesh: &HierarchicalMesh) -> f64 {
    let thb = HierarchicalSpace::new(mesh.clone(), BasisKind::Thb).unwrap();
    let hb = HierarchicalSpace::new(mesh.clone(), BasisKind::Hb).unwrap();
    assert_eq!(thb.num_functions(), hb.num_functions());
    let (t, h) = (finest_matrix(&thb), finest_matrix(&hb));
    span_residual(&h, &t).max(span_residual(&t, &h))
}

/// Largest coefficient error of the quasi-interpolant applied to a random element of the space.
pub fn qi_projector(space: &HierarchicalSpace, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c: Vec<f64> = (0..space.num_functions()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let d = space.dim();
    let got = space.quasi_interpolant(|x: &[f64; 3]| space.evaluate(&c, &x[..d]).unwrap()).unwrap();
    got.iter().zip(&c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Interior stiffness of `space` and stiffness over the full finest tensor basis.
fn stiffness_pair(space: &HierarchicalSpace) -> (Csr, Csr) {
    let geom = GeometryMap::identity(space.dim());
    let a = bench::stiffness(space, &geom).unwrap();
    let top = space.num_levels() - 1;
    let fine = HierarchicalSpace::new(HierarchicalMesh::new(space.mesh().space(top).clone()), space.kind()).unwrap();
    let quad = galerkin::default_quadrature(&fine);
    let af = galerkin::assemble_stiffness(&fine, &geom, &quad).unwrap();
    (a, af)
}

/// Largest relative entry difference between `E_l^T A E_l` and the stiffness of the level
/// generators assembled through their finest-level coefficients.
pub fn embedding_vs_direct(space: &HierarchicalSpace, kind: DecompositionKind) -> f64 {
    let (a, af) = stiffness_pair(space);
    let dec = Decomposition::build(space, kind).unwrap();
    let top = space.num_levels() - 1;
    let af = af.to_dense();
    let scale = af.amax();
    let mut worst: f64 = 0.0;
    for (l, lm) in dec.level_matrices(&a).iter().enumerate() {
        let funcs = &dec.levels[l].funcs;
        let f = DMatrix::from_fn(af.nrows(), funcs.len(), |i, j| space.expand(funcs[j], l, top)[i]);
        let direct = f.transpose() * &af * &f;
        worst = worst.max((lm.to_dense() - direct).amax() / scale);
    }
    worst
}

/// Finest-level columns of the level-`l` generators of a decomposition.
fn level_columns(space: &HierarchicalSpace, dec: &Decomposition, l: usize) -> DMatrix<f64> {
    let top = space.num_levels() - 1;
    let funcs = &dec.levels[l].funcs;
    let cols: Vec<Vec<f64>> = funcs.iter().map(|&f| space.expand(f, l, top)).collect();
    let n = space.mesh().space(top).num_basis();
    DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i])
}

/// Span residuals of `new <= mod`, `mod <= Tsupp`, `Tsupp <= Hsupp`, `Hsupp <= all` and
/// `Tsupp <= all`, each maximised over the levels.
pub fn nestedness(mesh: &HierarchicalMesh) -> [f64; 5] {
    use DecompositionKind::*;
    let thb = HierarchicalSpace::new(mesh.clone(), BasisKind::Thb).unwrap();
    let hb = HierarchicalSpace::new(mesh.clone(), BasisKind::Hb).unwrap();
    let chain = [New, Mod, Tsupp, Hsupp, All];
    let decs: Vec<(Decomposition, &HierarchicalSpace)> = chain
        .iter()
        .map(|&k| {
            let s = if k.basis() == BasisKind::Hb { &hb } else { &thb };
            (Decomposition::build(s, k).unwrap(), s)
        })
        .collect();
    let pairs = [(0, 1), (1, 2), (2, 3), (3, 4), (2, 4)];
    let mut worst = [0.0f64; 5];
    for l in 0..mesh.num_levels() {
        let cols: Vec<DMatrix<f64>> = decs.iter().map(|(d, s)| level_columns(s, d, l)).collect();
        for (w, &(i, j)) in worst.iter_mut().zip(&pairs) {
            *w = w.max(span_residual(&cols[j], &cols[i]));
        }
    }
    worst
}

/// Strictly T:2-admissible mesh families: the Test 1 corner refinement and the Test 3 marking.
pub fn strictly_admissible_families(p: usize, levels: usize) -> [(&'static str, HierarchicalMesh); 2] {
    let class: AdmissibilityClass = "T:2".parse().unwrap();
    let t1 = bench::gen_test1_mesh(p, 2, levels).unwrap();
    assert!(t1.is_strictly_admissible(class));
    [("test1", t1), ("test3", bench::gen_test34_mesh(p, levels, Some(class)).unwrap())]
}

/// Largest relative spread `max/min - 1` of `f` over `L = 3..=8`, per mesh family.
pub fn drift_over_levels(p: usize, f: impl Fn(&HierarchicalSpace) -> f64) -> [(&'static str, f64, Vec<f64>); 2] {
    let mut values: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut names = ["", ""];
    for l in 3..=8 {
        for (i, (name, mesh)) in strictly_admissible_families(p, l).into_iter().enumerate() {
            names[i] = name;
            values[i].push(f(&HierarchicalSpace::new(mesh, BasisKind::Thb).unwrap()));
        }
    }
    let spread = |v: &[f64]| {
        let (lo, hi) = v.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
        hi / lo - 1.0
    };
    let [v0, v1] = values;
    [(names[0], spread(&v0), v0), (names[1], spread(&v1), v1)]
}

fn extremes(m: &Csr) -> (f64, f64) {
    if m.nrows() <= 400 {
        let ev = krylov::dense_eigenvalues(m);
        return (ev[0], ev[ev.len() - 1]);
    }
    let opts = LanczosOptions {
        rel_tol: 1e-10,
        max_iterations: 2000,
        ..Default::default()
    };
    let e = krylov::estimate_spectrum(m, &IdentityPreconditioner, &opts);
    (e.lambda_min, e.lambda_max)
}

fn interior_mass(space: &HierarchicalSpace) -> Csr {
    let geom = GeometryMap::identity(space.dim());
    let quad = galerkin::default_quadrature(space);
    let m = galerkin::assemble_mass(space, &geom, &quad).unwrap();
    let dofs = space.interior_ids();
    m.select(&dofs, &dofs)
}

/// Ratio `max / min` of the eigenvalues of the level mass matrices scaled by `h_l^{-d}`.
pub fn scaled_mass_ratio(space: &HierarchicalSpace, kind: DecompositionKind) -> f64 {
    let dec = Decomposition::build(space, kind).unwrap();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for (l, ml) in dec.level_matrices(&interior_mass(space)).iter().enumerate() {
        if ml.nrows() == 0 {
            continue;
        }
        let s = dec.levels[l].h.powi(space.dim() as i32);
        let (a, b) = extremes(ml);
        lo = lo.min(a / s);
        hi = hi.max(b / s);
    }
    hi / lo
}

/// Ratio `max / min` over all levels of the generalized eigenvalues of `D_l v = lambda h_l^{-2} M_l v`,
/// `D_l` the Jacobi smoother inverse of the level stiffness.
pub fn jacobi_smoothing_ratio(space: &HierarchicalSpace, kind: DecompositionKind) -> f64 {
    let dec = Decomposition::build(space, kind).unwrap();
    let a = bench::stiffness(space, &GeometryMap::identity(space.dim())).unwrap();
    let levels_a = dec.level_matrices(&a);
    let levels_m = dec.level_matrices(&interior_mass(space));
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for (l, (al, ml)) in levels_a.iter().zip(&levels_m).enumerate() {
        if al.nrows() == 0 {
            continue;
        }
        let d: Vec<f64> = al.diagonal().iter().map(|v| v.sqrt()).collect();
        let mut c = ml.clone();
        for i in 0..c.nrows() {
            let (start, end) = (c.indptr()[i], c.indptr()[i + 1]);
            let cols: Vec<usize> = c.indices()[start..end].to_vec();
            for (k, j) in (start..end).zip(cols) {
                c.data_mut()[k] /= d[i] * d[j];
            }
        }
        let h2 = dec.levels[l].h.powi(2);
        let (a, b) = extremes(&c);
        lo = lo.min(h2 / b);
        hi = hi.max(h2 / a);
    }
    hi / lo
}

/// Symmetry defect and smallest Rayleigh quotient of `B` over random vectors.
pub fn bpx_symmetry_positivity(bpx: &Bpx, n: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut defect: f64 = 0.0;
    let mut rq = f64::INFINITY;
    for _ in 0..5 {
        let r1: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r2: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (b1, b2) = (bpx.apply(&r1), bpx.apply(&r2));
        let d12: f64 = r2.iter().zip(&b1).map(|(a, b)| a * b).sum();
        let d21: f64 = r1.iter().zip(&b2).map(|(a, b)| a * b).sum();
        let scale: f64 = r1.iter().zip(&b1).map(|(a, b)| a * b).sum::<f64>().abs().max(1e-300);
        defect = defect.max((d12 - d21).abs() / scale);
        let q: f64 = r1.iter().zip(&b1).map(|(a, b)| a * b).sum::<f64>() / r1.iter().map(|v| v * v).sum::<f64>();
        rq = rq.min(q);
    }
    (defect, rq)
}

/// H1-seminorm and L2 errors of the Galerkin solution for `u = sin(pi x) sin(pi y)`.
pub fn manufactured_errors(space: &HierarchicalSpace) -> (f64, f64) {
    use std::f64::consts::PI;
    let geom = GeometryMap::identity(2);
    let quad = galerkin::default_quadrature(space);
    let f = |x: &[f64; 3]| 2.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin();
    let sys = LinearSystem::assemble(space, &geom, &quad, &f).unwrap();
    let u = sys.to_global(space, &sys.solve_direct().unwrap());
    let eq = QuadratureRule::gauss_legendre(space.mesh().space(0).max_degree() + 3);
    let (mut h1, mut l2) = (0.0, 0.0);
    for (l, e) in space.mesh().active_elements() {
        let (pts, wts) = eq.on_box(2, &space.mesh().element_bounds(l, e));
        let ef = space.evaluate_all(l, e, &pts, 1).unwrap();
        let n = ef.ids.len();
        for (q, (x, w)) in pts.iter().zip(&wts).enumerate() {
            let (mut v, mut g) = (0.0, [0.0; 2]);
            for a in 0..n {
                let c = u[ef.ids[a]];
                v += c * ef.values[q * n + a];
                g[0] += c * ef.gradients[q * n + a][0];
                g[1] += c * ef.gradients[q * n + a][1];
            }
            let ue = (PI * x[0]).sin() * (PI * x[1]).sin();
            let gx = PI * (PI * x[0]).cos() * (PI * x[1]).sin();
            let gy = PI * (PI * x[0]).sin() * (PI * x[1]).cos();
            l2 += w * (v - ue).powi(2);
            h1 += w * ((g[0] - gx).powi(2) + (g[1] - gy).powi(2));
        }
    }
    (h1.sqrt(), l2.sqrt())
}

/// Mesh family for convergence studies: `n x n` base with the lower-left quarter refined once.
pub fn convergence_mesh(p: usize, n: usize) -> HierarchicalMesh {
    let mesh = HierarchicalMesh::new(TensorSpace::uniform(&[p, p], &[n, n]));
    let g = mesh.element_grid(0);
    let marked: Vec<ElementId> = (0..g.len())
        .filter(|&e| {
            let m = g.multi(e);
            2 * m[0] < n && 2 * m[1] < n
        })
        .map(|e| (0, e))
        .collect();
    mesh.refine_raw(&marked).unwrap()
}

/// Observed H1 and L2 orders between successive halvings starting at `n0` elements.
pub fn convergence_rates(p: usize, n0: usize, steps: usize) -> (Vec<f64>, Vec<f64>) {
    let errs: Vec<(f64, f64)> = (0..=steps)
        .map(|k| {
            let s = HierarchicalSpace::new(convergence_mesh(p, n0 << k), BasisKind::Thb).unwrap();
            manufactured_errors(&s)
        })
        .collect();
    let rate = |a: f64, b: f64| (a / b).log2();
    (
        errs.windows(2).map(|w| rate(w[0].0, w[1].0)).collect(),
        errs.windows(2).map(|w| rate(w[0].1, w[1].1)).collect(),
    )
}

/// Largest value of an interior-flagged function at points on the boundary.
pub fn boundary_trace(space: &HierarchicalSpace, npts: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for k in 0..npts {
        let t: f64 = rng.gen_range(0.0..1.0);
        let x = match k % 4 {
            0 => [t, 0.0],
            1 => [t, 1.0],
            2 => [0.0, t],
            _ => [1.0, t],
        };
        let (l, e) = space.mesh().locate(&x).unwrap();
        let ef = space.evaluate_all(l, e, &[[x[0], x[1], 0.0]], 0).unwrap();
        for (a, &g) in ef.ids.iter().enumerate() {
            if !space.is_boundary(g) {
                worst = worst.max(ef.values[a].abs());
            }
        }
    }
    worst
}

/// Largest relative difference between assemblies over two random element orders.
pub fn assembly_order_defect(space: &HierarchicalSpace, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let geom = GeometryMap::identity(space.dim());
    let quad = galerkin::default_quadrature(space);
    let forms = Forms {
        stiffness: true,
        mass: true,
        ..Default::default()
    };
    let mut el: Vec<ElementId> = space.mesh().active_elements().collect();
    let a = galerkin::assemble_over(space, &geom, &quad, &el, &forms).unwrap();
    el.shuffle(&mut rng);
    let b = galerkin::assemble_over(space, &geom, &quad, &el, &forms).unwrap();
    let diff = |x: &Csr, y: &Csr| {
        let (x, y) = (x.to_dense(), y.to_dense());
        (&x - &y).amax() / x.amax()
    };
    diff(a.stiffness.as_ref().unwrap(), b.stiffness.as_ref().unwrap())
        .max(diff(a.mass.as_ref().unwrap(), b.mass.as_ref().unwrap()))
}

/// Whether a mesh survives the text round trip unchanged and valid.
pub fn mesh_round_trip(mesh: &HierarchicalMesh) -> bool {
    let back = HierarchicalMesh::import_text(&mesh.export_text()).unwrap();
    back.check_invariants().is_ok() && &back == mesh
}

/// CSV rows of a small run computed with one and with three worker threads.
pub fn csv_with_threads(threads: usize) -> String {
    let spec = RunSpec {
        test: TestId::Test1,
        degree: 2,
        levels: 4,
        decomp: DecompositionKind::Tsupp,
        smoother: SmootherKind::Sgs,
        ..Default::default()
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let geom = spec.geometry_map().unwrap();
        let rows: Vec<_> = bench::mesh_sequence(&spec)
            .unwrap()
            .into_iter()
            .skip(1)
            .map(|m| bench::run_mesh(&spec, m, &geom).unwrap())
            .collect();
        bench::to_csv(&rows)
    })
}

/// Dense `B A` extremes next to the Lanczos estimate.
pub fn oracle_pair(a: &Csr, pre: &dyn Preconditioner) -> ((f64, f64), (f64, f64)) {
    let ev = krylov::dense_spectrum(a, pre).unwrap();
    let est = krylov::estimate_spectrum(a, pre, &LanczosOptions::default());
    ((ev[0], ev[ev.len() - 1]), (est.lambda_min, est.lambda_max))
}
