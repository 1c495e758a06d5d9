//! Adaptive loop: solve, estimate, mark, refine.

use rayon::prelude::*;

use crate::bpx::{Bpx, CoarseSolve, Decomposition, DecompositionKind, SmootherKind};
use crate::bspline::TensorSpace;
use crate::error::{Error, Result};
use crate::galerkin::{self, LinearSystem, Source};
use crate::geometry::GeometryMap;
use crate::krylov;
use crate::mesh::{AdmissibilityClass, AdmissibilityKind, ElementId, HierarchicalMesh};
use crate::sparse::Csr;
use crate::space::{BasisKind, HierarchicalSpace};

#[derive(Clone, Debug)]
pub struct AdaptiveConfig {
    pub theta: f64,
    pub adm: Option<AdmissibilityClass>,
    /// Stop once the mesh has this many levels.
    pub max_levels: usize,
    pub max_steps: usize,
    pub degree: usize,
    pub base: Vec<usize>,
    pub decomp: DecompositionKind,
    pub smoother: SmootherKind,
    pub coarse: CoarseSolve,
    pub solve_tol: f64,
}

impl AdaptiveConfig {
    /// Defaults of the L-shape experiment: `32 x 16` elements, `theta = 0.85`, class `(T, 2)`,
    /// eleven levels.
    pub fn test5(degree: usize) -> Self {
        Self {
            theta: 0.85,
            adm: Some(AdmissibilityClass { kind: AdmissibilityKind::T, m: 2 }),
            max_levels: 11,
            max_steps: 200,
            degree,
            base: vec![32, 16],
            decomp: DecompositionKind::Tsupp,
            smoother: SmootherKind::Sgs,
            coarse: CoarseSolve::Direct,
            solve_tol: 1e-10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::InvalidArgument(format!("theta = {} is not in (0, 1]", self.theta)));
        }
        if self.base.is_empty() || self.base.len() > 3 || self.base.contains(&0) {
            return Err(Error::InvalidArgument("base grid needs 1 to 3 positive sizes".into()));
        }
        Ok(())
    }
}

/// Summary of one loop iteration.
#[derive(Clone, Debug)]
pub struct AdaptiveStep {
    pub levels: usize,
    pub dofs: usize,
    pub iterations: usize,
    pub estimate: f64,
    pub marked: usize,
    pub mesh: HierarchicalMesh,
}

/// Element indicators `eta_Q = h_Q ||f + Lap u_h||_{L2(Q)}`, `h_Q = |Q|^{1/d}` (physical),
/// in active-element order. `u` holds global coefficients.
pub fn estimate(
    space: &HierarchicalSpace,
    geom: &GeometryMap,
    u: &[f64],
    f: Source,
) -> Result<Vec<(ElementId, f64)>> {
    let d = space.dim();
    let quad = galerkin::default_quadrature(space);
    let elements: Vec<ElementId> = space.mesh().active_elements().collect();
    elements
        .par_iter()
        .map(|&(l, e)| {
            let (pts, wts) = quad.on_box(d, &space.mesh().element_bounds(l, e));
            let ef = space.evaluate_all(l, e, &pts, 2)?;
            let n = ef.ids.len();
            let (mut int, mut meas) = (0.0, 0.0);
            for (q, (xi, w)) in pts.iter().zip(&wts).enumerate() {
                let g = geom.eval(xi, 2)?;
                if g.det <= 0.0 {
                    return Err(Error::Geometry { level: l, index: e, det: g.det });
                }
                let mut grad = [0.0; 3];
                let mut hess = [[0.0; 3]; 3];
                for a in 0..n {
                    let c = u[ef.ids[a]];
                    if c == 0.0 {
                        continue;
                    }
                    let gr = ef.gradients[q * n + a];
                    let h = ef.hessians[q * n + a];
                    for j in 0..d {
                        grad[j] += c * gr[j];
                        for k in 0..d {
                            hess[j][k] += c * h[j][k];
                        }
                    }
                }
                let jit = g.inverse_transpose()?;
                let gx: Vec<f64> = (0..d).map(|m| (0..d).map(|j| jit[(m, j)] * grad[j]).sum()).collect();
                // H_x = J^{-T} (H_xi - sum_m g_m H F_m) J^{-1}
                let mut inner = nalgebra::Matrix3::zeros();
                for j in 0..d {
                    for k in 0..d {
                        inner[(j, k)] = hess[j][k] - (0..d).map(|m| gx[m] * g.hess[m][j][k]).sum::<f64>();
                    }
                }
                let hx = jit * inner * jit.transpose();
                let lap: f64 = (0..d).map(|m| hx[(m, m)]).sum();
                let r = f(&g.x) + lap;
                let dx = w * g.det;
                int += dx * r * r;
                meas += dx;
            }
            Ok(((l, e), meas.powf(1.0 / d as f64) * int.sqrt()))
        })
        .collect()
}

/// Greedy Dörfler marking: largest indicators first (ties by element id) until the marked
/// squared sum reaches `theta^2` of the total.
pub fn mark_dorfler(eta: &[(ElementId, f64)], theta: f64) -> Vec<ElementId> {
    let mut order: Vec<&(ElementId, f64)> = eta.iter().filter(|x| x.1 > 0.0).collect();
    if theta >= 1.0 {
        let mut all: Vec<ElementId> = order.iter().map(|x| x.0).collect();
        all.sort_unstable();
        return all;
    }
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let total: f64 = eta.iter().map(|x| x.1 * x.1).sum();
    let target = theta * theta * total;
    let mut acc = 0.0;
    let mut out = Vec::new();
    for x in order {
        if acc >= target {
            break;
        }
        acc += x.1 * x.1;
        out.push(x.0);
    }
    out
}

/// Runs the loop from a uniform mesh of degree `cfg.degree`. `on_step` sees every space and
/// its interior stiffness matrix before the solve.
pub fn adaptive_loop(
    cfg: &AdaptiveConfig,
    geom: &GeometryMap,
    f: Source,
    on_step: &mut dyn FnMut(&HierarchicalSpace, &Csr) -> Result<()>,
) -> Result<Vec<AdaptiveStep>> {
    cfg.validate()?;
    let d = cfg.base.len();
    let base = TensorSpace::uniform(&vec![cfg.degree; d], &cfg.base);
    adaptive_loop_from(cfg, HierarchicalMesh::new(base), geom, f, on_step)
}

pub fn adaptive_loop_from(
    cfg: &AdaptiveConfig,
    mut mesh: HierarchicalMesh,
    geom: &GeometryMap,
    f: Source,
    on_step: &mut dyn FnMut(&HierarchicalSpace, &Csr) -> Result<()>,
) -> Result<Vec<AdaptiveStep>> {
    cfg.validate()?;
    let mut steps = Vec::new();
    loop {
        let space = HierarchicalSpace::new(mesh.clone(), BasisKind::Thb)?;
        let quad = galerkin::default_quadrature(&space);
        let sys = LinearSystem::assemble(&space, geom, &quad, f)?;
        on_step(&space, &sys.matrix)?;
        let bpx = Bpx::with_coarse(Decomposition::build(&space, cfg.decomp)?, &sys.matrix, cfg.smoother, cfg.coarse)?;
        let sol = krylov::pcg(&sys.matrix, &sys.rhs, &bpx, cfg.solve_tol, 10_000);
        let u = sys.to_global(&space, &sol.x);
        let mut step = AdaptiveStep {
            levels: mesh.num_levels(),
            dofs: sys.len(),
            iterations: sol.iterations,
            estimate: 0.0,
            marked: 0,
            mesh: mesh.clone(),
        };
        if mesh.num_levels() >= cfg.max_levels || steps.len() + 1 >= cfg.max_steps {
            steps.push(step);
            break;
        }
        let eta = estimate(&space, geom, &u, f)?;
        step.estimate = eta.iter().map(|x| x.1 * x.1).sum::<f64>().sqrt();
        let marked = mark_dorfler(&eta, cfg.theta);
        step.marked = marked.len();
        steps.push(step);
        if marked.is_empty() {
            break;
        }
        mesh = match cfg.adm {
            Some(c) => mesh.admissible_refine(&marked, c)?,
            None => mesh.refine_raw(&marked)?,
        };
    }
    Ok(steps)
}
