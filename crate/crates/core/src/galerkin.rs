//! Poisson model problem: stiffness, mass and load assembly on a hierarchical space with
//! homogeneous Dirichlet conditions imposed by dropping boundary functions.

use rayon::prelude::*;

use crate::bspline::QuadratureRule;
use crate::error::{Error, Result};
use crate::geometry::GeometryMap;
use crate::mesh::ElementId;
use crate::sparse::{Csr, EnvelopeCholesky};
use crate::space::HierarchicalSpace;

/// Right-hand side as a function of the physical point.
pub type Source<'a> = &'a (dyn Fn(&[f64; 3]) -> f64 + Sync);

const CHUNK: usize = 256;
const BATCH: usize = 64 * CHUNK;

/// Which forms to assemble.
#[derive(Clone, Copy, Default)]
pub struct Forms<'a> {
    pub stiffness: bool,
    pub mass: bool,
    pub source: Option<Source<'a>>,
}

/// Matrices and vectors over all hierarchical functions (boundary included).
#[derive(Clone, Debug, Default)]
pub struct Assembled {
    pub stiffness: Option<Csr>,
    pub mass: Option<Csr>,
    pub rhs: Option<Vec<f64>>,
}

struct Local {
    ids: Vec<usize>,
    k: Vec<f64>,
    m: Vec<f64>,
    b: Vec<f64>,
}

/// Default quadrature: `max degree + 1` Gauss points per direction.
pub fn default_quadrature(space: &HierarchicalSpace) -> QuadratureRule {
    QuadratureRule::gauss_legendre(space.mesh().space(0).max_degree() + 1)
}

fn local_forms(
    space: &HierarchicalSpace,
    geom: &GeometryMap,
    quad: &QuadratureRule,
    (level, id): ElementId,
    forms: &Forms,
) -> Result<Local> {
    let d = space.dim();
    let bounds = space.mesh().element_bounds(level, id);
    let (pts, wts) = quad.on_box(d, &bounds);
    let order = usize::from(forms.stiffness);
    let ef = space.evaluate_all(level, id, &pts, order)?;
    let n = ef.ids.len();
    let mut loc = Local {
        k: if forms.stiffness { vec![0.0; n * n] } else { Vec::new() },
        m: if forms.mass { vec![0.0; n * n] } else { Vec::new() },
        b: if forms.source.is_some() { vec![0.0; n] } else { Vec::new() },
        ids: ef.ids,
    };
    let mut grads = vec![[0.0; 3]; n];
    for (q, (xi, w)) in pts.iter().zip(&wts).enumerate() {
        let g = geom.eval(xi, 1)?;
        if g.det <= 0.0 {
            return Err(Error::Geometry { level, index: id, det: g.det });
        }
        let dx = w * g.det;
        let vals = &ef.values[q * n..(q + 1) * n];
        if forms.stiffness {
            let jit = g.inverse_transpose()?;
            for (a, out) in grads.iter_mut().enumerate() {
                let gr = ef.gradients[q * n + a];
                for r in 0..d {
                    out[r] = (0..d).map(|c| jit[(r, c)] * gr[c]).sum();
                }
            }
            for a in 0..n {
                for b in a..n {
                    let s: f64 = (0..d).map(|r| grads[a][r] * grads[b][r]).sum();
                    loc.k[a * n + b] += dx * s;
                }
            }
        }
        if forms.mass {
            for a in 0..n {
                for b in a..n {
                    loc.m[a * n + b] += dx * vals[a] * vals[b];
                }
            }
        }
        if let Some(f) = forms.source {
            let fx = f(&g.x);
            for a in 0..n {
                loc.b[a] += dx * fx * vals[a];
            }
        }
    }
    for mat in [&mut loc.k, &mut loc.m] {
        if !mat.is_empty() {
            for a in 0..n {
                for b in 0..a {
                    mat[a * n + b] = mat[b * n + a];
                }
            }
        }
    }
    Ok(loc)
}

/// Sparsity pattern of the Galerkin matrices over all functions.
pub fn pattern(space: &HierarchicalSpace) -> Result<Csr> {
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); space.num_functions()];
    for (l, e) in space.mesh().active_elements() {
        let ids = space.evaluate_all(l, e, &[], 0)?.ids;
        for &i in &ids {
            rows[i].extend_from_slice(&ids);
        }
    }
    for r in &mut rows {
        r.sort_unstable();
        r.dedup();
    }
    Ok(Csr::from_pattern(space.num_functions(), rows))
}

/// Assembles the requested forms over the given element sequence. The element order only
/// changes the summation order of contributions.
pub fn assemble_over(
    space: &HierarchicalSpace,
    geom: &GeometryMap,
    quad: &QuadratureRule,
    elements: &[ElementId],
    forms: &Forms,
) -> Result<Assembled> {
    if geom.dim() != space.dim() {
        return Err(Error::InvalidArgument("geometry and space dimensions differ".into()));
    }
    let pat = pattern(space)?;
    let mut k = forms.stiffness.then(|| pat.clone());
    let mut m = forms.mass.then(|| pat.clone());
    let mut b = forms.source.map(|_| vec![0.0; space.num_functions()]);
    for batch in elements.chunks(BATCH) {
        let locals: Vec<Vec<Local>> = batch
            .par_chunks(CHUNK)
            .map(|chunk| chunk.iter().map(|&q| local_forms(space, geom, quad, q, forms)).collect())
            .collect::<Result<_>>()?;
        for loc in locals.iter().flatten() {
            let n = loc.ids.len();
            for (a, &i) in loc.ids.iter().enumerate() {
                for (bb, &j) in loc.ids.iter().enumerate() {
                    if let Some(k) = &mut k {
                        k.add_to(i, j, loc.k[a * n + bb]);
                    }
                    if let Some(m) = &mut m {
                        m.add_to(i, j, loc.m[a * n + bb]);
                    }
                }
                if let Some(b) = &mut b {
                    b[i] += loc.b[a];
                }
            }
        }
    }
    Ok(Assembled { stiffness: k, mass: m, rhs: b })
}

/// Assembles over all active elements in level-major order.
pub fn assemble(space: &HierarchicalSpace, geom: &GeometryMap, quad: &QuadratureRule, forms: &Forms) -> Result<Assembled> {
    let elements: Vec<ElementId> = space.mesh().active_elements().collect();
    assemble_over(space, geom, quad, &elements, forms)
}

pub fn assemble_stiffness(space: &HierarchicalSpace, geom: &GeometryMap, quad: &QuadratureRule) -> Result<Csr> {
    let forms = Forms { stiffness: true, ..Default::default() };
    Ok(assemble(space, geom, quad, &forms)?.stiffness.unwrap())
}

pub fn assemble_mass(space: &HierarchicalSpace, geom: &GeometryMap, quad: &QuadratureRule) -> Result<Csr> {
    let forms = Forms { mass: true, ..Default::default() };
    Ok(assemble(space, geom, quad, &forms)?.mass.unwrap())
}

pub fn assemble_rhs(space: &HierarchicalSpace, geom: &GeometryMap, quad: &QuadratureRule, f: Source) -> Result<Vec<f64>> {
    let forms = Forms { source: Some(f), ..Default::default() };
    Ok(assemble(space, geom, quad, &forms)?.rhs.unwrap())
}

/// Interior system `A u = b` with the map between interior and global numbering.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub matrix: Csr,
    pub rhs: Vec<f64>,
    /// `dofs[i]` is the global id of interior unknown `i`.
    pub dofs: Vec<usize>,
}

impl LinearSystem {
    /// Assembles the stiffness matrix and load vector and removes boundary functions.
    pub fn assemble(space: &HierarchicalSpace, geom: &GeometryMap, quad: &QuadratureRule, f: Source) -> Result<Self> {
        let forms = Forms {
            stiffness: true,
            mass: false,
            source: Some(f),
        };
        let all = assemble(space, geom, quad, &forms)?;
        Ok(Self::restrict(space, &all.stiffness.unwrap(), &all.rhs.unwrap()))
    }

    pub fn restrict(space: &HierarchicalSpace, a: &Csr, b: &[f64]) -> Self {
        let dofs = space.interior_ids();
        Self {
            matrix: a.select(&dofs, &dofs),
            rhs: dofs.iter().map(|&g| b[g]).collect(),
            dofs,
        }
    }

    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }

    /// Global coefficient vector with zero boundary coefficients.
    pub fn to_global(&self, space: &HierarchicalSpace, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; space.num_functions()];
        for (&g, &v) in self.dofs.iter().zip(u) {
            out[g] = v;
        }
        out
    }

    /// Sparse direct solve (envelope Cholesky after reverse Cuthill-McKee).
    pub fn solve_direct(&self) -> Result<Vec<f64>> {
        Ok(EnvelopeCholesky::new(&self.matrix)?.solve(&self.rhs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bspline::TensorSpace;
    use crate::mesh::HierarchicalMesh;
    use crate::space::BasisKind;

    fn uniform(p: usize, n: usize, dim: usize) -> HierarchicalSpace {
        let m = HierarchicalMesh::new(TensorSpace::uniform(&vec![p; dim], &vec![n; dim]));
        HierarchicalSpace::new(m, BasisKind::Thb).unwrap()
    }

    #[test]
    fn linear_1d_stencils() {
        let s = uniform(1, 4, 1);
        let g = GeometryMap::identity(1);
        let q = default_quadrature(&s);
        let k = assemble_stiffness(&s, &g, &q).unwrap();
        let m = assemble_mass(&s, &g, &q).unwrap();
        for i in 1..4 {
            assert!((k.get(i, i) - 8.0).abs() < 1e-13);
            assert!((k.get(i, i - 1) + 4.0).abs() < 1e-13);
            assert!((m.get(i, i) - 0.25 * 2.0 / 3.0).abs() < 1e-14);
            assert!((m.get(i, i + 1) - 0.25 / 6.0).abs() < 1e-14);
        }
    }

    #[test]
    fn constants_in_kernel_and_total_mass() {
        let s = uniform(3, 5, 2);
        let g = GeometryMap::identity(2);
        let q = default_quadrature(&s);
        let k = assemble_stiffness(&s, &g, &q).unwrap();
        let ones = vec![1.0; s.num_functions()];
        assert!(k.matvec(&ones).iter().all(|v| v.abs() < 1e-10));
        let m = assemble_mass(&s, &g, &q).unwrap();
        let total: f64 = m.matvec(&ones).iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let one = |_: &[f64; 3]| 1.0;
        let b = assemble_rhs(&s, &g, &q, &one).unwrap();
        assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_jacobian_is_reported() {
        // mirrored unit square
        let g = GeometryMap::parse("2 1 1\n0 0 1 1\n0 0 1 1\n1 0\n0 0\n1 1\n0 1\n").unwrap();
        let s = uniform(1, 2, 2);
        let err = assemble_stiffness(&s, &g, &default_quadrature(&s)).unwrap_err();
        assert!(matches!(err, Error::Geometry { .. }));
    }
}
