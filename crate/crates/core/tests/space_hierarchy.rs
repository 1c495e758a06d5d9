use thbbpx_core::bspline::TensorSpace;
use thbbpx_core::mesh::HierarchicalMesh;
use thbbpx_core::space::{BasisKind, HierarchicalSpace};

fn corner_mesh(p: usize, levels: usize) -> HierarchicalMesh {
    let n = 2 * p + 1;
    let mut m = HierarchicalMesh::new(TensorSpace::uniform(&[p, p], &[n, n]));
    for l in 0..levels - 1 {
        let lim = p + (1 << l);
        let marked: Vec<_> = m
            .active(l)
            .iter()
            .copied()
            .filter(|&e| {
                let mi = m.element_grid(l).multi(e);
                mi[0] < lim && mi[1] < lim
            })
            .map(|e| (l, e))
            .collect();
        m = m.refine_raw(&marked).unwrap();
    }
    m
}

fn finest_of_step(s: &HierarchicalSpace, k: usize, col: usize) -> Vec<f64> {
    let steps = s.steps();
    let mut v = vec![0.0; steps[k].len()];
    v[col] = 1.0;
    for j in k..steps.len() - 1 {
        v = steps[j].prolongation.as_ref().unwrap().matvec(&v);
    }
    let top = s.num_levels() - 1;
    let mut out = vec![0.0; s.mesh().space(top).num_basis()];
    for (g, c) in v.iter().enumerate() {
        if *c != 0.0 {
            for (o, f) in out.iter_mut().zip(s.finest_coefficients(g)) {
                *o += c * f;
            }
        }
    }
    out
}

#[test]
fn prolongation_products_match_expansions() {
    for kind in [BasisKind::Thb, BasisKind::Hb] {
        for p in [1, 2, 3] {
            let s = HierarchicalSpace::new(corner_mesh(p, 4), kind).unwrap();
            let top = s.num_levels() - 1;
            assert_eq!(s.steps().last().unwrap().funcs, s.functions());
            for k in 0..s.num_levels() {
                for (col, &f) in s.steps()[k].funcs.iter().enumerate() {
                    let got = finest_of_step(&s, k, col);
                    let want = s.expand(f, k, top);
                    for (a, b) in got.iter().zip(&want) {
                        assert!((a - b).abs() < 1e-12, "{kind:?} p={p} step {k} fn {f:?}");
                    }
                }
            }
        }
    }
}

#[test]
fn element_evaluation_matches_finest_expansion() {
    for kind in [BasisKind::Thb, BasisKind::Hb] {
        let s = HierarchicalSpace::new(corner_mesh(2, 4), kind).unwrap();
        let pts = [[0.013, 0.021, 0.0], [0.31, 0.07, 0.0], [0.77, 0.5, 0.0], [0.05, 0.9, 0.0]];
        for x in pts {
            let (l, e) = s.mesh().locate(&x[..2]).unwrap();
            let ef = s.evaluate_all(l, e, &[x], 1).unwrap();
            let mut seen = 0;
            for g in 0..s.num_functions() {
                let v = s.evaluate_via_finest(g, &x[..2]).unwrap();
                match ef.ids.binary_search(&g) {
                    Ok(i) => {
                        assert!((ef.values[i] - v).abs() < 1e-12);
                        seen += 1;
                    }
                    Err(_) => assert!(v.abs() < 1e-14),
                }
            }
            assert_eq!(seen, ef.ids.len());
            if kind == BasisKind::Thb {
                let sum: f64 = ef.values.iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
                let gsum: f64 = ef.gradients.iter().map(|g| g[0]).sum();
                assert!(gsum.abs() < 1e-10);
            }
        }
    }
}
