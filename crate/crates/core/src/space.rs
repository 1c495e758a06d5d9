//! Hierarchical (HB) and truncated hierarchical (THB) B-spline spaces.
//!
//! Construction sweeps the levels once. For THB it keeps, for every function that can still
//! be truncated, its coefficients at the current level restricted to the level functions
//! whose support meets the current subdomain; this restriction is closed under subdivision,
//! so no finest-level expansion is ever formed. The sweep also records the intermediate
//! spaces of the iterative construction and the two-level prolongations between them.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::bspline::{first_support_element, local_projection, TensorSpace, TensorSubdivision};
use crate::error::{Error, Result};
use crate::grid::{box_iter, MultiIndex};
use crate::mesh::{AdmissibilityKind, ElementId, HierarchicalMesh};
use crate::sparse::Csr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BasisKind {
    Hb,
    Thb,
}

impl std::str::FromStr for BasisKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hb" => Ok(Self::Hb),
            "thb" => Ok(Self::Thb),
            other => Err(Error::Parse(format!("unknown basis kind '{other}'"))),
        }
    }
}

/// Function of the construction identified by its level and tensor index at that level.
pub type FnId = (usize, usize);

/// Sparse coefficient vector over one level's tensor basis, sorted by index.
pub type SparseRep = Vec<(usize, f64)>;

/// Per-level function sets, all sorted.
#[derive(Clone, Debug, Default)]
pub struct LevelSets {
    /// Functions whose support meets the interior of `Omega^k`.
    pub touching: Vec<usize>,
    /// `B^{k,k}`: support contained in `Omega^k`.
    pub contained: Vec<usize>,
    /// `B^{k,k+1}`: support contained in `Omega^{k+1}`.
    pub contained_next: Vec<usize>,
    /// `A^k = B^{k,k} \ B^{k,k+1}`.
    pub active: Vec<usize>,
    /// Functions not vanishing on some active level-`k` element.
    pub on_active: Vec<usize>,
}

fn contains(sorted: &[usize], x: usize) -> bool {
    sorted.binary_search(&x).is_ok()
}

/// One intermediate space of the iterative construction.
#[derive(Clone, Debug)]
pub struct StepSpace {
    /// Functions of the step, sorted by `(level, index)`.
    pub funcs: Vec<FnId>,
    /// Whether the (truncated) support meets the interior of `Omega^step`.
    pub supp: Vec<bool>,
    /// Whether the function was added or changed by truncation at this step.
    pub modified: Vec<bool>,
    /// Whether the function was added at this step.
    pub new: Vec<bool>,
    /// Boundary flag of the mother function.
    pub boundary: Vec<bool>,
    /// Prolongation into the next step (rows: next step's functions), absent at the last step.
    pub prolongation: Option<Csr>,
}

impl StepSpace {
    pub fn len(&self) -> usize {
        self.funcs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.funcs.is_empty()
    }

    pub fn index_of(&self, f: FnId) -> Option<usize> {
        self.funcs.binary_search(&f).ok()
    }
}

/// Basis functions not vanishing on an element, with values and derivatives at points.
/// Arrays are point-major: entry `pt * ids.len() + i` belongs to `ids[i]`.
#[derive(Clone, Debug, Default)]
pub struct ElementFunctions {
    pub ids: Vec<usize>,
    pub num_points: usize,
    pub values: Vec<f64>,
    pub gradients: Vec<[f64; 3]>,
    pub hessians: Vec<[[f64; 3]; 3]>,
}

#[derive(Clone, Debug)]
pub struct HierarchicalSpace {
    mesh: HierarchicalMesh,
    kind: BasisKind,
    sets: Vec<LevelSets>,
    functions: Vec<FnId>,
    offsets: Vec<usize>,
    boundary: Vec<bool>,
    subdivisions: Vec<TensorSubdivision>,
    rows: Vec<HashMap<usize, Vec<(usize, f64)>>>,
    steps: Vec<StepSpace>,
}

impl HierarchicalSpace {
    pub fn new(mesh: HierarchicalMesh, kind: BasisKind) -> Result<Self> {
        let nl = mesh.num_levels();
        let sets: Vec<LevelSets> = (0..nl).map(|k| level_sets(&mesh, k)).collect();
        let mut functions = Vec::new();
        let mut offsets = Vec::with_capacity(nl + 1);
        for (k, s) in sets.iter().enumerate() {
            offsets.push(functions.len());
            functions.extend(s.active.iter().map(|&i| (k, i)));
        }
        offsets.push(functions.len());
        let boundary = functions.iter().map(|&(l, i)| is_boundary(mesh.space(l), i)).collect();
        let subdivisions = (0..nl.saturating_sub(1))
            .map(|k| mesh.space(k).subdivision(mesh.space(k + 1)))
            .collect::<Result<Vec<_>>>()?;
        let mut space = Self {
            mesh,
            kind,
            sets,
            functions,
            offsets,
            boundary,
            subdivisions,
            rows: Vec::new(),
            steps: Vec::new(),
        };
        match kind {
            BasisKind::Thb => space.sweep_thb()?,
            BasisKind::Hb => space.sweep_hb()?,
        }
        Ok(space)
    }

    pub fn mesh(&self) -> &HierarchicalMesh {
        &self.mesh
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    pub fn num_levels(&self) -> usize {
        self.mesh.num_levels()
    }

    pub fn level_sets(&self, k: usize) -> &LevelSets {
        &self.sets[k]
    }

    pub fn num_functions(&self) -> usize {
        self.functions.len()
    }

    pub fn function(&self, gid: usize) -> FnId {
        self.functions[gid]
    }

    pub fn functions(&self) -> &[FnId] {
        &self.functions
    }

    pub fn gid(&self, level: usize, index: usize) -> Option<usize> {
        let a = &self.sets.get(level)?.active;
        a.binary_search(&index).ok().map(|k| self.offsets[level] + k)
    }

    pub fn is_boundary(&self, gid: usize) -> bool {
        self.boundary[gid]
    }

    /// Global ids of functions whose mother does not touch the boundary.
    pub fn interior_ids(&self) -> Vec<usize> {
        (0..self.num_functions()).filter(|&g| !self.boundary[g]).collect()
    }

    /// Intermediate spaces of the construction, one per level.
    pub fn steps(&self) -> &[StepSpace] {
        &self.steps
    }

    pub fn subdivision(&self, k: usize) -> &TensorSubdivision {
        &self.subdivisions[k]
    }

    fn sweep_thb(&mut self) -> Result<()> {
        let nl = self.num_levels();
        let mut working: BTreeMap<FnId, SparseRep> = BTreeMap::new();
        let mut modified_next: HashSet<FnId> = HashSet::new();
        let mut rows = Vec::with_capacity(nl);
        let mut steps = Vec::with_capacity(nl);
        for k in 0..nl {
            let sets = &self.sets[k];
            for &i in &sets.contained {
                working.insert((k, i), vec![(i, 1.0)]);
            }
            let funcs = step_functions(&self.sets, k);
            let mut step = StepSpace {
                supp: vec![false; funcs.len()],
                modified: vec![false; funcs.len()],
                new: vec![false; funcs.len()],
                boundary: funcs.iter().map(|&(l, i)| is_boundary(self.mesh.space(l), i)).collect(),
                funcs,
                prolongation: None,
            };
            for (n, &f) in step.funcs.iter().enumerate() {
                step.new[n] = f.0 == k;
                step.modified[n] = f.0 == k || modified_next.contains(&f);
                step.supp[n] = f.0 == k || working.get(&f).is_some_and(|r| !r.is_empty());
            }
            // evaluation rows of the final basis on active level-k elements
            let mut level_rows: HashMap<usize, Vec<(usize, f64)>> = HashMap::new();
            for (&f, rep) in &working {
                let Some(g) = self.gid(f.0, f.1) else { continue };
                for &(i, c) in rep {
                    if contains(&sets.on_active, i) {
                        level_rows.entry(i).or_default().push((g, c));
                    }
                }
            }
            rows.push(level_rows);
            modified_next.clear();
            if k + 1 < nl {
                let sub = &self.subdivisions[k];
                let next = &self.sets[k + 1];
                let next_funcs = step_functions(&self.sets, k + 1);
                let col_of = |f: FnId| step.index_of(f).expect("function of the step");
                let row_of = |f: FnId| {
                    next_funcs
                        .binary_search(&f)
                        .map_err(|_| Error::Internal(format!("function {f:?} missing from step {}", k + 1)))
                };
                let mut trip = Vec::new();
                let mut still = BTreeMap::new();
                let mut covered = vec![false; step.len()];
                for (f, rep) in std::mem::take(&mut working) {
                    let sigma = subdivide(sub, &rep, |j| contains(&next.touching, j));
                    let col = col_of(f);
                    covered[col] = true;
                    if f.0 == k && contains(&sets.contained_next, f.1) {
                        for (j, c) in sigma {
                            if !contains(&next.contained, j) {
                                return Err(Error::Internal(format!(
                                    "removed function {f:?} has child {j} outside B^{{{0},{0}}}",
                                    k + 1
                                )));
                            }
                            trip.push((row_of((k + 1, j))?, col, c));
                        }
                        continue;
                    }
                    trip.push((row_of(f)?, col, 1.0));
                    let mut kept = Vec::with_capacity(sigma.len());
                    let mut changed = false;
                    for (j, c) in sigma {
                        if contains(&next.contained, j) {
                            trip.push((row_of((k + 1, j))?, col, c));
                            changed = true;
                        } else {
                            kept.push((j, c));
                        }
                    }
                    if changed {
                        modified_next.insert(f);
                    }
                    if !kept.is_empty() {
                        still.insert(f, kept);
                    }
                }
                // frozen functions are unchanged
                for (n, &f) in step.funcs.iter().enumerate() {
                    if !covered[n] {
                        trip.push((row_of(f)?, n, 1.0));
                    }
                }
                step.prolongation = Some(Csr::from_triplets(next_funcs.len(), step.len(), &trip));
                working = still;
            }
            steps.push(step);
        }
        self.rows = rows;
        self.steps = steps;
        Ok(())
    }

    fn sweep_hb(&mut self) -> Result<()> {
        let nl = self.num_levels();
        let mut steps = Vec::with_capacity(nl);
        for k in 0..nl {
            let sets = &self.sets[k];
            let funcs = step_functions(&self.sets, k);
            // level-l ancestors of Omega^k, used for the support test
            let mut proj: Vec<Vec<usize>> = Vec::with_capacity(k + 1);
            for l in 0..=k {
                let mut a: Vec<usize> = self.mesh.omega(k).iter().map(|&e| self.mesh.ancestor(k, e, l)).collect();
                a.sort_unstable();
                a.dedup();
                proj.push(a);
            }
            let mut step = StepSpace {
                supp: vec![false; funcs.len()],
                modified: vec![false; funcs.len()],
                new: vec![false; funcs.len()],
                boundary: funcs.iter().map(|&(l, i)| is_boundary(self.mesh.space(l), i)).collect(),
                funcs,
                prolongation: None,
            };
            for (n, &(l, i)) in step.funcs.iter().enumerate() {
                step.new[n] = l == k;
                step.modified[n] = l == k;
                let sp = self.mesh.space(l);
                let (lo, hi) = sp.support_box(&sp.basis_grid().multi(i));
                let eg = sp.element_grid();
                step.supp[n] = l == k || box_iter(lo, hi).any(|e| contains(&proj[l], eg.linear(&e)));
            }
            if k + 1 < nl {
                let sub = &self.subdivisions[k];
                let next = &self.sets[k + 1];
                let next_funcs = step_functions(&self.sets, k + 1);
                let mut trip = Vec::new();
                for (n, &f) in step.funcs.iter().enumerate() {
                    if f.0 == k && contains(&sets.contained_next, f.1) {
                        let mut err = None;
                        sub.for_each_in_column(f.1, |j, w| {
                            if w == 0.0 {
                                return;
                            }
                            match next_funcs.binary_search(&(k + 1, j)) {
                                Ok(r) if contains(&next.contained, j) => trip.push((r, n, w)),
                                _ => err = Some(j),
                            }
                        });
                        if let Some(j) = err {
                            return Err(Error::Internal(format!("removed function {f:?} has child {j} outside B^{{{0},{0}}}", k + 1)));
                        }
                    } else {
                        let r = next_funcs
                            .binary_search(&f)
                            .map_err(|_| Error::Internal(format!("function {f:?} missing from step {}", k + 1)))?;
                        trip.push((r, n, 1.0));
                    }
                }
                step.prolongation = Some(Csr::from_triplets(next_funcs.len(), step.len(), &trip));
            }
            steps.push(step);
        }
        self.steps = steps;
        Ok(())
    }

    /// Evaluates every basis function not vanishing on active element `(level, id)` at the
    /// given global parametric points. `order` selects values, gradients and Hessians.
    pub fn evaluate_all(
        &self,
        level: usize,
        id: usize,
        points: &[[f64; 3]],
        order: usize,
    ) -> Result<ElementFunctions> {
        if !self.mesh.is_active(level, id) {
            return Err(Error::InactiveElement { level, index: id });
        }
        let mut parts: Vec<(usize, usize, usize, f64)> = Vec::new();
        let mut tables = Vec::new();
        match self.kind {
            BasisKind::Thb => {
                let sp = self.mesh.space(level);
                let eb = sp.element_basis(&sp.element_grid().multi(id), points, order);
                for (a, &i) in eb.indices.iter().enumerate() {
                    if let Some(row) = self.rows[level].get(&i) {
                        for &(g, c) in row {
                            parts.push((g, 0, a, c));
                        }
                    }
                }
                tables.push(eb);
            }
            BasisKind::Hb => {
                for l in 0..=level {
                    let anc = self.mesh.ancestor(level, id, l);
                    let sp = self.mesh.space(l);
                    let e = sp.element_grid().multi(anc);
                    let (lo, hi) = sp.nonzero_on_element(&e);
                    let bg = sp.basis_grid();
                    let any = box_iter(lo, hi).any(|f| self.gid(l, bg.linear(&f)).is_some());
                    if !any {
                        continue;
                    }
                    let eb = sp.element_basis(&e, points, order);
                    let t = tables.len();
                    for (a, &i) in eb.indices.iter().enumerate() {
                        if let Some(g) = self.gid(l, i) {
                            parts.push((g, t, a, 1.0));
                        }
                    }
                    tables.push(eb);
                }
            }
        }
        let mut ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        ids.sort_unstable();
        ids.dedup();
        let nid = ids.len();
        let npts = points.len();
        let mut out = ElementFunctions {
            ids,
            num_points: npts,
            values: vec![0.0; npts * nid],
            gradients: if order >= 1 { vec![[0.0; 3]; npts * nid] } else { Vec::new() },
            hessians: if order >= 2 { vec![[[0.0; 3]; 3]; npts * nid] } else { Vec::new() },
        };
        for &(g, t, a, c) in &parts {
            let col = out.ids.binary_search(&g).unwrap();
            let eb = &tables[t];
            let nloc = eb.len();
            for pt in 0..npts {
                out.values[pt * nid + col] += c * eb.values[pt * nloc + a];
                if order >= 1 {
                    let (src, dst) = (&eb.gradients[pt * nloc + a], &mut out.gradients[pt * nid + col]);
                    for m in 0..3 {
                        dst[m] += c * src[m];
                    }
                }
                if order >= 2 {
                    let (src, dst) = (&eb.hessians[pt * nloc + a], &mut out.hessians[pt * nid + col]);
                    for m in 0..3 {
                        for n in 0..3 {
                            dst[m][n] += c * src[m][n];
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Value of `sum_g coeffs[g] * phi_g` at parametric point `x`.
    pub fn evaluate(&self, coeffs: &[f64], x: &[f64]) -> Result<f64> {
        let (l, e) = self.mesh.locate(x)?;
        let mut p = [0.0; 3];
        p[..x.len()].copy_from_slice(x);
        let ef = self.evaluate_all(l, e, &[p], 0)?;
        Ok(ef.ids.iter().zip(&ef.values).map(|(&g, v)| coeffs[g] * v).sum())
    }

    /// Dense coefficients over the tensor basis of level `target` of the function with mother
    /// `(level, index)`, truncated at levels `level+1 ..= truncate_through` (THB only).
    /// Intended for cross-checks on small instances.
    pub fn expand(&self, f: FnId, truncate_through: usize, target: usize) -> Vec<f64> {
        let (l, i) = f;
        let mut c = vec![0.0; self.mesh.space(l).num_basis()];
        c[i] = 1.0;
        for k in l..target {
            c = self.subdivisions[k].apply(&c);
            if self.kind == BasisKind::Thb && k < truncate_through {
                for &j in &self.sets[k + 1].contained {
                    c[j] = 0.0;
                }
            }
        }
        c
    }

    /// Finest-level coefficients of global basis function `gid`.
    pub fn finest_coefficients(&self, gid: usize) -> Vec<f64> {
        let top = self.num_levels() - 1;
        self.expand(self.functions[gid], top, top)
    }

    /// Evaluation through finest-level coefficients (cross-check path).
    pub fn evaluate_via_finest(&self, gid: usize, x: &[f64]) -> Result<f64> {
        let top = self.num_levels() - 1;
        self.mesh.space(top).evaluate(&self.finest_coefficients(gid), x)
    }

    /// Levels of the functions not vanishing on each active element; returns the largest span.
    pub fn max_level_span(&self) -> Result<usize> {
        let mut worst = 0;
        for (l, e) in self.mesh.active_elements() {
            let b = self.mesh.element_bounds(l, e);
            let mut c = [0.0; 3];
            for k in 0..self.dim() {
                c[k] = 0.5 * (b[k].0 + b[k].1);
            }
            let ef = self.evaluate_all(l, e, &[c], 0)?;
            let lv: Vec<usize> = ef.ids.iter().map(|&g| self.functions[g].0).collect();
            let span = lv.iter().max().unwrap() - lv.iter().min().unwrap() + 1;
            worst = worst.max(span);
        }
        Ok(worst)
    }

    /// Whether the functions on every element belong to at most `m` successive levels.
    pub fn is_admissible(&self, m: usize) -> Result<bool> {
        Ok(self.max_level_span()? <= m)
    }

    /// Admissibility kind matching this basis.
    pub fn admissibility_kind(&self) -> AdmissibilityKind {
        match self.kind {
            BasisKind::Hb => AdmissibilityKind::H,
            BasisKind::Thb => AdmissibilityKind::T,
        }
    }

    /// Element `Q_T` used by the quasi-interpolant: the smallest active element of the
    /// function's level inside the support of its mother, or the first support element.
    pub fn qi_element(&self, gid: usize) -> MultiIndex {
        let (l, i) = self.functions[gid];
        let sp = self.mesh.space(l);
        let m = sp.basis_grid().multi(i);
        let (lo, hi) = sp.support_box(&m);
        let eg = sp.element_grid();
        box_iter(lo, hi)
            .map(|e| eg.linear(&e))
            .filter(|&e| self.mesh.is_active(l, e))
            .min()
            .map(|e| eg.multi(e))
            .unwrap_or_else(|| first_support_element(sp, &m))
    }

    /// Hierarchical quasi-interpolant coefficients of `f` (THB only).
    pub fn quasi_interpolant<F>(&self, f: F) -> Result<Vec<f64>>
    where
        F: Fn(&[f64; 3]) -> f64,
    {
        if self.kind != BasisKind::Thb {
            return Err(Error::Unsupported("the hierarchical quasi-interpolant needs THB".into()));
        }
        let mut cache: HashMap<(usize, usize), (Vec<usize>, Vec<f64>)> = HashMap::new();
        let mut out = vec![0.0; self.num_functions()];
        for (g, c) in out.iter_mut().enumerate() {
            let (l, i) = self.functions[g];
            let q = self.qi_element(g);
            let sp = self.mesh.space(l);
            let key = (l, sp.element_grid().linear(&q));
            if !cache.contains_key(&key) {
                cache.insert(key, local_projection(sp, &q, &f)?);
            }
            let (ids, vals) = &cache[&key];
            let pos = ids
                .iter()
                .position(|&x| x == i)
                .ok_or_else(|| Error::Internal("mother missing from its projection element".into()))?;
            *c = vals[pos];
        }
        Ok(out)
    }

    /// Extended support of THB function `gid`: active elements meeting the support of the
    /// mother truncated once.
    pub fn esupp(&self, gid: usize) -> Result<Vec<ElementId>> {
        if self.kind != BasisKind::Thb {
            return Err(Error::Unsupported("extended supports are defined for THB only".into()));
        }
        let (l, i) = self.functions[gid];
        let sp = self.mesh.space(l);
        let (lo, hi) = sp.support_box(&sp.basis_grid().multi(i));
        let eg = sp.element_grid();
        let support: Vec<usize> = box_iter(lo, hi).map(|e| eg.linear(&e)).collect();
        // region of the once-truncated mother as level-(l+1) cells
        let region: Option<HashSet<usize>> = if l + 1 < self.num_levels() {
            let sigma = subdivide(&self.subdivisions[l], &[(i, 1.0)], |j| !contains(&self.sets[l + 1].contained, j));
            let fsp = self.mesh.space(l + 1);
            let fg = fsp.element_grid();
            let mut cells = HashSet::new();
            for (j, _) in sigma {
                let (a, b) = fsp.support_box(&fsp.basis_grid().multi(j));
                for e in box_iter(a, b) {
                    cells.insert(fg.linear(&e));
                }
            }
            Some(cells)
        } else {
            None
        };
        let mut out = Vec::new();
        for &e in &support {
            self.collect_active_in(l, e, &mut |ql, qe| {
                let hit = match &region {
                    None => true,
                    Some(cells) if ql == l => self.mesh.children(l, qe).iter().any(|c| cells.contains(c)),
                    Some(cells) => cells.contains(&self.mesh.ancestor(ql, qe, l + 1)),
                };
                if hit {
                    out.push((ql, qe));
                }
            });
        }
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    /// Calls `f` on every active element contained in level-`level` element `id`.
    fn collect_active_in(&self, level: usize, id: usize, f: &mut impl FnMut(usize, usize)) {
        if self.mesh.is_active(level, id) {
            f(level, id);
        } else if self.mesh.is_refined(level, id) {
            for c in self.mesh.children(level, id) {
                self.collect_active_in(level + 1, c, f);
            }
        }
    }

    /// For every active element, the THB functions whose extended support contains it.
    pub fn esupp_index(&self) -> Result<(Vec<Vec<ElementId>>, HashMap<ElementId, Vec<usize>>)> {
        let es: Vec<Vec<ElementId>> = (0..self.num_functions()).map(|g| self.esupp(g)).collect::<Result<_>>()?;
        let mut inv: HashMap<ElementId, Vec<usize>> = HashMap::new();
        for (g, list) in es.iter().enumerate() {
            for &q in list {
                inv.entry(q).or_default().push(g);
            }
        }
        Ok((es, inv))
    }

    /// `S*(Q)` as a sorted list of active elements.
    pub fn s_star(&self, q: ElementId) -> Result<Vec<ElementId>> {
        let (es, inv) = self.esupp_index()?;
        Ok(s_star_from_index(&es, &inv, q))
    }

    /// `S*(sigma)` for a set of active elements.
    pub fn s_star_region(&self, sigma: &[ElementId]) -> Result<Vec<ElementId>> {
        let (es, inv) = self.esupp_index()?;
        let mut out: Vec<ElementId> = sigma.iter().flat_map(|&q| s_star_from_index(&es, &inv, q)).collect();
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }
}

pub fn s_star_from_index(
    es: &[Vec<ElementId>],
    inv: &HashMap<ElementId, Vec<usize>>,
    q: ElementId,
) -> Vec<ElementId> {
    let mut out: Vec<ElementId> = inv
        .get(&q)
        .into_iter()
        .flatten()
        .flat_map(|&g| es[g].iter().copied())
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Functions of the `k`-th intermediate space: `A^l` for `l < k` and `B^{k,k}`.
fn step_functions(sets: &[LevelSets], k: usize) -> Vec<FnId> {
    let mut out = Vec::new();
    for (l, s) in sets.iter().enumerate().take(k) {
        out.extend(s.active.iter().map(|&i| (l, i)));
    }
    out.extend(sets[k].contained.iter().map(|&i| (k, i)));
    out
}

fn is_boundary(space: &TensorSpace, i: usize) -> bool {
    let g = space.basis_grid();
    let m = g.multi(i);
    let s = g.shape();
    (0..space.dim()).any(|k| m[k] == 0 || m[k] + 1 == s[k])
}

/// Subdivides a sparse level rep, keeping fine indices accepted by `keep`.
pub fn subdivide(sub: &TensorSubdivision, rep: &[(usize, f64)], keep: impl Fn(usize) -> bool) -> SparseRep {
    let mut acc: Vec<(usize, f64)> = Vec::with_capacity(rep.len() * 4);
    for &(i, c) in rep {
        sub.for_each_in_column(i, |j, w| {
            if w != 0.0 && keep(j) {
                acc.push((j, c * w));
            }
        });
    }
    acc.sort_by_key(|e| e.0);
    let mut out: SparseRep = Vec::with_capacity(acc.len());
    for (j, v) in acc {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += v,
            _ => out.push((j, v)),
        }
    }
    out.retain(|e| e.1 != 0.0);
    out
}

fn level_sets(mesh: &HierarchicalMesh, k: usize) -> LevelSets {
    let sp = mesh.space(k);
    let bg = sp.basis_grid();
    let eg = sp.element_grid();
    let funcs_on = |elems: &[usize]| -> Vec<usize> {
        let mut v = Vec::with_capacity(elems.len() * 4);
        for &e in elems {
            let (lo, hi) = sp.nonzero_on_element(&eg.multi(e));
            v.extend(box_iter(lo, hi).map(|f| bg.linear(&f)));
        }
        v.sort_unstable();
        v.dedup();
        v
    };
    let touching = funcs_on(mesh.omega(k));
    let on_active = funcs_on(mesh.active(k));
    let support_all = |i: usize, pred: &dyn Fn(usize) -> bool| {
        let (lo, hi) = sp.support_box(&bg.multi(i));
        box_iter(lo, hi).all(|e| pred(eg.linear(&e)))
    };
    let contained: Vec<usize> = touching
        .iter()
        .copied()
        .filter(|&i| support_all(i, &|e| mesh.in_omega(k, e)))
        .collect();
    let contained_next: Vec<usize> = contained
        .iter()
        .copied()
        .filter(|&i| support_all(i, &|e| mesh.is_refined(k, e)))
        .collect();
    let active = contained
        .iter()
        .copied()
        .filter(|i| !contains(&contained_next, *i))
        .collect();
    LevelSets {
        touching,
        contained,
        contained_next,
        active,
        on_active,
    }
}
