//! Hierarchical meshes built by dyadic refinement of a tensor-product grid.
//!
//! Level `l` stores the subdomain `Omega^l` as a sorted list of level-`l` element ids.
//! Parents and children are computed arithmetically from multi-indices.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::bspline::{KnotVector, TensorSpace};
use crate::error::{Error, Result};
use crate::grid::{box_iter, Grid, MultiIndex};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AdmissibilityKind {
    H,
    T,
}

/// Admissibility class `(kind, m)` with `m >= 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AdmissibilityClass {
    pub kind: AdmissibilityKind,
    pub m: usize,
}

impl AdmissibilityClass {
    pub fn new(kind: AdmissibilityKind, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidArgument(format!("admissibility class m = {m} must be at least 2")));
        }
        Ok(Self { kind, m })
    }
}

impl std::str::FromStr for AdmissibilityClass {
    type Err = Error;

    /// Parses `H:m` or `T:m`.
    fn from_str(s: &str) -> Result<Self> {
        let (k, m) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("expected KIND:m, got '{s}'")))?;
        let kind = match k.trim() {
            "H" | "h" => AdmissibilityKind::H,
            "T" | "t" => AdmissibilityKind::T,
            other => return Err(Error::Parse(format!("unknown admissibility kind '{other}'"))),
        };
        let m = m
            .trim()
            .parse::<usize>()
            .map_err(|e| Error::Parse(format!("bad class '{m}': {e}")))?;
        Self::new(kind, m)
    }
}

/// An element addressed by level and linear index within that level's grid.
pub type ElementId = (usize, usize);

#[derive(Clone, Debug, PartialEq)]
pub struct HierarchicalMesh {
    levels: Vec<TensorSpace>,
    omega: Vec<Vec<usize>>,
    active: Vec<Vec<usize>>,
}

impl HierarchicalMesh {
    /// Single-level mesh over `base`.
    pub fn new(base: TensorSpace) -> Self {
        let n = base.element_grid().len();
        let mut mesh = Self {
            levels: vec![base],
            omega: vec![(0..n).collect()],
            active: Vec::new(),
        };
        mesh.update_active();
        mesh
    }

    /// Builds a mesh from explicit subdomains; `omega[0]` must be the whole grid.
    pub fn from_omega(base: TensorSpace, mut omega: Vec<Vec<usize>>) -> Result<Self> {
        while omega.len() > 1 && omega.last().is_some_and(|o| o.is_empty()) {
            omega.pop();
        }
        let mut levels = vec![base];
        for _ in 1..omega.len() {
            let next = levels.last().unwrap().dyadic_refinement();
            levels.push(next);
        }
        for o in omega.iter_mut() {
            o.sort_unstable();
            o.dedup();
        }
        let mut mesh = Self {
            levels,
            omega,
            active: Vec::new(),
        };
        mesh.update_active();
        mesh.check_invariants()?;
        Ok(mesh)
    }

    fn update_active(&mut self) {
        let nl = self.omega.len();
        self.active = (0..nl)
            .map(|l| {
                self.omega[l]
                    .iter()
                    .copied()
                    .filter(|&e| l + 1 >= nl || !self.is_refined(l, e))
                    .collect()
            })
            .collect();
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.levels[0].dim()
    }

    /// Number of levels with a non-empty subdomain.
    #[inline]
    pub fn num_levels(&self) -> usize {
        self.omega.len()
    }

    pub fn degree(&self, k: usize) -> usize {
        self.levels[0].degree(k)
    }

    pub fn space(&self, level: usize) -> &TensorSpace {
        &self.levels[level]
    }

    pub fn element_grid(&self, level: usize) -> Grid {
        self.levels[level].element_grid()
    }

    /// Sorted element ids of `Omega^level` (empty above the finest level).
    pub fn omega(&self, level: usize) -> &[usize] {
        self.omega.get(level).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn active(&self, level: usize) -> &[usize] {
        self.active.get(level).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn num_active(&self) -> usize {
        self.active.iter().map(Vec::len).sum()
    }

    /// All active elements, level-major.
    pub fn active_elements(&self) -> impl Iterator<Item = ElementId> + '_ {
        self.active
            .iter()
            .enumerate()
            .flat_map(|(l, a)| a.iter().map(move |&e| (l, e)))
    }

    #[inline]
    pub fn in_omega(&self, level: usize, id: usize) -> bool {
        self.omega
            .get(level)
            .is_some_and(|o| o.binary_search(&id).is_ok())
    }

    /// Whether the children of level-`level` element `id` belong to `Omega^{level+1}`.
    #[inline]
    pub fn is_refined(&self, level: usize, id: usize) -> bool {
        if level + 1 >= self.omega.len() {
            return false;
        }
        let m = self.grid_at(level).multi(id);
        let first = self.grid_at(level + 1).linear(&[2 * m[0], 2 * m[1], 2 * m[2]]);
        self.in_omega(level + 1, first)
    }

    #[inline]
    pub fn is_active(&self, level: usize, id: usize) -> bool {
        self.active
            .get(level)
            .is_some_and(|a| a.binary_search(&id).is_ok())
    }

    /// Element size at `level` (largest edge).
    pub fn mesh_size(&self, level: usize) -> f64 {
        self.levels[0].mesh_size() / (1u64 << level) as f64
    }

    pub fn element_bounds(&self, level: usize, id: usize) -> [(f64, f64); 3] {
        let sp = self.level_space(level);
        sp.element_bounds(&sp.element_grid().multi(id))
    }

    /// Level space, computed on the fly above the finest stored level.
    fn level_space(&self, level: usize) -> std::borrow::Cow<'_, TensorSpace> {
        if level < self.levels.len() {
            std::borrow::Cow::Borrowed(&self.levels[level])
        } else {
            let mut s = self.levels.last().unwrap().clone();
            for _ in self.levels.len()..=level {
                s = s.dyadic_refinement();
            }
            std::borrow::Cow::Owned(s)
        }
    }

    fn grid_at(&self, level: usize) -> Grid {
        let g0 = self.levels[0].element_grid();
        let s = g0.shape();
        let f = 1usize << level;
        Grid::new(&[s[0] * f, s[1] * f, s[2] * f][..self.dim()])
    }

    pub fn parent(&self, level: usize, id: usize) -> usize {
        self.ancestor(level, id, level - 1)
    }

    /// Level-`k` ancestor of level-`level` element `id`.
    pub fn ancestor(&self, level: usize, id: usize, k: usize) -> usize {
        assert!(k <= level);
        let m = self.grid_at(level).multi(id);
        let sh = level - k;
        let mut a = [0; 3];
        for d in 0..self.dim() {
            a[d] = m[d] >> sh;
        }
        self.grid_at(k).linear(&a)
    }

    pub fn children(&self, level: usize, id: usize) -> Vec<usize> {
        let m = self.grid_at(level).multi(id);
        let fine = self.grid_at(level + 1);
        let mut lo = [0; 3];
        let mut hi = [0; 3];
        for d in 0..self.dim() {
            lo[d] = 2 * m[d];
            hi[d] = 2 * m[d] + 1;
        }
        box_iter(lo, hi).map(|c| fine.linear(&c)).collect()
    }

    /// Level-`k` descendants (k >= level) of element `id`.
    pub fn descendants(&self, level: usize, id: usize, k: usize) -> Vec<usize> {
        let m = self.grid_at(level).multi(id);
        let f = 1usize << (k - level);
        let fine = self.grid_at(k);
        let mut lo = [0; 3];
        let mut hi = [0; 3];
        for d in 0..self.dim() {
            lo[d] = m[d] * f;
            hi[d] = m[d] * f + f - 1;
        }
        box_iter(lo, hi).map(|c| fine.linear(&c)).collect()
    }

    /// The active element containing `x`.
    pub fn locate(&self, x: &[f64]) -> Result<ElementId> {
        let mut l = 0;
        loop {
            let sp = &self.levels[l];
            let e = sp.element_grid().linear(&sp.locate(x)?);
            if self.is_active(l, e) {
                return Ok((l, e));
            }
            l += 1;
            if l >= self.levels.len() {
                return Err(Error::Internal(format!("no active element contains {x:?}")));
            }
        }
    }

    /// The active element containing level-`level` element `id` (an ancestor or itself),
    /// or `None` if `id` lies in a refined region.
    pub fn active_ancestor(&self, level: usize, id: usize) -> Option<ElementId> {
        (0..=level.min(self.num_levels() - 1)).rev().find_map(|k| {
            let a = self.ancestor(level, id, k);
            self.is_active(k, a).then_some((k, a))
        })
    }

    /// Multilevel support extension `S(Q, k)` of level-`level` element `id`, as level-`k` ids.
    pub fn multilevel_support_extension(&self, level: usize, id: usize, k: usize) -> Result<Vec<usize>> {
        if k > level {
            return Err(Error::InvalidArgument(format!(
                "support extension level {k} exceeds element level {level}"
            )));
        }
        let a = self.ancestor(level, id, k);
        let sp = self.level_space(k);
        sp.support_extension(&sp.element_grid().multi(a))
    }

    fn extension_box(&self, level: usize, id: usize, k: usize) -> (MultiIndex, MultiIndex) {
        let a = self.ancestor(level, id, k);
        let sp = self.level_space(k);
        sp.support_extension_box(&sp.element_grid().multi(a))
    }

    /// Auxiliary domain `omega^level` of the given kind, as level-`level` element ids.
    pub fn aux_domain(&self, level: usize, kind: AdmissibilityKind) -> Vec<usize> {
        if level == 0 {
            return self.omega[0].clone();
        }
        self.omega(level)
            .iter()
            .copied()
            .filter(|&q| self.in_aux_domain(level, q, kind))
            .collect()
    }

    fn in_aux_domain(&self, level: usize, q: usize, kind: AdmissibilityKind) -> bool {
        if level == 0 {
            return true;
        }
        if !self.in_omega(level, q) {
            return false;
        }
        match kind {
            AdmissibilityKind::T => {
                let (lo, hi) = self.extension_box(level, q, level);
                let g = self.grid_at(level);
                box_iter(lo, hi).all(|e| self.in_omega(level, g.linear(&e)))
            }
            AdmissibilityKind::H => {
                let (lo, hi) = self.extension_box(level, q, level - 1);
                let g = self.grid_at(level - 1);
                box_iter(lo, hi).all(|e| self.is_refined(level - 1, g.linear(&e)))
            }
        }
    }

    /// Level-`(k-1)` elements, `k = target - m + 1`, that must be refined before a level-`target`
    /// element with ancestor `(level, id)` may belong to `Omega^target`.
    fn required_refinements(
        &self,
        target: usize,
        level: usize,
        id: usize,
        class: AdmissibilityClass,
    ) -> Vec<usize> {
        if target < class.m {
            return Vec::new();
        }
        let k = target - class.m + 1;
        let mut out = Vec::new();
        match class.kind {
            AdmissibilityKind::T => {
                let (lo, hi) = self.extension_box(level, id, k);
                let g = self.grid_at(k);
                for e in box_iter(lo, hi) {
                    let e = g.linear(&e);
                    if !self.in_omega(k, e) {
                        out.push(self.parent(k, e));
                    }
                }
            }
            AdmissibilityKind::H => {
                let (lo, hi) = self.extension_box(level, id, k - 1);
                let g = self.grid_at(k - 1);
                for e in box_iter(lo, hi) {
                    let e = g.linear(&e);
                    if !self.is_refined(k - 1, e) {
                        out.push(e);
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Whether `Omega^l` lies in `omega^{l-m+1}` for every `l = m..L`.
    pub fn is_strictly_admissible(&self, class: AdmissibilityClass) -> bool {
        self.admissibility_violations(class).is_empty()
    }

    /// Active elements whose refinement is required to repair strict admissibility.
    fn admissibility_violations(&self, class: AdmissibilityClass) -> BTreeSet<ElementId> {
        let mut marks = BTreeSet::new();
        for l in class.m..self.num_levels() {
            let k = l - class.m + 1;
            let mut ancestors: Vec<usize> = self.omega[l].iter().map(|&e| self.ancestor(l, e, k)).collect();
            ancestors.sort_unstable();
            ancestors.dedup();
            for a in ancestors {
                if self.in_aux_domain(k, a, class.kind) {
                    continue;
                }
                for f in self.required_refinements(l, k, a, class) {
                    if let Some(act) = self.active_ancestor(k - 1, f) {
                        marks.insert(act);
                    }
                }
            }
        }
        marks
    }

    /// Adds the children of every marked (active) element.
    pub fn refine_raw(&self, marked: &[ElementId]) -> Result<Self> {
        for &(l, e) in marked {
            if !self.is_active(l, e) {
                return Err(Error::InactiveElement { level: l, index: e });
            }
        }
        if marked.is_empty() {
            return Ok(self.clone());
        }
        let mut out = self.clone();
        let max_level = marked.iter().map(|m| m.0).max().unwrap();
        while out.omega.len() < max_level + 2 {
            out.omega.push(Vec::new());
            let next = out.levels.last().unwrap().dyadic_refinement();
            out.levels.push(next);
        }
        for &(l, e) in marked {
            let ch = out.children(l, e);
            out.omega[l + 1].extend(ch);
        }
        for o in out.omega.iter_mut() {
            o.sort_unstable();
            o.dedup();
        }
        out.update_active();
        Ok(out)
    }

    /// Refines the marked elements and as many coarser neighbours as strict admissibility of
    /// `class` requires.
    pub fn admissible_refine(&self, marked: &[ElementId], class: AdmissibilityClass) -> Result<Self> {
        for &(l, e) in marked {
            if !self.is_active(l, e) {
                return Err(Error::InactiveElement { level: l, index: e });
            }
        }
        let mut mesh = self.clone();
        let mut pending: BTreeSet<ElementId> = marked.iter().copied().collect();
        loop {
            let closed = mesh.close_marking(pending, class);
            if closed.is_empty() {
                break;
            }
            let list: Vec<ElementId> = closed.into_iter().collect();
            mesh = mesh.refine_raw(&list)?;
            pending = mesh.admissibility_violations(class);
            if pending.is_empty() {
                break;
            }
        }
        debug_assert!(mesh.is_strictly_admissible(class));
        Ok(mesh)
    }

    /// Recursively adds coarser active elements whose refinement is needed by marked ones.
    fn close_marking(&self, marks: BTreeSet<ElementId>, class: AdmissibilityClass) -> BTreeSet<ElementId> {
        let mut all = marks.clone();
        let mut queue: Vec<ElementId> = marks.into_iter().collect();
        while let Some((l, e)) = queue.pop() {
            for f in self.required_refinements(l + 1, l, e, class) {
                let fl = (l + 1) - class.m;
                if self.is_refined(fl, f) {
                    continue;
                }
                if let Some(act) = self.active_ancestor(fl, f) {
                    if all.insert(act) {
                        queue.push(act);
                    }
                }
            }
        }
        all
    }

    /// Validates nestedness, sibling completeness and the active partition of the domain.
    pub fn check_invariants(&self) -> Result<()> {
        let g0 = self.levels[0].element_grid();
        if self.omega[0].len() != g0.len() {
            return Err(Error::InvalidArgument("Omega^0 must be the whole grid".into()));
        }
        for kv in (0..self.dim()).map(|k| self.levels[0].knots(k)) {
            if kv.quasi_uniformity() > 2.0 + 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "knot vector is not locally quasi-uniform (theta = {})",
                    kv.quasi_uniformity()
                )));
            }
        }
        for l in 1..self.num_levels() {
            let g = self.grid_at(l);
            let set: HashSet<usize> = self.omega[l].iter().copied().collect();
            for &e in &self.omega[l] {
                if e >= g.len() {
                    return Err(Error::InvalidArgument(format!("element {e} outside level {l}")));
                }
                let p = self.parent(l, e);
                if !self.in_omega(l - 1, p) {
                    return Err(Error::InvalidArgument(format!(
                        "element {e} of level {l} has no parent in Omega^{}",
                        l - 1
                    )));
                }
                if self.children(l - 1, p).iter().any(|c| !set.contains(c)) {
                    return Err(Error::InvalidArgument(format!(
                        "Omega^{l} is not a union of level-{} cells",
                        l - 1
                    )));
                }
            }
        }
        let mut measure = 0.0;
        for (l, e) in self.active_elements() {
            let b = self.element_bounds(l, e);
            measure += (0..self.dim()).map(|k| b[k].1 - b[k].0).product::<f64>();
        }
        if (measure - 1.0).abs() > 1e-12 {
            return Err(Error::Internal(format!("active elements cover measure {measure}, not 1")));
        }
        Ok(())
    }

    /// Text export: a `#` header and one `level ix [iy [iz]] x0 x1 [y0 y1 [z0 z1]]` line per
    /// active element.
    pub fn export_text(&self) -> String {
        let d = self.dim();
        let sp = &self.levels[0];
        let mut s = String::new();
        let degs: Vec<String> = (0..d).map(|k| sp.degree(k).to_string()).collect();
        let elems: Vec<String> = (0..d).map(|k| sp.knots(k).num_elements().to_string()).collect();
        let _ = writeln!(
            s,
            "# thbbpx-mesh dim {d} degree {} elements {} levels {}",
            degs.join(" "),
            elems.join(" "),
            self.num_levels()
        );
        for (l, e) in self.active_elements() {
            let m = self.grid_at(l).multi(e);
            let b = self.element_bounds(l, e);
            let _ = write!(s, "{l}");
            for v in m.iter().take(d) {
                let _ = write!(s, " {v}");
            }
            for bb in b.iter().take(d) {
                let _ = write!(s, " {} {}", bb.0, bb.1);
            }
            s.push('\n');
        }
        s
    }

    /// Parses the format written by [`export_text`](Self::export_text); the base space is
    /// uniform with the recorded degrees and element counts.
    pub fn import_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty mesh file".into()))?;
        let toks: Vec<&str> = header.trim_start_matches('#').split_whitespace().collect();
        let field = |name: &str, count: usize| -> Result<Vec<usize>> {
            let pos = toks
                .iter()
                .position(|&t| t == name)
                .ok_or_else(|| Error::Parse(format!("missing '{name}' in header")))?;
            toks.get(pos + 1..pos + 1 + count)
                .ok_or_else(|| Error::Parse(format!("truncated '{name}' field")))?
                .iter()
                .map(|t| t.parse::<usize>().map_err(|e| Error::Parse(format!("{name}: {e}"))))
                .collect()
        };
        let d = field("dim", 1)?[0];
        if !(1..=3).contains(&d) {
            return Err(Error::Parse(format!("dimension {d} not in 1..=3")));
        }
        let degrees = field("degree", d)?;
        let elements = field("elements", d)?;
        let knots = degrees
            .iter()
            .zip(&elements)
            .map(|(&p, &n)| KnotVector::uniform(p, n))
            .collect();
        let base = TensorSpace::new(knots)?;
        let mut active: Vec<Vec<usize>> = Vec::new();
        let g0 = base.element_grid().shape();
        for (ln, line) in lines.enumerate() {
            if line.trim_start().starts_with('#') {
                continue;
            }
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 1 + 3 * d {
                return Err(Error::Parse(format!("line {}: expected {} fields", ln + 2, 1 + 3 * d)));
            }
            let nums: Vec<usize> = t[..=d]
                .iter()
                .map(|x| x.parse::<usize>().map_err(|e| Error::Parse(format!("line {}: {e}", ln + 2))))
                .collect::<Result<_>>()?;
            let l = nums[0];
            let mut shape = [1usize; 3];
            let mut m = [0usize; 3];
            for k in 0..d {
                shape[k] = g0[k] << l;
                m[k] = nums[1 + k];
            }
            let g = Grid::new(&shape[..d]);
            if !g.contains(&m) {
                return Err(Error::Parse(format!("line {}: index out of range", ln + 2)));
            }
            if active.len() <= l {
                active.resize(l + 1, Vec::new());
            }
            active[l].push(g.linear(&m));
        }
        let nl = active.len().max(1);
        let mut omega = vec![Vec::new(); nl];
        let probe = Self::new(base.clone());
        for (l, act) in active.iter().enumerate() {
            for &e in act {
                for k in 0..=l {
                    omega[k].push(probe.ancestor(l, e, k));
                }
            }
        }
        let mut o0: Vec<usize> = (0..base.element_grid().len()).collect();
        std::mem::swap(&mut omega[0], &mut o0);
        let mesh = Self::from_omega(base, omega)?;
        for (l, act) in active.iter_mut().enumerate() {
            act.sort_unstable();
            if mesh.active(l) != act.as_slice() {
                return Err(Error::Parse(format!("active elements of level {l} are inconsistent")));
            }
        }
        Ok(mesh)
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.export_text())?;
        Ok(())
    }

    pub fn read_text(path: &Path) -> Result<Self> {
        Self::import_text(&std::fs::read_to_string(path)?)
    }
}
