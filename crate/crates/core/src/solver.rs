//! Direct sparse LU for the coupled saddle-point system.
//!
//! Multifrontal factorization on a nested-dissection separator tree. Each
//! tree node owns a dense frontal matrix; its fully summed variables are
//! eliminated with threshold partial pivoting and the Schur complement is
//! passed to the parent. Columns without an acceptable pivot are delayed to
//! the parent front.

use std::time::Instant;

use nalgebra::DMatrix;

use crate::error::{FemError, Result};
use crate::sparse::{norm2, CsrMatrix};

/// A pivot is accepted when `|a_ij| >= PIVOT_TOL * max_i |a_ij|` over the whole front column.
pub const PIVOT_TOL: f64 = 0.1;
const LEAF_SIZE: usize = 64;
const PANEL: usize = 32;

/// Node of the elimination tree; nodes are stored in postorder.
#[derive(Debug, Clone, Default)]
pub struct TreeNode {
    pub vars: Vec<usize>,
    pub children: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SeparatorTree {
    pub nodes: Vec<TreeNode>,
}

impl SeparatorTree {
    /// One dense front holding every variable in the given order.
    pub fn single(order: Vec<usize>) -> Self {
        Self { nodes: vec![TreeNode { vars: order, children: Vec::new() }] }
    }

    /// Path of nodes, each the parent of the previous one.
    pub fn chain(blocks: Vec<Vec<usize>>) -> Self {
        let nodes = blocks
            .into_iter()
            .enumerate()
            .map(|(i, vars)| TreeNode { vars, children: if i == 0 { Vec::new() } else { vec![i - 1] } })
            .collect();
        Self { nodes }
    }

    /// Elimination order of the variables.
    pub fn permutation(&self) -> Vec<usize> {
        self.nodes.iter().flat_map(|n| n.vars.iter().copied()).collect()
    }

    fn parents(&self) -> Vec<Option<usize>> {
        let mut p = vec![None; self.nodes.len()];
        for (s, node) in self.nodes.iter().enumerate() {
            for &c in &node.children {
                p[c] = Some(s);
            }
        }
        p
    }
}

/// Symmetrised adjacency without the diagonal.
fn adjacency(a: &CsrMatrix) -> Vec<Vec<usize>> {
    let n = a.nrows;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for r in 0..n {
        for &c in a.row(r).0 {
            if c != r {
                adj[r].push(c);
                adj[c].push(r);
            }
        }
    }
    for l in adj.iter_mut() {
        l.sort_unstable();
        l.dedup();
    }
    adj
}

struct Dissector<'a> {
    adj: &'a [Vec<usize>],
    region: Vec<u32>,
    next_region: u32,
    level: Vec<usize>,
    nodes: Vec<TreeNode>,
}

impl Dissector<'_> {
    /// BFS inside `region == id` from `start`; returns the visit order and level boundaries.
    fn bfs(&mut self, start: usize, id: u32) -> (Vec<usize>, Vec<usize>) {
        let scratch = u32::MAX;
        let mut order = vec![start];
        let mut bounds = vec![0usize];
        self.level[start] = 0;
        self.region[start] = scratch;
        let mut head = 0;
        loop {
            let lvl_end = order.len();
            while head < lvl_end {
                let v = order[head];
                head += 1;
                for &w in &self.adj[v] {
                    if self.region[w] == id {
                        self.region[w] = scratch;
                        self.level[w] = self.level[v] + 1;
                        order.push(w);
                    }
                }
            }
            bounds.push(lvl_end);
            if order.len() == lvl_end {
                break;
            }
        }
        for &v in &order {
            self.region[v] = id;
        }
        (order, bounds)
    }

    fn push(&mut self, vars: Vec<usize>, children: Vec<usize>) -> usize {
        self.nodes.push(TreeNode { vars, children });
        self.nodes.len() - 1
    }

    /// Orders the subgraph `region == id` and returns the roots of its subtrees.
    fn dissect(&mut self, nodes: Vec<usize>, id: u32) -> Vec<usize> {
        if nodes.len() <= LEAF_SIZE {
            return vec![self.push(nodes, Vec::new())];
        }
        // Connected components; small ones are packed into shared leaves.
        let mut comps = Vec::new();
        for &s in &nodes {
            if self.region[s] == id {
                let (order, _) = self.bfs(s, id);
                let cid = self.fresh();
                for &v in &order {
                    self.region[v] = cid;
                }
                comps.push((order, cid));
            }
        }
        if comps.len() > 1 {
            let mut roots = Vec::new();
            let mut pack = Vec::new();
            for (comp, cid) in comps {
                if comp.len() <= LEAF_SIZE {
                    if pack.len() + comp.len() > LEAF_SIZE {
                        roots.push(self.push(std::mem::take(&mut pack), Vec::new()));
                    }
                    pack.extend(comp);
                } else {
                    roots.extend(self.dissect(comp, cid));
                }
            }
            if !pack.is_empty() {
                roots.push(self.push(pack, Vec::new()));
            }
            return roots;
        }
        let (comp, cid) = comps.pop().unwrap();
        let id = cid;
        let (mut order, mut bounds) = self.bfs(comp[0], id);
        // Pseudo-peripheral start: restart from the last node while the depth grows.
        for _ in 0..3 {
            let last = *order.last().unwrap();
            let (o2, b2) = self.bfs(last, id);
            if b2.len() <= bounds.len() {
                break;
            }
            order = o2;
            bounds = b2;
        }
        let nlevels = bounds.len() - 1;
        if nlevels < 3 {
            return vec![self.push(order, Vec::new())];
        }
        for (l, w) in bounds.windows(2).enumerate() {
            for &v in &order[w[0]..w[1]] {
                self.level[v] = l;
            }
        }
        // Smallest level whose removal leaves parts of 30-70 % each.
        let total = order.len();
        let mut m = 1;
        let mut best = usize::MAX;
        for l in 1..nlevels - 1 {
            let below = bounds[l];
            let above = total - bounds[l + 1];
            let size = bounds[l + 1] - bounds[l];
            let balanced = 10 * below >= 3 * total && 10 * above >= 3 * total;
            if balanced && size < best {
                best = size;
                m = l;
            }
        }
        if best == usize::MAX {
            let half = total / 2;
            while m + 1 < nlevels && bounds[m + 1] <= half {
                m += 1;
            }
            m = m.clamp(1, nlevels - 2);
        }
        // Separator: nodes of level m adjacent to level m + 1.
        let id_a = self.fresh();
        let id_b = self.fresh();
        let mut part_a = Vec::new();
        let mut part_b = Vec::new();
        let mut sep = Vec::new();
        for (l, w) in bounds.windows(2).enumerate() {
            for &v in &order[w[0]..w[1]] {
                if l < m {
                    part_a.push(v);
                } else if l > m {
                    part_b.push(v);
                } else if self.adj[v].iter().any(|&x| self.region[x] == id && self.level[x] == m + 1) {
                    sep.push(v);
                } else {
                    part_a.push(v);
                }
            }
        }
        let sep_id = self.fresh();
        for &v in &part_a {
            self.region[v] = id_a;
        }
        for &v in &part_b {
            self.region[v] = id_b;
        }
        for &v in &sep {
            self.region[v] = sep_id;
        }
        let mut children = self.dissect(part_a, id_a);
        children.extend(self.dissect(part_b, id_b));
        vec![self.push(sep, children)]
    }

    fn fresh(&mut self) -> u32 {
        self.next_region += 1;
        self.next_region
    }
}

/// Nested dissection on the symmetrised pattern. Rows of unusually high
/// degree (the pressure-mean multiplier) are removed and form the root.
pub fn nested_dissection(a: &CsrMatrix) -> SeparatorTree {
    let n = a.nrows;
    let mut adj = adjacency(a);
    let avg = adj.iter().map(Vec::len).sum::<usize>() as f64 / n.max(1) as f64;
    let dense_threshold = (5.0 * avg + 20.0) as usize;
    let dense: Vec<usize> = (0..n).filter(|&v| adj[v].len() > dense_threshold).collect();
    let mut is_dense = vec![false; n];
    for &v in &dense {
        is_dense[v] = true;
    }
    if !dense.is_empty() {
        for (v, l) in adj.iter_mut().enumerate() {
            if is_dense[v] {
                l.clear();
            } else {
                l.retain(|&w| !is_dense[w]);
            }
        }
    }
    let mut d = Dissector { adj: &adj, region: vec![0; n], next_region: 0, level: vec![0; n], nodes: Vec::new() };
    for &v in &dense {
        d.region[v] = u32::MAX - 1;
    }
    let nodes: Vec<usize> = (0..n).filter(|&v| !is_dense[v]).collect();
    let roots = if nodes.is_empty() { Vec::new() } else { d.dissect(nodes, 0) };
    d.push(dense, roots);
    SeparatorTree { nodes: d.nodes }
}

#[derive(Debug, Clone, Default)]
pub struct PivotStats {
    pub off_diagonal_pivots: usize,
    pub delayed_pivots: usize,
    pub min_pivot: f64,
    pub max_pivot: f64,
    pub nnz_l: usize,
    pub nnz_u: usize,
    pub max_front: usize,
}

/// Factor data of one front. `lu` holds the first `e` columns (unit lower
/// `L` below the diagonal, `U11` on and above it); `u12` the pivot rows
/// right of the eliminated block.
#[derive(Debug, Clone)]
struct Front {
    rows: Vec<usize>,
    cols: Vec<usize>,
    e: usize,
    lu: DMatrix<f64>,
    u12: DMatrix<f64>,
}

struct Contribution {
    rows: Vec<usize>,
    cols: Vec<usize>,
    block: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct LuFactors {
    n: usize,
    fronts: Vec<Front>,
    pub stats: PivotStats,
}

/// Symbolic contribution index sets: ancestors coupled to each node, sorted by elimination position.
fn symbolic(tree: &SeparatorTree, adj: &[Vec<usize>], pos: &[usize]) -> Vec<Vec<usize>> {
    let n = pos.len();
    let mut mark = vec![usize::MAX; n];
    let mut sets: Vec<Vec<usize>> = Vec::with_capacity(tree.nodes.len());
    let mut start = 0;
    for (s, node) in tree.nodes.iter().enumerate() {
        let end = start + node.vars.len();
        let mut set = Vec::new();
        for &v in &node.vars {
            mark[v] = s;
        }
        for &v in &node.vars {
            for &w in &adj[v] {
                if pos[w] >= end && mark[w] != s {
                    mark[w] = s;
                    set.push(w);
                }
            }
        }
        for &c in &node.children {
            for &w in &sets[c] {
                if mark[w] != s {
                    mark[w] = s;
                    set.push(w);
                }
            }
        }
        set.sort_unstable_by_key(|&w| pos[w]);
        sets.push(set);
        start = end;
    }
    sets
}

/// Partial LU of the leading `nfs` rows/columns of `f` with threshold row
/// pivoting. Rejected columns are swapped behind the fully summed block.
/// Returns the number of eliminated pivots; `rows`/`cols` follow the swaps.
#[allow(clippy::too_many_arguments)]
fn partial_factor(
    f: &mut DMatrix<f64>,
    rows: &mut [usize],
    cols: &mut [usize],
    nfs: usize,
    root: bool,
    tiny: f64,
    stats: &mut PivotStats,
) -> Result<usize> {
    let m = f.nrows();
    let mut ncols_fs = nfs;
    let mut j = 0;
    let mut tmp = vec![0.0; m];
    while j < ncols_fs {
        let p0 = j;
        let pend = (p0 + PANEL).min(ncols_fs);
        while j < pend.min(ncols_fs) {
            // Column j updated by the panel pivots p0..j, computed out of place.
            tmp[p0..m].copy_from_slice(&f.as_slice()[j * m + p0..(j + 1) * m]);
            for s in p0..j {
                let u = tmp[s];
                if u != 0.0 {
                    let ls = &f.as_slice()[s * m + s + 1..(s + 1) * m];
                    for (t, l) in tmp[s + 1..m].iter_mut().zip(ls) {
                        *t -= l * u;
                    }
                }
            }
            let mut colmax = 0.0f64;
            for v in &tmp[j..m] {
                colmax = colmax.max(v.abs());
            }
            let mut best = 0.0f64;
            let mut ipiv = usize::MAX;
            let mut diag = usize::MAX;
            for (i, v) in tmp[j..nfs].iter().enumerate() {
                let i = i + j;
                if v.abs() > best {
                    best = v.abs();
                    ipiv = i;
                }
                if rows[i] == cols[j] {
                    diag = i;
                }
            }
            let threshold = if root { tiny } else { (PIVOT_TOL * colmax).max(tiny) };
            if ipiv == usize::MAX || best < threshold || !(best > tiny) {
                if root {
                    return Err(FemError::SingularMatrix { column: cols[j], magnitude: best });
                }
                // Delay: swap with the last undecided fully summed column.
                ncols_fs -= 1;
                f.swap_columns(j, ncols_fs);
                cols.swap(j, ncols_fs);
                stats.delayed_pivots += 1;
                continue;
            }
            if diag != usize::MAX && tmp[diag].abs() >= PIVOT_TOL * best {
                ipiv = diag;
            }
            if rows[ipiv] != cols[j] {
                stats.off_diagonal_pivots += 1;
            }
            f.as_mut_slice()[j * m + p0..(j + 1) * m].copy_from_slice(&tmp[p0..m]);
            if ipiv != j {
                f.swap_rows(ipiv, j);
                rows.swap(ipiv, j);
            }
            let piv = f[(j, j)];
            stats.min_pivot = stats.min_pivot.min(piv.abs());
            stats.max_pivot = stats.max_pivot.max(piv.abs());
            for v in &mut f.as_mut_slice()[j * m + j + 1..(j + 1) * m] {
                *v /= piv;
            }
            j += 1;
        }
        let p1 = j;
        if p1 == p0 {
            break;
        }
        if p1 < m {
            // U12 of the panel: unit-lower solve on the remaining columns.
            for c in p1..m {
                for s in p0..p1 {
                    let u = f[(s, c)];
                    if u != 0.0 {
                        for t in s + 1..p1 {
                            let l = f[(t, s)];
                            f[(t, c)] -= l * u;
                        }
                    }
                }
            }
            let l21 = f.view((p1, p0), (m - p1, p1 - p0)).clone_owned();
            let u12 = f.view((p0, p1), (p1 - p0, m - p1)).clone_owned();
            let mut a22 = f.view_mut((p1, p1), (m - p1, m - p1));
            a22.gemm(-1.0, &l21, &u12, 1.0);
        }
    }
    Ok(j)
}

impl LuFactors {
    pub fn factorize(a: &CsrMatrix) -> Result<Self> {
        let tree = nested_dissection(a);
        Self::factorize_with(a, &tree)
    }

    pub fn factorize_with(a: &CsrMatrix, tree: &SeparatorTree) -> Result<Self> {
        a.check_square()?;
        let n = a.nrows;
        let perm = tree.permutation();
        if perm.len() != n {
            return Err(FemError::DimensionMismatch(format!("ordering covers {} of {n} unknowns", perm.len())));
        }
        let mut pos = vec![usize::MAX; n];
        for (k, &v) in perm.iter().enumerate() {
            if pos[v] != usize::MAX {
                return Err(FemError::DimensionMismatch(format!("unknown {v} ordered twice")));
            }
            pos[v] = k;
        }
        let at = a.transpose();
        let adj = adjacency(a);
        let sets = symbolic(tree, &adj, &pos);
        let parents = tree.parents();
        let scale = a.data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let tiny = 1e-14 * scale;

        let mut stats = PivotStats { min_pivot: f64::INFINITY, ..Default::default() };
        let mut pending: Vec<Option<Contribution>> = (0..tree.nodes.len()).map(|_| None).collect();
        let mut fronts = Vec::with_capacity(tree.nodes.len());
        let mut rowpos = vec![usize::MAX; n];
        let mut colpos = vec![usize::MAX; n];
        let mut start = 0;
        for (s, node) in tree.nodes.iter().enumerate() {
            let end = start + node.vars.len();
            let kids: Vec<Contribution> = node.children.iter().filter_map(|&c| pending[c].take()).collect();
            let mut rows = node.vars.clone();
            let mut cols = node.vars.clone();
            for cb in &kids {
                // Delayed variables lead each child block and are not in `sets[s]`.
                for &r in &cb.rows {
                    if pos[r] < start {
                        rows.push(r);
                    }
                }
                for &c in &cb.cols {
                    if pos[c] < start {
                        cols.push(c);
                    }
                }
            }
            let nfs = rows.len();
            debug_assert_eq!(nfs, cols.len());
            rows.extend(&sets[s]);
            cols.extend(&sets[s]);
            let m = rows.len();
            stats.max_front = stats.max_front.max(m);
            for (i, &r) in rows.iter().enumerate() {
                rowpos[r] = i;
            }
            for (i, &c) in cols.iter().enumerate() {
                colpos[c] = i;
            }
            let mut f = DMatrix::<f64>::zeros(m, m);
            for &v in &node.vars {
                let (idx, val) = a.row(v);
                for (c, x) in idx.iter().zip(val) {
                    if pos[*c] >= start {
                        f[(rowpos[v], colpos[*c])] += x;
                    }
                }
                let (idx, val) = at.row(v);
                for (r, x) in idx.iter().zip(val) {
                    if pos[*r] >= end {
                        f[(rowpos[*r], colpos[v])] += x;
                    }
                }
            }
            for cb in kids {
                let ri: Vec<usize> = cb.rows.iter().map(|r| rowpos[*r]).collect();
                for (jc, c) in cb.cols.iter().enumerate() {
                    let fc = colpos[*c];
                    let mc = cb.rows.len();
                    let src = &cb.block.as_slice()[jc * mc..(jc + 1) * mc];
                    let dst = &mut f.as_mut_slice()[fc * m..(fc + 1) * m];
                    for (i, v) in src.iter().enumerate() {
                        dst[ri[i]] += v;
                    }
                }
            }
            let root = parents[s].is_none();
            let e = partial_factor(&mut f, &mut rows, &mut cols, nfs, root, tiny, &mut stats)?;
            for &r in &rows {
                rowpos[r] = usize::MAX;
            }
            for &c in &cols {
                colpos[c] = usize::MAX;
            }
            if root && e < m {
                return Err(FemError::SingularMatrix { column: cols[e], magnitude: 0.0 });
            }
            if e < m {
                pending[s] = Some(Contribution {
                    rows: rows[e..].to_vec(),
                    cols: cols[e..].to_vec(),
                    block: f.view((e, e), (m - e, m - e)).clone_owned(),
                });
            }
            stats.nnz_l += e * (m - e) + e * (e.saturating_sub(1)) / 2;
            stats.nnz_u += e * (m - e) + e * (e + 1) / 2;
            let lu = f.view((0, 0), (m, e)).clone_owned();
            let u12 = f.view((0, e), (e, m - e)).clone_owned();
            fronts.push(Front { rows, cols, e, lu, u12 });
            start = end;
        }
        if stats.min_pivot == f64::INFINITY {
            stats.min_pivot = 0.0;
        }
        Ok(Self { n, fronts, stats })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut y = b.to_vec();
        let mut yl = Vec::new();
        for fr in &self.fronts {
            let e = fr.e;
            yl.clear();
            yl.extend(fr.rows[..e].iter().map(|&r| y[r]));
            for q in 0..e {
                let yq = yl[q];
                if yq != 0.0 {
                    let ml = fr.rows.len();
                    let col = &fr.lu.as_slice()[q * ml + q + 1..(q + 1) * ml];
                    for (t, l) in col[..e - q - 1].iter().enumerate() {
                        yl[q + 1 + t] -= l * yq;
                    }
                    for (t, l) in col[e - q - 1..].iter().enumerate() {
                        y[fr.rows[e + t]] -= l * yq;
                    }
                }
            }
            for (q, &r) in fr.rows[..e].iter().enumerate() {
                y[r] = yl[q];
            }
        }
        let mut x = vec![0.0; self.n];
        for fr in self.fronts.iter().rev() {
            let e = fr.e;
            let m = fr.rows.len();
            let mut z: Vec<f64> = fr.rows[..e].iter().map(|&r| y[r]).collect();
            for jc in e..m {
                let xc = x[fr.cols[jc]];
                if xc != 0.0 {
                    for (p, u) in fr.u12.column(jc - e).iter().enumerate() {
                        z[p] -= u * xc;
                    }
                }
            }
            for p in (0..e).rev() {
                let xp = z[p] / fr.lu[(p, p)];
                x[fr.cols[p]] = xp;
                if xp != 0.0 {
                    let col = fr.lu.column(p);
                    for (t, zt) in z[..p].iter_mut().enumerate() {
                        *zt -= col[t] * xp;
                    }
                }
            }
        }
        x
    }
}

#[derive(Debug, Clone)]
pub struct LinearSolve {
    pub x: Vec<f64>,
    pub residual: f64,
    pub refinement_steps: usize,
    pub stats: PivotStats,
    pub factor_seconds: f64,
    pub solve_seconds: f64,
}

/// Relative residual `|b - A x| / |b|` (absolute when `b = 0`).
pub fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let nb = norm2(b);
    if nb > 0.0 {
        norm2(&r) / nb
    } else {
        norm2(&r)
    }
}

/// Factorizes and solves with up to three steps of iterative refinement;
/// the residual is always measured against `a` itself.
pub fn solve_linear(a: &CsrMatrix, b: &[f64]) -> Result<LinearSolve> {
    let t0 = Instant::now();
    let lu = LuFactors::factorize(a)?;
    let factor_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let mut x = lu.solve(b);
    let mut residual = relative_residual(a, &x, b);
    let mut steps = 0;
    while residual > 1e-11 && steps < 3 {
        let ax = a.matvec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let dx = lu.solve(&r);
        let candidate: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + d).collect();
        let res2 = relative_residual(a, &candidate, b);
        steps += 1;
        if res2 < residual {
            x = candidate;
            residual = res2;
        } else {
            break;
        }
    }
    if !(residual <= 1e-9) {
        return Err(FemError::Residual { residual });
    }
    Ok(LinearSolve {
        x,
        residual,
        refinement_steps: steps,
        stats: lu.stats,
        factor_seconds,
        solve_seconds: t1.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::CooMatrix;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (*seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    }

    /// 3D 7-point Laplacian plus a skew convection part.
    fn grid_matrix(m: usize) -> CsrMatrix {
        let idx = |i: usize, j: usize, k: usize| (i * m + j) * m + k;
        let mut coo = CooMatrix::new(m * m * m, m * m * m);
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    let r = idx(i, j, k);
                    coo.push(r, r, 6.0);
                    let mut nb = |ii: usize, jj: usize, kk: usize, s: f64| coo.push(r, idx(ii, jj, kk), -1.0 + s);
                    if i > 0 {
                        nb(i - 1, j, k, 0.3);
                    }
                    if i + 1 < m {
                        nb(i + 1, j, k, -0.3);
                    }
                    if j > 0 {
                        nb(i, j - 1, k, 0.0);
                    }
                    if j + 1 < m {
                        nb(i, j + 1, k, 0.0);
                    }
                    if k > 0 {
                        nb(i, j, k - 1, 0.1);
                    }
                    if k + 1 < m {
                        nb(i, j, k + 1, -0.1);
                    }
                }
            }
        }
        coo.to_csr()
    }

    /// `[[D, B^T], [B, 0]]` with a zero diagonal block.
    fn saddle(n: usize, m: usize) -> CsrMatrix {
        let mut coo = CooMatrix::new(n + m, n + m);
        for i in 0..n {
            coo.push(i, i, 2.0 + (i % 3) as f64);
        }
        for j in 0..m {
            for i in [4 * j, 4 * j + 1, 4 * j + 2] {
                coo.push(n + j, i, 1.0 + 0.1 * i as f64);
                coo.push(i, n + j, 1.0 + 0.1 * i as f64);
            }
        }
        coo.to_csr()
    }

    #[test]
    fn ordering_is_a_permutation_and_tree_is_postordered() {
        let a = grid_matrix(9);
        let tree = nested_dissection(&a);
        let mut p = tree.permutation();
        p.sort_unstable();
        assert_eq!(p, (0..a.nrows).collect::<Vec<_>>());
        for (s, node) in tree.nodes.iter().enumerate() {
            assert!(node.children.iter().all(|&c| c < s));
        }
        let top = &tree.nodes[tree.nodes.len() - 2];
        assert!(!top.vars.is_empty() && top.vars.len() < a.nrows / 4);
    }

    #[test]
    fn separator_splits_the_graph() {
        // Removing the top separator leaves no edge between its two subtrees.
        let a = grid_matrix(8);
        let tree = nested_dissection(&a);
        let top = tree.nodes.len() - 2;
        let kids = &tree.nodes[top].children;
        assert_eq!(kids.len(), 2);
        let mut owner = vec![usize::MAX; a.nrows];
        fn collect(tree: &SeparatorTree, s: usize, tag: usize, owner: &mut [usize]) {
            for &v in &tree.nodes[s].vars {
                owner[v] = tag;
            }
            for &c in &tree.nodes[s].children {
                collect(tree, c, tag, owner);
            }
        }
        collect(&tree, kids[0], 0, &mut owner);
        collect(&tree, kids[1], 1, &mut owner);
        for r in 0..a.nrows {
            for &c in a.row(r).0 {
                if owner[r] != usize::MAX && owner[c] != usize::MAX {
                    assert_eq!(owner[r], owner[c]);
                }
            }
        }
    }

    #[test]
    fn solves_nonsymmetric_grid_system() {
        let a = grid_matrix(10);
        let mut s = 3u64;
        let xs: Vec<f64> = (0..a.nrows).map(|_| lcg(&mut s)).collect();
        let b = a.matvec(&xs);
        let sol = solve_linear(&a, &b).unwrap();
        let err = xs.iter().zip(&sol.x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
        assert!(sol.residual < 1e-12);
    }

    #[test]
    fn saddle_point_needs_off_diagonal_pivots() {
        let a = saddle(40, 10);
        let lu = LuFactors::factorize_with(&a, &SeparatorTree::single((0..50).rev().collect())).unwrap();
        assert!(lu.stats.off_diagonal_pivots > 0);
        let b: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let x = lu.solve(&b);
        assert!(relative_residual(&a, &x, &b) < 1e-12);
    }

    #[test]
    fn zero_diagonal_block_first_forces_delays() {
        // The multipliers alone cannot be pivoted on and are delayed to the parent.
        let a = saddle(40, 10);
        let tree = SeparatorTree::chain(vec![(40..50).collect(), (0..20).collect(), (20..40).collect()]);
        let lu = LuFactors::factorize_with(&a, &tree).unwrap();
        assert!(lu.stats.delayed_pivots >= 10);
        let b: Vec<f64> = (0..50).map(|i| (0.3 * i as f64).cos()).collect();
        assert!(relative_residual(&a, &lu.solve(&b), &b) < 1e-12);
    }

    #[test]
    fn zero_rhs_gives_zero_solution() {
        let a = grid_matrix(4);
        let sol = solve_linear(&a, &vec![0.0; a.nrows]).unwrap();
        assert!(sol.x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_front_matches_tree() {
        let a = grid_matrix(5);
        let b: Vec<f64> = (0..a.nrows).map(|i| 1.0 + (i % 7) as f64).collect();
        let x1 = LuFactors::factorize_with(&a, &SeparatorTree::single((0..a.nrows).collect())).unwrap().solve(&b);
        let x2 = LuFactors::factorize(&a).unwrap().solve(&b);
        let d = x1.iter().zip(&x2).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(d < 1e-12, "{d}");
    }

    #[test]
    fn isolated_unknowns_are_packed() {
        // Identity rows for half the unknowns, as produced by eliminated constraints.
        let mut coo = CooMatrix::new(500, 500);
        for i in 0..500 {
            coo.push(i, i, 2.0);
            if i < 250 && i + 1 < 250 {
                coo.push(i, i + 1, -1.0);
                coo.push(i + 1, i, -1.0);
            }
        }
        let a = coo.to_csr();
        let tree = nested_dissection(&a);
        assert!(tree.nodes.len() < 60, "{}", tree.nodes.len());
        let b = vec![1.0; 500];
        let r = relative_residual(&a, &LuFactors::factorize(&a).unwrap().solve(&b), &b);
        assert!(r < 1e-11, "{r}");
    }

    #[test]
    fn singular_matrix_reports_column() {
        let mut coo = CooMatrix::new(3, 3);
        coo.push(0, 0, 1.0);
        coo.push(1, 1, 1.0);
        coo.push(2, 0, 1.0);
        let a = coo.to_csr();
        match LuFactors::factorize_with(&a, &SeparatorTree::single(vec![0, 1, 2])) {
            Err(FemError::SingularMatrix { column, .. }) => assert_eq!(column, 2),
            other => panic!("{other:?}"),
        }
        // Also through the delayed path.
        match LuFactors::factorize_with(&a, &SeparatorTree::chain(vec![vec![2], vec![0, 1]])) {
            Err(FemError::SingularMatrix { column, .. }) => assert_eq!(column, 2),
            other => panic!("{other:?}"),
        }
    }
}
