//! Network simplex for the dense bipartite transportation problem.
//!
//! Nodes are the `n` sources, the `m` sinks and one artificial root. The
//! initial basis is the star of artificial arcs through the root, which is
//! strongly feasible because all supplies and demands are positive. Pivoting
//! keeps the basis strongly feasible (leaving arc = last blocking arc along
//! the cycle orientation starting at the apex), so the method terminates
//! without cycling even on the highly degenerate uniform instances that
//! transportation problems produce.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Entering tolerance on reduced costs, relative to the normalized cost scale.
const ENTER_EPS: f64 = 1e-10;
/// Flow on artificial arcs above this at optimality means the marginals were
/// not balanced.
const ARTIFICIAL_TOLERANCE: f64 = 1e-9;

struct Simplex<'a> {
    n: usize,
    m: usize,
    cost: &'a DMatrix<f64>,
    scale: f64,
    art_cost: f64,
    flow: Vec<f64>,
    is_basic: Vec<bool>,
    incident: Vec<Vec<u32>>,
    parent: Vec<usize>,
    parent_arc: Vec<u32>,
    depth: Vec<u32>,
    pot: Vec<f64>,
    bfs_order: Vec<usize>,
    cursor: usize,
    block_size: usize,
}

impl<'a> Simplex<'a> {
    fn root(&self) -> usize {
        self.n + self.m
    }

    fn num_arcs(&self) -> usize {
        self.n * self.m + self.n + self.m
    }

    fn tail(&self, arc: u32) -> usize {
        let a = arc as usize;
        let nm = self.n * self.m;
        if a < nm {
            a / self.m
        } else if a < nm + self.n {
            a - nm // source -> root
        } else {
            self.root() // root -> sink
        }
    }

    fn head(&self, arc: u32) -> usize {
        let a = arc as usize;
        let nm = self.n * self.m;
        if a < nm {
            self.n + a % self.m
        } else if a < nm + self.n {
            self.root()
        } else {
            self.n + (a - nm - self.n)
        }
    }

    fn arc_cost(&self, arc: u32) -> f64 {
        let a = arc as usize;
        let nm = self.n * self.m;
        if a < nm {
            self.cost[(a / self.m, a % self.m)] / self.scale
        } else {
            self.art_cost
        }
    }

    fn new(cost: &'a DMatrix<f64>, p: &DVector<f64>, q: &DVector<f64>) -> Self {
        let n = p.len();
        let m = q.len();
        let nodes = n + m + 1;
        let num_arcs = n * m + n + m;
        let scale = cost.iter().fold(0.0f64, |acc, &c| acc.max(c.abs())).max(1.0);
        let art_cost = (n + m + 1) as f64;

        let mut flow = vec![0.0; num_arcs];
        let mut is_basic = vec![false; num_arcs];
        let mut incident: Vec<Vec<u32>> = vec![Vec::new(); nodes];
        for i in 0..n {
            let arc = (n * m + i) as u32;
            flow[arc as usize] = p[i];
            is_basic[arc as usize] = true;
            incident[i].push(arc);
            incident[n + m].push(arc);
        }
        for j in 0..m {
            let arc = (n * m + n + j) as u32;
            flow[arc as usize] = q[j];
            is_basic[arc as usize] = true;
            incident[n + j].push(arc);
            incident[n + m].push(arc);
        }

        let block_size = ((num_arcs as f64).sqrt().ceil() as usize).max(16);
        let mut s = Self {
            n,
            m,
            cost,
            scale,
            art_cost,
            flow,
            is_basic,
            incident,
            parent: vec![usize::MAX; nodes],
            parent_arc: vec![u32::MAX; nodes],
            depth: vec![0; nodes],
            pot: vec![0.0; nodes],
            bfs_order: Vec::with_capacity(nodes),
            cursor: 0,
            block_size,
        };
        s.rebuild_tree();
        s
    }

    /// Recomputes parent pointers, depths and potentials from the basic arcs.
    fn rebuild_tree(&mut self) {
        let nodes = self.n + self.m + 1;
        let root = self.root();
        self.bfs_order.clear();
        let mut visited = vec![false; nodes];
        visited[root] = true;
        self.parent[root] = root;
        self.depth[root] = 0;
        self.pot[root] = 0.0;
        self.bfs_order.push(root);
        let mut head_idx = 0;
        while head_idx < self.bfs_order.len() {
            let x = self.bfs_order[head_idx];
            head_idx += 1;
            for &arc in &self.incident[x] {
                let t = self.tail(arc);
                let h = self.head(arc);
                let other = if t == x { h } else { t };
                if !visited[other] {
                    visited[other] = true;
                    self.parent[other] = x;
                    self.parent_arc[other] = arc;
                    self.depth[other] = self.depth[x] + 1;
                    // basic arcs have zero reduced cost: c - pot[tail] + pot[head] = 0
                    self.pot[other] = if t == other {
                        self.arc_cost(arc) + self.pot[x]
                    } else {
                        self.pot[x] - self.arc_cost(arc)
                    };
                    self.bfs_order.push(other);
                }
            }
        }
    }

    fn reduced_cost(&self, arc: u32) -> f64 {
        self.arc_cost(arc) - self.pot[self.tail(arc)] + self.pot[self.head(arc)]
    }

    /// Block pricing: scan a block of arcs from the rotating cursor, return
    /// the most negative reduced-cost arc found, advancing block by block
    /// until a candidate appears or the whole arc set has been scanned.
    fn find_entering(&mut self) -> Option<u32> {
        let total = self.num_arcs();
        let mut scanned = 0;
        while scanned < total {
            let mut best: Option<(f64, u32)> = None;
            for t in 0..self.block_size.min(total - scanned) {
                let a = ((self.cursor + t) % total) as u32;
                if self.is_basic[a as usize] {
                    continue;
                }
                let r = self.reduced_cost(a);
                if r < -ENTER_EPS {
                    match best {
                        Some((br, _)) if br <= r => {}
                        _ => best = Some((r, a)),
                    }
                }
            }
            let step = self.block_size.min(total - scanned);
            self.cursor = (self.cursor + step) % total;
            scanned += step;
            if best.is_some() {
                return best.map(|(_, a)| a);
            }
        }
        None
    }

    /// One simplex pivot on the entering arc. Returns an error only if the
    /// cycle has no flow-decreasing arc, which cannot happen on the bounded
    /// transportation polytope.
    fn pivot(&mut self, entering: u32) -> Result<()> {
        let u = self.tail(entering);
        let v = self.head(entering);

        // Tree paths from both endpoints up to their lowest common ancestor.
        let mut pu: Vec<(u32, usize)> = Vec::new(); // (arc, child node), u -> apex
        let mut pv: Vec<(u32, usize)> = Vec::new(); // v -> apex
        let mut a = u;
        let mut b = v;
        while self.depth[a] > self.depth[b] {
            pu.push((self.parent_arc[a], a));
            a = self.parent[a];
        }
        while self.depth[b] > self.depth[a] {
            pv.push((self.parent_arc[b], b));
            b = self.parent[b];
        }
        while a != b {
            pu.push((self.parent_arc[a], a));
            a = self.parent[a];
            pv.push((self.parent_arc[b], b));
            b = self.parent[b];
        }

        // Cycle in the orientation of the entering arc, starting at the apex:
        // apex -> u (pu reversed), entering, v -> apex (pv in order).
        // `increase` marks arcs whose flow grows by theta.
        let mut ordered: Vec<(u32, bool)> = Vec::with_capacity(pu.len() + pv.len());
        for &(arc, node) in pu.iter().rev() {
            // traversed parent -> node; arc direction node -> parent means opposite
            let increases = self.tail(arc) != node;
            ordered.push((arc, increases));
        }
        for &(arc, node) in pv.iter() {
            // traversed node -> parent
            let increases = self.tail(arc) == node;
            ordered.push((arc, increases));
        }

        let mut theta = f64::INFINITY;
        for &(arc, increases) in &ordered {
            if !increases {
                theta = theta.min(self.flow[arc as usize]);
            }
        }
        if !theta.is_finite() {
            return Err(Error::NumericalFailure(
                "unbounded pivot on transportation polytope".into(),
            ));
        }

        // Last blocking arc along the orientation keeps the basis strongly feasible.
        let mut leaving: Option<u32> = None;
        for &(arc, increases) in &ordered {
            if !increases && self.flow[arc as usize] <= theta {
                leaving = Some(arc);
            }
        }
        let leaving = leaving.ok_or_else(|| {
            Error::NumericalFailure("degenerate cycle without leaving arc".into())
        })?;

        if theta > 0.0 {
            self.flow[entering as usize] += theta;
            for &(arc, increases) in &ordered {
                if increases {
                    self.flow[arc as usize] += theta;
                } else {
                    self.flow[arc as usize] -= theta;
                }
            }
        }
        self.flow[leaving as usize] = 0.0;

        self.is_basic[leaving as usize] = false;
        let (lt, lh) = (self.tail(leaving), self.head(leaving));
        self.incident[lt].retain(|&x| x != leaving);
        self.incident[lh].retain(|&x| x != leaving);
        self.is_basic[entering as usize] = true;
        self.incident[u].push(entering);
        self.incident[v].push(entering);

        self.rebuild_tree();
        Ok(())
    }

    /// Recomputes the basic flows exactly from the marginals by stripping
    /// leaves in reverse BFS order; removes accumulated pivot rounding.
    fn recompute_flows(&mut self, p: &DVector<f64>, q: &DVector<f64>) {
        for f in self.flow.iter_mut() {
            *f = 0.0;
        }
        let nodes = self.n + self.m + 1;
        let mut balance = vec![0.0f64; nodes];
        for i in 0..self.n {
            balance[i] = p[i];
        }
        for j in 0..self.m {
            balance[self.n + j] = -q[j];
        }
        for idx in (1..self.bfs_order.len()).rev() {
            let x = self.bfs_order[idx];
            let arc = self.parent_arc[x];
            let f = if self.tail(arc) == x {
                balance[x]
            } else {
                -balance[x]
            };
            self.flow[arc as usize] = f;
            let parent = self.parent[x];
            balance[parent] += balance[x];
        }
    }
}

/// Exact solution of `min <C, gamma>` over couplings of `(p, q)`.
/// Supplies and demands must be strictly positive and balanced; the returned
/// dense matrix is clamped to nonnegative entries.
pub(crate) fn transportation_simplex(
    cost: &DMatrix<f64>,
    p: &DVector<f64>,
    q: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let n = p.len();
    let m = q.len();
    let mut s = Simplex::new(cost, p, q);
    let max_pivots = 60 * (n + m) + 2000;
    let mut pivots = 0usize;
    while let Some(entering) = s.find_entering() {
        s.pivot(entering)?;
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::NumericalFailure(format!(
                "network simplex exceeded {max_pivots} pivots"
            )));
        }
    }
    s.recompute_flows(p, q);

    let nm = n * m;
    for (offset, &f) in s.flow[nm..].iter().enumerate() {
        if f.abs() > ARTIFICIAL_TOLERANCE {
            return Err(Error::InfeasibleMarginals {
                residual: s.flow[nm + offset].abs(),
            });
        }
    }

    let mut plan = DMatrix::zeros(n, m);
    for a in 0..nm {
        if s.is_basic[a] && s.flow[a] != 0.0 {
            plan[(a / m, a % m)] = s.flow[a].max(0.0);
        }
    }
    Ok(plan)
}
