//! Primal network simplex for uncapacitated min-cost flow with integer supplies.
//!
//! The spanning-tree bookkeeping (thread, reverse thread, subtree sizes and
//! last successors) follows the classic LEMON layout. Supplies are integers so
//! pivots are exact; arc costs are `f64` and entering arcs must improve by
//! more than a scale-aware tolerance.

use crate::error::{Error, Result};

const NONE: usize = usize::MAX;
const STATE_TREE: i8 = 0;
const STATE_LOWER: i8 = 1;
const DIR_UP: i8 = 1;
const DIR_DOWN: i8 = -1;

/// A min-cost flow instance. Node supplies must sum to zero.
#[derive(Clone, Debug, Default)]
pub(crate) struct Network {
    pub supply: Vec<i64>,
    pub source: Vec<usize>,
    pub target: Vec<usize>,
    pub cost: Vec<f64>,
}

/// Optimal flow together with node potentials `pi` such that
/// `cost[e] + pi[source] - pi[target] >= -tol` on every arc, with equality on
/// arcs that carry flow.
#[derive(Clone, Debug)]
pub(crate) struct FlowSolution {
    pub flow: Vec<i64>,
    pub pi: Vec<f64>,
}

impl Network {
    pub fn with_nodes(supply: Vec<i64>) -> Self {
        Self { supply, ..Default::default() }
    }

    pub fn add_arc(&mut self, s: usize, t: usize, c: f64) {
        self.source.push(s);
        self.target.push(t);
        self.cost.push(c);
    }

    pub fn solve(&self) -> Result<FlowSolution> {
        if self.supply.iter().sum::<i64>() != 0 {
            return Err(Error::Infeasible);
        }
        if self.cost.iter().any(|c| !c.is_finite()) {
            return Err(Error::NumericalFailure("non-finite arc cost".into()));
        }
        let mut s = Simplex::new(self);
        s.run()?;
        Ok(s.into_solution(self.cost.len()))
    }
}

struct Simplex {
    node_num: usize,
    arc_num: usize,
    root: usize,
    source: Vec<usize>,
    target: Vec<usize>,
    cost: Vec<f64>,
    flow: Vec<i64>,
    state: Vec<i8>,
    pi: Vec<f64>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    pred_dir: Vec<i8>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    dirty_revs: Vec<usize>,
    tol: f64,
    block_size: usize,
    next_arc: usize,
    // pivot state
    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
}

impl Simplex {
    fn new(net: &Network) -> Self {
        let node_num = net.supply.len();
        let arc_num = net.cost.len();
        let all = arc_num + node_num;
        let root = node_num;
        let max_cost = net.cost.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let art_cost = (max_cost + 1.0) * (node_num as f64 + 1.0);

        let mut source = Vec::with_capacity(all);
        let mut target = Vec::with_capacity(all);
        let mut cost = Vec::with_capacity(all);
        source.extend_from_slice(&net.source);
        target.extend_from_slice(&net.target);
        cost.extend_from_slice(&net.cost);
        let mut flow = vec![0i64; all];
        let mut state = vec![STATE_LOWER; all];

        let mut pi = vec![0.0; node_num + 1];
        let mut parent = vec![NONE; node_num + 1];
        let mut pred = vec![NONE; node_num + 1];
        let mut pred_dir = vec![DIR_UP; node_num + 1];
        let mut thread = vec![0; node_num + 1];
        let mut rev_thread = vec![0; node_num + 1];
        let mut succ_num = vec![1; node_num + 1];
        let mut last_succ = vec![0; node_num + 1];

        thread[root] = 0;
        rev_thread[0] = root;
        succ_num[root] = node_num + 1;
        last_succ[root] = if node_num == 0 { root } else { root - 1 };

        for u in 0..node_num {
            let e = arc_num + u;
            parent[u] = root;
            pred[u] = e;
            thread[u] = u + 1;
            rev_thread[u + 1] = u;
            last_succ[u] = u;
            state[e] = STATE_TREE;
            if net.supply[u] >= 0 {
                pred_dir[u] = DIR_UP;
                source.push(u);
                target.push(root);
                flow[e] = net.supply[u];
                cost.push(0.0);
            } else {
                pred_dir[u] = DIR_DOWN;
                pi[u] = art_cost;
                source.push(root);
                target.push(u);
                flow[e] = -net.supply[u];
                cost.push(art_cost);
            }
        }

        let block_size = ((arc_num as f64).sqrt().ceil() as usize).max(10);
        Self {
            node_num,
            arc_num,
            root,
            source,
            target,
            cost,
            flow,
            state,
            pi,
            parent,
            pred,
            pred_dir,
            thread,
            rev_thread,
            succ_num,
            last_succ,
            dirty_revs: Vec::new(),
            tol: 1e-12 * (max_cost + 1.0) * (node_num as f64).sqrt().max(1.0),
            block_size,
            next_arc: 0,
            in_arc: NONE,
            join: NONE,
            u_in: NONE,
            v_in: NONE,
            u_out: NONE,
        }
    }

    fn reduced(&self, e: usize) -> f64 {
        self.state[e] as f64 * (self.cost[e] + self.pi[self.source[e]] - self.pi[self.target[e]])
    }

    /// Block search pivot rule.
    fn find_entering_arc(&mut self) -> bool {
        let mut min = -self.tol;
        let mut found = NONE;
        let mut cnt = self.block_size;
        let m = self.arc_num;
        if m == 0 {
            return false;
        }
        let start = self.next_arc;
        let mut e = start;
        loop {
            let c = self.reduced(e);
            if c < min {
                min = c;
                found = e;
            }
            e += 1;
            if e == m {
                e = 0;
            }
            cnt -= 1;
            if cnt == 0 {
                if found != NONE {
                    break;
                }
                cnt = self.block_size;
            }
            if e == start {
                break;
            }
        }
        if found == NONE {
            return false;
        }
        self.in_arc = found;
        self.next_arc = e;
        true
    }

    fn find_join_node(&mut self) {
        let mut u = self.source[self.in_arc];
        let mut v = self.target[self.in_arc];
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        self.join = u;
    }

    /// Returns the flow change along the cycle, or `None` if unbounded.
    fn find_leaving_arc(&mut self) -> Option<i64> {
        let first = self.source[self.in_arc];
        let second = self.target[self.in_arc];
        let mut delta = i64::MAX;
        let mut result = 0;
        let mut u = first;
        while u != self.join {
            if self.pred_dir[u] == DIR_UP {
                let d = self.flow[self.pred[u]];
                if d < delta {
                    delta = d;
                    self.u_out = u;
                    result = 1;
                }
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != self.join {
            if self.pred_dir[u] == DIR_DOWN {
                let d = self.flow[self.pred[u]];
                if d <= delta {
                    delta = d;
                    self.u_out = u;
                    result = 2;
                }
            }
            u = self.parent[u];
        }
        if result == 0 {
            return None;
        }
        if result == 1 {
            self.u_in = first;
            self.v_in = second;
        } else {
            self.u_in = second;
            self.v_in = first;
        }
        Some(delta)
    }

    fn change_flow(&mut self, delta: i64) {
        if delta > 0 {
            self.flow[self.in_arc] += delta;
            let mut u = self.source[self.in_arc];
            while u != self.join {
                self.flow[self.pred[u]] -= self.pred_dir[u] as i64 * delta;
                u = self.parent[u];
            }
            let mut u = self.target[self.in_arc];
            while u != self.join {
                self.flow[self.pred[u]] += self.pred_dir[u] as i64 * delta;
                u = self.parent[u];
            }
        }
        self.state[self.in_arc] = STATE_TREE;
        self.state[self.pred[self.u_out]] = STATE_LOWER;
    }

    fn update_tree_structure(&mut self) {
        let (u_in, v_in, u_out, join, in_arc) = (self.u_in, self.v_in, self.u_out, self.join, self.in_arc);
        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = if u_in == self.source[in_arc] { DIR_UP } else { DIR_DOWN };
            if self.thread[v_in] != u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[v_in];
                self.thread[v_in] = u_out;
                self.rev_thread[u_out] = v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            let thread_continue =
                if old_rev_thread == v_in { self.thread[old_last_succ] } else { self.thread[v_in] };

            // Re-hang the stem nodes between u_in and u_out.
            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in];
            let mut after = self.thread[last];
            self.thread[v_in] = u_in;
            self.dirty_revs.clear();
            self.dirty_revs.push(v_in);
            while stem != u_out {
                let next_stem = self.parent[stem];
                self.thread[last] = next_stem;
                self.dirty_revs.push(last);

                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;

                self.parent[stem] = par_stem;
                par_stem = stem;
                stem = next_stem;

                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[u_out] = par_stem;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[u_out] = last;

            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }

            for i in 0..self.dirty_revs.len() {
                let u = self.dirty_revs[i];
                let t = self.thread[u];
                self.rev_thread[t] = u;
            }

            let mut tmp_sc = 0usize;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = self.parent[u];
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                tmp_sc += self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = if u_in == self.source[in_arc] { DIR_UP } else { DIR_DOWN };
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[join] == v_in { join } else { NONE };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != NONE && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }

        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = last_succ_out;
                u = self.parent[u];
            }
        }

        let mut u = v_in;
        while u != join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u];
        }
        let mut u = v_out;
        while u != join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u];
        }
    }

    fn update_potential(&mut self) {
        let (u_in, v_in) = (self.u_in, self.v_in);
        let sigma = self.pi[v_in] - self.pi[u_in] - self.pred_dir[u_in] as f64 * self.cost[self.in_arc];
        let end = self.thread[self.last_succ[u_in]];
        let mut u = u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }

    /// Recomputes all potentials from the tree to remove accumulated drift.
    fn refresh_potentials(&mut self) {
        self.pi[self.root] = 0.0;
        let mut u = self.thread[self.root];
        while u != self.root {
            let p = self.parent[u];
            let c = self.cost[self.pred[u]];
            self.pi[u] = if self.pred_dir[u] == DIR_UP { self.pi[p] - c } else { self.pi[p] + c };
            u = self.thread[u];
        }
    }

    fn run(&mut self) -> Result<()> {
        let mut pivots: u64 = 0;
        while self.find_entering_arc() {
            self.find_join_node();
            let delta = self.find_leaving_arc().ok_or(Error::Infeasible)?;
            self.change_flow(delta);
            self.update_tree_structure();
            self.update_potential();
            pivots += 1;
            if pivots.is_multiple_of(4096) {
                self.refresh_potentials();
            }
        }
        self.refresh_potentials();
        // One more sweep after the refresh: drift may have hidden an improving arc.
        while self.find_entering_arc() {
            self.find_join_node();
            let delta = self.find_leaving_arc().ok_or(Error::Infeasible)?;
            self.change_flow(delta);
            self.update_tree_structure();
            self.update_potential();
        }
        self.refresh_potentials();
        if (self.arc_num..self.arc_num + self.node_num).any(|e| self.flow[e] != 0) {
            return Err(Error::Infeasible);
        }
        Ok(())
    }

    fn into_solution(mut self, arc_num: usize) -> FlowSolution {
        self.flow.truncate(arc_num);
        self.pi.truncate(self.node_num);
        FlowSolution { flow: self.flow, pi: self.pi }
    }

    #[cfg(test)]
    fn check_tree(&self) {
        // Thread visits every node once, starting at the root.
        let mut seen = vec![false; self.node_num + 1];
        let mut u = self.root;
        for _ in 0..=self.node_num {
            assert!(!seen[u]);
            seen[u] = true;
            assert_eq!(self.rev_thread[self.thread[u]], u);
            u = self.thread[u];
        }
        assert_eq!(u, self.root);
        for v in 0..self.node_num {
            let e = self.pred[v];
            let p = self.parent[v];
            if self.pred_dir[v] == DIR_UP {
                assert_eq!((self.source[e], self.target[e]), (v, p));
            } else {
                assert_eq!((self.source[e], self.target[e]), (p, v));
            }
            assert_eq!(self.state[e], STATE_TREE);
        }
    }
}

/// Converts nonnegative weights on two sides to integers with the common total
/// `round(mass * scale)` using largest-remainder rounding on each side.
pub(crate) fn integerize(rows: &[f64], cols: &[f64], scale: f64) -> (Vec<i64>, Vec<i64>) {
    let total_r: f64 = rows.iter().sum();
    let total_c: f64 = cols.iter().sum();
    let target = (0.5 * (total_r + total_c) * scale).round() as i64;
    (round_to_total(rows, scale, target), round_to_total(cols, scale, target))
}

fn round_to_total(w: &[f64], scale: f64, target: i64) -> Vec<i64> {
    let scaled: Vec<f64> = w.iter().map(|x| x * scale).collect();
    let mut out: Vec<i64> = scaled.iter().map(|x| x.floor() as i64).collect();
    let mut diff = target - out.iter().sum::<i64>();
    let mut order: Vec<usize> = (0..w.len()).collect();
    // Largest fractional part first; ties by index.
    order.sort_by(|&a, &b| {
        let fa = scaled[a] - scaled[a].floor();
        let fb = scaled[b] - scaled[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    while diff > 0 && !order.is_empty() {
        for &i in &order {
            if diff == 0 {
                break;
            }
            if w[i] > 0.0 {
                out[i] += 1;
                diff -= 1;
            }
        }
        if !w.iter().any(|&x| x > 0.0) {
            break;
        }
    }
    while diff < 0 {
        let mut changed = false;
        for &i in order.iter().rev() {
            if diff == 0 {
                break;
            }
            if out[i] > 0 {
                out[i] -= 1;
                diff += 1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    out
}
