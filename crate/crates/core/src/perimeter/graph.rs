/// How an auxiliary node couples to its window members.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coverage {
    /// Forced into the set whenever any member is (pays `max` over the window).
    Any,
    /// Allowed into the set only when every member is (pays `min`).
    All,
}

/// Cut-representable energy over the cells of a grid.
///
/// Node `k < node_count` stands for grid cell `cells[k]`; auxiliary nodes
/// follow them.
/// Source side means "in the set". The energy of an indicator `χ` is
/// `constant + Σ unary_i χ_i + Σ w [χ_i != χ_j] + Σ w [χ_k != s] + Σ_a cost_a · z_a`
/// with `z_a` the max (`Any`) or min (`All`) of `χ` over the members of `a`.
/// The terms `w [χ_k != s]` couple a node to a cell outside the graph held
/// in state `s`; they are kept apart from `unary` so that a solver can round
/// them exactly like the matching pairwise terms.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InteractionGraph {
    pub node_count: usize,
    pub cells: Vec<u32>,
    pub unary: Vec<f64>,
    /// `(i, j, w)` with `i < j`, sorted.
    pub pairwise: Vec<(u32, u32, f64)>,
    /// `(k, s, w)`: cost `w` when node `k` differs from the held state `s`.
    pub terminal: Vec<(u32, bool, f64)>,
    pub aux_kind: Vec<Coverage>,
    pub aux_cost: Vec<f64>,
    /// CSR offsets into `aux_members`, length `aux_count() + 1`.
    pub aux_start: Vec<usize>,
    pub aux_members: Vec<u32>,
    pub constant: f64,
}

impl InteractionGraph {
    pub fn new(node_count: usize) -> Self {
        InteractionGraph {
            node_count,
            cells: (0..node_count as u32).collect(),
            unary: vec![0.0; node_count],
            aux_start: vec![0],
            ..Default::default()
        }
    }

    pub fn aux_count(&self) -> usize {
        self.aux_kind.len()
    }

    pub fn aux(&self, a: usize) -> (Coverage, f64, &[u32]) {
        (self.aux_kind[a], self.aux_cost[a], &self.aux_members[self.aux_start[a]..self.aux_start[a + 1]])
    }

    pub fn push_aux(&mut self, kind: Coverage, cost: f64, members: impl IntoIterator<Item = u32>) {
        self.aux_members.extend(members);
        self.aux_kind.push(kind);
        self.aux_cost.push(cost);
        self.aux_start.push(self.aux_members.len());
    }

    /// Adds `scale * values[i]` to every unary term.
    pub fn add_unary(&mut self, values: &[f64], scale: f64) {
        for (u, v) in self.unary.iter_mut().zip(values) {
            *u += scale * v;
        }
    }

    /// Energy of the indicator `chi`, with auxiliaries at their optimum.
    pub fn energy(&self, chi: &[bool]) -> f64 {
        let mut e = self.constant;
        for (i, &u) in self.unary.iter().enumerate() {
            if chi[i] {
                e += u;
            }
        }
        for &(i, j, w) in &self.pairwise {
            if chi[i as usize] != chi[j as usize] {
                e += w;
            }
        }
        for &(k, held, w) in &self.terminal {
            if chi[k as usize] != held {
                e += w;
            }
        }
        for a in 0..self.aux_count() {
            let (kind, cost, members) = self.aux(a);
            let on = match kind {
                Coverage::Any => members.iter().any(|&m| chi[m as usize]),
                Coverage::All => members.iter().all(|&m| chi[m as usize]),
            };
            if on {
                e += cost;
            }
        }
        e
    }
}
