//! Exact minimization of cut-representable energies by maximum flow, with
//! the least and greatest minimizers read off the residual network.

use std::collections::VecDeque;
use std::io::Write;

use crate::error::{Error, Result};
use crate::grid::{BinarySet, GridGeometry};
use crate::perimeter::{Coverage, InteractionGraph};

/// Size of one capacity unit relative to the sum of all term magnitudes.
pub const QUANTUM_RELATIVE: f64 = 1.0 / (1u64 << 58) as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arc {
    pub from: u32,
    pub to: u32,
    pub capacity: i64,
}

/// Integer s-t network. Nodes `0..free_count` are the graph's cell nodes,
/// then its auxiliaries, then source and sink.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowNetwork {
    pub node_count: usize,
    pub free_count: usize,
    pub source: usize,
    pub sink: usize,
    pub arcs: Vec<Arc>,
    /// Capacity standing in for `+∞`; exceeds the sum of all finite capacities.
    pub infinite: i64,
    /// Energy of one capacity unit, in scaled units.
    pub quantum: f64,
    pub scale: f64,
    /// Scaled energy of the empty cut: the graph constant plus the integer
    /// offsets introduced by negative terms.
    pub offset: f64,
}

impl FlowNetwork {
    /// Converts capacity units back to energy in the graph's own units.
    pub fn energy_of(&self, units: i64) -> f64 {
        (self.offset + units as f64 * self.quantum) / self.scale
    }

    /// DIMACS max-flow text, 1-based node ids.
    pub fn write_dimacs(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "c quantum {:e} scale {:e}", self.quantum, self.scale)?;
        writeln!(out, "p max {} {}", self.node_count, self.arcs.len())?;
        writeln!(out, "n {} s", self.source + 1)?;
        writeln!(out, "n {} t", self.sink + 1)?;
        for a in &self.arcs {
            writeln!(out, "a {} {} {}", a.from + 1, a.to + 1, a.capacity)?;
        }
        Ok(())
    }
}

/// Result of a solve. Masks are indexed by graph node.
#[derive(Debug, Clone, PartialEq)]
pub struct CutResult {
    /// Minimum energy in the graph's units, up to quantization.
    pub value: f64,
    pub flow: i64,
    pub minimal: Vec<bool>,
    pub maximal: Vec<bool>,
}

impl CutResult {
    /// Writes both minimizers into copies of the bounded set `base`, which
    /// supplies every cell the graph does not own. Fails with
    /// `DomainOverflow` if either reaches the outer cell layer.
    pub fn sets(&self, graph: &InteractionGraph, base: &BinarySet) -> Result<(BinarySet, BinarySet)> {
        if base.complement_is_bounded() || base.mask().len() < graph.cells.len() {
            return Err(Error::InvalidArgument("base set must be bounded and cover the graph".into()));
        }
        let fill = |chi: &[bool]| -> Result<BinarySet> {
            let mut mask = base.mask().to_vec();
            for (k, &c) in graph.cells.iter().enumerate() {
                mask[c as usize] = chi[k];
            }
            BinarySet::new(*base.geometry(), mask, false)
        };
        Ok((fill(&self.minimal)?, fill(&self.maximal)?))
    }

    /// Both minimizers as sets on `geometry` when the graph owns every cell.
    pub fn full_sets(&self, graph: &InteractionGraph, geometry: &GridGeometry) -> Result<(BinarySet, BinarySet)> {
        self.sets(graph, &BinarySet::empty(*geometry))
    }
}

/// Integer network whose minimum cut is `scale` times the graph energy.
pub fn assemble(graph: &InteractionGraph, scale: f64) -> Result<FlowNetwork> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidArgument(format!("scale must be positive and finite, got {scale}")));
    }
    if let Some(&(i, j, w)) = graph.pairwise.iter().find(|t| !(t.2 >= 0.0)) {
        return Err(Error::NegativeWeight { i: i as usize, j: j as usize, weight: w });
    }
    if let Some(&(k, _, w)) = graph.terminal.iter().find(|t| !(t.2 >= 0.0)) {
        return Err(Error::NegativeWeight { i: k as usize, j: k as usize, weight: w });
    }
    for a in 0..graph.aux_count() {
        let (kind, cost, _) = graph.aux(a);
        let ok = match kind {
            Coverage::Any => cost >= 0.0,
            Coverage::All => cost <= 0.0,
        };
        if !ok {
            return Err(Error::InvalidArgument(format!("auxiliary {a} has a cost of the wrong sign ({cost})")));
        }
    }
    let n = graph.node_count;
    let aux = graph.aux_count();
    let source = n + aux;
    let sink = source + 1;
    let total = scale
        * (graph.unary.iter().map(|u| u.abs()).sum::<f64>()
            + graph.pairwise.iter().map(|t| t.2).sum::<f64>()
            + graph.terminal.iter().map(|t| t.2).sum::<f64>()
            + graph.aux_cost.iter().map(|c| c.abs()).sum::<f64>());
    if !total.is_finite() {
        return Err(Error::CapacityOverflow("energy terms are not finite".into()));
    }
    let quantum = if total > 0.0 { total * QUANTUM_RELATIVE } else { 1.0 };
    let units = |x: f64| (x * scale / quantum).round() as i64;

    let mut arcs = Vec::new();
    let mut offset_units: i64 = 0;
    let mut finite: i128 = 0;
    let mut push = |arcs: &mut Vec<Arc>, from: usize, to: usize, cap: i64| {
        if cap > 0 {
            finite += cap as i128;
            arcs.push(Arc { from: from as u32, to: to as u32, capacity: cap });
        }
    };
    // terminal terms are rounded one by one, like pairwise terms, then merged
    let mut node_units: Vec<i64> = graph.unary.iter().map(|&u| units(u)).collect();
    for &(k, held, w) in &graph.terminal {
        let c = units(w);
        if held {
            offset_units += c;
            node_units[k as usize] -= c;
        } else {
            node_units[k as usize] += c;
        }
    }
    for (v, &c) in node_units.iter().enumerate() {
        if c > 0 {
            push(&mut arcs, v, sink, c);
        } else if c < 0 {
            offset_units += c;
            push(&mut arcs, source, v, -c);
        }
    }
    for &(i, j, w) in &graph.pairwise {
        let c = units(w);
        push(&mut arcs, i as usize, j as usize, c);
        push(&mut arcs, j as usize, i as usize, c);
    }
    let mut implications = Vec::new();
    for a in 0..aux {
        let (kind, cost, members) = graph.aux(a);
        let node = n + a;
        match kind {
            Coverage::Any => {
                push(&mut arcs, node, sink, units(cost));
                implications.extend(members.iter().map(|&m| (m as usize, node)));
            }
            Coverage::All => {
                let c = units(-cost);
                offset_units -= c;
                push(&mut arcs, source, node, c);
                implications.extend(members.iter().map(|&m| (node, m as usize)));
            }
        }
    }
    if finite >= (i64::MAX / 4) as i128 {
        return Err(Error::CapacityOverflow(format!("finite capacities sum to {finite}")));
    }
    let infinite = finite as i64 + 1;
    arcs.extend(implications.into_iter().map(|(f, t)| Arc { from: f as u32, to: t as u32, capacity: infinite }));
    Ok(FlowNetwork {
        node_count: n + aux + 2,
        free_count: n,
        source,
        sink,
        arcs,
        infinite,
        quantum,
        scale,
        offset: graph.constant * scale + offset_units as f64 * quantum,
    })
}

/// Residual network in compressed adjacency form. `rev[e]` is the arc
/// opposite to `e`; antiparallel input arcs share one residual pair.
struct Residual {
    first: Vec<u32>,
    to: Vec<u32>,
    rev: Vec<u32>,
    cap: Vec<i64>,
}

impl Residual {
    fn new(net: &FlowNetwork) -> Self {
        // pair k joins arcs[k] with arcs[k + 1] when they are antiparallel
        let mut pairs: Vec<(u32, u32, i64, i64)> = Vec::with_capacity(net.arcs.len());
        let mut k = 0;
        while k < net.arcs.len() {
            let a = net.arcs[k];
            match net.arcs.get(k + 1) {
                Some(b) if b.from == a.to && b.to == a.from => {
                    pairs.push((a.from, a.to, a.capacity, b.capacity));
                    k += 2;
                }
                _ => {
                    pairs.push((a.from, a.to, a.capacity, 0));
                    k += 1;
                }
            }
        }
        let n = net.node_count;
        let mut first = vec![0u32; n + 1];
        for &(u, v, _, _) in &pairs {
            first[u as usize + 1] += 1;
            first[v as usize + 1] += 1;
        }
        for i in 0..n {
            first[i + 1] += first[i];
        }
        let m = first[n] as usize;
        let mut fill = first.clone();
        let (mut to, mut rev, mut cap) = (vec![0u32; m], vec![0u32; m], vec![0i64; m]);
        for &(u, v, cf, cb) in &pairs {
            let e = fill[u as usize];
            let f = fill[v as usize];
            fill[u as usize] += 1;
            fill[v as usize] += 1;
            (to[e as usize], rev[e as usize], cap[e as usize]) = (v, f, cf);
            (to[f as usize], rev[f as usize], cap[f as usize]) = (u, e, cb);
        }
        Residual { first, to, rev, cap }
    }

    fn arcs(&self, u: usize) -> std::ops::Range<usize> {
        self.first[u] as usize..self.first[u + 1] as usize
    }

    fn levels(&self, source: usize) -> Vec<i32> {
        let mut level = vec![-1; self.first.len() - 1];
        level[source] = 0;
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            for e in self.arcs(u) {
                let v = self.to[e] as usize;
                if self.cap[e] > 0 && level[v] < 0 {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        level
    }

    /// Dinic's algorithm with an explicit path stack.
    fn max_flow(&mut self, source: usize, sink: usize) -> i64 {
        let mut flow = 0i64;
        loop {
            let mut level = self.levels(source);
            if level[sink] < 0 {
                return flow;
            }
            let mut current: Vec<u32> = self.first[..self.first.len() - 1].to_vec();
            let mut path: Vec<u32> = Vec::new();
            let mut u = source;
            loop {
                if u == sink {
                    let push = path.iter().map(|&e| self.cap[e as usize]).min().unwrap_or(0);
                    for &e in &path {
                        self.cap[e as usize] -= push;
                        self.cap[self.rev[e as usize] as usize] += push;
                    }
                    flow += push;
                    let k = path.iter().position(|&e| self.cap[e as usize] == 0).unwrap_or(0);
                    path.truncate(k);
                    u = path.last().map_or(source, |&e| self.to[e as usize] as usize);
                    continue;
                }
                let end = self.first[u + 1];
                let mut e = current[u];
                while e < end {
                    let v = self.to[e as usize] as usize;
                    if self.cap[e as usize] > 0 && level[v] == level[u] + 1 {
                        break;
                    }
                    e += 1;
                }
                current[u] = e;
                if e < end {
                    path.push(e);
                    u = self.to[e as usize] as usize;
                    continue;
                }
                if u == source {
                    break;
                }
                level[u] = -1;
                let back = path.pop().expect("non-source node has an incoming path arc");
                u = self.to[self.rev[back as usize] as usize] as usize;
                current[u] += 1;
            }
        }
    }

    /// Nodes reachable from `start` along arcs with residual capacity,
    /// forwards or, with `reverse`, backwards.
    fn reach(&self, start: usize, reverse: bool) -> Vec<bool> {
        let mut seen = vec![false; self.first.len() - 1];
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            for e in self.arcs(u) {
                let v = self.to[e] as usize;
                // backwards: the arc v -> u is rev[e]
                let c = if reverse { self.cap[self.rev[e] as usize] } else { self.cap[e] };
                if c > 0 && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }
}

/// Maximum flow and the two extreme minimum cuts, source side = in the set.
pub fn solve(network: &FlowNetwork) -> Result<CutResult> {
    let (s, t) = (network.source, network.sink);
    if s == t || s >= network.node_count || t >= network.node_count {
        return Err(Error::InvalidArgument("source and sink must be distinct nodes".into()));
    }
    if let Some(a) = network.arcs.iter().find(|a| a.from == a.to || a.capacity < 0) {
        return Err(Error::InvalidArgument(format!("malformed arc {} -> {} ({})", a.from, a.to, a.capacity)));
    }
    let mut r = Residual::new(network);
    let flow = r.max_flow(s, t);
    let from_source = r.reach(s, false);
    let to_sink = r.reach(t, true);
    if from_source[t] {
        return Err(Error::Invariant("sink reachable after max flow".into()));
    }
    let cut: i128 = network
        .arcs
        .iter()
        .filter(|a| from_source[a.from as usize] && !from_source[a.to as usize])
        .map(|a| a.capacity as i128)
        .sum();
    if cut != flow as i128 {
        return Err(Error::Invariant(format!("flow {flow} differs from cut {cut}")));
    }
    if cut >= network.infinite as i128 {
        return Err(Error::Invariant("minimum cut crosses an implication arc".into()));
    }
    let n = network.free_count;
    Ok(CutResult {
        value: network.energy_of(flow),
        flow,
        minimal: from_source[..n].to_vec(),
        maximal: to_sink[..n].iter().map(|b| !b).collect(),
    })
}

/// `assemble` followed by `solve`.
pub fn minimize(graph: &InteractionGraph, scale: f64) -> Result<CutResult> {
    solve(&assemble(graph, scale)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_graph() {
        let g = InteractionGraph::new(0);
        let net = assemble(&g, 1.0).unwrap();
        assert_eq!(net.node_count, 2);
        let r = solve(&net).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.minimal.is_empty());
    }

    #[test]
    fn single_positive_unary() {
        let mut g = InteractionGraph::new(1);
        g.unary[0] = 0.7;
        let r = minimize(&g, 3.0).unwrap();
        assert!(r.value.abs() < 1e-12);
        assert_eq!(r.minimal, vec![false]);
        assert_eq!(r.maximal, vec![false]);
        let mut net = assemble(&g, 3.0).unwrap();
        // forcing the node in costs u·scale
        net.arcs.push(Arc { from: net.source as u32, to: 0, capacity: net.infinite });
        let forced = solve(&net).unwrap();
        assert!((forced.flow as f64 * net.quantum - 2.1).abs() < 1e-9);
    }

    #[test]
    fn zero_capacities_give_the_whole_lattice() {
        let g = InteractionGraph::new(5);
        let r = minimize(&g, 1.0).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.minimal, vec![false; 5]);
        assert_eq!(r.maximal, vec![true; 5]);
    }

    #[test]
    fn unique_optimum() {
        let mut g = InteractionGraph::new(3);
        g.unary = vec![-1.0, 0.5, -0.2];
        g.pairwise = vec![(0, 1, 0.1), (1, 2, 0.3)];
        let r = minimize(&g, 1.0).unwrap();
        assert_eq!(r.minimal, r.maximal);
        assert_eq!(r.minimal, vec![true, false, false]);
        assert!((r.value - (-1.0 + 0.1)).abs() < 1e-9);
    }

    #[test]
    fn auxiliaries() {
        // Any: pays 2 when either member is in; All: earns 1.5 when both are
        let mut g = InteractionGraph::new(2);
        g.unary = vec![-1.2, -1.2];
        g.push_aux(Coverage::Any, 2.0, [0, 1]);
        g.push_aux(Coverage::All, -1.5, [0, 1]);
        let r = minimize(&g, 1.0).unwrap();
        assert_eq!(r.minimal, vec![true, true]);
        assert!((r.value - (-2.4 + 2.0 - 1.5)).abs() < 1e-9);
        assert!((g.energy(&r.minimal) - r.value).abs() < 1e-9);
    }

    #[test]
    fn rejects_negative_pairs() {
        let mut g = InteractionGraph::new(2);
        g.pairwise.push((0, 1, -0.1));
        assert!(matches!(assemble(&g, 1.0), Err(Error::NegativeWeight { .. })));
        assert!(assemble(&InteractionGraph::new(1), 0.0).is_err());
    }

    #[test]
    fn dimacs_dump() {
        let mut g = InteractionGraph::new(2);
        g.unary = vec![1.0, -1.0];
        g.pairwise.push((0, 1, 0.5));
        let net = assemble(&g, 1.0).unwrap();
        let mut buf = Vec::new();
        net.write_dimacs(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("p max 4 4\n"));
        assert!(text.contains("n 3 s\nn 4 t\n"));
        assert_eq!(text.lines().filter(|l| l.starts_with("a ")).count(), 4);
    }
}
