use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ordered, Graph};
use crate::error::{Error, Result};
use crate::seeds;

/// Attempts allowed to `generate_scenario` before it gives up.
pub const MAX_ATTEMPTS: usize = 1000;

/// Number of disconnected scale-free blocks forming G⁽¹⁾ for the random and
/// scale-free structures.
const BLOCKS: usize = 4;

/// Preferential-attachment exponent for the star structure, by edges per step.
/// Exponents above ~1.4 condense almost every edge onto a single vertex at
/// p = 200, which makes two similar hubs unreachable.
fn star_power(m: usize) -> f64 {
    if m <= 1 {
        1.3
    } else {
        1.25
    }
}

/// Grows a graph by preferential attachment.
///
/// Vertex 0 starts alone; vertex `t` then attaches to `min(m, t)` distinct
/// earlier vertices drawn without replacement with weight `deg^power`
/// (degree-0 vertices weigh 1). Degrees are frozen while vertex `t` picks its
/// targets, so the result has `1 + (m ∧ ·)` edges per step: `p − 1` for
/// `m = 1`, `2p − 3` for `m = 2`.
pub fn barabasi_albert(p: usize, m: usize, power: f64, seed: u64) -> Result<Graph> {
    barabasi_albert_with_rng(p, m, power, &mut seeds::rng(seed))
}

pub fn barabasi_albert_with_rng<R: Rng + ?Sized>(
    p: usize,
    m: usize,
    power: f64,
    rng: &mut R,
) -> Result<Graph> {
    if p < 2 {
        return Err(Error::arg(format!("need at least 2 vertices, got {p}")));
    }
    if m == 0 || m >= p {
        return Err(Error::arg(format!("edges per step m = {m} must be in 1..{p}")));
    }
    if !power.is_finite() || power < 0.0 {
        return Err(Error::arg(format!("invalid attachment power {power}")));
    }
    let mut g = Graph::empty(p);
    let mut degree = vec![0usize; p];
    let mut weight = vec![0.0f64; p];
    let mut chosen = Vec::with_capacity(m);
    for t in 1..p {
        for v in 0..t {
            weight[v] = if degree[v] == 0 {
                1.0
            } else {
                (degree[v] as f64).powf(power)
            };
        }
        chosen.clear();
        for _ in 0..m.min(t) {
            let total: f64 = weight[..t].iter().sum();
            let mut u = rng.gen::<f64>() * total;
            let mut pick = t - 1;
            for (v, &w) in weight[..t].iter().enumerate() {
                if w > 0.0 && u < w {
                    pick = v;
                    break;
                }
                u -= w;
            }
            // guard against float round-off landing past the last positive weight
            if weight[pick] == 0.0 {
                pick = (0..t).rev().find(|&v| weight[v] > 0.0).unwrap();
            }
            weight[pick] = 0.0;
            chosen.push(pick);
        }
        for &v in &chosen {
            g.edges.insert(ordered(v, t));
            degree[v] += 1;
            degree[t] += 1;
        }
    }
    Ok(g)
}

/// Places the blocks side by side, offsetting vertex indices.
pub fn disjoint_union(blocks: &[Graph]) -> Graph {
    let p = blocks.iter().map(Graph::p).sum();
    let mut g = Graph::empty(p);
    let mut offset = 0;
    for b in blocks {
        g.edges
            .extend(b.edges().map(|(i, j)| (i + offset, j + offset)));
        offset += b.p();
    }
    g
}

/// `niter` attempted double-edge swaps `(a,b),(c,d) → (a,c),(b,d)`.
///
/// Each attempt picks two distinct edges uniformly and a random orientation for
/// each; swaps that would create a self-loop or a duplicate edge are rejected
/// and still count as an iteration. The degree sequence never changes.
pub fn rewire_preserving_degrees(g: &Graph, niter: usize, seed: u64) -> Graph {
    rewire_preserving_degrees_with_rng(g, niter, &mut seeds::rng(seed))
}

pub fn rewire_preserving_degrees_with_rng<R: Rng + ?Sized>(
    g: &Graph,
    niter: usize,
    rng: &mut R,
) -> Graph {
    let mut out = g.clone();
    let mut list: Vec<(usize, usize)> = g.edges().collect();
    if list.len() < 2 {
        return out;
    }
    for _ in 0..niter {
        let e1 = rng.gen_range(0..list.len());
        let mut e2 = rng.gen_range(0..list.len() - 1);
        if e2 >= e1 {
            e2 += 1;
        }
        let (mut a, mut b) = list[e1];
        if rng.gen::<bool>() {
            std::mem::swap(&mut a, &mut b);
        }
        let (mut c, mut d) = list[e2];
        if rng.gen::<bool>() {
            std::mem::swap(&mut c, &mut d);
        }
        if a == c || b == d || out.has_edge(a, c) || out.has_edge(b, d) {
            continue;
        }
        out.remove_edge(a, b);
        out.remove_edge(c, d);
        out.edges.insert(ordered(a, c));
        out.edges.insert(ordered(b, d));
        list[e1] = ordered(a, c);
        list[e2] = ordered(b, d);
    }
    out
}

/// Deletes every edge with an endpoint in one of the vertex sets.
pub fn remove_blocks(g: &Graph, blocks: &[Vec<usize>]) -> Graph {
    let mut removed = vec![false; g.p()];
    for &v in blocks.iter().flatten() {
        if v < g.p() {
            removed[v] = true;
        }
    }
    Graph {
        p: g.p(),
        edges: g
            .edges()
            .filter(|&(i, j)| !removed[i] && !removed[j])
            .collect(),
    }
}

/// The `k` highest-degree vertices, ties to the lower index.
pub fn top_hubs(g: &Graph, k: usize) -> Vec<usize> {
    let deg = g.degrees();
    let mut order: Vec<usize> = (0..g.p()).collect();
    order.sort_by(|&a, &b| deg[b].cmp(&deg[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// Removes all edges incident to the `hub_count` highest-degree vertices.
pub fn remove_hub_edges(g: &Graph, hub_count: usize) -> Graph {
    let hubs = top_hubs(g, hub_count);
    Graph {
        p: g.p(),
        edges: g
            .edges()
            .filter(|&(i, j)| !hubs.contains(&i) && !hubs.contains(&j))
            .collect(),
    }
}

/// Thins a connected graph while keeping it in one piece.
///
/// Vertices are visited in descending order of their starting degree (ties to
/// the lower index). Each vertex gives up just under half of its starting
/// edges, `⌊(deg − 1)/2⌋`, counting edges already removed at earlier vertices,
/// so it always keeps the majority. Incident edges are tried in ascending
/// neighbour order, and a removal is skipped if it would raise the number of
/// connected components that contain an edge.
pub fn halve_hub_edges(g: &Graph) -> Graph {
    let mut out = g.clone();
    let start_deg = g.degrees();
    let mut order: Vec<usize> = (0..g.p()).filter(|&v| start_deg[v] > 0).collect();
    order.sort_by(|&a, &b| start_deg[b].cmp(&start_deg[a]).then(a.cmp(&b)));
    let mut components = out.nonsingleton_components();
    for v in order {
        let mut neighbours: Vec<usize> = out.adjacency()[v].clone();
        neighbours.sort_unstable();
        let already = start_deg[v] - neighbours.len();
        let quota = ((start_deg[v] - 1) / 2).saturating_sub(already);
        let mut removed = 0;
        for w in neighbours {
            if removed == quota {
                break;
            }
            out.remove_edge(v, w);
            let after = out.nonsingleton_components();
            if after > components {
                out.edges.insert(ordered(v, w));
            } else {
                components = after;
                removed += 1;
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Structure {
    Random,
    #[serde(alias = "scale-free")]
    Scalefree,
    Star,
}

impl Structure {
    pub const ALL: [Structure; 3] = [Structure::Random, Structure::Scalefree, Structure::Star];

    pub fn as_str(self) -> &'static str {
        match self {
            Structure::Random => "random",
            Structure::Scalefree => "scalefree",
            Structure::Star => "star",
        }
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Structure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(Structure::Random),
            "scalefree" | "scale-free" => Ok(Structure::Scalefree),
            "star" | "hub" => Ok(Structure::Star),
            other => Err(Error::arg(format!("unknown structure {other:?}"))),
        }
    }
}

fn default_p() -> usize {
    200
}

fn default_tolerance() -> f64 {
    0.10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub structure: Structure,
    /// Approximate |G⁽¹⁾|; selects edges-per-step `m = round(target_g1 / p)`.
    pub target_g1: usize,
    /// Approximate |G^diff|; generation retries until within `size_tolerance`.
    pub target_diff: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tolerance")]
    pub size_tolerance: f64,
    #[serde(default = "default_p")]
    pub p: usize,
}

impl ScenarioSpec {
    pub fn new(structure: Structure, target_g1: usize, target_diff: usize, seed: u64) -> Self {
        ScenarioSpec {
            structure,
            target_g1,
            target_diff,
            seed,
            size_tolerance: default_tolerance(),
            p: default_p(),
        }
    }

    /// Spec for one of the twelve published settings, addressed by its nominal
    /// sizes (|G⁽¹⁾| ∈ {200, 400}, |G^diff| ∈ {50, 100}). The differential
    /// target is the exact published |G^diff| for that cell.
    pub fn published(structure: Structure, g1: usize, diff: usize, seed: u64) -> Result<Self> {
        let exact = published_sizes(structure, g1, diff)
            .ok_or_else(|| Error::arg(format!("no published setting {structure} {diff}-{g1}")))?;
        Ok(ScenarioSpec::new(structure, g1, exact.2, seed))
    }

    /// Stable identifier, e.g. `random-50-200`.
    pub fn id(&self) -> String {
        format!("{}-{}-{}", self.structure, self.target_diff, self.target_g1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_g1 == 0 || self.target_diff == 0 {
            return Err(Error::arg("scenario targets must be positive"));
        }
        if !(self.size_tolerance > 0.0 && self.size_tolerance < 0.5) {
            return Err(Error::arg(format!(
                "size_tolerance {} outside (0, 0.5)",
                self.size_tolerance
            )));
        }
        if self.p < 2 * BLOCKS {
            return Err(Error::arg(format!("p = {} is too small", self.p)));
        }
        Ok(())
    }

    fn edges_per_step(&self) -> usize {
        ((self.target_g1 as f64 / self.p as f64).round() as usize).max(1)
    }

    fn within_tolerance(&self, size: usize) -> bool {
        (size as f64 - self.target_diff as f64).abs() <= self.size_tolerance * self.target_diff as f64
    }
}

/// Published `(|G⁽¹⁾|, |G⁽²⁾|, |G^diff|)` for a nominal setting.
pub fn published_sizes(structure: Structure, g1: usize, diff: usize) -> Option<(usize, usize, usize)> {
    use Structure::*;
    Some(match (structure, g1, diff) {
        (Random, 200, 50) => (196, 196, 50),
        (Random, 200, 100) => (196, 196, 98),
        (Scalefree, 200, 50) => (196, 147, 49),
        (Scalefree, 200, 100) => (196, 98, 98),
        (Star, 200, 50) => (199, 143, 56),
        (Star, 200, 100) => (199, 103, 96),
        (Random, 400, 50) => (388, 388, 50),
        (Random, 400, 100) => (388, 388, 100),
        (Scalefree, 400, 50) => (388, 333, 55),
        (Scalefree, 400, 100) => (388, 291, 97),
        (Star, 400, 50) => (397, 342, 55),
        (Star, 400, 100) => (397, 292, 106),
        _ => return None,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphTriple {
    pub g1: Graph,
    pub g2: Graph,
    pub gdiff: Graph,
    /// Number of generation attempts, including the accepted one.
    pub attempts: usize,
}

impl GraphTriple {
    fn new(g1: Graph, g2: Graph, attempts: usize) -> Result<Self> {
        let gdiff = g1.symmetric_difference(&g2)?;
        Ok(GraphTriple {
            g1,
            g2,
            gdiff,
            attempts,
        })
    }
}

fn block_sizes(p: usize) -> Vec<usize> {
    let base = p / BLOCKS;
    let mut sizes = vec![base; BLOCKS];
    sizes[BLOCKS - 1] += p - base * BLOCKS;
    sizes
}

fn block_forest<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<(Graph, Vec<Vec<usize>>)> {
    let m = spec.edges_per_step();
    let mut blocks = Vec::with_capacity(BLOCKS);
    let mut members = Vec::with_capacity(BLOCKS);
    let mut offset = 0;
    for size in block_sizes(spec.p) {
        blocks.push(barabasi_albert_with_rng(size, m, 1.0, rng)?);
        members.push((offset..offset + size).collect());
        offset += size;
    }
    Ok((disjoint_union(&blocks), members))
}

/// Builds one attempt; `Err(reason)` means the draw missed a constraint.
fn attempt<R: Rng + ?Sized>(
    spec: &ScenarioSpec,
    rng: &mut R,
) -> Result<std::result::Result<(Graph, Graph), String>> {
    let (g1, g2) = match spec.structure {
        Structure::Random => {
            let (g1, _) = block_forest(spec, rng)?;
            // each accepted swap changes four edges
            let niter = spec.target_diff.div_ceil(4);
            let g2 = rewire_preserving_degrees_with_rng(&g1, niter, rng);
            (g1, g2)
        }
        Structure::Scalefree => {
            let (g1, members) = block_forest(spec, rng)?;
            let block_edges = remove_blocks(&g1, &members[1..]).edge_count();
            let ratio = spec.target_diff as f64 / block_edges.max(1) as f64;
            if ratio >= 0.75 {
                let k = (ratio.round() as usize).clamp(1, BLOCKS);
                (g1.clone(), remove_blocks(&g1, &members[..k]))
            } else {
                let first = remove_blocks(&g1, &members[1..]);
                let kept = halve_hub_edges(&first);
                (g1.clone(), g1.difference(&kept))
            }
        }
        Structure::Star => {
            let m = spec.edges_per_step();
            let g1 = barabasi_albert_with_rng(spec.p, m, star_power(m), rng)?;
            let deg = g1.degrees();
            let hubs = top_hubs(&g1, 2);
            let (d1, d2) = (deg[hubs[0]], deg[hubs[1]]);
            if (d2 as f64) < 0.8 * d1 as f64 {
                return Ok(Err(format!(
                    "top hub degrees {d1} and {d2} are not within 20% of each other"
                )));
            }
            let hub_count = ((spec.target_diff as f64 / 50.0).round() as usize).clamp(1, 2);
            (g1.clone(), remove_hub_edges(&g1, hub_count))
        }
    };
    let size = g1.symmetric_difference(&g2)?.edge_count();
    if !spec.within_tolerance(size) {
        return Ok(Err(format!(
            "|G^diff| = {size} not within {:.0}% of target {}",
            100.0 * spec.size_tolerance,
            spec.target_diff
        )));
    }
    Ok(Ok((g1, g2)))
}

/// Generates (G⁽¹⁾, G⁽²⁾, G^diff) for a scenario, redrawing with fresh
/// sub-seeds until the size (and, for stars, hub-balance) constraints hold.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<GraphTriple> {
    spec.validate()?;
    let stream = seeds::mix(&[
        spec.seed,
        seeds::label_hash(spec.structure.as_str()),
        spec.target_g1 as u64,
        spec.target_diff as u64,
        spec.p as u64,
    ]);
    let mut last = String::new();
    for k in 1..=MAX_ATTEMPTS {
        let mut rng = seeds::rng(seeds::mix(&[stream, k as u64]));
        match attempt(spec, &mut rng)? {
            Ok((g1, g2)) => return GraphTriple::new(g1, g2, k),
            Err(reason) => last = reason,
        }
    }
    Err(Error::GenerationFailed {
        attempts: MAX_ATTEMPTS,
        constraint: last,
    })
}
