//! Undirected simple graphs and the generators for paired simulation graphs.
//!
//! Vertices are 0-based internally. The text edge-list format is 1-based:
//!
//! ```text
//! p=200
//! 1 2
//! 1 7
//! ```

mod generate;

use std::collections::BTreeSet;
use std::fmt::Write as _;

pub use generate::{
    barabasi_albert, barabasi_albert_with_rng, disjoint_union, generate_scenario,
    halve_hub_edges, remove_blocks, remove_hub_edges, rewire_preserving_degrees,
    rewire_preserving_degrees_with_rng, published_sizes, top_hubs, GraphTriple, ScenarioSpec, Structure,
};

use crate::error::{Error, Result};

/// Simple undirected graph on `p` vertices. Edges are stored as `(i, j)` with `i < j`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Graph {
    p: usize,
    edges: BTreeSet<(usize, usize)>,
}

#[inline]
pub(crate) fn ordered(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

impl Graph {
    pub fn empty(p: usize) -> Self {
        Graph {
            p,
            edges: BTreeSet::new(),
        }
    }

    pub fn from_edges(p: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = Graph::empty(p);
        for (i, j) in edges {
            if !g.add_edge(i, j)? {
                return Err(Error::arg(format!("duplicate edge ({i}, {j})")));
            }
        }
        Ok(g)
    }

    /// Star `K₁,k` on `p` vertices centred on `hub`, leaves `hub+1..`.
    pub fn star(p: usize, hub: usize, leaves: usize) -> Self {
        let mut g = Graph::empty(p);
        for k in 1..=leaves {
            g.edges.insert(ordered(hub, (hub + k) % p));
        }
        g
    }

    pub fn complete(p: usize) -> Self {
        let mut g = Graph::empty(p);
        for i in 0..p {
            for j in (i + 1)..p {
                g.edges.insert((i, j));
            }
        }
        g
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Inserts `{i, j}`; returns `false` if it was already present.
    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<bool> {
        if i == j {
            return Err(Error::arg(format!("self-loop at vertex {i}")));
        }
        if i >= self.p || j >= self.p {
            return Err(Error::arg(format!(
                "edge ({i}, {j}) out of range for p = {}",
                self.p
            )));
        }
        Ok(self.edges.insert(ordered(i, j)))
    }

    pub fn remove_edge(&mut self, i: usize, j: usize) -> bool {
        self.edges.remove(&ordered(i, j))
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&ordered(i, j))
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_set(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.p];
        for &(i, j) in &self.edges {
            d[i] += 1;
            d[j] += 1;
        }
        d
    }

    pub fn max_degree(&self) -> usize {
        self.degrees().into_iter().max().unwrap_or(0)
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.p];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    pub fn is_subgraph_of(&self, other: &Graph) -> bool {
        self.p == other.p && self.edges.is_subset(&other.edges)
    }

    /// Connected components with at least one edge.
    pub fn nonsingleton_components(&self) -> usize {
        let adj = self.adjacency();
        let mut seen = vec![false; self.p];
        let mut count = 0;
        for start in 0..self.p {
            if seen[start] || adj[start].is_empty() {
                continue;
            }
            count += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(v) = stack.pop() {
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
        }
        count
    }

    pub fn isolated_vertices(&self) -> usize {
        self.degrees().iter().filter(|&&d| d == 0).count()
    }

    /// Edge set `(E₁ ∪ E₂) ∖ (E₁ ∩ E₂)`.
    pub fn symmetric_difference(&self, other: &Graph) -> Result<Graph> {
        if self.p != other.p {
            return Err(Error::arg(format!(
                "vertex counts differ: {} vs {}",
                self.p, other.p
            )));
        }
        Ok(Graph {
            p: self.p,
            edges: self
                .edges
                .symmetric_difference(&other.edges)
                .copied()
                .collect(),
        })
    }

    pub fn difference(&self, other: &Graph) -> Graph {
        Graph {
            p: self.p,
            edges: self.edges.difference(&other.edges).copied().collect(),
        }
    }

    pub fn permuted(&self, perm: &[usize]) -> Graph {
        Graph {
            p: self.p,
            edges: self
                .edges
                .iter()
                .map(|&(i, j)| ordered(perm[i], perm[j]))
                .collect(),
        }
    }

    /// Serializes to the 1-based `p=<count>` edge-list format.
    pub fn to_edge_list(&self) -> String {
        let mut s = String::with_capacity(16 + 10 * self.edges.len());
        let _ = writeln!(s, "p={}", self.p);
        for &(i, j) in &self.edges {
            let _ = writeln!(s, "{} {}", i + 1, j + 1);
        }
        s
    }

    /// Parses the edge-list format. Blank lines and `#` comments are skipped.
    pub fn parse_edge_list(text: &str) -> Result<Graph> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "missing p=<count> header".into(),
        })?;
        let p: usize = header
            .strip_prefix("p=")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::Parse {
                line: hline,
                message: format!("expected p=<count>, found {header:?}"),
            })?;
        if p == 0 {
            return Err(Error::Parse {
                line: hline,
                message: "vertex count must be positive".into(),
            });
        }
        let mut g = Graph::empty(p);
        for (line, l) in lines {
            let mut parts = l.split_whitespace();
            let mut endpoint = || -> Result<usize> {
                let tok = parts.next().ok_or_else(|| Error::Parse {
                    line,
                    message: "expected two vertex indices".into(),
                })?;
                let v: usize = tok.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("invalid vertex index {tok:?}"),
                })?;
                if v == 0 || v > p {
                    return Err(Error::Parse {
                        line,
                        message: format!("vertex {v} outside 1..={p}"),
                    });
                }
                Ok(v - 1)
            };
            let i = endpoint()?;
            let j = endpoint()?;
            if parts.next().is_some() {
                return Err(Error::Parse {
                    line,
                    message: "trailing tokens after edge".into(),
                });
            }
            match g.add_edge(i, j) {
                Ok(true) => {}
                Ok(false) => {
                    return Err(Error::Parse {
                        line,
                        message: format!("duplicate edge {} {}", i + 1, j + 1),
                    })
                }
                Err(_) => {
                    return Err(Error::Parse {
                        line,
                        message: format!("self-loop at vertex {}", i + 1),
                    })
                }
            }
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_difference_cases() {
        let g = Graph::from_edges(4, [(0, 1), (1, 2)]).unwrap();
        assert!(g.symmetric_difference(&g).unwrap().is_empty());
        let h = Graph::from_edges(4, [(2, 3)]).unwrap();
        let d = g.symmetric_difference(&h).unwrap();
        assert_eq!(d.edge_count(), 3);
        assert!(g.symmetric_difference(&Graph::empty(5)).is_err());
    }

    #[test]
    fn rejects_self_loops_and_duplicates() {
        assert!(Graph::from_edges(3, [(1, 1)]).is_err());
        assert!(Graph::from_edges(3, [(0, 1), (1, 0)]).is_err());
        assert!(Graph::from_edges(3, [(0, 3)]).is_err());
    }

    #[test]
    fn edge_list_round_trip() {
        let g = Graph::from_edges(5, [(0, 4), (1, 2), (2, 3)]).unwrap();
        let text = g.to_edge_list();
        assert!(text.starts_with("p=5\n1 5\n"));
        assert_eq!(Graph::parse_edge_list(&text).unwrap(), g);
    }

    #[test]
    fn edge_list_errors_carry_line_numbers() {
        let err = Graph::parse_edge_list("p=3\n1 2\n2 2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = Graph::parse_edge_list("p=3\n1 4\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(Graph::parse_edge_list("").is_err());
        assert!(Graph::parse_edge_list("q=3").is_err());
        assert!(Graph::parse_edge_list("p=3\n1 2\n2 1\n").is_err());
    }

    #[test]
    fn components_ignore_isolated_vertices() {
        let g = Graph::from_edges(6, [(0, 1), (1, 2), (3, 4)]).unwrap();
        assert_eq!(g.nonsingleton_components(), 2);
        assert_eq!(g.isolated_vertices(), 1);
    }
}
