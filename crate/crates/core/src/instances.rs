//! Seeded random instances: graphs, densities and schedules.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dynamics::{ControlSchedule, Density};
use crate::graph::{Graph, Vertex};

fn shuffled(rng: &mut impl Rng, m: usize) -> Vec<Vertex> {
    let mut order: Vec<Vertex> = (0..m).collect();
    order.shuffle(rng);
    order
}

fn build(m: usize, mut edges: Vec<(Vertex, Vertex)>) -> Graph {
    edges.sort_unstable();
    edges.dedup();
    Graph::new(m, &edges).expect("generated edges are valid")
}

/// Random Hamiltonian cycle plus each remaining ordered pair with
/// probability `p`.
pub fn strongly_connected(rng: &mut impl Rng, m: usize, p: f64) -> Graph {
    let order = shuffled(rng, m);
    let mut edges: Vec<_> = (0..m).map(|i| (order[i], order[(i + 1) % m])).collect();
    for s in 0..m {
        for t in 0..m {
            if s != t && rng.random_bool(p) {
                edges.push((s, t));
            }
        }
    }
    build(m, edges)
}

/// Random spanning tree plus each remaining unordered pair with probability
/// `p`, every link in both directions.
pub fn bidirected(rng: &mut impl Rng, m: usize, p: f64) -> Graph {
    let order = shuffled(rng, m);
    let mut edges = Vec::new();
    for i in 1..m {
        let parent = order[rng.random_range(0..i)];
        edges.push((parent, order[i]));
        edges.push((order[i], parent));
    }
    for s in 0..m {
        for t in s + 1..m {
            if rng.random_bool(p) {
                edges.push((s, t));
                edges.push((t, s));
            }
        }
    }
    build(m, edges)
}

/// Vertices split into a nonempty upstream and downstream block; edges go
/// freely inside each block and only downstream across it.
pub fn not_strongly_connected(rng: &mut impl Rng, m: usize, p: f64) -> Graph {
    assert!(m >= 2, "need at least two vertices");
    let order = shuffled(rng, m);
    let cut = rng.random_range(1..m);
    let upstream = &order[..cut];
    let mut edges = Vec::new();
    for s in 0..m {
        for t in 0..m {
            if s == t {
                continue;
            }
            let s_up = upstream.contains(&s);
            let t_up = upstream.contains(&t);
            if (!s_up && t_up) || !rng.random_bool(p) {
                continue;
            }
            edges.push((s, t));
        }
    }
    if edges.is_empty() {
        edges.push((order[0], order[m - 1]));
    }
    build(m, edges)
}

/// Uniform on the simplex, mixed so that every entry is at least `floor`.
pub fn interior_density(rng: &mut impl Rng, m: usize, floor: f64) -> Density {
    assert!(floor * m as f64 <= 1.0, "floor too large for {m} vertices");
    let raw: Vec<f64> = (0..m).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    let free = 1.0 - floor * m as f64;
    Density::new(raw.iter().map(|r| floor + free * r / total).collect()).expect("valid density")
}

/// Piecewise-constant schedule with `pieces` equal intervals on `[0, horizon]`
/// and rates uniform in `[0, max_rate)`.
pub fn schedule(rng: &mut impl Rng, edges: usize, pieces: usize, horizon: f64, max_rate: f64) -> ControlSchedule {
    let breakpoints = (0..=pieces).map(|k| horizon * k as f64 / pieces as f64).collect();
    let rates = (0..pieces)
        .map(|_| (0..edges).map(|_| max_rate * rng.random::<f64>()).collect())
        .collect();
    ControlSchedule::new(breakpoints, rates).expect("valid schedule")
}
