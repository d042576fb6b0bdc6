//! Fixtures shared by the benchmarks.

use mfctrl::{Density, Graph};

pub fn chain4() -> (Graph, Density, Density) {
    (
        Graph::chain(4).unwrap(),
        Density::new(vec![0.7, 0.1, 0.1, 0.1]).unwrap(),
        Density::new(vec![0.1, 0.1, 0.1, 0.7]).unwrap(),
    )
}

pub fn grid9() -> (Graph, Density, Density) {
    (
        Graph::grid(3, 3).unwrap(),
        Density::new(vec![0.6, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05]).unwrap(),
        Density::new(vec![0.04, 0.04, 0.04, 0.25, 0.25, 0.26, 0.04, 0.04, 0.04]).unwrap(),
    )
}
