#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use rand::Rng;
use simopt::space::{Neighborhood, SearchSpace, Solution};

/// Random axis configuration with at most `max_card` solutions.
pub fn random_space<R: Rng>(rng: &mut R, max_card: u64) -> SearchSpace {
    loop {
        let dims = rng.random_range(1..=4);
        let arities: Vec<usize> = (0..dims).map(|_| rng.random_range(1..=12)).collect();
        let card: u64 = arities.iter().map(|&a| a as u64).product();
        if card >= 2 && card <= max_card {
            return SearchSpace::from_arities(&arities).unwrap();
        }
    }
}

fn cyclic_step(a: usize, b: usize, arity: usize) -> bool {
    let d = a.abs_diff(b);
    d <= 1 || (arity > 2 && d == arity - 1)
}

fn reachable(space: &SearchSpace, kind: Neighborhood) -> u64 {
    let start = space.solution_at(0).unwrap();
    let mut seen = BTreeSet::from([0u64]);
    let mut queue = VecDeque::from([start]);
    while let Some(x) = queue.pop_front() {
        for y in space.neighborhood(kind, &x).unwrap() {
            if seen.insert(space.flat_index(&y).unwrap()) {
                queue.push_back(y);
            }
        }
    }
    seen.len() as u64
}

/// Symmetry, exclusion, shape and reachability of both neighborhoods over every solution.
pub fn check_neighborhoods(space: &SearchSpace) -> Result<(), String> {
    let arities: Vec<usize> = space.arities().collect();
    let all: Vec<Solution> = space.iter().collect();
    let mut n1 = Vec::with_capacity(all.len());
    let mut n2 = Vec::with_capacity(all.len());
    for x in &all {
        let a: BTreeSet<Solution> = space.neighborhood(Neighborhood::N1, x).unwrap().into_iter().collect();
        let b: BTreeSet<Solution> = space.neighborhood(Neighborhood::N2, x).unwrap().into_iter().collect();
        if a.contains(x) || b.contains(x) {
            return Err(format!("{x} is its own neighbor"));
        }
        if a.len() as u64 != space.cardinality() - 1 {
            return Err(format!("|N1({x})| = {}, expected {}", a.len(), space.cardinality() - 1));
        }
        let n2_size: usize = arities.iter().map(|&a| a.min(3)).product::<usize>() - 1;
        if b.len() != n2_size {
            return Err(format!("|N2({x})| = {}, expected {n2_size}", b.len()));
        }
        for y in &b {
            if !x.0.iter().zip(&y.0).zip(&arities).all(|((&p, &q), &n)| cyclic_step(p, q, n)) {
                return Err(format!("{y} in N2({x}) is more than one cyclic step away"));
            }
        }
        n1.push(a);
        n2.push(b);
    }
    for (i, x) in all.iter().enumerate() {
        for (name, sets) in [("N1", &n1), ("N2", &n2)] {
            for y in &sets[i] {
                let j = space.flat_index(y).unwrap() as usize;
                if !sets[j].contains(x) {
                    return Err(format!("{name} not symmetric: {y} in {name}({x}) but not the reverse"));
                }
            }
        }
    }
    for kind in [Neighborhood::N1, Neighborhood::N2] {
        if reachable(space, kind) != space.cardinality() {
            return Err(format!("{kind:?} does not connect the space"));
        }
    }
    Ok(())
}
