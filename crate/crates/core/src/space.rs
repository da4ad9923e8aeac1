//! Discrete Cartesian-product search spaces.
//!
//! A [`SearchSpace`] is an ordered list of finite, ordered axes. Solvers only
//! ever see index vectors ([`Solution`]); the level values attached to each
//! axis are carried along for reporting and for external workers.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("search space must have at least one axis")]
    NoAxes,
    #[error("axis `{0}` has no levels")]
    EmptyAxis(String),
    #[error("axis `{axis}` repeats level {level}")]
    DuplicateLevel { axis: String, level: String },
    #[error("axis name `{0}` is used twice")]
    DuplicateAxis(String),
    #[error("search space cardinality overflows u64")]
    TooLarge,
    #[error("solution has {got} coordinates, space has {expected} axes")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("coordinate {index} on axis `{axis}` is outside 0..{arity}")]
    InvalidSolution { axis: String, index: usize, arity: usize },
    #[error("flat index {index} is outside 0..{cardinality}")]
    IndexOutOfRange { index: u64, cardinality: u64 },
    #[error("neighborhood is empty (space has a single solution)")]
    EmptyNeighborhood,
}

/// One level of an axis. Solvers treat levels as opaque; only their position matters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Level {
    Int(i64),
    Real(f64),
    Symbol(String),
}

impl Level {
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Level::Int(v) => serde_json::Value::from(*v),
            Level::Real(v) => serde_json::Value::from(*v),
            Level::Symbol(s) => serde_json::Value::from(s.as_str()),
        }
    }

    fn same_as(&self, other: &Level) -> bool {
        match (self, other) {
            (Level::Int(a), Level::Int(b)) => a == b,
            (Level::Real(a), Level::Real(b)) => a.to_bits() == b.to_bits(),
            (Level::Int(a), Level::Real(b)) | (Level::Real(b), Level::Int(a)) => *a as f64 == *b,
            (Level::Symbol(a), Level::Symbol(b)) => a == b,
            _ => false,
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::Int(v) => write!(f, "{v}"),
            Level::Real(v) => write!(f, "{v}"),
            Level::Symbol(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub levels: Vec<Level>,
}

impl Axis {
    pub fn new(name: impl Into<String>, levels: Vec<Level>) -> Self {
        Self { name: name.into(), levels }
    }

    /// Axis with integer levels `0..arity`, handy for synthetic problems.
    pub fn indexed(name: impl Into<String>, arity: usize) -> Self {
        Self::new(name, (0..arity as i64).map(Level::Int).collect())
    }

    pub fn arity(&self) -> usize {
        self.levels.len()
    }
}

/// A point of the space as one level index per axis.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Solution(pub Vec<usize>);

impl Solution {
    pub fn new(indices: Vec<usize>) -> Self {
        Self(indices)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }
}

impl fmt::Display for Solution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// Neighborhood structures usable by the stochastic ruler search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Neighborhood {
    /// Every other solution of the space.
    N1,
    /// Product of per-axis {i-1, i, i+1} with wraparound, minus the point itself.
    N2,
}

/// Starting point of a local search: a fixed solution or a uniform draw.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Initial {
    #[default]
    #[serde(with = "random_word")]
    Random,
    Fixed(Solution),
}

mod random_word {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("random")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let word = String::deserialize(d)?;
        if word == "random" {
            Ok(())
        } else {
            Err(de::Error::custom(format!("expected \"random\" or an index vector, got \"{word}\"")))
        }
    }
}

impl Initial {
    pub fn resolve<R: Rng + ?Sized>(&self, space: &SearchSpace, rng: &mut R) -> Result<Solution, SpaceError> {
        match self {
            Initial::Random => Ok(space.random_solution(rng)),
            Initial::Fixed(x) => {
                space.validate(x)?;
                Ok(x.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchSpace {
    axes: Vec<Axis>,
    #[serde(skip)]
    cardinality: u64,
}

#[derive(Deserialize)]
struct RawSpace {
    axes: Vec<Axis>,
}

impl<'de> Deserialize<'de> for SearchSpace {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawSpace::deserialize(d)?;
        SearchSpace::new(raw.axes).map_err(serde::de::Error::custom)
    }
}

impl SearchSpace {
    pub fn new(axes: Vec<Axis>) -> Result<Self, SpaceError> {
        if axes.is_empty() {
            return Err(SpaceError::NoAxes);
        }
        let mut names = BTreeSet::new();
        let mut cardinality: u64 = 1;
        for axis in &axes {
            if !names.insert(axis.name.as_str()) {
                return Err(SpaceError::DuplicateAxis(axis.name.clone()));
            }
            if axis.levels.is_empty() {
                return Err(SpaceError::EmptyAxis(axis.name.clone()));
            }
            for (i, a) in axis.levels.iter().enumerate() {
                if axis.levels[..i].iter().any(|b| a.same_as(b)) {
                    return Err(SpaceError::DuplicateLevel { axis: axis.name.clone(), level: a.to_string() });
                }
            }
            cardinality = cardinality.checked_mul(axis.arity() as u64).ok_or(SpaceError::TooLarge)?;
        }
        Ok(Self { axes, cardinality })
    }

    /// Space of integer-indexed axes with the given arities, named `x0`, `x1`, ...
    pub fn from_arities(arities: &[usize]) -> Result<Self, SpaceError> {
        Self::new(arities.iter().enumerate().map(|(i, &a)| Axis::indexed(format!("x{i}"), a)).collect())
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn dimension(&self) -> usize {
        self.axes.len()
    }

    pub fn cardinality(&self) -> u64 {
        self.cardinality
    }

    pub fn arities(&self) -> impl Iterator<Item = usize> + '_ {
        self.axes.iter().map(Axis::arity)
    }

    pub fn validate(&self, x: &Solution) -> Result<(), SpaceError> {
        if x.0.len() != self.axes.len() {
            return Err(SpaceError::DimensionMismatch { expected: self.axes.len(), got: x.0.len() });
        }
        for (axis, &i) in self.axes.iter().zip(&x.0) {
            if i >= axis.arity() {
                return Err(SpaceError::InvalidSolution { axis: axis.name.clone(), index: i, arity: axis.arity() });
            }
        }
        Ok(())
    }

    /// Mixed-radix index of `x`, axis 0 most significant.
    pub fn flat_index(&self, x: &Solution) -> Result<u64, SpaceError> {
        self.validate(x)?;
        Ok(self.axes.iter().zip(&x.0).fold(0u64, |acc, (axis, &i)| acc * axis.arity() as u64 + i as u64))
    }

    pub fn solution_at(&self, index: u64) -> Result<Solution, SpaceError> {
        if index >= self.cardinality {
            return Err(SpaceError::IndexOutOfRange { index, cardinality: self.cardinality });
        }
        let mut rest = index;
        let mut coords = vec![0usize; self.axes.len()];
        for (slot, axis) in coords.iter_mut().zip(&self.axes).rev() {
            let a = axis.arity() as u64;
            *slot = (rest % a) as usize;
            rest /= a;
        }
        Ok(Solution(coords))
    }

    pub fn iter(&self) -> impl Iterator<Item = Solution> + '_ {
        (0..self.cardinality).map(move |i| self.solution_at(i).expect("index within cardinality"))
    }

    /// Level values of `x`, keyed by axis name in axis order.
    pub fn assignment(&self, x: &Solution) -> Result<serde_json::Map<String, serde_json::Value>, SpaceError> {
        self.validate(x)?;
        Ok(self.axes.iter().zip(&x.0).map(|(axis, &i)| (axis.name.clone(), axis.levels[i].to_json())).collect())
    }

    /// N1: every solution except `x`, in flat-index order.
    pub fn neighborhood_n1(&self, x: &Solution) -> Result<Vec<Solution>, SpaceError> {
        let own = self.flat_index(x)?;
        if self.cardinality < 2 {
            return Err(SpaceError::EmptyNeighborhood);
        }
        Ok((0..self.cardinality)
            .filter(|&i| i != own)
            .map(|i| self.solution_at(i).expect("index within cardinality"))
            .collect())
    }

    /// Per-axis N2 candidates {i-1, i, i+1} with wraparound at both ends, deduplicated.
    pub fn axis_wrap_neighbors(arity: usize, index: usize) -> Vec<usize> {
        let mut set = BTreeSet::new();
        set.insert(index);
        if arity > 1 {
            set.insert((index + arity - 1) % arity);
            set.insert((index + 1) % arity);
        }
        set.into_iter().collect()
    }

    /// N2: Cartesian product of the per-axis wraparound neighborhoods minus `x`,
    /// deduplicated and in flat-index order. Empty only when the space has one point.
    pub fn neighborhood_n2(&self, x: &Solution) -> Result<Vec<Solution>, SpaceError> {
        self.validate(x)?;
        let per_axis: Vec<Vec<usize>> =
            self.axes.iter().zip(&x.0).map(|(axis, &i)| Self::axis_wrap_neighbors(axis.arity(), i)).collect();
        let mut out = Vec::new();
        let mut cursor = vec![0usize; per_axis.len()];
        loop {
            let candidate: Vec<usize> = cursor.iter().zip(&per_axis).map(|(&c, opts)| opts[c]).collect();
            if candidate != x.0 {
                out.push(Solution(candidate));
            }
            // odometer increment, last axis fastest so output follows flat order
            let mut d = per_axis.len();
            loop {
                if d == 0 {
                    return Ok(out);
                }
                d -= 1;
                cursor[d] += 1;
                if cursor[d] < per_axis[d].len() {
                    break;
                }
                cursor[d] = 0;
            }
        }
    }

    pub fn neighborhood(&self, kind: Neighborhood, x: &Solution) -> Result<Vec<Solution>, SpaceError> {
        match kind {
            Neighborhood::N1 => self.neighborhood_n1(x),
            Neighborhood::N2 => self.neighborhood_n2(x),
        }
    }

    /// Solutions differing from `x` by exactly one step on exactly one axis, no wraparound.
    /// This is the adjacency used to define discrete local optimality.
    pub fn adjacent(&self, x: &Solution) -> Result<Vec<Solution>, SpaceError> {
        self.validate(x)?;
        let mut out = Vec::with_capacity(2 * self.dimension());
        for (d, axis) in self.axes.iter().enumerate() {
            let i = x.0[d];
            if i > 0 {
                let mut y = x.clone();
                y.0[d] = i - 1;
                out.push(y);
            }
            if i + 1 < axis.arity() {
                let mut y = x.clone();
                y.0[d] = i + 1;
                out.push(y);
            }
        }
        Ok(out)
    }

    /// Draws a neighbor of `x` uniformly from `N(x)`.
    ///
    /// N1 is sampled without materializing the neighborhood, so it works on
    /// spaces far too large to enumerate.
    pub fn sample_neighbor<R: Rng + ?Sized>(
        &self,
        kind: Neighborhood,
        x: &Solution,
        rng: &mut R,
    ) -> Result<Solution, SpaceError> {
        match kind {
            Neighborhood::N1 => {
                let own = self.flat_index(x)?;
                if self.cardinality < 2 {
                    return Err(SpaceError::EmptyNeighborhood);
                }
                let mut r = rng.random_range(0..self.cardinality - 1);
                if r >= own {
                    r += 1;
                }
                self.solution_at(r)
            }
            Neighborhood::N2 => {
                let mut nbrs = self.neighborhood_n2(x)?;
                if nbrs.is_empty() {
                    return Err(SpaceError::EmptyNeighborhood);
                }
                let pick = rng.random_range(0..nbrs.len());
                Ok(nbrs.swap_remove(pick))
            }
        }
    }

    pub fn random_solution<R: Rng + ?Sized>(&self, rng: &mut R) -> Solution {
        self.solution_at(rng.random_range(0..self.cardinality)).expect("index within cardinality")
    }
}
