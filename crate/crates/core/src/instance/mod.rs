//! Euclidean TSP and pickup-and-delivery instances.
//!
//! Coordinates live in the unit square. Pickup-and-delivery instances use a
//! fixed node layout: the depot is node `0`, pickups are `1..=n` and the
//! delivery paired with pickup `i` is node `i + n`.

mod io;
mod oracle;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};

pub use io::{
    read_dataset, read_instance, read_results, write_dataset, write_instance, write_results,
    ResultRow, RESULTS_HEADER,
};
pub use oracle::{
    brute_force_pdp_optimal, held_karp_optimal, held_karp_optimal_up_to, OracleResult, HELD_KARP_HARD_LIMIT,
    HELD_KARP_MAX_NODES, PDP_BRUTE_FORCE_MAX_REQUESTS,
};

/// Instances up to this many nodes keep a dense distance matrix.
pub const DENSE_DISTANCE_MAX_NODES: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn in_unit_square(self) -> bool {
        (0.0..=1.0).contains(&self.x) && (0.0..=1.0).contains(&self.y)
    }
}

/// Node coordinates plus an optional cached distance matrix.
#[derive(Debug, Clone)]
pub struct Geometry {
    coords: Vec<Point>,
    matrix: Option<Vec<f64>>,
}

impl PartialEq for Geometry {
    fn eq(&self, other: &Self) -> bool {
        self.coords == other.coords
    }
}

impl Geometry {
    fn new(coords: Vec<Point>) -> Self {
        let n = coords.len();
        let matrix = (n <= DENSE_DISTANCE_MAX_NODES).then(|| {
            let mut m = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    m[i * n + j] = coords[i].dist(coords[j]);
                }
            }
            m
        });
        Self { coords, matrix }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn dist(&self, a: usize, b: usize) -> f64 {
        match &self.matrix {
            Some(m) => m[a * self.coords.len() + b],
            None => self.coords[a].dist(self.coords[b]),
        }
    }

    pub fn coords(&self) -> &[Point] {
        &self.coords
    }

    /// Closed-cycle length of `seq`, summed edge by edge from `seq[0]`.
    ///
    /// Performs no validation; callers guarantee indices are in range.
    #[inline]
    pub fn cycle_length(&self, seq: &[usize]) -> f64 {
        let n = seq.len();
        let mut acc = 0.0;
        for k in 0..n {
            acc += self.dist(seq[k], seq[(k + 1) % n]);
        }
        acc
    }
}

/// A Euclidean TSP instance with `N >= 3` nodes in the unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    geometry: Geometry,
}

impl Instance {
    pub fn new(coords: Vec<Point>) -> Result<Self> {
        if coords.len() < 3 {
            return Err(Error::Validation(format!(
                "a TSP instance needs at least 3 nodes, got {}",
                coords.len()
            )));
        }
        check_unit_square(&coords)?;
        Ok(Self {
            geometry: Geometry::new(coords),
        })
    }

    pub fn n(&self) -> usize {
        self.geometry.len()
    }

    pub fn coords(&self) -> &[Point] {
        self.geometry.coords()
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    #[inline]
    pub fn dist(&self, a: usize, b: usize) -> f64 {
        self.geometry.dist(a, b)
    }
}

/// A pickup-and-delivery instance with `n` paired requests.
#[derive(Debug, Clone, PartialEq)]
pub struct PdInstance {
    geometry: Geometry,
    requests: usize,
}

impl PdInstance {
    pub fn new(depot: Point, pickups: Vec<Point>, deliveries: Vec<Point>) -> Result<Self> {
        if pickups.is_empty() {
            return Err(Error::Validation("a PDP instance needs at least one request".into()));
        }
        if pickups.len() != deliveries.len() {
            return Err(Error::Validation(format!(
                "{} pickups but {} deliveries",
                pickups.len(),
                deliveries.len()
            )));
        }
        let requests = pickups.len();
        let mut coords = Vec::with_capacity(2 * requests + 1);
        coords.push(depot);
        coords.extend(pickups);
        coords.extend(deliveries);
        check_unit_square(&coords)?;
        Ok(Self {
            geometry: Geometry::new(coords),
            requests,
        })
    }

    /// Number of requests `n`.
    pub fn requests(&self) -> usize {
        self.requests
    }

    /// Total node count `2n + 1`.
    pub fn n_nodes(&self) -> usize {
        self.geometry.len()
    }

    pub fn depot(&self) -> Point {
        self.geometry.coords()[0]
    }

    pub fn pickups(&self) -> &[Point] {
        &self.geometry.coords()[1..=self.requests]
    }

    pub fn deliveries(&self) -> &[Point] {
        &self.geometry.coords()[self.requests + 1..]
    }

    pub fn coords(&self) -> &[Point] {
        self.geometry.coords()
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    #[inline]
    pub fn dist(&self, a: usize, b: usize) -> f64 {
        self.geometry.dist(a, b)
    }

    #[inline]
    pub fn pickup_node(&self, request: usize) -> usize {
        request + 1
    }

    #[inline]
    pub fn delivery_node(&self, request: usize) -> usize {
        request + 1 + self.requests
    }

    #[inline]
    pub fn is_pickup(&self, node: usize) -> bool {
        node >= 1 && node <= self.requests
    }

    /// Request index owning `node`, or `None` for the depot.
    #[inline]
    pub fn request_of(&self, node: usize) -> Option<usize> {
        match node {
            0 => None,
            v if v <= self.requests => Some(v - 1),
            v => Some(v - 1 - self.requests),
        }
    }
}

/// Either kind of instance, as stored in instance files.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyInstance {
    Tsp(Instance),
    Pdp(PdInstance),
}

impl AnyInstance {
    pub fn n_nodes(&self) -> usize {
        match self {
            AnyInstance::Tsp(i) => i.n(),
            AnyInstance::Pdp(p) => p.n_nodes(),
        }
    }
}

fn check_unit_square(coords: &[Point]) -> Result<()> {
    for (i, p) in coords.iter().enumerate() {
        if !p.in_unit_square() {
            return Err(Error::Validation(format!(
                "node {i} at ({}, {}) lies outside the unit square",
                p.x, p.y
            )));
        }
    }
    Ok(())
}

fn uniform_points(rng: &mut ChaCha8Rng, count: usize) -> Vec<Point> {
    (0..count)
        .map(|_| {
            let x = rng.gen::<f64>();
            let y = rng.gen::<f64>();
            Point::new(x, y)
        })
        .collect()
}

/// Uniform random TSP instance, deterministic in `(n, seed)`.
pub fn gen_uniform_tsp(n: usize, seed: u64) -> Result<Instance> {
    if n < 3 {
        return Err(invalid(format!("TSP instances need n >= 3, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Instance::new(uniform_points(&mut rng, n))
}

/// Uniform random pickup-and-delivery instance with `n_requests` requests.
pub fn gen_uniform_pdp(n_requests: usize, seed: u64) -> Result<PdInstance> {
    if n_requests < 1 {
        return Err(invalid("PDP instances need at least one request"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = uniform_points(&mut rng, 2 * n_requests + 1);
    let deliveries = pts.split_off(n_requests + 1);
    let depot = pts.remove(0);
    PdInstance::new(depot, pts, deliveries)
}

/// Closed-tour length, including the return edge.
pub fn tour_length(instance: &Instance, tour: &[usize]) -> Result<f64> {
    check_permutation(tour, instance.n())?;
    Ok(instance.geometry.cycle_length(tour))
}

pub(crate) fn check_permutation(seq: &[usize], n: usize) -> Result<()> {
    if seq.len() != n {
        return Err(invalid(format!(
            "expected a permutation of {n} nodes, got {} entries",
            seq.len()
        )));
    }
    let mut seen = vec![false; n];
    for &v in seq {
        if v >= n || std::mem::replace(&mut seen[v], true) {
            return Err(invalid(format!("sequence is not a permutation of 0..{n}")));
        }
    }
    Ok(())
}

fn symmetry(k: u8, p: Point) -> Point {
    let (x, y) = (p.x, p.y);
    let (nx, ny) = match k {
        0 => (x, y),
        1 => (y, x),
        2 => (1.0 - x, y),
        3 => (x, 1.0 - y),
        4 => (1.0 - x, 1.0 - y),
        5 => (y, 1.0 - x),
        6 => (1.0 - y, x),
        _ => (1.0 - y, 1.0 - x),
    };
    Point::new(nx, ny)
}

/// Applies the `k`-th symmetry of the unit square to every coordinate.
pub fn augment8(instance: &Instance, k: u8) -> Result<Instance> {
    if k > 7 {
        return Err(invalid(format!("augmentation index must be in 0..=7, got {k}")));
    }
    Instance::new(instance.coords().iter().map(|&p| symmetry(k, p)).collect())
}

/// [`augment8`] for pickup-and-delivery instances; node layout is preserved.
pub fn augment8_pdp(instance: &PdInstance, k: u8) -> Result<PdInstance> {
    if k > 7 {
        return Err(invalid(format!("augmentation index must be in 0..=7, got {k}")));
    }
    let m = |pts: &[Point]| pts.iter().map(|&p| symmetry(k, p)).collect::<Vec<_>>();
    PdInstance::new(
        symmetry(k, instance.depot()),
        m(instance.pickups()),
        m(instance.deliveries()),
    )
}
