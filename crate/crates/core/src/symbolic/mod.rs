//! Markov partition for the cat map A, its refinements, and first-return word counts.
//!
//! Work in σ = c·(s1, s2), c = √(1+φ²). There Z² becomes the lattice Λ spanned by
//! (φ, 1) and (-1, φ), A acts as diag(λ, 1/λ), and the torus is tiled by a square of
//! side φ and a square of side 1 (a Pythagorean tiling), both with the fixed point at
//! a corner. Every coordinate below lies in Z[φ], so the Markov property is checked
//! exactly.
//!
//! The two squares are cut into the five connected pieces R_i ∩ A⁻¹(R_j + m). Those
//! pieces form the level-0 partition; its 0/1 transition graph is the edge graph of
//! the two-square coding and has Perron root λ. Refinements are cylinders of that
//! graph: a word e_{-b} … e_0 … e_f names the rectangle whose unstable side comes from
//! e_0 … e_f and whose stable side comes from e_{-b} … e_{-1}.

pub mod periodic;
pub mod zphi;

use std::collections::HashMap;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KatokError, Result};
use crate::numerics::sample_rng;
use crate::numerics::stats::linear_fit;
use crate::params::{
    from_eigen, in_disk, lift_eigen, EigenPoint, KatokParams, TorusPoint, GOLDEN, LAMBDA,
    LOG_LAMBDA,
};
use crate::slowdown::SlowFlow;

pub use periodic::{fixed_point_count, periodic_points, primitive_orbits};
use zphi::{Interval, Zphi};

/// c² = 1 + φ², the covolume of Λ.
pub const SIGMA_COVOLUME: f64 = 1.0 + GOLDEN * GOLDEN;

/// Refinement stops growing past this many rectangles.
pub const MAX_RECTANGLES: usize = 400_000;

/// Longest horizon tried for the P-avoidance condition.
pub const Q_CAP: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    pub delta: f64,
    pub q: usize,
    pub n_max: usize,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            delta: 0.05,
            q: 5,
            n_max: 60,
        }
    }
}

// ---------------------------------------------------------------------------
// Tiles and the edge graph

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Tile {
    pub x: Interval,
    pub y: Interval,
}

pub fn tiles() -> [Tile; 2] {
    let (z, one, phi) = (Zphi::ZERO, Zphi::ONE, Zphi::PHI);
    [
        Tile {
            x: Interval::new(z, phi),
            y: Interval::new(z, phi),
        },
        Tile {
            x: Interval::new(phi, phi + one),
            y: Interval::new(z, one),
        },
    ]
}

/// Lattice vector p(φ, 1) + q(-1, φ) in σ coordinates.
pub fn lattice_vector(p: i64, q: i64) -> (Zphi, Zphi) {
    (Zphi::new(-q, p), Zphi::new(p, q))
}

/// A piece R_i ∩ A⁻¹(R_j + m) of the two-square partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Edge {
    pub from: u8,
    pub to: u8,
    pub lattice: (i64, i64),
    pub shift: (Zphi, Zphi),
}

/// The five pieces, found by scanning lattice translates of the target square.
pub fn edges() -> Vec<Edge> {
    let t = tiles();
    let mut out = Vec::new();
    for i in 0..2u8 {
        let (ix, iy) = (
            t[i as usize].x.scale(Zphi::LAMBDA),
            t[i as usize].y.scale(Zphi::LAMBDA_INV),
        );
        for j in 0..2u8 {
            for p in -4..=4 {
                for q in -4..=4 {
                    let (m1, m2) = lattice_vector(p, q);
                    let (jx, jy) = (t[j as usize].x.shift(m1), t[j as usize].y.shift(m2));
                    if ix.overlaps(&jx) && iy.overlaps(&jy) {
                        out.push(Edge {
                            from: i,
                            to: j,
                            lattice: (p, q),
                            shift: (m1, m2),
                        });
                    }
                }
            }
        }
    }
    out
}

/// Exact check that A(R_i) crosses every R_j + m fully and nothing else.
pub fn base_is_markov(edges: &[Edge]) -> bool {
    let t = tiles();
    (0..2).all(|i| {
        let (ix, iy) = (t[i].x.scale(Zphi::LAMBDA), t[i].y.scale(Zphi::LAMBDA_INV));
        let mine: Vec<&Edge> = edges.iter().filter(|e| e.from as usize == i).collect();
        let crossing = mine.iter().all(|e| {
            let tj = t[e.to as usize];
            ix.contains(&tj.x.shift(e.shift.0)) && tj.y.shift(e.shift.1).contains(&iy)
        });
        let covered = mine
            .iter()
            .fold(Zphi::ZERO, |acc, e| acc + t[e.to as usize].x.len());
        crossing && covered == ix.len()
    })
}

// ---------------------------------------------------------------------------
// Rectangles

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rectangle {
    /// edge indices e_{-b} … e_f
    pub word: Vec<u8>,
    pub tile: u8,
    /// unstable side, in σ coordinates of the canonical tile
    pub x: Interval,
    /// stable side
    pub y: Interval,
}

impl Rectangle {
    pub fn sigma_area(&self) -> Zphi {
        self.x.len() * self.y.len()
    }

    pub fn area(&self) -> f64 {
        self.x.len().to_f64() * self.y.len().to_f64() / SIGMA_COVOLUME
    }

    pub fn diameter(&self) -> f64 {
        self.x.len().to_f64().hypot(self.y.len().to_f64()) / SIGMA_COVOLUME.sqrt()
    }

    /// Corners as lifted points of R² (counter-clockwise), edges along e_u and e_s.
    pub fn vertices(&self) -> [[f64; 2]; 4] {
        let (x0, x1, y0, y1) = (
            self.x.lo.to_f64(),
            self.x.hi.to_f64(),
            self.y.lo.to_f64(),
            self.y.hi.to_f64(),
        );
        [(x0, y0), (x1, y0), (x1, y1), (x0, y1)].map(|(a, b)| sigma_to_plane(a, b))
    }

    /// Is some lift of `p` at least `inset` (σ units) inside the rectangle?
    pub fn contains(&self, p: TorusPoint, inset: f64) -> bool {
        let (x0, x1, y0, y1) = (
            self.x.lo.to_f64(),
            self.x.hi.to_f64(),
            self.y.lo.to_f64(),
            self.y.hi.to_f64(),
        );
        // tiles sit in [0, φ+1] x [0, φ]; their plane images need only these shifts
        for kx in -1..=2 {
            for ky in -1..=1 {
                let (s1, s2) = plane_to_sigma(p.x + kx as f64, p.y + ky as f64);
                if s1 > x0 + inset && s1 < x1 - inset && s2 > y0 + inset && s2 < y1 - inset {
                    return true;
                }
            }
        }
        false
    }

    /// A point drawn uniformly from the rectangle.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> TorusPoint {
        let (x0, x1, y0, y1) = (
            self.x.lo.to_f64(),
            self.x.hi.to_f64(),
            self.y.lo.to_f64(),
            self.y.hi.to_f64(),
        );
        let p = sigma_to_plane(rng.gen_range(x0..x1), rng.gen_range(y0..y1));
        TorusPoint::new(p[0], p[1])
    }
}

pub fn sigma_to_plane(s1: f64, s2: f64) -> [f64; 2] {
    [
        (s1 * GOLDEN + s2) / SIGMA_COVOLUME,
        (s1 - s2 * GOLDEN) / SIGMA_COVOLUME,
    ]
}

pub fn plane_to_sigma(x: f64, y: f64) -> (f64, f64) {
    (GOLDEN * x + y, x - GOLDEN * y)
}

/// Words of length `len` in the edge graph.
fn words(edges: &[Edge], len: usize) -> Vec<Vec<u8>> {
    let mut cur: Vec<Vec<u8>> = (0..edges.len() as u8).map(|e| vec![e]).collect();
    for _ in 1..len {
        cur = cur
            .into_iter()
            .flat_map(|w| {
                let last = edges[*w.last().unwrap() as usize].to;
                edges
                    .iter()
                    .enumerate()
                    .filter(move |(_, e)| e.from == last)
                    .map(move |(k, _)| {
                        let mut v = w.clone();
                        v.push(k as u8);
                        v
                    })
            })
            .collect();
    }
    cur
}

fn rectangle_of(edges: &[Edge], word: &[u8], back: usize) -> Rectangle {
    let t = tiles();
    let center = edges[word[back] as usize];
    // unstable side: pull the last target square back along e_f, …, e_0
    let mut x = t[edges[*word.last().unwrap() as usize].to as usize].x;
    for &e in word[back..].iter().rev() {
        x = x.shift(edges[e as usize].shift.0).scale(Zphi::LAMBDA_INV);
    }
    // stable side: push the first source square forward along e_{-b}, …, e_{-1}
    let mut y = t[edges[word[0] as usize].from as usize].y;
    for &e in &word[..back] {
        y = y.scale(Zphi::LAMBDA_INV).shift(-edges[e as usize].shift.1);
    }
    Rectangle {
        word: word.to_vec(),
        tile: center.from,
        x,
        y,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkovCheck {
    pub transitions: usize,
    pub crossing_failures: usize,
    pub area_failures: usize,
    /// Σ area - 1, exact in σ units then converted
    pub area_sum_defect: f64,
}

impl MarkovCheck {
    pub fn holds(&self) -> bool {
        self.crossing_failures == 0 && self.area_failures == 0 && self.area_sum_defect.abs() < 1e-9
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkovPartition {
    pub back: usize,
    pub fwd: usize,
    pub edges: Vec<Edge>,
    pub rectangles: Vec<Rectangle>,
    /// successors of each rectangle (row support of the 0/1 matrix)
    pub successors: Vec<Vec<usize>>,
    pub p_index: usize,
    #[serde(skip)]
    index: HashMap<Vec<u8>, usize>,
}

impl MarkovPartition {
    /// Cylinders e_{-back} … e_{fwd}; `p_index` starts at 0.
    pub fn cylinders(back: usize, fwd: usize) -> Self {
        let edges = edges();
        let ws = words(&edges, back + fwd + 1);
        let index: HashMap<Vec<u8>, usize> =
            ws.iter().enumerate().map(|(k, w)| (w.clone(), k)).collect();
        let rectangles: Vec<Rectangle> = ws.iter().map(|w| rectangle_of(&edges, w, back)).collect();
        let successors = ws
            .iter()
            .map(|w| {
                let last = edges[*w.last().unwrap() as usize].to;
                let mut next = w[1..].to_vec();
                next.push(0);
                (0..edges.len())
                    .filter(|&k| edges[k].from == last)
                    .map(|k| {
                        *next.last_mut().unwrap() = k as u8;
                        index[&next]
                    })
                    .collect()
            })
            .collect();
        Self {
            back,
            fwd,
            edges,
            rectangles,
            successors,
            p_index: 0,
            index,
        }
    }

    /// Refinement level ℓ alternates sides: fwd = ⌈ℓ/2⌉, back = ⌊ℓ/2⌋.
    pub fn level(l: usize) -> Self {
        Self::cylinders(l / 2, l.div_ceil(2))
    }

    pub fn len(&self) -> usize {
        self.rectangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rectangles.is_empty()
    }

    pub fn max_diameter(&self) -> f64 {
        self.rectangles
            .iter()
            .map(Rectangle::diameter)
            .fold(0.0, f64::max)
    }

    pub fn index_of(&self, word: &[u8]) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn transition(&self, i: usize, j: usize) -> bool {
        self.successors[i].contains(&j)
    }

    pub fn predecessors(&self) -> Vec<Vec<usize>> {
        let mut pred = vec![Vec::new(); self.len()];
        for (i, s) in self.successors.iter().enumerate() {
            for &j in s {
                pred[j].push(i);
            }
        }
        pred
    }

    /// Exact check: A(R_i) crosses each successor fully along the unstable side,
    /// the successors' widths add up to λ|R_i|, and the areas sum to one.
    pub fn check_markov(&self) -> MarkovCheck {
        let mut crossing_failures = 0;
        let mut area_failures = 0;
        let mut transitions = 0;
        for (i, r) in self.rectangles.iter().enumerate() {
            let m = self.edges[r.word[self.back] as usize].shift;
            let (ax, ay) = (r.x.scale(Zphi::LAMBDA), r.y.scale(Zphi::LAMBDA_INV));
            let mut width = Zphi::ZERO;
            for &j in &self.successors[i] {
                transitions += 1;
                let s = &self.rectangles[j];
                let (sx, sy) = (s.x.shift(m.0), s.y.shift(m.1));
                if !(ax.contains(&sx) && sy.contains(&ay)) {
                    crossing_failures += 1;
                }
                width = width + s.x.len();
            }
            if width != ax.len() {
                area_failures += 1;
            }
        }
        let total = self
            .rectangles
            .iter()
            .fold(Zphi::ZERO, |acc, r| acc + r.sigma_area());
        MarkovCheck {
            transitions,
            crossing_failures,
            area_failures,
            // Λ has covolume 1 + φ² = 2 + φ exactly
            area_sum_defect: (total - Zphi::new(2, 1)).to_f64() / SIGMA_COVOLUME,
        }
    }

    /// Index of the rectangle containing `p` (boundaries resolved half-open), by coding
    /// its orbit under A.
    pub fn locate(&self, p: TorusPoint) -> Option<usize> {
        let t = tiles();
        let (s1, s2) = plane_to_sigma(p.x, p.y);
        let (tile, x, mut y) = place(s1, s2)?;
        let mut word = vec![0u8; self.back + self.fwd + 1];
        // forward: which piece of the current square, then move on
        let (mut cur, mut fx) = (tile, x);
        for slot in word[self.back..].iter_mut() {
            let (k, e) = self.edges.iter().enumerate().find(|(_, e)| {
                e.from == cur
                    && t[e.to as usize]
                        .x
                        .contains_f64(fx * LAMBDA - e.shift.0.to_f64())
            })?;
            *slot = k as u8;
            fx = fx * LAMBDA - e.shift.0.to_f64();
            cur = e.to;
        }
        // backward: which piece the preimage came from
        cur = tile;
        for slot in word[..self.back].iter_mut().rev() {
            let (k, e) = self.edges.iter().enumerate().find(|(_, e)| {
                e.to == cur
                    && t[e.from as usize]
                        .y
                        .contains_f64((y + e.shift.1.to_f64()) * LAMBDA)
            })?;
            *slot = k as u8;
            y = (y + e.shift.1.to_f64()) * LAMBDA;
            cur = e.from;
        }
        self.index_of(&word)
    }
}

/// Square and translate containing σ, returning coordinates relative to the canonical square.
fn place(s1: f64, s2: f64) -> Option<(u8, f64, f64)> {
    let t = tiles();
    let p0 = ((GOLDEN * s1 + s2) / SIGMA_COVOLUME).floor() as i64;
    let q0 = ((-s1 + GOLDEN * s2) / SIGMA_COVOLUME).floor() as i64;
    for dp in -2..=2 {
        for dq in -2..=2 {
            let (p, q) = (p0 + dp, q0 + dq);
            let (x, y) = (
                s1 - (p as f64 * GOLDEN - q as f64),
                s2 - (p as f64 + q as f64 * GOLDEN),
            );
            for (k, tile) in t.iter().enumerate() {
                if tile.x.contains_f64(x) && tile.y.contains_f64(y) {
                    return Some((k as u8, x, y));
                }
            }
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Spectral data

/// Perron root of the 0/1 matrix by power iteration on the successor lists.
pub fn perron_root(successors: &[Vec<usize>]) -> f64 {
    let n = successors.len();
    let mut v = vec![1.0 / n as f64; n];
    let mut rho = 0.0;
    for _ in 0..10_000 {
        let next: Vec<f64> = successors
            .par_iter()
            .map(|s| s.iter().map(|&j| v[j]).sum())
            .collect();
        let norm: f64 = next.iter().sum();
        let done = (norm - rho).abs() <= 1e-15 * norm;
        rho = norm;
        v = next.into_iter().map(|x| x / norm).collect();
        if done {
            break;
        }
    }
    rho
}

// ---------------------------------------------------------------------------
// Condition (10)

/// Lattice point of Λ nearest to the box [x0,x1]×[y0,y1] is farther than `rho`.
fn box_avoids_lattice(x0: f64, x1: f64, y0: f64, y1: f64, rho: f64) -> bool {
    let coords = |a: f64, b: f64| {
        (
            (GOLDEN * a + b) / SIGMA_COVOLUME,
            (-a + GOLDEN * b) / SIGMA_COVOLUME,
        )
    };
    let corners = [
        coords(x0 - rho, y0 - rho),
        coords(x1 + rho, y0 - rho),
        coords(x0 - rho, y1 + rho),
        coords(x1 + rho, y1 + rho),
    ];
    let q_lo = corners
        .iter()
        .map(|c| c.1)
        .fold(f64::INFINITY, f64::min)
        .floor() as i64;
    let q_hi = corners
        .iter()
        .map(|c| c.1)
        .fold(f64::NEG_INFINITY, f64::max)
        .ceil() as i64;
    for q in q_lo..=q_hi {
        // σ2 = p + qφ must come within rho of [y0, y1]
        let p_lo = (y0 - rho - q as f64 * GOLDEN).ceil() as i64;
        let p_hi = (y1 + rho - q as f64 * GOLDEN).floor() as i64;
        for p in p_lo..=p_hi {
            let (a, b) = (p as f64 * GOLDEN - q as f64, p as f64 + q as f64 * GOLDEN);
            let dx = (x0 - a).max(a - x1).max(0.0);
            let dy = (y0 - b).max(b - y1).max(0.0);
            if dx.hypot(dy) <= rho {
                return false;
            }
        }
    }
    true
}

/// Largest Q with Aⁿ(R) ∩ D_{r0} = ∅ for 0 ≤ n ≤ Q, or None if R meets D_{r0}.
pub fn avoidance_horizon(r: &Rectangle, r0: f64) -> Option<usize> {
    let rho = (r0 * SIGMA_COVOLUME).sqrt();
    let (mut x0, mut x1, mut y0, mut y1) = (
        r.x.lo.to_f64(),
        r.x.hi.to_f64(),
        r.y.lo.to_f64(),
        r.y.hi.to_f64(),
    );
    for n in 0..=Q_CAP {
        if !box_avoids_lattice(x0, x1, y0, y1, rho) {
            return n.checked_sub(1);
        }
        (x0, x1, y0, y1) = (x0 * LAMBDA, x1 * LAMBDA, y0 / LAMBDA, y1 / LAMBDA);
    }
    Some(Q_CAP)
}

impl MarkovPartition {
    /// Selects P maximizing the avoidance horizon (ties: larger area, then lower index).
    pub fn select_p(&mut self, r0: f64) -> Option<usize> {
        let best = self
            .rectangles
            .par_iter()
            .enumerate()
            .filter_map(|(k, r)| avoidance_horizon(r, r0).map(|q| (q, k)))
            .max_by(|a, b| {
                a.0.cmp(&b.0)
                    .then(
                        self.rectangles[a.1]
                            .area()
                            .total_cmp(&self.rectangles[b.1].area()),
                    )
                    .then(b.1.cmp(&a.1))
            })?;
        self.p_index = best.1;
        Some(best.0)
    }
}

/// Refines until every diameter is below δ, then keeps refining (within
/// [`MAX_RECTANGLES`]) until some element avoids D_{r0} for `q` steps.
pub fn build_partition(delta: f64, q: usize, r0: f64) -> Result<MarkovPartition> {
    if delta.is_nan() || delta <= 0.0 || q == 0 {
        return Err(KatokError::InvalidParams(format!(
            "delta = {delta}, Q = {q}"
        )));
    }
    let mut level = 0;
    let mut best = 0;
    loop {
        let mut part = MarkovPartition::level(level);
        if part.max_diameter() < delta {
            if let Some(h) = part.select_p(r0) {
                best = best.max(h);
                if h >= q {
                    return Ok(part);
                }
            }
        }
        if part.len() * 3 > MAX_RECTANGLES {
            return Err(KatokError::NoValidElement { q, achieved: best });
        }
        level += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Condition10Report {
    pub q: usize,
    pub p_samples: usize,
    pub p_violations: usize,
    pub collar_samples: usize,
    /// least number of A-steps a point leaving D_{r0} spends outside it, minus one
    pub collar_q: usize,
}

impl Condition10Report {
    pub fn p_holds(&self) -> bool {
        self.p_violations == 0
    }

    pub fn collar_holds(&self) -> bool {
        self.collar_q >= self.q
    }
}

fn a_step(p: TorusPoint) -> TorusPoint {
    TorusPoint::new(2.0 * p.x + p.y, p.x + p.y)
}

/// Samples P and the collar {x ∉ D_{r0} : G⁻¹x ∈ D_{r0}} and follows them under A.
pub fn verify_condition_10(
    part: &MarkovPartition,
    params: &KatokParams,
    q: usize,
    n: usize,
    seed: u64,
) -> Result<Condition10Report> {
    let r0 = params.r0;
    let p = &part.rectangles[part.p_index];
    let p_violations = (0..n as u64)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = sample_rng(params.rng_seed ^ seed, 41, i);
            let mut x = p.sample(&mut rng);
            (0..=q).any(|k| {
                if k > 0 {
                    x = a_step(x);
                }
                in_disk(lift_eigen(x), r0)
            })
        })
        .count();
    let flow = SlowFlow::new(params);
    let sr = r0.sqrt();
    let exits: Vec<Option<usize>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(params.rng_seed ^ seed, 42, i);
            let (rad, th) = (
                sr * rng.gen::<f64>().sqrt(),
                std::f64::consts::TAU * rng.gen::<f64>(),
            );
            let z = EigenPoint::new(rad * th.cos(), rad * th.sin());
            let img = flow.flow(z, 1.0)?;
            if in_disk(img, r0) {
                return Ok(None);
            }
            let mut x = from_eigen(img);
            let mut k = 0;
            while k < Q_CAP && !in_disk(lift_eigen(x), r0) {
                x = a_step(x);
                k += 1;
            }
            Ok(Some(k))
        })
        .collect::<Result<_>>()?;
    let collar: Vec<usize> = exits.into_iter().flatten().collect();
    Ok(Condition10Report {
        q,
        p_samples: n,
        p_violations,
        collar_samples: collar.len(),
        collar_q: collar.iter().min().map_or(0, |&k| k.saturating_sub(1)),
    })
}

// ---------------------------------------------------------------------------
// First-return words

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReturnWordCount {
    pub n: usize,
    #[serde(serialize_with = "ser_big")]
    pub s_n: BigUint,
}

fn ser_big<S: serde::Serializer>(v: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

fn step_counts(pred: &[Vec<usize>], v: &[BigUint], skip: Option<usize>) -> Vec<BigUint> {
    pred.par_iter()
        .enumerate()
        .map(|(j, ps)| {
            if Some(j) == skip {
                return BigUint::zero();
            }
            ps.iter().fold(BigUint::zero(), |acc, &i| acc + &v[i])
        })
        .collect()
}

/// S_n for n = 1..=n_max: words P a_1 … a_{n-1} P with no interior P.
pub fn count_first_return_words(part: &MarkovPartition, n_max: usize) -> Vec<ReturnWordCount> {
    let pred = part.predecessors();
    let p = part.p_index;
    let mut out = Vec::with_capacity(n_max);
    // v_a = number of words P … a of the current length avoiding P inside
    let mut v: Vec<BigUint> = vec![BigUint::zero(); part.len()];
    v[p] = BigUint::one();
    for n in 1..=n_max {
        let next = step_counts(&pred, &v, None);
        out.push(ReturnWordCount {
            n,
            s_n: next[p].clone(),
        });
        v = next;
        v[p] = BigUint::zero();
    }
    out
}

/// (Mⁿ)_{PP} for n = 0..=n_max.
pub fn loop_counts(part: &MarkovPartition, n_max: usize) -> Vec<BigUint> {
    let pred = part.predecessors();
    let p = part.p_index;
    let mut v = vec![BigUint::zero(); part.len()];
    v[p] = BigUint::one();
    let mut out = vec![BigUint::one()];
    for _ in 1..=n_max {
        v = step_counts(&pred, &v, None);
        out.push(v[p].clone());
    }
    out
}

/// Number of admissible words of `len` symbols starting at P.
pub fn words_from_p(part: &MarkovPartition, len: usize) -> BigUint {
    let pred = part.predecessors();
    let mut v = vec![BigUint::zero(); part.len()];
    v[part.p_index] = BigUint::one();
    for _ in 1..len {
        v = step_counts(&pred, &v, None);
    }
    v.iter().sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HEstimate {
    pub h: f64,
    pub tail_slope: f64,
    pub r2: f64,
    pub window: (usize, usize),
    /// log λ - h
    pub margin: f64,
}

impl HEstimate {
    pub fn below_entropy(&self) -> bool {
        self.margin > 0.0
    }
}

/// Width of the sliding windows in [`estimate_h`].
pub const H_WINDOW: usize = 10;

/// Growth rate of S_n: the largest least-squares slope of log S_n over sliding
/// windows in the second half of the nonzero counts, with R² of the whole tail.
pub fn estimate_h(counts: &[ReturnWordCount]) -> Result<HEstimate> {
    let pts: Vec<(f64, f64)> = counts
        .iter()
        .filter(|c| !c.s_n.is_zero())
        .map(|c| (c.n as f64, big_ln(&c.s_n)))
        .collect();
    if pts.len() < H_WINDOW {
        return Err(KatokError::InsufficientData(format!(
            "{} nonzero counts, need {H_WINDOW}",
            pts.len()
        )));
    }
    let tail = &pts[pts.len() / 2..];
    let tail = if tail.len() < H_WINDOW {
        &pts[pts.len() - H_WINDOW..]
    } else {
        tail
    };
    let (xs, ys): (Vec<f64>, Vec<f64>) = tail.iter().copied().unzip();
    let whole = linear_fit(&xs, &ys);
    let h = (0..=tail.len() - H_WINDOW)
        .map(|s| linear_fit(&xs[s..s + H_WINDOW], &ys[s..s + H_WINDOW]).slope)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(HEstimate {
        h,
        tail_slope: whole.slope,
        r2: whole.r2,
        window: (xs[0] as usize, *xs.last().unwrap() as usize),
        margin: LOG_LAMBDA - h,
    })
}

/// Natural log of a big integer, exact to f64 precision.
pub fn big_ln(v: &BigUint) -> f64 {
    let bits = v.bits();
    if bits <= 1000 {
        return v.to_f64().map_or(f64::NAN, f64::ln);
    }
    let shift = bits - 64;
    (v >> shift).to_f64().unwrap().ln() + shift as f64 * std::f64::consts::LN_2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_pieces_with_the_cat_map_multiplicities() {
        let e = edges();
        assert_eq!(e.len(), 5);
        let mult = |i: u8, j: u8| e.iter().filter(|x| x.from == i && x.to == j).count();
        assert_eq!(
            [mult(0, 0), mult(0, 1), mult(1, 0), mult(1, 1)],
            [2, 1, 1, 1]
        );
        assert!(base_is_markov(&e));
    }

    #[test]
    fn level_zero_is_the_edge_graph() {
        let part = MarkovPartition::level(0);
        assert_eq!(part.len(), 5);
        assert!(part.check_markov().holds());
        assert!((perron_root(&part.successors) - LAMBDA).abs() < 1e-12);
    }

    #[test]
    fn refinement_tiles_exactly() {
        for l in 1..=4 {
            let part = MarkovPartition::level(l);
            let check = part.check_markov();
            assert!(check.holds(), "{l}: {check:?}");
            assert_eq!(check.area_sum_defect, 0.0);
        }
    }

    #[test]
    fn locate_recovers_sampled_rectangles() {
        let part = MarkovPartition::level(3);
        let mut rng = sample_rng(5, 0, 0);
        for (k, r) in part.rectangles.iter().enumerate().step_by(7) {
            let p = r.sample(&mut rng);
            assert_eq!(part.locate(p), Some(k));
            assert!(r.contains(p, 0.0));
            let hits = part
                .rectangles
                .iter()
                .filter(|q| q.contains(p, 1e-9))
                .count();
            assert!(hits <= 1);
        }
    }

    #[test]
    fn big_ln_matches_small_values() {
        let v = BigUint::from(123_456_789u64);
        assert!((big_ln(&v) - 123_456_789f64.ln()).abs() < 1e-12);
        let huge = BigUint::from(3u8).pow(2000);
        assert!((big_ln(&huge) - 2000.0 * 3f64.ln()).abs() < 1e-9);
    }
}
