//! Gradient (Perlin) noise on the unit cube with log-normal gradient
//! amplitudes, fractal octave sums, and seam-free sampling on the cube-sphere.
//!
//! Lattice gradients are keyed by `(seed, node index)`, so a lattice can be
//! materialized whole ([`build_lattice`]) or only at the nodes a sampler
//! touches ([`SphereSampler`]) with identical values.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::{dot, GridSpec, Vec3};
use crate::seed::{derive_seed, keyed_rng};

pub const DEFAULT_SIGMA_LN: f64 = 0.5;
pub const DEFAULT_PERSISTENCE: f64 = 0.5;
pub const DEFAULT_LACUNARITY: u32 = 2;

const OCTAVE_TAG: u64 = 0x6f63_7461_7665;

#[inline]
fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

#[inline]
fn lerp(a: f64, b: f64, w: f64) -> f64 {
    a + w * (b - a)
}

/// Gradient of lattice node `index`: a uniformly random unit direction
/// (normalized Gaussian triple) scaled by `exp(sigma_ln * z)`.
pub fn node_gradient(seed: u64, index: u64, sigma_ln: f64) -> (Vec3, f64) {
    let mut rng = keyed_rng(seed, &[index]);
    let dir = loop {
        let v: Vec3 = [
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        ];
        let n2 = dot(v, v);
        if n2 > 1e-24 {
            let n = n2.sqrt();
            break [v[0] / n, v[1] / n, v[2] / n];
        }
    };
    let z: f64 = StandardNormal.sample(&mut rng);
    (dir, (sigma_ln * z).exp())
}

/// Gradient vectors at the `(F+1)^3` nodes of a lattice over `[0,1]^3`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientLattice {
    frequency: usize,
    sigma_ln: f64,
    seed: u64,
    gradients: Vec<Vec3>,
    amplitudes: Vec<f64>,
}

impl GradientLattice {
    pub fn frequency(&self) -> usize {
        self.frequency
    }

    pub fn sigma_ln(&self) -> f64 {
        self.sigma_ln
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn gradients(&self) -> &[Vec3] {
        &self.gradients
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn max_amplitude(&self) -> f64 {
        self.amplitudes.iter().copied().fold(0.0, f64::max)
    }

    pub fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        let side = self.frequency + 1;
        (i * side + j) * side + k
    }

    /// Replaces every gradient with `g`. Test hook for cancellation checks.
    #[doc(hidden)]
    pub fn with_uniform_gradient(mut self, g: Vec3) -> Self {
        let amp = dot(g, g).sqrt();
        self.gradients.iter_mut().for_each(|x| *x = g);
        self.amplitudes.iter_mut().for_each(|a| *a = amp);
        self
    }
}

pub fn build_lattice(seed: u64, frequency: usize, sigma_ln: f64) -> Result<GradientLattice> {
    if frequency == 0 {
        return Err(Error::invalid("lattice frequency must be >= 1"));
    }
    if !(sigma_ln >= 0.0 && sigma_ln.is_finite()) {
        return Err(Error::invalid(format!("sigma_ln must be finite and >= 0, got {sigma_ln}")));
    }
    let nodes = (frequency + 1).pow(3);
    let (gradients, amplitudes) = (0..nodes as u64)
        .map(|i| {
            let (d, a) = node_gradient(seed, i, sigma_ln);
            ([d[0] * a, d[1] * a, d[2] * a], a)
        })
        .unzip();
    Ok(GradientLattice {
        frequency,
        sigma_ln,
        seed,
        gradients,
        amplitudes,
    })
}

fn check_point(p: Vec3) -> Result<()> {
    if p.iter().all(|c| (0.0..=1.0).contains(c)) {
        Ok(())
    } else {
        Err(Error::invalid(format!("noise point {p:?} is outside [0,1]^3")))
    }
}

/// Lattice cell index and fractional offset along one axis.
#[inline]
fn split_axis(x: f64, frequency: usize) -> (usize, f64) {
    let s = x * frequency as f64;
    let i = (s.floor() as usize).min(frequency - 1);
    (i, s - i as f64)
}

/// Classic gradient noise at `point`; exactly zero at lattice nodes.
pub fn perlin3(point: Vec3, lattice: &GradientLattice) -> Result<f64> {
    check_point(point)?;
    Ok(perlin_unchecked(point, lattice))
}

fn perlin_unchecked(p: Vec3, lattice: &GradientLattice) -> f64 {
    let f = lattice.frequency;
    let (i, tx) = split_axis(p[0], f);
    let (j, ty) = split_axis(p[1], f);
    let (k, tz) = split_axis(p[2], f);
    let corner = |di: usize, dj: usize, dk: usize| {
        let g = lattice.gradients[lattice.node_index(i + di, j + dj, k + dk)];
        dot(g, [tx - di as f64, ty - dj as f64, tz - dk as f64])
    };
    let (u, v, w) = (fade(tx), fade(ty), fade(tz));
    let x00 = lerp(corner(0, 0, 0), corner(1, 0, 0), u);
    let x10 = lerp(corner(0, 1, 0), corner(1, 1, 0), u);
    let x01 = lerp(corner(0, 0, 1), corner(1, 0, 1), u);
    let x11 = lerp(corner(0, 1, 1), corner(1, 1, 1), u);
    lerp(lerp(x00, x10, v), lerp(x01, x11, v), w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Octave {
    pub frequency: usize,
    pub amplitude: f64,
}

/// Octave list plus the log-normal shape shared by all octave lattices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractalSpec {
    octaves: Vec<Octave>,
    sigma_ln: f64,
}

impl FractalSpec {
    pub fn new(octaves: Vec<Octave>, sigma_ln: f64) -> Result<Self> {
        if octaves.is_empty() {
            return Err(Error::invalid("fractal spec needs at least one octave"));
        }
        if octaves.iter().any(|o| o.frequency == 0) {
            return Err(Error::invalid("octave frequencies must be >= 1"));
        }
        if octaves.windows(2).any(|w| w[1].frequency <= w[0].frequency) {
            return Err(Error::invalid("octave frequencies must be strictly increasing"));
        }
        if octaves.iter().any(|o| !(o.amplitude >= 0.0 && o.amplitude.is_finite())) {
            return Err(Error::invalid("octave amplitudes must be finite and >= 0"));
        }
        if !(sigma_ln >= 0.0 && sigma_ln.is_finite()) {
            return Err(Error::invalid(format!("sigma_ln must be finite and >= 0, got {sigma_ln}")));
        }
        Ok(FractalSpec { octaves, sigma_ln })
    }

    /// `count` octaves with frequency `base * 2^k` and amplitude `0.5^k`.
    pub fn standard(base_frequency: usize, count: usize, sigma_ln: f64) -> Result<Self> {
        let octaves = (0..count)
            .map(|k| Octave {
                frequency: base_frequency * (DEFAULT_LACUNARITY as usize).pow(k as u32),
                amplitude: DEFAULT_PERSISTENCE.powi(k as i32),
            })
            .collect();
        Self::new(octaves, sigma_ln)
    }

    pub fn octaves(&self) -> &[Octave] {
        &self.octaves
    }

    pub fn sigma_ln(&self) -> f64 {
        self.sigma_ln
    }

    pub fn max_frequency(&self) -> usize {
        self.octaves.last().map_or(0, |o| o.frequency)
    }
}

impl Default for FractalSpec {
    fn default() -> Self {
        FractalSpec::standard(4, 3, DEFAULT_SIGMA_LN).expect("valid default")
    }
}

/// Seed of octave `k`'s lattice.
pub fn octave_seed(seed: u64, k: usize) -> u64 {
    derive_seed(seed, &[OCTAVE_TAG, k as u64])
}

/// Materialized fractal noise for repeated point evaluation.
#[derive(Debug, Clone)]
pub struct FractalNoise {
    layers: Vec<(f64, GradientLattice)>,
}

impl FractalNoise {
    pub fn new(spec: &FractalSpec, seed: u64) -> Result<Self> {
        let layers = spec
            .octaves
            .iter()
            .enumerate()
            .map(|(k, o)| Ok((o.amplitude, build_lattice(octave_seed(seed, k), o.frequency, spec.sigma_ln)?)))
            .collect::<Result<_>>()?;
        Ok(FractalNoise { layers })
    }

    pub fn eval(&self, point: Vec3) -> Result<f64> {
        check_point(point)?;
        Ok(self
            .layers
            .iter()
            .map(|(a, lattice)| a * perlin_unchecked(point, lattice))
            .sum())
    }
}

pub fn fractal3(point: Vec3, spec: &FractalSpec, seed: u64) -> Result<f64> {
    FractalNoise::new(spec, seed)?.eval(point)
}

/// Maps a unit vector on the sphere into the unit cube.
#[inline]
pub fn sphere_to_cube(v: Vec3) -> Vec3 {
    [
        ((v[0] + 1.0) * 0.5).clamp(0.0, 1.0),
        ((v[1] + 1.0) * 0.5).clamp(0.0, 1.0),
        ((v[2] + 1.0) * 0.5).clamp(0.0, 1.0),
    ]
}

#[derive(Debug, Clone, Copy)]
struct Corner {
    slot: u32,
    weight: f64,
    offset: Vec3,
}

#[derive(Debug, Clone)]
struct OctaveStencil {
    amplitude: f64,
    /// Lattice node indices touched by any cell, ascending.
    nodes: Vec<u64>,
    /// Eight corners per cell.
    corners: Vec<Corner>,
}

/// Precomputed interpolation stencils for sampling fractal noise at every
/// cell center of a grid. Sampling a new seed only generates the gradients
/// of lattice nodes adjacent to a cell center.
#[derive(Debug, Clone)]
pub struct SphereSampler {
    grid: GridSpec,
    spec: FractalSpec,
    stencils: Vec<OctaveStencil>,
}

impl SphereSampler {
    pub fn new(grid: GridSpec, spec: &FractalSpec) -> Self {
        let points: Vec<Vec3> = grid.center_vecs().into_iter().map(sphere_to_cube).collect();
        let stencils = spec
            .octaves
            .iter()
            .map(|o| Self::stencil(&points, o.frequency, o.amplitude))
            .collect();
        SphereSampler {
            grid,
            spec: spec.clone(),
            stencils,
        }
    }

    fn stencil(points: &[Vec3], frequency: usize, amplitude: f64) -> OctaveStencil {
        let side = frequency + 1;
        let mut raw = Vec::with_capacity(points.len() * 8);
        for &p in points {
            let (i, tx) = split_axis(p[0], frequency);
            let (j, ty) = split_axis(p[1], frequency);
            let (k, tz) = split_axis(p[2], frequency);
            let (u, v, w) = (fade(tx), fade(ty), fade(tz));
            for c in 0..8usize {
                let (di, dj, dk) = (c >> 2 & 1, c >> 1 & 1, c & 1);
                let weight = (if di == 1 { u } else { 1.0 - u })
                    * (if dj == 1 { v } else { 1.0 - v })
                    * (if dk == 1 { w } else { 1.0 - w });
                let node = (((i + di) * side + (j + dj)) * side + (k + dk)) as u64;
                raw.push((node, weight, [tx - di as f64, ty - dj as f64, tz - dk as f64]));
            }
        }
        let mut nodes: Vec<u64> = raw.iter().map(|r| r.0).collect();
        nodes.sort_unstable();
        nodes.dedup();
        let corners = raw
            .into_iter()
            .map(|(node, weight, offset)| Corner {
                slot: nodes.binary_search(&node).expect("node present") as u32,
                weight,
                offset,
            })
            .collect();
        OctaveStencil {
            amplitude,
            nodes,
            corners,
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn spec(&self) -> &FractalSpec {
        &self.spec
    }

    /// Fractal noise at every cell center for `seed`.
    pub fn sample(&self, seed: u64) -> Field {
        let mut values = vec![0.0; self.grid.cell_count()];
        let mut grads: Vec<Vec3> = Vec::new();
        for (k, st) in self.stencils.iter().enumerate() {
            if st.amplitude == 0.0 {
                continue;
            }
            let lseed = octave_seed(seed, k);
            grads.clear();
            grads.extend(st.nodes.iter().map(|&n| {
                let (d, a) = node_gradient(lseed, n, self.spec.sigma_ln);
                [d[0] * a, d[1] * a, d[2] * a]
            }));
            for (v, cell) in values.iter_mut().zip(st.corners.chunks_exact(8)) {
                let noise: f64 = cell
                    .iter()
                    .map(|c| c.weight * dot(grads[c.slot as usize], c.offset))
                    .sum();
                *v += st.amplitude * noise;
            }
        }
        Field::from_values(self.grid, values).expect("sized to grid")
    }
}

/// Fractal noise sampled at every cell center through `(v + 1) / 2`.
pub fn sample_sphere(grid: GridSpec, spec: &FractalSpec, seed: u64) -> Field {
    SphereSampler::new(grid, spec).sample(seed)
}
