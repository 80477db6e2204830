//! Finite-box discrete Schrödinger operators `H = −Δ + Σ_j ω_j P_j`.
//!
//! Sites are indexed lexicographically (first coordinate slowest). Blocks are
//! the cubes `j + [0, K−1]^d` for `j ∈ K·Z^d`, so `P₀` covers `[0, K−1]^d`.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sprs::{CsMat, TriMat};

use crate::error::{Error, Result};
use crate::measures::Measure;

pub const DEFAULT_SITE_CAP: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    #[default]
    Periodic,
    Dirichlet,
}

/// `adjacency`: `(−Δu)(n) = −Σ u(m)` over nearest neighbours, `σ ⊆ [−2d, 2d]`.
/// `graph`: adds `2d` on the diagonal, `σ ⊆ [0, 4d]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Laplacian {
    #[default]
    Adjacency,
    Graph,
}

/// `strict`: the box is exactly `[−R, R]^d` and must be tiled by blocks.
/// `expand`: the box grows to the smallest block-tiled box containing `[−R, R]^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Alignment {
    #[default]
    Strict,
    Expand,
}

/// Box and block layout as declared in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub d: usize,
    pub half_side: i64,
    #[serde(default)]
    pub boundary: Boundary,
    #[serde(rename = "K", default = "one")]
    pub k: i64,
    #[serde(default)]
    pub laplacian: Laplacian,
    #[serde(default)]
    pub align: Alignment,
    #[serde(default = "default_cap")]
    pub site_cap: usize,
}

fn one() -> i64 {
    1
}

fn default_cap() -> usize {
    DEFAULT_SITE_CAP
}

impl BoxConfig {
    pub fn new(d: usize, half_side: i64, boundary: Boundary, k: i64) -> Self {
        Self {
            d,
            half_side,
            boundary,
            k,
            laplacian: Laplacian::Adjacency,
            align: Alignment::Strict,
            site_cap: DEFAULT_SITE_CAP,
        }
    }

    pub fn expanded(mut self) -> Self {
        self.align = Alignment::Expand;
        self
    }

    pub fn with_laplacian(mut self, laplacian: Laplacian) -> Self {
        self.laplacian = laplacian;
        self
    }

    pub fn build(&self) -> Result<Lattice> {
        Lattice::new(self)
    }
}

/// Validated box geometry together with its block layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    config: BoxConfig,
    d: usize,
    k: i64,
    /// lowest site coordinate on every axis
    lo: i64,
    side: usize,
    blocks_per_side: usize,
}

impl Lattice {
    pub fn new(config: &BoxConfig) -> Result<Self> {
        let BoxConfig {
            d,
            half_side,
            boundary,
            k,
            align,
            site_cap,
            ..
        } = *config;
        if d == 0 {
            return Err(Error::InvalidBox("dimension must be at least 1".into()));
        }
        if half_side < 0 {
            return Err(Error::InvalidBox(format!("half_side must be non-negative, got {half_side}")));
        }
        if k < 1 {
            return Err(Error::InvalidBox(format!("K must be at least 1, got {k}")));
        }
        let (lo, hi) = match align {
            Alignment::Strict => {
                if (-half_side).rem_euclid(k) != 0 || (half_side + 1).rem_euclid(k) != 0 {
                    return Err(Error::Misaligned { k, half_side });
                }
                (-half_side, half_side)
            }
            Alignment::Expand => (
                k * (-half_side).div_euclid(k),
                k * half_side.div_euclid(k) + k - 1,
            ),
        };
        let side = (hi - lo + 1) as usize;
        let sites = side
            .checked_pow(d as u32)
            .filter(|&n| n <= site_cap)
            .ok_or_else(|| {
                Error::InvalidBox(format!(
                    "{side}^{d} sites exceed the cap of {site_cap}"
                ))
            })?;
        if boundary == Boundary::Periodic && side < 3 {
            return Err(Error::InvalidBox(format!(
                "periodic boundary needs at least 3 sites per side, got {side}"
            )));
        }
        debug_assert!(sites > 0);
        Ok(Self {
            config: config.clone(),
            d,
            k,
            lo,
            side,
            blocks_per_side: side / k as usize,
        })
    }

    pub fn config(&self) -> &BoxConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> i64 {
        self.k
    }

    /// Rank of each projection, `N = K^d`.
    pub fn block_rank(&self) -> usize {
        (self.k as usize).pow(self.d as u32)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn n_sites(&self) -> usize {
        self.side.pow(self.d as u32)
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks_per_side.pow(self.d as u32)
    }

    pub fn boundary(&self) -> Boundary {
        self.config.boundary
    }

    /// Largest `L` with every block `‖j‖_∞ ≤ K·L` inside the box.
    pub fn block_radius(&self) -> i64 {
        let lo_b = self.lo / self.k;
        let hi_b = lo_b + self.blocks_per_side as i64 - 1;
        lo_b.abs().max(hi_b.abs())
    }

    pub fn site_coords(&self, index: usize) -> Vec<i64> {
        let mut out = vec![0; self.d];
        let mut rest = index;
        for axis in (0..self.d).rev() {
            out[axis] = self.lo + (rest % self.side) as i64;
            rest /= self.side;
        }
        out
    }

    pub fn site_index(&self, coords: &[i64]) -> Option<usize> {
        let mut idx = 0usize;
        for &c in coords {
            let off = c - self.lo;
            if off < 0 || off >= self.side as i64 {
                return None;
            }
            idx = idx * self.side + off as usize;
        }
        Some(idx)
    }

    /// Corner `j ∈ K·Z^d` of block `b` (canonical lexicographic block order).
    pub fn block_corner(&self, block: usize) -> Vec<i64> {
        let mut out = vec![0; self.d];
        let mut rest = block;
        for axis in (0..self.d).rev() {
            out[axis] = self.lo + self.k * (rest % self.blocks_per_side) as i64;
            rest /= self.blocks_per_side;
        }
        out
    }

    pub fn block_index(&self, corner: &[i64]) -> Option<usize> {
        let mut idx = 0usize;
        for &c in corner {
            if c.rem_euclid(self.k) != 0 {
                return None;
            }
            let off = (c - self.lo) / self.k;
            if off < 0 || off >= self.blocks_per_side as i64 {
                return None;
            }
            idx = idx * self.blocks_per_side + off as usize;
        }
        Some(idx)
    }

    pub fn origin_block(&self) -> usize {
        self.block_index(&vec![0; self.d]).expect("the origin block lies in every box")
    }

    /// Block containing site `index`.
    pub fn block_of_site(&self, index: usize) -> usize {
        let coords = self.site_coords(index);
        let corner: Vec<i64> = coords.iter().map(|&c| self.k * c.div_euclid(self.k)).collect();
        self.block_index(&corner).expect("aligned boxes are tiled by blocks")
    }

    /// Sites of block `block`, ordered lexicographically by offset within the block.
    pub fn block_sites(&self, block: usize) -> Vec<usize> {
        let corner = self.block_corner(block);
        let n = self.block_rank();
        let k = self.k as usize;
        (0..n)
            .map(|m| {
                let mut rest = m;
                let mut coords = corner.clone();
                for axis in (0..self.d).rev() {
                    coords[axis] += (rest % k) as i64;
                    rest /= k;
                }
                self.site_index(&coords).expect("block lies inside the box")
            })
            .collect()
    }

    /// `max_i |j_i|` for the block corner.
    pub fn block_sup_norm(&self, block: usize) -> i64 {
        self.block_corner(block).iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    /// Nearest-neighbour pairs `(a, b)` with `a < b` along each axis, wrapped when periodic.
    fn bonds(&self) -> Vec<(usize, usize)> {
        let n = self.n_sites();
        let mut stride = 1usize;
        let mut bonds = Vec::with_capacity(n * self.d);
        for _ in 0..self.d {
            for site in 0..n {
                let pos = (site / stride) % self.side;
                if pos + 1 < self.side {
                    bonds.push((site, site + stride));
                } else if self.boundary() == Boundary::Periodic {
                    let wrapped = site - pos * stride;
                    bonds.push((wrapped.min(site), wrapped.max(site)));
                }
            }
            stride *= self.side;
        }
        bonds
    }

    /// One iid draw from `measure` per block, in canonical block order.
    pub fn sample_disorder<R: Rng + ?Sized>(&self, measure: &Measure, rng: &mut R) -> Disorder {
        Disorder(measure.sample(rng, self.n_blocks()))
    }

    pub fn constant_disorder(&self, value: f64) -> Disorder {
        Disorder(vec![value; self.n_blocks()])
    }

    /// Zero `ω_j` for `‖j‖_∞ > K·L`.
    pub fn truncate_disorder(&self, disorder: &Disorder, l: i64) -> Disorder {
        let cutoff = self.k * l;
        Disorder(
            disorder
                .0
                .iter()
                .enumerate()
                .map(|(b, &w)| if self.block_sup_norm(b) <= cutoff { w } else { 0.0 })
                .collect(),
        )
    }

    pub fn operator(&self, disorder: &Disorder) -> Result<LatticeOperator> {
        LatticeOperator::build(self.clone(), disorder.clone())
    }
}

/// Disorder values `ω_j`, one per block in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disorder(pub Vec<f64>);

impl Disorder {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Assembled sparse symmetric operator on a box.
#[derive(Debug, Clone)]
pub struct LatticeOperator {
    lattice: Lattice,
    disorder: Disorder,
    matrix: CsMat<f64>,
    site_block: Vec<usize>,
}

impl LatticeOperator {
    pub fn build(lattice: Lattice, disorder: Disorder) -> Result<Self> {
        let n = lattice.n_sites();
        if disorder.0.len() != lattice.n_blocks() {
            return Err(Error::InvalidArgument(format!(
                "disorder has {} values for {} blocks",
                disorder.0.len(),
                lattice.n_blocks()
            )));
        }
        if disorder.0.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("disorder values must be finite".into()));
        }
        let shift = match lattice.config.laplacian {
            Laplacian::Adjacency => 0.0,
            Laplacian::Graph => 2.0 * lattice.d as f64,
        };
        let site_block: Vec<usize> = (0..n).map(|s| lattice.block_of_site(s)).collect();
        let bonds = lattice.bonds();
        let mut tri = TriMat::with_capacity((n, n), n + 2 * bonds.len());
        for (s, &b) in site_block.iter().enumerate() {
            let v = disorder.0[b] + shift;
            if v != 0.0 {
                tri.add_triplet(s, s, v);
            }
        }
        for &(a, b) in &bonds {
            tri.add_triplet(a, b, -1.0);
            tri.add_triplet(b, a, -1.0);
        }
        Ok(Self {
            lattice,
            disorder,
            matrix: tri.to_csr(),
            site_block,
        })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn disorder(&self) -> &Disorder {
        &self.disorder
    }

    pub fn matrix(&self) -> &CsMat<f64> {
        &self.matrix
    }

    pub fn n_sites(&self) -> usize {
        self.lattice.n_sites()
    }

    pub fn block_of_site(&self, site: usize) -> usize {
        self.site_block[site]
    }

    /// Sites covered by `P₀`.
    pub fn origin_sites(&self) -> Vec<usize> {
        self.lattice.block_sites(self.lattice.origin_block())
    }

    /// `[−2d + min ω, 2d + max ω]`, shifted by `2d` for the graph Laplacian.
    pub fn gershgorin(&self) -> (f64, f64) {
        let two_d = 2.0 * self.lattice.d as f64;
        let shift = match self.lattice.config.laplacian {
            Laplacian::Adjacency => 0.0,
            Laplacian::Graph => two_d,
        };
        (
            -two_d + self.disorder.min() + shift,
            two_d + self.disorder.max() + shift,
        )
    }

    pub fn dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.n_sites();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for (v, (i, j)) in self.matrix.iter() {
            m[(i, j)] += *v;
        }
        m
    }

    /// `(row, col, value)` for every stored entry, row-major.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out: Vec<(usize, usize, f64)> =
            self.matrix.iter().map(|(v, (i, j))| (i, j, *v)).collect();
        out.sort_by_key(|&(i, j, _)| (i, j));
        out
    }

    pub fn write_coo_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
        w.write_record(["row", "col", "value"]).map_err(csv_error)?;
        for (i, j, v) in self.triplets() {
            w.write_record([i.to_string(), j.to_string(), format!("{v:e}")])
                .map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Reads back a coordinate-list CSV written by [`LatticeOperator::write_coo_csv`].
pub fn read_coo_csv(path: &Path) -> Result<Vec<(usize, usize, f64)>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    let mut out = Vec::new();
    for rec in r.deserialize() {
        let (i, j, v): (usize, usize, f64) = rec.map_err(csv_error)?;
        out.push((i, j, v));
    }
    Ok(out)
}
