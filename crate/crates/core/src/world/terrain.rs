use std::f64::consts::TAU;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::Bounds;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerrainKind {
    Flat,
    Bumpy,
    /// Flat lowland on the left half, bumpy plateau on the right half.
    Combined,
}

impl TerrainKind {
    pub const ALL: [TerrainKind; 3] = [TerrainKind::Flat, TerrainKind::Bumpy, TerrainKind::Combined];

    pub fn name(self) -> &'static str {
        match self {
            TerrainKind::Flat => "flat",
            TerrainKind::Bumpy => "bumpy",
            TerrainKind::Combined => "combined",
        }
    }
}

impl std::str::FromStr for TerrainKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flat" => Ok(TerrainKind::Flat),
            "bumpy" => Ok(TerrainKind::Bumpy),
            "combined" => Ok(TerrainKind::Combined),
            other => Err(format!("unknown terrain kind {other:?}")),
        }
    }
}

const WAVES: usize = 8;

/// Height field sampled on a regular grid that covers the world bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Terrain {
    pub kind: TerrainKind,
    pub cell_size: f64,
    pub amplitude: f64,
    pub seed: u64,
    nx: usize,
    ny: usize,
    origin: [f64; 2],
    heights: Vec<f64>,
}

/// Shape parameters for the Combined arena's junction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Junction {
    /// Height of the bumpy plateau above the lowland.
    pub rise: f64,
    /// Horizontal run of the ramp that climbs from lowland to plateau.
    pub ramp: f64,
}

impl Terrain {
    pub fn generate(
        kind: TerrainKind,
        bounds: &Bounds,
        cell_size: f64,
        amplitude: f64,
        junction: Junction,
        seed: u64,
    ) -> Terrain {
        let nx = (bounds.width() / cell_size).ceil() as usize + 1;
        let ny = (bounds.height() / cell_size).ceil() as usize + 1;
        let mut rng = rng::stream(seed, 0x7e11a1);
        let waves: Vec<[f64; 4]> = (0..WAVES)
            .map(|_| {
                let angle = rng.random_range(0.0..TAU);
                let wavelength = rng.random_range(4.0..9.0);
                let k = TAU / wavelength;
                [k * angle.cos(), k * angle.sin(), rng.random_range(0.0..TAU), rng.random_range(0.5..1.0)]
            })
            .collect();
        let weight: f64 = waves.iter().map(|w| w[3]).sum();
        let noise = |x: f64, y: f64| {
            amplitude * waves.iter().map(|w| w[3] * (w[0] * x + w[1] * y + w[2]).sin()).sum::<f64>()
                / weight
        };
        let mid = bounds.min[0] + bounds.width() / 2.0;
        let mut heights = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let x = bounds.min[0] + i as f64 * cell_size;
                let y = bounds.min[1] + j as f64 * cell_size;
                let h = match kind {
                    TerrainKind::Flat => 0.0,
                    TerrainKind::Bumpy => noise(x, y),
                    TerrainKind::Combined => {
                        let ramp_start = mid - junction.ramp;
                        if x >= mid {
                            junction.rise + noise(x, y)
                        } else if x > ramp_start && junction.ramp > 0.0 {
                            junction.rise * (x - ramp_start) / junction.ramp
                        } else {
                            0.0
                        }
                    }
                };
                heights.push(h);
            }
        }
        Terrain {
            kind,
            cell_size,
            amplitude,
            seed,
            nx,
            ny,
            origin: bounds.min,
            heights,
        }
    }

    pub fn grid_dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    fn node(&self, i: usize, j: usize) -> f64 {
        self.heights[j.min(self.ny - 1) * self.nx + i.min(self.nx - 1)]
    }

    /// Bilinear height; points outside the grid are clamped to its edge.
    pub fn height(&self, x: f64, y: f64) -> f64 {
        if self.kind == TerrainKind::Flat {
            return 0.0;
        }
        let gx = ((x - self.origin[0]) / self.cell_size).clamp(0.0, (self.nx - 1) as f64);
        let gy = ((y - self.origin[1]) / self.cell_size).clamp(0.0, (self.ny - 1) as f64);
        let i = (gx.floor() as usize).min(self.nx.saturating_sub(2));
        let j = (gy.floor() as usize).min(self.ny.saturating_sub(2));
        let fx = gx - i as f64;
        let fy = gy - j as f64;
        let h00 = self.node(i, j);
        let h10 = self.node(i + 1, j);
        let h01 = self.node(i, j + 1);
        let h11 = self.node(i + 1, j + 1);
        h00 * (1.0 - fx) * (1.0 - fy) + h10 * fx * (1.0 - fy) + h01 * (1.0 - fx) * fy + h11 * fx * fy
    }

    /// Central-difference gradient at half a cell.
    pub fn gradient(&self, x: f64, y: f64) -> [f64; 2] {
        if self.kind == TerrainKind::Flat {
            return [0.0, 0.0];
        }
        let e = self.cell_size / 2.0;
        [
            (self.height(x + e, y) - self.height(x - e, y)) / (2.0 * e),
            (self.height(x, y + e) - self.height(x, y - e)) / (2.0 * e),
        ]
    }

    /// Height spread under a disc of the given radius, from the centre and
    /// four rim samples.
    pub fn roughness(&self, x: f64, y: f64, radius: f64) -> f64 {
        if self.kind == TerrainKind::Flat {
            return 0.0;
        }
        let samples = [
            self.height(x, y),
            self.height(x + radius, y),
            self.height(x - radius, y),
            self.height(x, y + radius),
            self.height(x, y - radius),
        ];
        let max = samples.iter().copied().fold(f64::MIN, f64::max);
        let min = samples.iter().copied().fold(f64::MAX, f64::min);
        max - min
    }
}
