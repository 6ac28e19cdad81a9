//! One-dimensional height-field terrains and the robot-centric elevation map.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TerrainError {
    #[error("invalid terrain spec: {0}")]
    InvalidSpec(String),
}

/// What `height_at` returns outside the sampled range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutOfRange {
    /// Repeat the nearest edge sample.
    Clamp,
    /// Report a pit of the given (positive) depth.
    Pit(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeightField {
    origin: f64,
    spacing: f64,
    samples: Vec<f64>,
    out_of_range: OutOfRange,
}

impl HeightField {
    pub fn new(
        origin: f64,
        spacing: f64,
        samples: Vec<f64>,
        out_of_range: OutOfRange,
    ) -> Result<Self, TerrainError> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(TerrainError::InvalidSpec(format!("spacing must be > 0, got {spacing}")));
        }
        if samples.len() < 2 {
            return Err(TerrainError::InvalidSpec("need at least 2 samples".into()));
        }
        if samples.iter().any(|h| !h.is_finite()) || !origin.is_finite() {
            return Err(TerrainError::InvalidSpec("non-finite sample".into()));
        }
        Ok(Self { origin, spacing, samples, out_of_range })
    }

    /// Flat ground at zero elevation over `[origin, origin + length]`.
    pub fn flat(origin: f64, length: f64, spacing: f64) -> Self {
        let n = ((length / spacing).ceil() as usize + 1).max(2);
        Self { origin, spacing, samples: vec![0.0; n], out_of_range: OutOfRange::Clamp }
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn end(&self) -> f64 {
        self.origin + self.spacing * (self.samples.len() - 1) as f64
    }

    /// Linearly interpolated elevation at `x`.
    pub fn height_at(&self, x: f64) -> f64 {
        let last = self.samples.len() - 1;
        let s = (x - self.origin) / self.spacing;
        if s < 0.0 || s > last as f64 || s.is_nan() {
            return match self.out_of_range {
                OutOfRange::Clamp if s < 0.0 => self.samples[0],
                OutOfRange::Clamp => self.samples[last],
                OutOfRange::Pit(depth) => -depth,
            };
        }
        let i = (s.floor() as usize).min(last - 1);
        let frac = s - i as f64;
        self.samples[i] + frac * (self.samples[i + 1] - self.samples[i])
    }

    /// Two-column text export, one `x elevation` row per sample.
    pub fn to_xy_text(&self) -> String {
        let mut out = String::from("# x_m elevation_m\n");
        for (i, h) in self.samples.iter().enumerate() {
            let x = self.origin + self.spacing * i as f64;
            let _ = writeln!(out, "{x} {h}");
        }
        out
    }
}

/// Row of `cells` elevations centred on the base, each relative to the base
/// height (terrain minus base, so a pit below reads more negative).
pub fn sample_heightmap(
    field: &HeightField,
    base_x: f64,
    base_z: f64,
    cells: usize,
    cell_width: f64,
) -> Vec<f64> {
    let centre = (cells as f64 - 1.0) / 2.0;
    (0..cells)
        .map(|k| {
            let x = base_x + (k as f64 - centre) * cell_width;
            field.height_at(x) - base_z
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerrainKind {
    Flat,
    Rough {
        amplitude: f64,
        correlation_length: f64,
    },
    /// Platforms of `platform_width` separated by pits of `gap_width`.
    Gaps {
        gap_width: f64,
        platform_width: f64,
        pit_depth: f64,
    },
    /// Stones of `stone_width` repeating every `pitch` metres over a pit.
    SteppingStones {
        stone_width: f64,
        pitch: f64,
        pit_depth: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerrainSpec {
    #[serde(flatten)]
    pub kind: TerrainKind,
    /// Extent of the field behind and ahead of x = 0.
    #[serde(default = "default_behind")]
    pub behind: f64,
    #[serde(default = "default_ahead")]
    pub ahead: f64,
    #[serde(default = "default_spacing")]
    pub spacing: f64,
    /// Flat stretch starting at x = 0 where the robot spawns.
    #[serde(default = "default_start_platform")]
    pub start_platform: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_behind() -> f64 {
    5.0
}
fn default_ahead() -> f64 {
    60.0
}
fn default_spacing() -> f64 {
    0.05
}
fn default_start_platform() -> f64 {
    1.5
}

impl TerrainSpec {
    pub fn flat() -> Self {
        Self::with_kind(TerrainKind::Flat)
    }

    pub fn with_kind(kind: TerrainKind) -> Self {
        Self {
            kind,
            behind: default_behind(),
            ahead: default_ahead(),
            spacing: default_spacing(),
            start_platform: default_start_platform(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), TerrainError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(TerrainError::InvalidSpec(format!("{name} must be > 0, got {v}")))
            }
        };
        positive("spacing", self.spacing)?;
        positive("ahead", self.ahead)?;
        if !(self.behind >= 0.0) || !(self.start_platform >= 0.0) {
            return Err(TerrainError::InvalidSpec("behind/start_platform must be >= 0".into()));
        }
        match self.kind {
            TerrainKind::Flat => Ok(()),
            TerrainKind::Rough { amplitude, correlation_length } => {
                positive("amplitude", amplitude)?;
                positive("correlation_length", correlation_length)
            }
            TerrainKind::Gaps { gap_width, platform_width, pit_depth } => {
                positive("gap_width", gap_width)?;
                positive("platform_width", platform_width)?;
                positive("pit_depth", pit_depth)
            }
            TerrainKind::SteppingStones { stone_width, pitch, pit_depth } => {
                positive("stone_width", stone_width)?;
                positive("pitch", pitch)?;
                positive("pit_depth", pit_depth)?;
                if stone_width >= pitch {
                    return Err(TerrainError::InvalidSpec(
                        "stone_width must be smaller than pitch".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Same spec with a different seed.
    pub fn reseeded(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Deterministic in `spec` (including its seed).
pub fn generate(spec: &TerrainSpec) -> Result<HeightField, TerrainError> {
    spec.validate()?;
    let n = ((spec.behind + spec.ahead) / spec.spacing).round() as usize + 1;
    let origin = -spec.behind;
    let xs = (0..n).map(|i| origin + spec.spacing * i as f64);
    let on_platform = |x: f64| x < spec.start_platform;
    let samples: Vec<f64> = match spec.kind {
        TerrainKind::Flat => vec![0.0; n],
        TerrainKind::Gaps { gap_width, platform_width, pit_depth } => xs
            .map(|x| {
                if on_platform(x) {
                    return 0.0;
                }
                // Each period starts with a gap, then a platform.
                let u = (x - spec.start_platform).rem_euclid(gap_width + platform_width);
                if u < gap_width {
                    -pit_depth
                } else {
                    0.0
                }
            })
            .collect(),
        TerrainKind::SteppingStones { stone_width, pitch, pit_depth } => xs
            .map(|x| {
                if on_platform(x) {
                    return 0.0;
                }
                let u = (x - spec.start_platform).rem_euclid(pitch);
                if u >= pitch - stone_width {
                    0.0
                } else {
                    -pit_depth
                }
            })
            .collect(),
        TerrainKind::Rough { amplitude, correlation_length } => {
            rough_profile(n, spec.spacing, amplitude, correlation_length, spec.seed)
        }
    };
    HeightField::new(origin, spec.spacing, samples, OutOfRange::Clamp)
}

/// White noise smoothed with a Gaussian kernel, rescaled to peak |h| = amplitude.
fn rough_profile(n: usize, spacing: f64, amplitude: f64, corr: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let sigma = (corr / spacing).max(0.5);
    let half = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-half..=half)
        .map(|k| (-(k as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let mut smooth = vec![0.0; n];
    for (i, out) in smooth.iter_mut().enumerate() {
        let (mut acc, mut wsum) = (0.0, 0.0);
        for (j, w) in kernel.iter().enumerate() {
            let idx = i as isize + j as isize - half;
            if idx >= 0 && (idx as usize) < n {
                acc += w * noise[idx as usize];
                wsum += w;
            }
        }
        *out = acc / wsum;
    }
    let peak = smooth.iter().fold(0.0_f64, |m, h| m.max(h.abs()));
    if peak > 0.0 {
        for h in &mut smooth {
            *h *= amplitude / peak;
        }
    }
    smooth
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_is_zero_everywhere() {
        let f = generate(&TerrainSpec::flat().reseeded(99)).unwrap();
        assert!(f.samples().iter().all(|&h| h == 0.0));
        assert_eq!(f.height_at(-100.0), 0.0);
        assert_eq!(f.height_at(3.3), 0.0);
    }

    #[test]
    fn gaps_reach_pit_depth() {
        let spec = TerrainSpec::with_kind(TerrainKind::Gaps {
            gap_width: 2.0,
            platform_width: 1.0,
            pit_depth: 3.0,
        });
        let f = generate(&spec).unwrap();
        // first gap spans [start_platform, start_platform + 2)
        let mid_gap = spec.start_platform + 1.0;
        assert_eq!(f.height_at(mid_gap), -3.0);
        assert_eq!(f.height_at(spec.start_platform + 2.5), 0.0);
        assert_eq!(f.height_at(0.0), 0.0);
    }

    #[test]
    fn stepping_stones_alternate() {
        let spec = TerrainSpec::with_kind(TerrainKind::SteppingStones {
            stone_width: 0.4,
            pitch: 1.0,
            pit_depth: 2.0,
        });
        let f = generate(&spec).unwrap();
        let s = spec.start_platform;
        assert_eq!(f.height_at(s + 0.3), -2.0);
        assert_eq!(f.height_at(s + 0.8), 0.0);
        assert_eq!(f.height_at(s + 1.3), -2.0);
    }

    #[test]
    fn rough_is_deterministic_and_bounded() {
        let spec = TerrainSpec::with_kind(TerrainKind::Rough {
            amplitude: 0.1,
            correlation_length: 0.5,
        })
        .reseeded(11);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.samples(), b.samples());
        let peak = a.samples().iter().fold(0.0_f64, |m, h| m.max(h.abs()));
        assert!((peak - 0.1).abs() < 1e-12);
        let c = generate(&spec.reseeded(12)).unwrap();
        assert_ne!(a.samples(), c.samples());
    }

    #[test]
    fn invalid_specs_rejected() {
        let bad = TerrainSpec::with_kind(TerrainKind::Gaps {
            gap_width: 0.0,
            platform_width: 1.0,
            pit_depth: 1.0,
        });
        assert!(matches!(generate(&bad), Err(TerrainError::InvalidSpec(_))));
        let bad = TerrainSpec::with_kind(TerrainKind::Gaps {
            gap_width: 1.0,
            platform_width: 1.0,
            pit_depth: -1.0,
        });
        assert!(generate(&bad).is_err());
        assert!(HeightField::new(0.0, 0.0, vec![0.0, 1.0], OutOfRange::Clamp).is_err());
        assert!(HeightField::new(0.0, 1.0, vec![0.0], OutOfRange::Clamp).is_err());
    }

    #[test]
    fn interpolation_and_out_of_range() {
        let f = HeightField::new(0.0, 1.0, vec![0.0, 1.0], OutOfRange::Clamp).unwrap();
        assert!((f.height_at(0.25) - 0.25).abs() < 1e-15);
        assert_eq!(f.height_at(5.0), 1.0);
        assert_eq!(f.height_at(-5.0), 0.0);
        let pit = HeightField::new(0.0, 1.0, vec![0.0, 1.0], OutOfRange::Pit(4.0)).unwrap();
        assert_eq!(pit.height_at(2.0), -4.0);
    }

    #[test]
    fn heightmap_sign_convention() {
        let f = HeightField::flat(-10.0, 20.0, 0.1);
        let map = sample_heightmap(&f, 0.0, 1.0, 9, 0.3);
        assert_eq!(map, vec![-1.0; 9]);
        let single = sample_heightmap(&f, 2.0, 0.7, 1, 0.3);
        assert_eq!(single, vec![-0.7]);
    }

    #[test]
    fn heightmap_step_under_base() {
        // Step of +0.5 m starting just ahead of x = 0.
        let spacing = 0.001;
        let samples: Vec<f64> = (0..=4000)
            .map(|i| {
                let x = -2.0 + spacing * i as f64;
                if x > 0.0 {
                    0.5
                } else {
                    0.0
                }
            })
            .collect();
        let f = HeightField::new(-2.0, spacing, samples, OutOfRange::Clamp).unwrap();
        let map = sample_heightmap(&f, 0.0, 1.0, 9, 0.3);
        // enumerate cell centres independently
        for (k, h) in map.iter().enumerate() {
            let x = (k as f64 - 4.0) * 0.3;
            let expected = if x > 0.0 { -0.5 } else { -1.0 };
            assert!((h - expected).abs() < 1e-12, "cell {k}: {h}");
        }
    }

    #[test]
    fn xy_export_has_one_row_per_sample() {
        let f = HeightField::flat(0.0, 1.0, 0.5);
        let text = f.to_xy_text();
        assert_eq!(text.lines().count(), 1 + f.samples().len());
    }
}
