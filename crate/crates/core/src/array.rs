//! Antenna geometry, steering dictionaries, and synthetic multipath channels.
//!
//! A base station carries `A` isotropic antennas at positions measured in
//! meters relative to the array centroid. The *nominal* array is the evenly
//! spaced geometry the hardware was designed for; the *real* array adds a
//! Gaussian placement error along the array axis, which is the hardware
//! impairment the learnable estimator has to absorb. Channels are sparse
//! sums of steering vectors with directions drawn off-grid, so a gridded
//! dictionary can only approximate them.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::CMat;
use crate::rng::{complex_gaussian, derive_seed, rng};

/// Speed of light in m/s, for carrier-frequency → wavelength conversion.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const CHANNEL_STREAM: u64 = 0x6368_616e; // "chan"

/// Antenna positions in meters, recentered so the centroid sits at the
/// origin, plus the carrier wavelength.
#[derive(Debug, Clone, PartialEq)]
pub struct AntennaArray {
    positions: Vec<[f64; 3]>,
    wavelength: f64,
}

impl AntennaArray {
    /// Build an array from raw positions; the centroid is subtracted so the
    /// stored coordinates are always relative to it.
    pub fn new(mut positions: Vec<[f64; 3]>, wavelength: f64) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::Dim("antenna array needs at least one element".into()));
        }
        if !(wavelength.is_finite() && wavelength > 0.0) {
            return Err(Error::Numeric(format!("wavelength must be positive, got {wavelength}")));
        }
        if positions.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("antenna positions must be finite".into()));
        }
        let inv = 1.0 / positions.len() as f64;
        let mut centroid = [0.0; 3];
        for p in &positions {
            for (c, x) in centroid.iter_mut().zip(p) {
                *c += x * inv;
            }
        }
        for p in &mut positions {
            for (x, c) in p.iter_mut().zip(&centroid) {
                *x -= c;
            }
        }
        Ok(AntennaArray { positions, wavelength })
    }

    /// Number of antennas `A`.
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    /// The x-coordinates only — the trainable view for a collinear array.
    pub fn x_positions(&self) -> Vec<f64> {
        self.positions.iter().map(|p| p[0]).collect()
    }
}

/// Evenly spaced line of `a` antennas along x with λ/2 spacing, centered.
pub fn make_nominal_ula(a: usize, wavelength: f64) -> AntennaArray {
    assert!(a >= 2, "a uniform linear array needs at least two antennas");
    let d = wavelength / 2.0;
    let positions = (0..a).map(|i| [i as f64 * d, 0.0, 0.0]).collect();
    AntennaArray::new(positions, wavelength).expect("ULA positions are finite")
}

/// Displace every antenna along the array axis by `λ·η`, η ∼ N(0, std²).
///
/// The result is recentered like any constructed array, so the *relative*
/// geometry carries the impairment while the centroid convention holds.
pub fn perturb_array(nominal: &AntennaArray, std_in_wavelengths: f64, seed: u64) -> AntennaArray {
    assert!(std_in_wavelengths >= 0.0);
    if std_in_wavelengths == 0.0 {
        return nominal.clone();
    }
    let mut g = rng(seed);
    let positions = nominal
        .positions
        .iter()
        .map(|p| {
            let eta: f64 = StandardNormal.sample(&mut g);
            [p[0] + nominal.wavelength * std_in_wavelengths * eta, p[1], p[2]]
        })
        .collect();
    AntennaArray::new(positions, nominal.wavelength).expect("perturbed positions are finite")
}

/// Steering-vector matrix for arbitrary positions: column `n` has entries
/// `(1/√A)·exp(−j·(2π/λ)·⟨a_i, u_n⟩)`.
///
/// This is the single kernel shared by fixed dictionaries and the
/// position-parameterized learned dictionary, so equal positions produce
/// bit-identical atoms regardless of which caller asks.
pub fn dictionary_atoms(positions: &[[f64; 3]], wavelength: f64, directions: &[[f64; 3]]) -> CMat {
    let a = positions.len();
    let scale = 1.0 / (a as f64).sqrt();
    let k = 2.0 * std::f64::consts::PI / wavelength;
    CMat::from_fn(a, directions.len(), |i, n| {
        let (p, u) = (&positions[i], &directions[n]);
        let phase = -k * (p[0] * u[0] + p[1] * u[1] + p[2] * u[2]);
        Complex64::from_polar(scale, phase)
    })
}

/// Unit-norm steering vector of the array toward a unit direction vector.
pub fn steering_vector(array: &AntennaArray, direction: [f64; 3]) -> Result<CMat> {
    let n2 = direction.iter().map(|x| x * x).sum::<f64>();
    if (n2 - 1.0).abs() > 1e-9 {
        return Err(Error::Numeric(format!(
            "steering direction must be a unit vector, got squared norm {n2}"
        )));
    }
    Ok(dictionary_atoms(&array.positions, array.wavelength, &[direction]))
}

/// Azimuth grid of `n` directions uniform in sine-angle (spatial frequency):
/// `ux = −1 + (2k+1)/n`, `u = (ux, √(1−ux²), 0)`.
///
/// Midpoint placement keeps every direction strictly inside the visible
/// region, and sine-uniform spacing spreads ULA atoms evenly in phase slope.
pub fn grid_directions(n: usize) -> Vec<[f64; 3]> {
    (0..n)
        .map(|k| {
            let ux = -1.0 + (2 * k + 1) as f64 / n as f64;
            [ux, (1.0 - ux * ux).sqrt(), 0.0]
        })
        .collect()
}

/// How the atoms of a [`SteeringDictionary`] relate to trainable parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DictionaryParameterization {
    /// Atoms are constants (nominal or oracle dictionaries).
    Fixed,
    /// Every complex entry is free (2AN real degrees of freedom).
    FreeEntries,
    /// Atoms are regenerated from `A` trainable x-positions in meters.
    Positions,
}

/// A bank of `N ≥ A` candidate steering vectors over an azimuth grid.
#[derive(Debug, Clone)]
pub struct SteeringDictionary {
    pub atoms: CMat,
    pub directions: Vec<[f64; 3]>,
    pub parameterization: DictionaryParameterization,
}

/// Fixed dictionary of the array's steering vectors over [`grid_directions`].
pub fn build_dictionary(array: &AntennaArray, n: usize) -> SteeringDictionary {
    assert!(n >= array.len(), "dictionary must have at least A atoms");
    let directions = grid_directions(n);
    let atoms = dictionary_atoms(&array.positions, array.wavelength, &directions);
    SteeringDictionary { atoms, directions, parameterization: DictionaryParameterization::Fixed }
}

/// Per-path average power law for synthetic channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainProfile {
    /// `E|β_p|² = exp(−p/2)`, complex Gaussian gains (default).
    ExpDecay,
    /// Every gain exactly 1 (diagnostic).
    Unit,
}

/// One synthetic channel plus the ground-truth geometry that produced it.
#[derive(Debug, Clone)]
pub struct SampledChannel {
    /// `h = Σ_p β_p·e(u_p)`, an A×1 column.
    pub channel: CMat,
    pub directions: Vec<[f64; 3]>,
    pub gains: Vec<Complex64>,
}

/// Draw one channel: `P ∼ U{1..paths_max}` paths, each with an off-grid
/// direction (sine-angle uniform on [−1, 1)) and a gain from the profile.
///
/// Randomness is consumed in a fixed order — path count, then per path the
/// direction followed by the gain — so streams are reproducible.
pub fn sample_channel(
    real_array: &AntennaArray,
    paths_max: usize,
    profile: GainProfile,
    g: &mut impl Rng,
) -> SampledChannel {
    assert!(paths_max >= 1);
    let p = g.gen_range(1..=paths_max);
    let mut channel = CMat::zeros(real_array.len(), 1);
    let mut directions = Vec::with_capacity(p);
    let mut gains = Vec::with_capacity(p);
    for path in 1..=p {
        let ux = 2.0 * g.gen::<f64>() - 1.0;
        let dir = [ux, (1.0 - ux * ux).sqrt(), 0.0];
        let beta = match profile {
            GainProfile::Unit => Complex64::new(1.0, 0.0),
            GainProfile::ExpDecay => complex_gaussian(g, (-(path as f64) / 2.0).exp()),
        };
        let atom = steering_vector(real_array, dir).expect("grid directions are unit");
        for (h, &e) in channel.col_mut(0).iter_mut().zip(atom.col(0)) {
            *h += beta * e;
        }
        directions.push(dir);
        gains.push(beta);
    }
    SampledChannel { channel, directions, gains }
}

/// A reproducible pool of synthetic channels with the geometry that made it.
#[derive(Debug, Clone)]
pub struct ChannelDataset {
    /// Each entry is an A×1 column vector.
    pub channels: Vec<CMat>,
    /// True number of propagation paths per channel.
    pub path_counts: Vec<usize>,
    pub nominal_array: AntennaArray,
    pub real_array: AntennaArray,
    pub seed: u64,
    pub paths_max: usize,
    /// Free-form split tag, conventionally `train` or `test`.
    pub split: String,
}

impl ChannelDataset {
    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    /// Number of antennas `A`.
    pub fn antennas(&self) -> usize {
        self.real_array.len()
    }

    /// Stack the chosen channels as columns of an A×U matrix.
    pub fn stack_columns(&self, indices: &[usize]) -> CMat {
        let blocks: Vec<&CMat> = indices.iter().map(|&i| &self.channels[i]).collect();
        CMat::hstack(&blocks).expect("channels share A")
    }

    /// Mean squared channel norm, the scale reference for SNR calibration.
    pub fn mean_norm_sq(&self) -> f64 {
        assert!(!self.channels.is_empty());
        self.channels.iter().map(|h| h.frob_norm_sq()).sum::<f64>() / self.channels.len() as f64
    }
}

/// Generate `count` channels on the real array, deterministically per seed.
pub fn generate_channels(
    nominal_array: &AntennaArray,
    real_array: &AntennaArray,
    count: usize,
    paths_max: usize,
    profile: GainProfile,
    seed: u64,
    split: &str,
) -> Result<ChannelDataset> {
    if nominal_array.len() != real_array.len()
        || nominal_array.wavelength() != real_array.wavelength()
    {
        return Err(Error::Dim("nominal and real arrays must share A and wavelength".into()));
    }
    if count == 0 {
        return Err(Error::Config("channel count must be positive".into()));
    }
    let mut channels = Vec::with_capacity(count);
    let mut path_counts = Vec::with_capacity(count);
    for i in 0..count {
        let mut g = rng(derive_seed(seed, &[CHANNEL_STREAM, i as u64]));
        let s = sample_channel(real_array, paths_max, profile, &mut g);
        if !s.channel.is_finite() || s.channel.frob_norm_sq() == 0.0 {
            return Err(Error::Numeric(format!("degenerate channel at index {i}")));
        }
        path_counts.push(s.gains.len());
        channels.push(s.channel);
    }
    Ok(ChannelDataset {
        channels,
        path_counts,
        nominal_array: nominal_array.clone(),
        real_array: real_array.clone(),
        seed,
        paths_max,
        split: split.to_string(),
    })
}

#[derive(Serialize, Deserialize)]
struct DatasetManifest {
    a: usize,
    count: usize,
    wavelength_m: f64,
    seed: u64,
    paths_max: usize,
    split: String,
    nominal_positions: Vec<[f64; 3]>,
    real_positions: Vec<[f64; 3]>,
    path_counts: Vec<usize>,
    payload_sha256: String,
}

/// Encode complex values as little-endian (re, im) double pairs — the
/// shared binary payload format of datasets and checkpoints.
pub(crate) fn complexes_to_le_bytes(values: &[Complex64]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(values.len() * 16);
    for z in values {
        bytes.extend_from_slice(&z.re.to_le_bytes());
        bytes.extend_from_slice(&z.im.to_le_bytes());
    }
    bytes
}

/// Decode the payload format written by [`complexes_to_le_bytes`].
pub(crate) fn le_bytes_to_complexes(bytes: &[u8]) -> Result<Vec<Complex64>> {
    if bytes.len() % 16 != 0 {
        return Err(Error::Format(format!(
            "binary payload length {} is not a multiple of 16",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect())
}

fn payload_bytes(channels: &[CMat]) -> Vec<u8> {
    let a = channels.first().map_or(0, |c| c.rows());
    let mut bytes = Vec::with_capacity(channels.len() * a * 16);
    for ch in channels {
        bytes.extend_from_slice(&complexes_to_le_bytes(ch.data()));
    }
    bytes
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Persist a dataset as `manifest.json` + `channels.bin` under `dir`.
///
/// The payload is little-endian IEEE-754 double pairs (re, im) per entry,
/// column-major within a channel, channels concatenated in order; the
/// manifest stores its SHA-256 so loads detect corruption.
pub fn save_dataset(ds: &ChannelDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let payload = payload_bytes(&ds.channels);
    let manifest = DatasetManifest {
        a: ds.antennas(),
        count: ds.len(),
        wavelength_m: ds.real_array.wavelength(),
        seed: ds.seed,
        paths_max: ds.paths_max,
        split: ds.split.clone(),
        nominal_positions: ds.nominal_array.positions().to_vec(),
        real_positions: ds.real_array.positions().to_vec(),
        path_counts: ds.path_counts.clone(),
        payload_sha256: sha256_hex(&payload),
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Format(format!("manifest encoding failed: {e}")))?;
    std::fs::write(dir.join("manifest.json"), json)?;
    let mut f = std::fs::File::create(dir.join("channels.bin"))?;
    f.write_all(&payload)?;
    Ok(())
}

/// Load a dataset saved by [`save_dataset`], verifying shape and checksum.
pub fn load_dataset(dir: &Path) -> Result<ChannelDataset> {
    let json = std::fs::read_to_string(dir.join("manifest.json"))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&json).map_err(|e| Error::Format(format!("bad manifest: {e}")))?;
    let mut payload = Vec::new();
    std::fs::File::open(dir.join("channels.bin"))?.read_to_end(&mut payload)?;

    let expected = manifest.count * manifest.a * 16;
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "payload holds {} bytes but manifest implies {expected}",
            payload.len()
        )));
    }
    if sha256_hex(&payload) != manifest.payload_sha256 {
        return Err(Error::Format("payload checksum mismatch".into()));
    }
    if manifest.path_counts.len() != manifest.count {
        return Err(Error::Format("path_counts length disagrees with count".into()));
    }
    let mut channels = Vec::with_capacity(manifest.count);
    for s in 0..manifest.count {
        let mut data = Vec::with_capacity(manifest.a);
        for i in 0..manifest.a {
            let off = (s * manifest.a + i) * 16;
            let re = f64::from_le_bytes(payload[off..off + 8].try_into().unwrap());
            let im = f64::from_le_bytes(payload[off + 8..off + 16].try_into().unwrap());
            data.push(Complex64::new(re, im));
        }
        channels.push(CMat::from_col_major(manifest.a, 1, data)?);
    }
    Ok(ChannelDataset {
        channels,
        path_counts: manifest.path_counts,
        nominal_array: AntennaArray::new(manifest.nominal_positions, manifest.wavelength_m)?,
        real_array: AntennaArray::new(manifest.real_positions, manifest.wavelength_m)?,
        seed: manifest.seed,
        paths_max: manifest.paths_max,
        split: manifest.split,
    })
}
