//! Tabulated elliptical direction sampling: a 3D table over (C/S, S, cos
//! theta) of the transmittance-weighted transient diffusion flux integrated
//! along the polar chord of the equal-length ellipse, used for inverse
//! transform sampling and combined with phase sampling through one-sample
//! MIS.

use crate::ellipse::{polar_distance, EllipseParams};
use crate::math::Vec3;
use crate::medium::{hg_eval, hg_sample, Medium};
use crate::DartsError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

const CACHE_MAGIC: &[u8; 4] = b"EDAT";
const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdaTableConfig {
    /// Bins along the C/S axis (uniform over [0, 1)).
    pub ratio_bins: usize,
    /// Bins along the S axis (log-spaced, in mean-free-path units).
    pub s_bins: usize,
    /// Angular bins over cos theta in [-1, 1].
    pub angular_bins: usize,
    pub s_min_mfp: f64,
    pub s_max_mfp: f64,
    pub mc_samples_per_bin: usize,
}

impl Default for EdaTableConfig {
    fn default() -> Self {
        EdaTableConfig {
            ratio_bins: 64,
            s_bins: 64,
            angular_bins: 256,
            s_min_mfp: 0.05,
            s_max_mfp: 50.0,
            mc_samples_per_bin: 4096,
        }
    }
}

/// Which technique produced a direction in the one-sample MIS mixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionTechnique {
    Elliptical,
    Phase,
}

pub struct EdaTable {
    /// (sigma_s, sigma_a, g, eta)
    pub fingerprint: [f64; 4],
    pub config: EdaTableConfig,
    /// Raw bin masses, indexed [ratio][s][angular].
    masses: Vec<f64>,
    /// Per-cell normalized CDF over the angular axis; empty cells hold zeros.
    cdfs: Vec<f64>,
    /// Per-cell total mass.
    totals: Vec<f64>,
}

impl EdaTable {
    pub fn fingerprint_of(medium: &Medium) -> [f64; 4] {
        [medium.sigma_s, medium.sigma_a, medium.g, medium.eta]
    }

    fn cell_index(&self, ri: usize, si: usize) -> usize {
        ri * self.config.s_bins + si
    }

    /// Ratio-axis node value for index i.
    fn ratio_node(config: &EdaTableConfig, i: usize) -> f64 {
        i as f64 / config.ratio_bins as f64
    }

    /// S-axis node value (MFP units) for index j, log-spaced.
    fn s_node(config: &EdaTableConfig, j: usize) -> f64 {
        let f = j as f64 / (config.s_bins - 1) as f64;
        config.s_min_mfp * (config.s_max_mfp / config.s_min_mfp).powf(f)
    }

    pub fn angular_bin_width(&self) -> f64 {
        2.0 / self.config.angular_bins as f64
    }

    /// Fractional grid coordinates and bilinear weights of the four
    /// surrounding cells. Returns `None` when S is outside the table range.
    fn locate(&self, ratio: f64, s_mfp: f64) -> Option<[(usize, usize, f64); 4]> {
        let cfg = &self.config;
        if s_mfp < cfg.s_min_mfp || s_mfp > cfg.s_max_mfp || !(0.0..1.0).contains(&ratio) {
            return None;
        }
        let x = (ratio * cfg.ratio_bins as f64).clamp(0.0, (cfg.ratio_bins - 1) as f64);
        let y = ((s_mfp / cfg.s_min_mfp).ln() / (cfg.s_max_mfp / cfg.s_min_mfp).ln()
            * (cfg.s_bins - 1) as f64)
            .clamp(0.0, (cfg.s_bins - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(cfg.ratio_bins - 1);
        let y1 = (y0 + 1).min(cfg.s_bins - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        Some([
            (x0, y0, (1.0 - fx) * (1.0 - fy)),
            (x1, y0, fx * (1.0 - fy)),
            (x0, y1, (1.0 - fx) * fy),
            (x1, y1, fx * fy),
        ])
    }

    /// Bin masses of one cell.
    pub fn cell_masses(&self, ri: usize, si: usize) -> &[f64] {
        let n = self.config.angular_bins;
        let base = self.cell_index(ri, si) * n;
        &self.masses[base..base + n]
    }

    pub fn cell_cdf(&self, ri: usize, si: usize) -> &[f64] {
        let n = self.config.angular_bins;
        let base = self.cell_index(ri, si) * n;
        &self.cdfs[base..base + n]
    }

    pub fn cell_total(&self, ri: usize, si: usize) -> f64 {
        self.totals[self.cell_index(ri, si)]
    }
}

/// Transient diffusion flux expressed in length units: remaining length
/// budget `ell` plays the role of c * dt. The constant phase-speed prefactor
/// is dropped (it cancels in every normalized use).
fn flux_by_length(r_squared: f64, ell: f64, medium: &Medium) -> f64 {
    if ell <= 0.0 {
        return 0.0;
    }
    let d4 = 4.0 * medium.diffusion * ell;
    let norm = (PI * d4).sqrt() * (PI * d4);
    (-r_squared / d4 - medium.sigma_a * ell).exp() / norm
}

/// Chord integrand of the tabulated quantity at polar distance `t` for an
/// ellipse with focal distance `c_focal` and length sum `s_sum`.
pub fn chord_integrand(t: f64, cos_theta: f64, c_focal: f64, s_sum: f64, medium: &Medium) -> f64 {
    let r2 = t * t + c_focal * c_focal - 2.0 * t * c_focal * cos_theta;
    medium.sigma_s * (-medium.sigma_t * t).exp() * flux_by_length(r2.max(0.0), s_sum - t, medium)
}

/// Integrated chord mass over one angular bin [cos_lo, cos_hi] by stratified
/// Monte Carlo with `samples` points.
fn bin_mass_mc<R: Rng>(
    cos_lo: f64,
    cos_hi: f64,
    c_focal: f64,
    s_sum: f64,
    medium: &Medium,
    samples: usize,
    rng: &mut R,
) -> f64 {
    let mut acc = 0.0;
    let inv = 1.0 / samples as f64;
    for k in 0..samples {
        let cos_theta = cos_lo + rng.random::<f64>() * (cos_hi - cos_lo);
        let Some(t_max) = polar_distance(c_focal, s_sum, cos_theta) else {
            continue;
        };
        // stratified along the chord
        let xi = (k as f64 + rng.random::<f64>()) * inv;
        let t = xi * t_max;
        acc += t_max * chord_integrand(t, cos_theta, c_focal, s_sum, medium);
    }
    acc * inv * (cos_hi - cos_lo)
}

/// Deterministic quadrature of the same bin mass, used as an audit oracle.
pub fn bin_mass_quadrature(
    cos_lo: f64,
    cos_hi: f64,
    c_focal: f64,
    s_sum: f64,
    medium: &Medium,
) -> f64 {
    crate::math::integrate_gl(
        |cos_theta| {
            let Some(t_max) = polar_distance(c_focal, s_sum, cos_theta) else {
                return 0.0;
            };
            crate::math::integrate_gl(
                |t| chord_integrand(t, cos_theta, c_focal, s_sum, medium),
                0.0,
                t_max,
                128,
            )
        },
        cos_lo,
        cos_hi,
        32,
    )
}

/// Builds the table by parallel per-cell Monte Carlo. Deterministic for a
/// fixed seed, independent of thread count (each cell owns an RNG substream).
pub fn build_table(medium: &Medium, config: &EdaTableConfig, seed: u64) -> EdaTable {
    assert!(config.ratio_bins >= 2 && config.s_bins >= 2 && config.angular_bins >= 2);
    let n_cells = config.ratio_bins * config.s_bins;
    let nb = config.angular_bins;
    let mfp = medium.mfp();
    let masses: Vec<f64> = (0..n_cells)
        .into_par_iter()
        .flat_map_iter(|cell| {
            let ri = cell / config.s_bins;
            let si = cell % config.s_bins;
            let ratio = EdaTable::ratio_node(config, ri);
            let s_sum = EdaTable::s_node(config, si) * mfp;
            let c_focal = ratio * s_sum;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (cell as u64).wrapping_mul(0x9E3779B97F4A7C15));
            let width = 2.0 / nb as f64;
            let medium = *medium;
            let cfg = *config;
            (0..nb).map(move |b| {
                let lo = -1.0 + b as f64 * width;
                bin_mass_mc(lo, lo + width, c_focal, s_sum, &medium, cfg.mc_samples_per_bin, &mut rng)
            })
        })
        .collect();

    let mut cdfs = vec![0.0; masses.len()];
    let mut totals = vec![0.0; n_cells];
    for cell in 0..n_cells {
        let base = cell * nb;
        let total: f64 = masses[base..base + nb].iter().sum();
        totals[cell] = total;
        if total > 0.0 {
            let mut acc = 0.0;
            for b in 0..nb {
                acc += masses[base + b];
                cdfs[base + b] = acc / total;
            }
            // force exact terminal value
            cdfs[base + nb - 1] = 1.0;
        }
    }
    EdaTable {
        fingerprint: EdaTable::fingerprint_of(medium),
        config: *config,
        masses,
        cdfs,
        totals,
    }
}

/// Signals that a query fell outside the table (caller falls back to phase
/// sampling).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableRangeError;

/// Draws cos theta by inverse transform on the bilinearly interpolated cell
/// mixture and phi uniformly. Returns (cos_theta, phi, solid-angle pdf).
pub fn eda_sample(
    table: &EdaTable,
    c_focal: f64,
    s_sum: f64,
    u1: f64,
    u2: f64,
) -> Result<(f64, f64, f64), TableRangeError> {
    debug_assert!(s_sum > c_focal && c_focal > 0.0);
    let s_mfp = s_sum * table.fingerprint_sigma_t();
    let cells = table.locate(c_focal / s_sum, s_mfp).ok_or(TableRangeError)?;
    let weight_total: f64 =
        cells.iter().map(|&(ri, si, w)| w * table.cell_total(ri, si)).sum();
    if !(weight_total > 0.0) {
        return Err(TableRangeError); // all contributing cells are empty
    }
    // choose a cell proportionally to (bilinear weight * cell mass), then
    // rescale the remaining fraction of u1 for the inverse transform
    let mut threshold = u1 * weight_total;
    let mut sel: Option<(usize, usize, f64)> = None;
    for &(ri, si, w) in &cells {
        let mass = w * table.cell_total(ri, si);
        if mass <= 0.0 {
            continue;
        }
        sel = Some((ri, si, (threshold / mass).clamp(0.0, 1.0 - 1e-12)));
        if threshold < mass {
            break;
        }
        threshold -= mass;
    }
    let (ri, si, u_rest) = sel.expect("positive weight_total implies a positive cell");
    let cdf = table.cell_cdf(ri, si);
    let bin = cdf.partition_point(|&c| c <= u_rest).min(cdf.len() - 1);
    let prev = if bin == 0 { 0.0 } else { cdf[bin - 1] };
    let frac = if cdf[bin] > prev { (u_rest - prev) / (cdf[bin] - prev) } else { 0.5 };
    let width = table.angular_bin_width();
    let cos_theta = (-1.0 + (bin as f64 + frac) * width).clamp(-1.0, 1.0);
    let phi = -PI + 2.0 * PI * u2;
    let pdf = mixture_bin_pdf(table, &cells, weight_total, bin);
    Ok((cos_theta, phi, pdf))
}

/// Solid-angle pdf of the interpolated table distribution at cos theta.
pub fn eda_pdf(
    table: &EdaTable,
    c_focal: f64,
    s_sum: f64,
    cos_theta: f64,
) -> Result<f64, TableRangeError> {
    let s_mfp = s_sum * table.fingerprint_sigma_t();
    let cells = table.locate(c_focal / s_sum, s_mfp).ok_or(TableRangeError)?;
    let weight_total: f64 =
        cells.iter().map(|&(ri, si, w)| w * table.cell_total(ri, si)).sum();
    if !(weight_total > 0.0) {
        return Ok(0.0); // empty cells sample nothing
    }
    let bin = (((cos_theta + 1.0) / table.angular_bin_width()) as usize)
        .min(table.config.angular_bins - 1);
    Ok(mixture_bin_pdf(table, &cells, weight_total, bin))
}

fn mixture_bin_pdf(
    table: &EdaTable,
    cells: &[(usize, usize, f64); 4],
    weight_total: f64,
    bin: usize,
) -> f64 {
    let width = table.angular_bin_width();
    let mass: f64 = cells
        .iter()
        .map(|&(ri, si, w)| w * table.cell_masses(ri, si)[bin])
        .sum();
    mass / (weight_total * width) / (2.0 * PI)
}

impl EdaTable {
    fn fingerprint_sigma_t(&self) -> f64 {
        self.fingerprint[0] + self.fingerprint[1]
    }
}

/// Adaptive probability of choosing elliptical sampling over phase sampling.
pub fn mis_gamma(ratio: f64, alpha: f64) -> f64 {
    debug_assert!(alpha >= 0.0);
    ratio / (ratio + alpha)
}

pub struct MisDirectionSample {
    pub direction: Vec3,
    /// One-sample balance-heuristic mixture pdf at the drawn direction.
    pub mixture_pdf: f64,
    pub technique: DirectionTechnique,
}

/// One-sample MIS between the tabulated elliptical distribution and
/// Henyey-Greenstein phase sampling. `incoming` is the propagation direction
/// arriving at the vertex; `ellipse.s_sum` must equal the maximum residual
/// length budget.
pub fn mis_sample_direction<R: Rng>(
    incoming: Vec3,
    ellipse: &EllipseParams,
    medium: &Medium,
    table: Option<&EdaTable>,
    alpha: f64,
    rng: &mut R,
) -> MisDirectionSample {
    let ratio = ellipse.c_focal / ellipse.s_sum;
    let mut gamma = table.map_or(0.0, |_| mis_gamma(ratio, alpha));
    let mut direction = None;
    if gamma > 0.0 && rng.random::<f64>() < gamma {
        let table = table.unwrap();
        match eda_sample(table, ellipse.c_focal, ellipse.s_sum, rng.random(), rng.random()) {
            Ok((cos_theta, phi, _)) => {
                direction = Some((ellipse.frame.direction(cos_theta, phi), DirectionTechnique::Elliptical));
            }
            Err(TableRangeError) => gamma = 0.0,
        }
    }
    let (direction, technique) = direction.unwrap_or_else(|| {
        let (dir, _) = hg_sample(incoming, medium.g, rng.random(), rng.random());
        (dir, DirectionTechnique::Phase)
    });
    let hg_pdf = hg_eval(incoming.dot(direction).clamp(-1.0, 1.0), medium.g);
    let mixture_pdf = if gamma > 0.0 {
        let eda = eda_pdf(table.unwrap(), ellipse.c_focal, ellipse.s_sum, ellipse.cos_theta(direction))
            .unwrap_or(0.0);
        gamma * eda + (1.0 - gamma) * hg_pdf
    } else {
        hg_pdf
    };
    MisDirectionSample { direction, mixture_pdf, technique }
}

// ---------------------------------------------------------------------------
// cache file
// ---------------------------------------------------------------------------

impl EdaTable {
    pub fn save(&self, path: &Path) -> Result<(), DartsError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(CACHE_MAGIC)?;
        f.write_all(&CACHE_VERSION.to_le_bytes())?;
        for v in self.fingerprint {
            f.write_all(&v.to_le_bytes())?;
        }
        f.write_all(&(self.config.ratio_bins as u32).to_le_bytes())?;
        f.write_all(&(self.config.s_bins as u32).to_le_bytes())?;
        f.write_all(&(self.config.angular_bins as u32).to_le_bytes())?;
        f.write_all(&self.config.s_min_mfp.to_le_bytes())?;
        f.write_all(&self.config.s_max_mfp.to_le_bytes())?;
        f.write_all(&(self.config.mc_samples_per_bin as u64).to_le_bytes())?;
        for m in &self.masses {
            f.write_all(&m.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load(path: &Path, medium: &Medium) -> Result<EdaTable, DartsError> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        f.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(DartsError::Table("bad magic in table cache".into()));
        }
        let version = read_u32(&mut f)?;
        if version != CACHE_VERSION {
            return Err(DartsError::Table(format!("unsupported table version {version}")));
        }
        let mut fingerprint = [0.0; 4];
        for v in &mut fingerprint {
            *v = read_f64(&mut f)?;
        }
        let expected = EdaTable::fingerprint_of(medium);
        if fingerprint != expected {
            return Err(DartsError::Table(format!(
                "medium fingerprint mismatch: cache {fingerprint:?} vs scene {expected:?}"
            )));
        }
        let config = EdaTableConfig {
            ratio_bins: read_u32(&mut f)? as usize,
            s_bins: read_u32(&mut f)? as usize,
            angular_bins: read_u32(&mut f)? as usize,
            s_min_mfp: read_f64(&mut f)?,
            s_max_mfp: read_f64(&mut f)?,
            mc_samples_per_bin: read_u64(&mut f)? as usize,
        };
        let n = config.ratio_bins * config.s_bins * config.angular_bins;
        let mut masses = vec![0.0; n];
        for m in &mut masses {
            *m = read_f64(&mut f)?;
        }
        let n_cells = config.ratio_bins * config.s_bins;
        let nb = config.angular_bins;
        let mut cdfs = vec![0.0; n];
        let mut totals = vec![0.0; n_cells];
        for cell in 0..n_cells {
            let base = cell * nb;
            let total: f64 = masses[base..base + nb].iter().sum();
            totals[cell] = total;
            if total > 0.0 {
                let mut acc = 0.0;
                for b in 0..nb {
                    acc += masses[base + b];
                    cdfs[base + b] = acc / total;
                }
                cdfs[base + nb - 1] = 1.0;
            }
        }
        Ok(EdaTable { fingerprint, config, masses, cdfs, totals })
    }
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
