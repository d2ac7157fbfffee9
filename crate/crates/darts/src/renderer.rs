//! Transient path tracer with pluggable sampling strategies: plain
//! exponential transport (vanilla), diffusion-guided distance sampling,
//! tabulated elliptical direction sampling, and generalized shadow
//! connections with exact path-time control.

use crate::distance::{
    gen_candidates, ris_resample, sample_scatter_event, DistanceSampleContext, N_RIS,
};
use crate::eda::{mis_sample_direction, EdaTable};
use crate::ellipse::EllipseParams;
use crate::elliptical::{feasible, sample_control_vertex, ControlEvent, TimeWindow};
use crate::film::{Image, TransientImage};
use crate::math::{Point3, Vec3};
use crate::medium::{hg_eval, hg_sample, transmittance};
use crate::scene::{Emitter, Hit, Ray, Rgb, Scene};
use crate::sobol::qrng_row;
use crate::DartsError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateMode {
    TimeGated,
    Transient,
}

/// Sensor response over the gate window. The tabulated profile holds values
/// at uniformly spaced nodes across [gate_start, gate_start + gate_width],
/// interpolated linearly.
#[derive(Debug, Clone, PartialEq)]
pub enum GateProfile {
    Rectangle,
    Tabulated(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct SensorGate {
    pub mode: GateMode,
    /// Gate window start, seconds of absolute path time.
    pub gate_start: f64,
    pub gate_width: f64,
    pub frame_count: usize,
    /// Include the camera-segment transport time in recorded path times.
    pub warp: bool,
    pub profile: GateProfile,
}

impl SensorGate {
    pub fn gated(gate_start: f64, gate_width: f64) -> SensorGate {
        SensorGate {
            mode: GateMode::TimeGated,
            gate_start,
            gate_width,
            frame_count: 1,
            warp: true,
            profile: GateProfile::Rectangle,
        }
    }

    pub fn transient(gate_start: f64, gate_width: f64, frame_count: usize) -> SensorGate {
        SensorGate { mode: GateMode::Transient, frame_count, ..SensorGate::gated(gate_start, gate_width) }
    }

    pub fn validate(&self) -> Result<(), DartsError> {
        if !(self.gate_width > 0.0) {
            return Err(DartsError::Scene(format!(
                "gate width must be positive, got {}",
                self.gate_width
            )));
        }
        if self.frame_count == 0 {
            return Err(DartsError::Scene("frame count must be >= 1".into()));
        }
        if let GateProfile::Tabulated(values) = &self.profile {
            if values.len() < 2 {
                return Err(DartsError::Scene("tabulated profile needs >= 2 nodes".into()));
            }
            if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(DartsError::Scene("tabulated profile must be finite and >= 0".into()));
            }
        }
        Ok(())
    }

    /// Full gate window [start, start + width).
    pub fn window(&self) -> TimeWindow {
        TimeWindow::new(self.gate_start, self.gate_start + self.gate_width)
    }

    /// Window of one transient frame; frames tile the gate evenly.
    pub fn frame_window(&self, frame: usize) -> TimeWindow {
        debug_assert!(frame < self.frame_count);
        let step = self.gate_width / self.frame_count as f64;
        TimeWindow::new(
            self.gate_start + frame as f64 * step,
            self.gate_start + (frame + 1) as f64 * step,
        )
    }

    /// Response at `path_time` restricted to `window` (half-open).
    pub fn weight_in(&self, path_time: f64, window: &TimeWindow) -> f64 {
        if !(path_time >= window.t_min && path_time < window.t_max) {
            return 0.0;
        }
        match &self.profile {
            GateProfile::Rectangle => 1.0,
            GateProfile::Tabulated(values) => {
                let n = values.len();
                let x = ((path_time - self.gate_start) / self.gate_width * (n - 1) as f64)
                    .clamp(0.0, (n - 1) as f64);
                let i = (x as usize).min(n - 2);
                let frac = x - i as f64;
                values[i] * (1.0 - frac) + values[i + 1] * frac
            }
        }
    }

    pub fn sensor_weight(&self, path_time: f64) -> f64 {
        self.weight_in(path_time, &self.window())
    }
}

/// Which sampling components are active, plus shared walk limits.
#[derive(Debug, Clone)]
pub struct StrategyConfig {
    pub use_da_distance: bool,
    pub use_eda_direction: bool,
    pub use_elliptical_connection: bool,
    /// Knob of the adaptive elliptical/phase mixture probability.
    pub alpha: f64,
    pub n_ris: usize,
    pub max_depth: usize,
    pub rr_start_depth: usize,
    /// Discrete surface-branch weight for control-vertex sampling, in mean
    /// free paths.
    pub surface_branch_mfp: f64,
}

impl StrategyConfig {
    fn base() -> StrategyConfig {
        StrategyConfig {
            use_da_distance: false,
            use_eda_direction: false,
            use_elliptical_connection: false,
            alpha: 0.5,
            n_ris: N_RIS,
            max_depth: 200,
            rr_start_depth: 16,
            surface_branch_mfp: 1.0,
        }
    }

    pub fn vanilla() -> StrategyConfig {
        StrategyConfig::base()
    }

    /// Diffusion-guided distance sampling only.
    pub fn da_only() -> StrategyConfig {
        StrategyConfig { use_da_distance: true, ..StrategyConfig::base() }
    }

    /// Elliptical direction sampling only.
    pub fn eda_only() -> StrategyConfig {
        StrategyConfig { use_eda_direction: true, ..StrategyConfig::base() }
    }

    /// All components.
    pub fn darts() -> StrategyConfig {
        StrategyConfig {
            use_da_distance: true,
            use_eda_direction: true,
            use_elliptical_connection: true,
            ..StrategyConfig::base()
        }
    }

    pub fn validate(&self) -> Result<(), DartsError> {
        if self.n_ris == 0 || !self.n_ris.is_power_of_two() {
            return Err(DartsError::Scene(format!("n_ris must be a power of two, got {}", self.n_ris)));
        }
        if self.max_depth == 0 {
            return Err(DartsError::Scene("max_depth must be >= 1".into()));
        }
        if !(self.alpha >= 0.0) {
            return Err(DartsError::Scene(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Per-render counters; rejections are emitter-connection attempts whose
/// sensor weight evaluated to zero.
#[derive(Debug, Default, Clone, Copy)]
pub struct Diagnostics {
    pub connection_attempts: u64,
    pub zero_weight_rejections: u64,
    pub nonfinite_paths: u64,
}

impl Diagnostics {
    pub fn merge(&mut self, o: &Diagnostics) {
        self.connection_attempts += o.connection_attempts;
        self.zero_weight_rejections += o.zero_weight_rejections;
        self.nonfinite_paths += o.nonfinite_paths;
    }

    pub fn rejection_fraction(&self) -> f64 {
        if self.connection_attempts == 0 {
            0.0
        } else {
            self.zero_weight_rejections as f64 / self.connection_attempts as f64
        }
    }
}

pub fn luminance(c: Rgb) -> f64 {
    0.2126 * c.x + 0.7152 * c.y + 0.0722 * c.z
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Independent stream per (pixel, sample); results are therefore identical
/// for any thread count.
pub fn path_rng(seed: u64, pixel: usize, sample: usize) -> ChaCha8Rng {
    let mixed = splitmix64(splitmix64(seed ^ splitmix64(pixel as u64)) ^ sample as u64);
    ChaCha8Rng::seed_from_u64(mixed)
}

#[derive(Clone, Copy)]
enum VertexKind {
    Camera,
    Medium,
    Surface(Hit),
}

/// Classic next-event estimation straight to the emitter.
#[allow(clippy::too_many_arguments)]
fn direct_connection(
    scene: &Scene,
    kind: &VertexKind,
    position: Point3,
    incoming: Vec3,
    elapsed: f64,
    window: TimeWindow,
    gate: &SensorGate,
    emitter: &Emitter,
    beta: Rgb,
    diag: &mut Diagnostics,
) -> Rgb {
    let medium = &scene.medium;
    let to_e = emitter.position - position;
    let d_e = to_e.length();
    if d_e < 1e-12 {
        return Rgb::ZERO;
    }
    let dir_e = to_e / d_e;
    let local = match kind {
        VertexKind::Camera => return Rgb::ZERO,
        VertexKind::Medium => Rgb::splat(hg_eval(incoming.dot(dir_e).clamp(-1.0, 1.0), medium.g)),
        VertexKind::Surface(hit) => {
            scene.materials[hit.material].eval(incoming, dir_e, hit.normal)
                * dir_e.dot(hit.normal).max(0.0)
        }
    };
    if !(local.max_component() > 0.0) {
        return Rgb::ZERO;
    }
    let time = elapsed + medium.time_of(d_e);
    let w = gate.weight_in(time, &window);
    diag.connection_attempts += 1;
    if w == 0.0 {
        diag.zero_weight_rejections += 1;
        return Rgb::ZERO;
    }
    debug_assert!(time >= window.t_min && time < window.t_max);
    if scene.occluded(position, emitter.position) {
        return Rgb::ZERO;
    }
    beta.mul_elem(local).mul_elem(emitter.intensity) * (transmittance(d_e, medium) * w / (d_e * d_e))
}

/// Next-event estimation through a control vertex placed so that the
/// finished path time lands inside the window. The surface hit of the
/// already-cast continuation ray is reused for the surface branch.
#[allow(clippy::too_many_arguments)]
fn generalized_connection<R: Rng>(
    scene: &Scene,
    position: Point3,
    omega: Vec3,
    dir_weight: Rgb,
    elapsed: f64,
    window: TimeWindow,
    gate: &SensorGate,
    emitter: &Emitter,
    hit: Option<Hit>,
    beta: Rgb,
    strategy: &StrategyConfig,
    rng: &mut R,
    diag: &mut Diagnostics,
) -> Rgb {
    let medium = &scene.medium;
    let (s_m_raw, s_max) = window.residual_lengths(elapsed, medium);
    if !(s_max > 0.0) {
        return Rgb::ZERO;
    }
    let branch_len =
        if medium.sigma_t > 0.0 { strategy.surface_branch_mfp * medium.mfp() } else { 1.0 };
    let Some(cv) = sample_control_vertex(
        position,
        omega,
        emitter.position,
        s_m_raw.max(0.0),
        s_max,
        hit.map(|h| h.distance),
        medium,
        branch_len,
        rng,
    ) else {
        return Rgb::ZERO;
    };
    match cv.event {
        ControlEvent::Medium => {
            if medium.sigma_s == 0.0 {
                return Rgb::ZERO;
            }
            let to_e = emitter.position - cv.position;
            let d_e = to_e.length();
            if d_e < 1e-12 {
                return Rgb::ZERO;
            }
            let dir_e = to_e / d_e;
            // s_sum equals t + d_e by construction; using it keeps the
            // resulting time inside the window without geometric roundoff
            let time = elapsed + medium.time_of(cv.s_sum);
            let w = gate.weight_in(time, &window);
            diag.connection_attempts += 1;
            if w == 0.0 {
                diag.zero_weight_rejections += 1;
                return Rgb::ZERO;
            }
            debug_assert!(time >= window.t_min && time < window.t_max);
            if scene.occluded(cv.position, emitter.position) {
                return Rgb::ZERO;
            }
            let phase = hg_eval(omega.dot(dir_e).clamp(-1.0, 1.0), medium.g);
            beta.mul_elem(dir_weight).mul_elem(emitter.intensity)
                * (transmittance(cv.t, medium) * medium.sigma_s * phase
                    * transmittance(d_e, medium)
                    * w
                    / (d_e * d_e * cv.pdf_t * cv.branch_prob))
        }
        ControlEvent::Surface => {
            let h = hit.expect("surface control event implies a surface hit");
            let to_e = emitter.position - h.position;
            let d_e = to_e.length();
            if d_e < 1e-12 {
                return Rgb::ZERO;
            }
            let dir_e = to_e / d_e;
            let f = scene.materials[h.material].eval(omega, dir_e, h.normal);
            let cos = dir_e.dot(h.normal).max(0.0);
            if !(f.max_component() * cos > 0.0) {
                return Rgb::ZERO;
            }
            let time = elapsed + medium.time_of(h.distance + d_e);
            let w = gate.weight_in(time, &window);
            diag.connection_attempts += 1;
            if w == 0.0 {
                diag.zero_weight_rejections += 1;
                return Rgb::ZERO;
            }
            if scene.occluded(h.position + h.normal * 1e-6, emitter.position) {
                return Rgb::ZERO;
            }
            beta.mul_elem(dir_weight).mul_elem(f).mul_elem(emitter.intensity)
                * (transmittance(h.distance, medium) * cos * transmittance(d_e, medium) * w
                    / (d_e * d_e * cv.branch_prob))
        }
    }
}

/// Connection from the camera vertex when the camera segment carries no time
/// (warp off). The elliptical construction does not apply, so the control
/// vertex uses plain exponential placement and the exact time is weighted by
/// the sensor response.
#[allow(clippy::too_many_arguments)]
fn unwarped_camera_connection<R: Rng>(
    scene: &Scene,
    position: Point3,
    omega: Vec3,
    elapsed: f64,
    window: TimeWindow,
    gate: &SensorGate,
    emitter: &Emitter,
    hit: Option<Hit>,
    beta: Rgb,
    rng: &mut R,
    diag: &mut Diagnostics,
) -> Rgb {
    let medium = &scene.medium;
    let d_max = hit.map_or(f64::INFINITY, |h| h.distance);
    let (is_medium, p_m) = if medium.sigma_t > 0.0 {
        sample_scatter_event(d_max, medium, rng.random())
    } else {
        (false, 0.0)
    };
    if is_medium {
        if medium.sigma_s == 0.0 {
            return Rgb::ZERO;
        }
        // branch probability times the truncated-exponential density is the
        // plain exponential density; transmittance to the vertex cancels
        let t = -(1.0 - p_m * rng.random::<f64>()).ln() / medium.sigma_t;
        let x = position + omega * t;
        let to_e = emitter.position - x;
        let d_e = to_e.length();
        if d_e < 1e-12 {
            return Rgb::ZERO;
        }
        let dir_e = to_e / d_e;
        let time = elapsed + medium.time_of(d_e);
        let w = gate.weight_in(time, &window);
        diag.connection_attempts += 1;
        if w == 0.0 {
            diag.zero_weight_rejections += 1;
            return Rgb::ZERO;
        }
        if scene.occluded(x, emitter.position) {
            return Rgb::ZERO;
        }
        let phase = hg_eval(omega.dot(dir_e).clamp(-1.0, 1.0), medium.g);
        beta.mul_elem(emitter.intensity)
            * (medium.sigma_s / medium.sigma_t * phase * transmittance(d_e, medium) * w
                / (d_e * d_e))
    } else {
        let Some(h) = hit else { return Rgb::ZERO };
        let to_e = emitter.position - h.position;
        let d_e = to_e.length();
        if d_e < 1e-12 {
            return Rgb::ZERO;
        }
        let dir_e = to_e / d_e;
        let f = scene.materials[h.material].eval(omega, dir_e, h.normal);
        let cos = dir_e.dot(h.normal).max(0.0);
        if !(f.max_component() * cos > 0.0) {
            return Rgb::ZERO;
        }
        let time = elapsed + medium.time_of(d_e);
        let w = gate.weight_in(time, &window);
        diag.connection_attempts += 1;
        if w == 0.0 {
            diag.zero_weight_rejections += 1;
            return Rgb::ZERO;
        }
        if scene.occluded(h.position + h.normal * 1e-6, emitter.position) {
            return Rgb::ZERO;
        }
        // surface branch probability exp(-sigma_t d_surf) cancels the
        // transmittance of the camera segment
        beta.mul_elem(f).mul_elem(emitter.intensity)
            * (cos * transmittance(d_e, medium) * w / (d_e * d_e))
    }
}

/// One full random walk for the given camera ray and target window. Returns
/// the summed weighted contribution; non-finite paths are discarded.
#[allow(clippy::too_many_arguments)]
pub fn trace_transient_path<R: Rng>(
    scene: &Scene,
    camera_ray: Ray,
    window: TimeWindow,
    gate: &SensorGate,
    strategy: &StrategyConfig,
    table: Option<&EdaTable>,
    rng: &mut R,
    diag: &mut Diagnostics,
) -> Rgb {
    if scene.emitters.is_empty() {
        return Rgb::ZERO;
    }
    let medium = &scene.medium;
    // one emitter per path; the pick density folds into the throughput
    let emitter_index = rng.random_range(0..scene.emitters.len());
    let emitter = scene.emitters[emitter_index];
    let mut beta = Rgb::splat(scene.emitters.len() as f64);
    let mut elapsed = emitter.emission_start;
    let mut position = camera_ray.origin;
    let mut incoming = camera_ray.direction;
    let mut kind = VertexKind::Camera;
    let mut depth = 0usize;
    let mut result = Rgb::ZERO;

    loop {
        if depth >= strategy.max_depth {
            break;
        }
        if !feasible(position, emitter.position, elapsed, window.t_max, medium) {
            break;
        }
        if depth >= strategy.rr_start_depth {
            let survival = luminance(beta).clamp(0.0, 1.0);
            if survival < 1.0 {
                if rng.random::<f64>() >= survival {
                    break;
                }
                beta = beta / survival;
            }
        }

        if !strategy.use_elliptical_connection {
            let c = direct_connection(
                scene, &kind, position, incoming, elapsed, window, gate, &emitter, beta, diag,
            );
            if !c.is_finite() {
                diag.nonfinite_paths += 1;
                return Rgb::ZERO;
            }
            result += c;
        }

        // outgoing direction at this vertex
        let (omega, dir_weight) = match &kind {
            VertexKind::Camera => (incoming, Rgb::splat(1.0)),
            VertexKind::Medium => {
                let mut sampled = None;
                if strategy.use_eda_direction {
                    let s_max = medium.length_of(window.t_max - elapsed);
                    if let Some(ellipse) = EllipseParams::new(position, emitter.position, s_max) {
                        let ms = mis_sample_direction(
                            incoming,
                            &ellipse,
                            medium,
                            table,
                            strategy.alpha,
                            rng,
                        );
                        if ms.mixture_pdf > 0.0 {
                            let w = hg_eval(incoming.dot(ms.direction).clamp(-1.0, 1.0), medium.g)
                                / ms.mixture_pdf;
                            sampled = Some((ms.direction, Rgb::splat(w)));
                        }
                    }
                }
                sampled.unwrap_or_else(|| {
                    // phase sampling is exact, so the weight is 1
                    let (dir, _) = hg_sample(incoming, medium.g, rng.random(), rng.random());
                    (dir, Rgb::splat(1.0))
                })
            }
            VertexKind::Surface(hit) => {
                match scene.materials[hit.material].sample(incoming, hit.normal, rng.random(), rng.random())
                {
                    Some(bs) => (bs.direction, bs.weight),
                    None => break,
                }
            }
        };
        if !(dir_weight.max_component() > 0.0) {
            break;
        }

        // cast once; the hit serves both the connection and the continuation
        let hit = scene.intersect(&Ray::new(position, omega));
        let d_surf = hit.map_or(f64::INFINITY, |h| h.distance);
        let camera_step = matches!(kind, VertexKind::Camera);

        if strategy.use_elliptical_connection {
            let c = if camera_step && !gate.warp {
                unwarped_camera_connection(
                    scene, position, omega, elapsed, window, gate, &emitter, hit, beta, rng, diag,
                )
            } else {
                generalized_connection(
                    scene, position, omega, dir_weight, elapsed, window, gate, &emitter, hit,
                    beta, strategy, rng, diag,
                )
            };
            if !c.is_finite() {
                diag.nonfinite_paths += 1;
                return Rgb::ZERO;
            }
            result += c;
        }

        // distance sampling along omega
        enum Advance {
            Medium { d: f64, scale: f64 },
            Surface,
        }
        let advance = if medium.sigma_t == 0.0 {
            if hit.is_none() {
                break;
            }
            Advance::Surface
        } else if strategy.use_da_distance {
            let (is_medium, p_m) = sample_scatter_event(d_surf, medium, rng.random());
            if !is_medium {
                if hit.is_none() {
                    break;
                }
                Advance::Surface
            } else {
                let ctx = DistanceSampleContext {
                    ray_origin: position,
                    ray_direction: omega,
                    d_max: d_surf,
                    residual_time: window.t_max - elapsed,
                    emitter_position: emitter.position,
                    medium: *medium,
                };
                let us: Vec<f64> = if strategy.n_ris == N_RIS {
                    qrng_row(rng).to_vec()
                } else {
                    (0..strategy.n_ris).map(|_| rng.random()).collect()
                };
                let cands = gen_candidates(&ctx, &us);
                match ris_resample(&cands, rng.random()) {
                    Some((d, weight)) => Advance::Medium {
                        d,
                        scale: medium.sigma_s * (-medium.sigma_t * d).exp() * weight / p_m,
                    },
                    None => {
                        // no causal candidate: degrade to truncated-exponential
                        let d = -(1.0 - p_m * rng.random::<f64>()).ln() / medium.sigma_t;
                        Advance::Medium { d, scale: medium.sigma_s / medium.sigma_t }
                    }
                }
            }
        } else {
            let d = -(1.0 - rng.random::<f64>()).ln() / medium.sigma_t;
            if d >= d_surf {
                Advance::Surface
            } else {
                Advance::Medium { d, scale: medium.sigma_s / medium.sigma_t }
            }
        };

        match advance {
            Advance::Medium { d, scale } => {
                beta = beta.mul_elem(dir_weight) * scale;
                position = position + omega * d;
                if !(camera_step && !gate.warp) {
                    elapsed += medium.time_of(d);
                }
                incoming = omega;
                kind = VertexKind::Medium;
            }
            Advance::Surface => {
                let h = hit.unwrap();
                beta = beta.mul_elem(dir_weight);
                position = h.position;
                if !(camera_step && !gate.warp) {
                    elapsed += medium.time_of(h.distance);
                }
                incoming = omega;
                kind = VertexKind::Surface(h);
            }
        }
        if !beta.is_finite() {
            diag.nonfinite_paths += 1;
            return Rgb::ZERO;
        }
        if !(beta.max_component() > 0.0) {
            break;
        }
        depth += 1;
    }
    result
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    if threads == 0 {
        f()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool")
            .install(f)
    }
}

/// One image integrating the whole gate window. `threads` = 0 uses the
/// global pool; the result is identical for any thread count.
pub fn render_time_gated(
    scene: &Scene,
    gate: &SensorGate,
    strategy: &StrategyConfig,
    table: Option<&EdaTable>,
    spp: usize,
    seed: u64,
) -> (Image, Diagnostics) {
    render_time_gated_threads(scene, gate, strategy, table, spp, seed, 0)
}

#[allow(clippy::too_many_arguments)]
pub fn render_time_gated_threads(
    scene: &Scene,
    gate: &SensorGate,
    strategy: &StrategyConfig,
    table: Option<&EdaTable>,
    spp: usize,
    seed: u64,
    threads: usize,
) -> (Image, Diagnostics) {
    assert!(spp > 0);
    gate.validate().expect("valid gate");
    strategy.validate().expect("valid strategy");
    let (w, h) = (scene.camera.width, scene.camera.height);
    let window = gate.window();
    let per_pixel: Vec<(Rgb, Diagnostics)> = with_pool(threads, || {
        (0..w * h)
            .into_par_iter()
            .map(|p| {
                let (px, py) = (p % w, p / w);
                let mut sum = Rgb::ZERO;
                let mut diag = Diagnostics::default();
                for s in 0..spp {
                    let mut rng = path_rng(seed, p, s);
                    let ray = scene.camera.primary_ray(px, py, rng.random(), rng.random());
                    sum += trace_transient_path(
                        scene, ray, window, gate, strategy, table, &mut rng, &mut diag,
                    );
                }
                (sum / spp as f64, diag)
            })
            .collect()
    });
    let mut image = Image::new(w, h);
    let mut diag = Diagnostics::default();
    for (p, (rgb, d)) in per_pixel.iter().enumerate() {
        image.data[p * 3] = rgb.x as f32;
        image.data[p * 3 + 1] = rgb.y as f32;
        image.data[p * 3 + 2] = rgb.z as f32;
        diag.merge(d);
    }
    (image, diag)
}

/// Frame sequence tiling the gate window. Samples are assigned to frames
/// round-robin, so per-pixel frame counts differ by at most one.
pub fn render_transient(
    scene: &Scene,
    gate: &SensorGate,
    strategy: &StrategyConfig,
    table: Option<&EdaTable>,
    spp: usize,
    seed: u64,
) -> (TransientImage, Diagnostics) {
    render_transient_threads(scene, gate, strategy, table, spp, seed, 0)
}

#[allow(clippy::too_many_arguments)]
pub fn render_transient_threads(
    scene: &Scene,
    gate: &SensorGate,
    strategy: &StrategyConfig,
    table: Option<&EdaTable>,
    spp: usize,
    seed: u64,
    threads: usize,
) -> (TransientImage, Diagnostics) {
    assert!(spp > 0);
    assert!(gate.mode == GateMode::Transient, "render_transient needs a transient gate");
    gate.validate().expect("valid gate");
    strategy.validate().expect("valid strategy");
    let (w, h) = (scene.camera.width, scene.camera.height);
    let frames = gate.frame_count;
    let windows: Vec<TimeWindow> = (0..frames).map(|j| gate.frame_window(j)).collect();
    let per_pixel: Vec<(Vec<Rgb>, Diagnostics)> = with_pool(threads, || {
        (0..w * h)
            .into_par_iter()
            .map(|p| {
                let (px, py) = (p % w, p / w);
                let mut sums = vec![Rgb::ZERO; frames];
                let mut counts = vec![0usize; frames];
                let mut diag = Diagnostics::default();
                for s in 0..spp {
                    let frame = s % frames;
                    let mut rng = path_rng(seed, p, s);
                    let ray = scene.camera.primary_ray(px, py, rng.random(), rng.random());
                    sums[frame] += trace_transient_path(
                        scene, ray, windows[frame], gate, strategy, table, &mut rng, &mut diag,
                    );
                    counts[frame] += 1;
                }
                for (sum, &n) in sums.iter_mut().zip(&counts) {
                    if n > 0 {
                        *sum = *sum / n as f64;
                    }
                }
                (sums, diag)
            })
            .collect()
    });
    let mut out = TransientImage { width: w, height: h, frames: vec![Image::new(w, h); frames] };
    let mut diag = Diagnostics::default();
    for (p, (sums, d)) in per_pixel.iter().enumerate() {
        for (j, rgb) in sums.iter().enumerate() {
            out.frames[j].data[p * 3] = rgb.x as f32;
            out.frames[j].data[p * 3 + 1] = rgb.y as f32;
            out.frames[j].data[p * 3 + 2] = rgb.z as f32;
        }
        diag.merge(d);
    }
    (out, diag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::integrate_gl;
    use crate::scene::{Camera, Material, Primitive};
    use crate::stats::mean_and_sem;
    use crate::Medium;

    fn camera_1x1(position: Point3, look_at: Point3, fov_y: f64) -> Camera {
        Camera { position, look_at, up: Vec3::new(0.0, 1.0, 0.0), fov_y, width: 1, height: 1 }
    }

    fn infinite_medium_scene(medium: Medium, emitter: Point3) -> Scene {
        Scene::new(
            Vec::new(),
            Vec::new(),
            vec![Emitter { position: emitter, intensity: Rgb::splat(1.0), emission_start: 0.0 }],
            medium,
            camera_1x1(Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0), 1.0),
        )
    }

    #[test]
    fn rectangle_weight_half_open() {
        let gate = SensorGate::gated(2.0, 1.0);
        assert_eq!(gate.sensor_weight(2.0), 1.0);
        assert_eq!(gate.sensor_weight(2.5), 1.0);
        assert_eq!(gate.sensor_weight(3.0), 0.0);
        assert_eq!(gate.sensor_weight(1.999_999), 0.0);
    }

    #[test]
    fn tabulated_two_peak_lookup() {
        let mut gate = SensorGate::gated(0.0, 4.0);
        gate.profile = GateProfile::Tabulated(vec![0.0, 1.0, 0.2, 1.0, 0.0]);
        assert_eq!(gate.sensor_weight(2.0), 0.2); // valley node
        assert_eq!(gate.sensor_weight(1.0), 1.0);
        assert!((gate.sensor_weight(1.5) - 0.6).abs() < 1e-12); // midway lerp
        assert_eq!(gate.sensor_weight(4.0), 0.0);
        assert_eq!(gate.sensor_weight(5.0), 0.0);
    }

    #[test]
    fn gate_and_strategy_validation() {
        assert!(SensorGate::gated(0.0, 0.0).validate().is_err());
        let mut g = SensorGate::gated(0.0, 1.0);
        g.profile = GateProfile::Tabulated(vec![1.0]);
        assert!(g.validate().is_err());
        g.profile = GateProfile::Tabulated(vec![1.0, -0.1]);
        assert!(g.validate().is_err());
        let mut s = StrategyConfig::darts();
        assert!(s.validate().is_ok());
        s.n_ris = 6;
        assert!(s.validate().is_err());
    }

    #[test]
    fn frame_windows_tile_the_gate() {
        let gate = SensorGate::transient(1.0, 2.0, 5);
        let mut prev = 1.0;
        for j in 0..5 {
            let w = gate.frame_window(j);
            assert!((w.t_min - prev).abs() < 1e-12);
            prev = w.t_max;
        }
        assert!((prev - 3.0).abs() < 1e-12);
    }

    #[test]
    fn no_emitter_gives_zero() {
        let medium = Medium::new(1.0, 0.1, 0.0, 1.0, 1.0).unwrap();
        let scene = Scene::new(
            Vec::new(),
            Vec::new(),
            Vec::new(),
            medium,
            camera_1x1(Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0), 1.0),
        );
        let gate = SensorGate::gated(0.0, 10.0);
        for strategy in [StrategyConfig::vanilla(), StrategyConfig::darts()] {
            let (img, _) = render_time_gated(&scene, &gate, &strategy, None, 8, 1);
            assert!(img.data.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn gate_before_ballistic_arrival_is_zero() {
        let medium = Medium::new(2.0, 0.1, 0.0, 1.0, 1.0).unwrap();
        let scene = infinite_medium_scene(medium, Vec3::new(0.0, 0.0, 2.0));
        // earliest possible path time is the 2 m camera-emitter separation
        let gate = SensorGate::gated(0.0, 1.0);
        for strategy in [StrategyConfig::vanilla(), StrategyConfig::darts()] {
            let (img, _) = render_time_gated(&scene, &gate, &strategy, None, 64, 7);
            assert!(img.data.iter().all(|&v| v == 0.0), "{strategy:?}");
        }
    }

    #[test]
    fn vacuum_single_bounce_matches_inverse_square() {
        let vacuum = Medium::new(0.0, 0.0, 0.0, 1.0, 1.0).unwrap();
        let scene = Scene::new(
            vec![Primitive::Quad {
                origin: Vec3::new(-5.0, -5.0, 0.0),
                edge_u: Vec3::new(10.0, 0.0, 0.0),
                edge_v: Vec3::new(0.0, 10.0, 0.0),
                material: 0,
            }],
            vec![Material::Lambert { albedo: Rgb::splat(0.6) }],
            vec![Emitter {
                position: Vec3::new(0.0, 0.0, -2.0),
                intensity: Rgb::splat(2.0),
                emission_start: 0.0,
            }],
            vacuum,
            camera_1x1(Vec3::new(0.0, 0.0, -1.0), Vec3::ZERO, 1.0),
        );
        let gate = SensorGate::gated(0.0, 100.0);
        let (img, _) = render_time_gated(&scene, &gate, &StrategyConfig::vanilla(), None, 32, 3);
        let expected = 0.6 / std::f64::consts::PI * 2.0 / 4.0;
        for c in img.pixel(0, 0) {
            assert!(
                ((c as f64) - expected).abs() < 0.01 * expected,
                "got {c}, expected {expected}"
            );
        }
    }

    #[test]
    fn warp_shifts_recorded_time_by_camera_segment() {
        let vacuum = Medium::new(0.0, 0.0, 0.0, 1.0, 1.0).unwrap();
        let scene = Scene::new(
            vec![Primitive::Quad {
                origin: Vec3::new(-5.0, -5.0, 0.0),
                edge_u: Vec3::new(10.0, 0.0, 0.0),
                edge_v: Vec3::new(0.0, 10.0, 0.0),
                material: 0,
            }],
            vec![Material::Lambert { albedo: Rgb::splat(0.6) }],
            vec![Emitter {
                position: Vec3::new(0.0, 0.0, -2.0),
                intensity: Rgb::splat(1.0),
                emission_start: 0.0,
            }],
            vacuum,
            camera_1x1(Vec3::new(0.0, 0.0, -1.0), Vec3::ZERO, 1.0),
        );
        // single-bounce time: warped = 1 (camera) + 2 (to emitter) = 3,
        // unwarped = 2
        let mut warped_gate = SensorGate::gated(2.5, 1.0);
        warped_gate.warp = true;
        let mut unwarped_gate = SensorGate::gated(1.5, 1.0);
        unwarped_gate.warp = false;
        let strategy = StrategyConfig::vanilla();
        let (a, _) = render_time_gated(&scene, &warped_gate, &strategy, None, 16, 5);
        let (b, _) = render_time_gated(&scene, &unwarped_gate, &strategy, None, 16, 5);
        assert!(a.pixel(0, 0)[0] > 0.0);
        assert_eq!(a.data, b.data);
        // the unshifted unwarped gate misses the path entirely
        let mut missing = SensorGate::gated(2.5, 1.0);
        missing.warp = false;
        let (c, _) = render_time_gated(&scene, &missing, &strategy, None, 16, 5);
        assert!(c.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_scatter_matches_quadrature() {
        let medium = Medium::new(1.0, 0.1, 0.0, 1.0, 1.0).unwrap();
        let emitter = Vec3::new(1.0, 0.0, 1.0);
        let scene = infinite_medium_scene(medium, emitter);
        let gate = SensorGate::gated(1.5, 1.0);
        let window = gate.window();
        let mut strategy = StrategyConfig::vanilla();
        strategy.max_depth = 2; // single scattering only
        let d_e = |d: f64| (Vec3::new(0.0, 0.0, d) - emitter).length();
        let time = |d: f64| d + d_e(d); // monotone in d
        let solve = |target: f64| {
            let (mut lo, mut hi) = (0.0, 10.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if time(mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        let (d_lo, d_hi) = (solve(1.5), solve(2.5));
        let sigma_t = medium.sigma_t;
        let expected = integrate_gl(
            |d| {
                let r = d_e(d);
                (-sigma_t * d).exp() * medium.sigma_s / (4.0 * std::f64::consts::PI)
                    * (-sigma_t * r).exp()
                    / (r * r)
            },
            d_lo,
            d_hi,
            512,
        );
        let mut samples = Vec::with_capacity(100_000);
        let mut diag = Diagnostics::default();
        for i in 0..100_000 {
            let mut rng = path_rng(99, 0, i);
            let ray = Ray::new(Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0));
            let c = trace_transient_path(
                &scene, ray, window, &gate, &strategy, None, &mut rng, &mut diag,
            );
            samples.push(c.x);
        }
        let (mean, sem) = mean_and_sem(&samples);
        assert!(
            (mean - expected).abs() < 3.0 * sem,
            "mean {mean} expected {expected} sem {sem}"
        );
    }

    #[test]
    fn elliptical_connection_never_rejected_in_infinite_medium() {
        let medium = Medium::new(2.0, 0.2, 0.0, 1.0, 1.0).unwrap();
        let scene = infinite_medium_scene(medium, Vec3::new(0.5, 0.0, 1.5));
        let gate = SensorGate::gated(2.0, 0.2);
        let (_, darts_diag) =
            render_time_gated(&scene, &gate, &StrategyConfig::darts(), None, 2000, 11);
        assert!(darts_diag.connection_attempts > 1000);
        assert_eq!(darts_diag.zero_weight_rejections, 0);
        let (_, vanilla_diag) =
            render_time_gated(&scene, &gate, &StrategyConfig::vanilla(), None, 2000, 11);
        assert!(
            vanilla_diag.rejection_fraction() > 0.3,
            "vanilla rejection {}",
            vanilla_diag.rejection_fraction()
        );
    }

    #[test]
    fn thread_count_invariance() {
        let medium = Medium::new(1.5, 0.1, 0.3, 1.0, 1.0).unwrap();
        let mut scene_camera = camera_1x1(Vec3::new(0.0, 0.0, -2.0), Vec3::ZERO, 40.0);
        scene_camera.width = 4;
        scene_camera.height = 4;
        let scene = Scene::new(
            vec![Primitive::Sphere { center: Vec3::ZERO, radius: 0.5, material: 0 }],
            vec![Material::Lambert { albedo: Rgb::splat(0.5) }],
            vec![Emitter {
                position: Vec3::new(0.0, 1.2, 0.0),
                intensity: Rgb::splat(1.0),
                emission_start: 0.0,
            }],
            medium,
            scene_camera,
        );
        let gate = SensorGate::gated(2.0, 2.0);
        let strategy = StrategyConfig::darts();
        let (a, _) = render_time_gated_threads(&scene, &gate, &strategy, None, 16, 42, 1);
        let (b, _) = render_time_gated_threads(&scene, &gate, &strategy, None, 16, 42, 3);
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn transient_frames_respect_causality_and_partition() {
        let medium = Medium::new(1.0, 0.05, 0.0, 1.0, 1.0).unwrap();
        let scene = infinite_medium_scene(medium, Vec3::new(0.0, 0.0, 2.0));
        let gate = SensorGate::transient(0.0, 4.0, 8);
        for strategy in [StrategyConfig::vanilla(), StrategyConfig::darts()] {
            let (t, _) = render_transient(&scene, &gate, &strategy, None, 64, 2);
            assert_eq!(t.frames.len(), 8);
            // ballistic arrival at t = 2: the first four frames end at or
            // before it and must be exactly zero
            for frame in &t.frames[..4] {
                assert!(frame.data.iter().all(|&v| v == 0.0));
            }
            let tail: f32 = t.frames[4..].iter().flat_map(|f| f.data.iter()).sum();
            assert!(tail > 0.0);
        }
    }

    #[test]
    fn variance_scales_inversely_with_spp() {
        // bounded-contribution configuration: connections to a point emitter
        // inside a scattering volume carry an unbounded 1/d^2 factor, so this
        // check uses a diffuse surface in vacuum where the estimator variance
        // is finite and the 1/spp law holds
        let vacuum = Medium::new(0.0, 0.0, 0.0, 1.0, 1.0).unwrap();
        let scene = Scene::new(
            vec![Primitive::Quad {
                origin: Vec3::new(-5.0, -5.0, 0.0),
                edge_u: Vec3::new(10.0, 0.0, 0.0),
                edge_v: Vec3::new(0.0, 10.0, 0.0),
                material: 0,
            }],
            vec![Material::Lambert { albedo: Rgb::splat(0.6) }],
            vec![Emitter {
                position: Vec3::new(0.8, 0.3, -2.0),
                intensity: Rgb::splat(2.0),
                emission_start: 0.0,
            }],
            vacuum,
            camera_1x1(Vec3::new(0.0, 0.0, -1.0), Vec3::ZERO, 1.0),
        );
        let gate = SensorGate::gated(0.0, 100.0);
        let strategy = StrategyConfig::vanilla();
        let var_at = |spp: usize| {
            let values: Vec<f64> = (0..100)
                .map(|seed| {
                    let (img, _) = render_time_gated(&scene, &gate, &strategy, None, spp, seed);
                    img.data[0] as f64
                })
                .collect();
            let (mean, _) = mean_and_sem(&values);
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (values.len() - 1) as f64
        };
        let ratio = var_at(8) / var_at(64);
        assert!((3.0..21.0).contains(&ratio), "variance ratio {ratio}, expected near 8");
    }
}
