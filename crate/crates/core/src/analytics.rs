//! Closed-form speedup and roofline models.
//!
//! One speculative round costs one target pass plus `N` draft passes, each
//! `1/S` of a target pass, and yields the `G = alpha * N` accepted tokens plus
//! the bonus token:
//!
//! ```text
//! speedup = (G + 1) / (1 + N/S) = (alpha + 1/N) / (1/N + 1/S)
//! ```
//!
//! In a two-level hierarchy the level-1 draft is itself decoded
//! speculatively, so its effective speed is `S' = S1 * speedup(inner)`; the
//! outer speedup is evaluated with `S'` in place of `S1`. This multiplicative
//! composition is a modeling assumption, cross-checked by [`simulate_rounds`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qgemm::{gemm_bytes, BenchRecord, GemmPath, GemmShape};

/// Parameters of one speculative level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedupParams {
    /// Acceptance ratio in `[0, 1]`.
    pub alpha: f64,
    /// Speculation length; need not be integral for the closed form.
    pub n: f64,
    /// Draft speed relative to the verifier.
    pub s: f64,
}

impl SpeedupParams {
    pub fn new(alpha: f64, n: f64, s: f64) -> Self {
        SpeedupParams { alpha, n, s }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.n.is_finite() && !self.s.is_nan()) {
            return Err(Error::Config(format!("non-finite speedup parameters {self:?}")));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.n <= 0.0 {
            return Err(Error::Config(format!("speculation length {} must be positive", self.n)));
        }
        if self.s <= 0.0 {
            return Err(Error::Config(format!("relative draft speed {} must be positive", self.s)));
        }
        Ok(())
    }

    /// Expected accepted tokens per round.
    pub fn expected_accepted(&self) -> f64 {
        self.alpha * self.n
    }
}

/// Two-level hierarchy: `outer.s` is the level-1 draft's speed relative to
/// the target (`S1`); `inner.s` is the level-2 draft's speed relative to the
/// level-1 draft (`S2 / S1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiLevelParams {
    pub outer: SpeedupParams,
    pub inner: SpeedupParams,
}

impl MultiLevelParams {
    /// Builds the hierarchy from speeds relative to the target.
    pub fn from_speeds(alpha_outer: f64, alpha_inner: f64, n_outer: f64, n_inner: f64, s1: f64, s2: f64) -> Self {
        MultiLevelParams {
            outer: SpeedupParams::new(alpha_outer, n_outer, s1),
            inner: SpeedupParams::new(alpha_inner, n_inner, s2 / s1),
        }
    }
}

/// Expected speedup of speculative over greedy decoding.
pub fn speedup_sd(p: SpeedupParams) -> Result<f64> {
    p.validate()?;
    let inv_n = 1.0 / p.n;
    // 1/S evaluates to 0 for an infinite S: drafts are free
    Ok((p.alpha + inv_n) / (inv_n + 1.0 / p.s))
}

/// Speed of a draft level that is itself accelerated by `inner`, relative
/// to the verifier above it.
pub fn effective_draft_speed(inner: SpeedupParams, s1: f64) -> Result<f64> {
    if s1.is_nan() || s1 <= 0.0 {
        return Err(Error::Config(format!("relative draft speed {s1} must be positive")));
    }
    Ok(s1 * speedup_sd(inner)?)
}

pub fn speedup_multilevel(p: MultiLevelParams) -> Result<f64> {
    let s_eff = effective_draft_speed(p.inner, p.outer.s)?;
    speedup_sd(SpeedupParams { s: s_eff, ..p.outer })
}

/// `points` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

/// Grid for [`surface_csv`].
#[derive(Debug, Clone, PartialEq)]
pub enum SurfaceSpec {
    /// Rows `alpha,s,speedup` for every `(alpha, s)` pair.
    Single { alphas: Vec<f64>, n: f64, speeds: Vec<f64> },
    /// Rows `alpha_outer,alpha_inner,speedup` over the product grid.
    Multi {
        alphas_outer: Vec<f64>,
        alphas_inner: Vec<f64>,
        n_outer: f64,
        n_inner: f64,
        s1: f64,
        s2: f64,
    },
}

impl SurfaceSpec {
    /// Single-level surfaces for drafts 4x, 20x and 100x faster, N = 4.
    pub fn single_default(points: usize) -> Self {
        SurfaceSpec::Single {
            alphas: linspace(0.0, 1.0, points),
            n: 4.0,
            speeds: vec![4.0, 20.0, 100.0],
        }
    }

    /// Two-level surface with S1 = 4, S2 = 100, N = 4 at both levels.
    pub fn multi_default(points: usize) -> Self {
        SurfaceSpec::Multi {
            alphas_outer: linspace(0.0, 1.0, points),
            alphas_inner: linspace(0.0, 1.0, points),
            n_outer: 4.0,
            n_inner: 4.0,
            s1: 4.0,
            s2: 100.0,
        }
    }
}

/// One evaluated grid point: the swept coordinates and the speedup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub x: f64,
    pub y: f64,
    pub speedup: f64,
}

pub fn surface_points(spec: &SurfaceSpec) -> Result<Vec<SurfacePoint>> {
    let mut out = Vec::new();
    match spec {
        SurfaceSpec::Single { alphas, n, speeds } => {
            for &s in speeds {
                for &alpha in alphas {
                    let speedup = speedup_sd(SpeedupParams::new(alpha, *n, s))?;
                    out.push(SurfacePoint { x: alpha, y: s, speedup });
                }
            }
        }
        SurfaceSpec::Multi {
            alphas_outer,
            alphas_inner,
            n_outer,
            n_inner,
            s1,
            s2,
        } => {
            for &ao in alphas_outer {
                for &ai in alphas_inner {
                    let p = MultiLevelParams::from_speeds(ao, ai, *n_outer, *n_inner, *s1, *s2);
                    out.push(SurfacePoint { x: ao, y: ai, speedup: speedup_multilevel(p)? });
                }
            }
        }
    }
    Ok(out)
}

/// Dense grid evaluation as CSV with a header row.
pub fn surface_csv(spec: &SurfaceSpec) -> Result<String> {
    let header = match spec {
        SurfaceSpec::Single { .. } => ["alpha", "s", "speedup"],
        SurfaceSpec::Multi { .. } => ["alpha_outer", "alpha_inner", "speedup"],
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for p in surface_points(spec)? {
        w.write_record([p.x.to_string(), p.y.to_string(), p.speedup.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Stream(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// A kernel placed on a roofline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RooflinePoint {
    /// Operations per byte.
    pub intensity: f64,
    /// Bytes per second.
    pub bandwidth: f64,
    /// Operations per second.
    pub compute: f64,
}

impl RooflinePoint {
    pub fn attainable(&self) -> f64 {
        roofline(*self)
    }
}

/// Attainable throughput `min(compute, bandwidth * intensity)`.
pub fn roofline(p: RooflinePoint) -> f64 {
    p.compute.min(p.bandwidth * p.intensity)
}

/// `2 M N K` over the bytes moved by the chosen kernel path.
pub fn intensity_of_gemm(shape: GemmShape, path: GemmPath) -> f64 {
    shape.flops() / gemm_bytes(shape, path) as f64
}

/// Machine roofs. Integer multiply-accumulate runs `int8_speedup` times the
/// `f32` rate, so the int8 path sees a raised compute roof.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Machine {
    pub bandwidth: f64,
    pub f32_compute: f64,
    pub int8_speedup: f64,
}

impl Machine {
    pub fn compute_roof(&self, path: GemmPath) -> f64 {
        match path {
            GemmPath::Int8 => self.f32_compute * self.int8_speedup,
            GemmPath::Reference | GemmPath::LatescaleF32 => self.f32_compute,
        }
    }
}

/// A measured benchmark row joined with its roofline prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RooflineRow {
    pub path: GemmPath,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub intensity: f64,
    pub measured_gflops: f64,
    pub attainable_gflops: f64,
    pub measured_gbps: f64,
}

pub fn roofline_rows(records: &[BenchRecord], machine: Machine) -> Result<Vec<RooflineRow>> {
    records
        .iter()
        .map(|r| {
            let shape = GemmShape::new(r.m, r.n, r.k)?;
            let intensity = intensity_of_gemm(shape, r.path);
            let attainable = roofline(RooflinePoint {
                intensity,
                bandwidth: machine.bandwidth,
                compute: machine.compute_roof(r.path),
            });
            Ok(RooflineRow {
                path: r.path,
                m: r.m,
                n: r.n,
                k: r.k,
                intensity,
                measured_gflops: shape.flops() / r.seconds / 1e9,
                attainable_gflops: attainable / 1e9,
                measured_gbps: r.gbps,
            })
        })
        .collect()
}

/// How accepted counts are drawn in [`simulate_rounds`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimulationMode {
    /// Every round accepts exactly `alpha * N` tokens (must be integral).
    Exact,
    /// Accepted counts are Binomial(N, alpha), seeded.
    Stochastic { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimParams {
    Single(SpeedupParams),
    Multi(MultiLevelParams),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationResult {
    pub rounds: u64,
    pub tokens: u64,
    /// Cost in target-pass units; greedy decoding costs one per token.
    pub cost: f64,
    pub speedup: f64,
}

fn integral(x: f64, what: &str) -> Result<u64> {
    let r = x.round();
    if (x - r).abs() > 1e-9 || r < 0.0 {
        return Err(Error::Config(format!("{what} = {x} must be a non-negative integer")));
    }
    Ok(r as u64)
}

/// Draws accepted-token counts per round.
struct Acceptor {
    n: u64,
    exact: u64,
    binomial: Option<(Binomial, ChaCha8Rng)>,
}

impl Acceptor {
    fn new(p: SpeedupParams, mode: SimulationMode) -> Result<Self> {
        p.validate()?;
        let n = integral(p.n, "speculation length")?;
        match mode {
            SimulationMode::Exact => Ok(Acceptor {
                n,
                exact: integral(p.expected_accepted(), "alpha * N")?,
                binomial: None,
            }),
            SimulationMode::Stochastic { seed } => {
                let dist = Binomial::new(n, p.alpha)
                    .map_err(|e| Error::Config(format!("binomial parameters: {e}")))?;
                Ok(Acceptor {
                    n,
                    exact: 0,
                    binomial: Some((dist, ChaCha8Rng::seed_from_u64(seed))),
                })
            }
        }
    }

    fn draw(&mut self) -> u64 {
        match &mut self.binomial {
            Some((dist, rng)) => dist.sample(rng),
            None => self.exact,
        }
    }
}

/// Discrete round-by-round simulation under the unit-cost model (target pass
/// = 1, draft pass = 1/S).
///
/// In the two-level case the level-1 draft fills each outer request of `N`
/// tokens by running its own rounds against the level-2 draft; tokens it
/// produces beyond the request are carried into the next outer round.
pub fn simulate_rounds(params: SimParams, rounds: u64, mode: SimulationMode) -> Result<SimulationResult> {
    if rounds == 0 {
        return Err(Error::Config("simulation needs at least one round".into()));
    }
    let (outer, inner) = match params {
        SimParams::Single(p) => (p, None),
        SimParams::Multi(m) => (m.outer, Some(m.inner)),
    };
    let mut outer_acc = Acceptor::new(outer, mode)?;
    let inner_mode = match mode {
        SimulationMode::Stochastic { seed } => SimulationMode::Stochastic { seed: seed ^ 0x9e37_79b9_7f4a_7c15 },
        m => m,
    };
    let mut inner_acc = inner.map(|p| Acceptor::new(p, inner_mode)).transpose()?;

    let mut tokens = 0u64;
    // pass counts are kept as integers so the cost is formed once at the end
    let mut target_passes = 0u64;
    let mut draft_passes = 0u64; // level-1 passes
    let mut sub_passes = 0u64; // level-2 passes
    let mut carried = 0u64;
    let n = outer_acc.n;

    for _ in 0..rounds {
        match &mut inner_acc {
            None => draft_passes += n,
            Some(acc) => {
                while carried < n {
                    sub_passes += acc.n;
                    draft_passes += 1;
                    carried += acc.draw() + 1;
                }
                carried -= n;
            }
        }
        target_passes += 1;
        tokens += outer_acc.draw() + 1;
    }

    let s1 = outer.s;
    let cost = match inner {
        None => target_passes as f64 + draft_passes as f64 / s1,
        Some(p) => {
            let s2 = s1 * p.s;
            target_passes as f64 + draft_passes as f64 / s1 + sub_passes as f64 / s2
        }
    };
    Ok(SimulationResult {
        rounds,
        tokens,
        cost,
        speedup: tokens as f64 / cost,
    })
}
