//! Quantum-jump Monte Carlo sampling of photon-count records.
//!
//! Each trajectory alternates deterministic no-count evolution with
//! instantaneous detection events. Because the atom restarts from a known
//! lower level after every click, a whole record is just a chain of
//! independent waiting-time draws, one per current level. The sampler
//! inverts the closed-form survival curve directly, so no time stepping is
//! involved and arbitrarily long dark periods cost O(1).
//!
//! Ensembles run in parallel with one counter-mode RNG stream per
//! trajectory and a sequential, index-ordered reduction, which makes every
//! statistic reproducible bit for bit regardless of the thread count.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::model::{Channel, Level, SystemParams};
use crate::propagator::{evolve_ode, Amplitudes, AnalyticPropagator, ODE_DEFAULT_TOL};
use crate::statistics::SurvivalCurve;

/// Reproducible generator identity: one `seed` per experiment, one `stream`
/// per trajectory. Streams of a counter-mode generator are statistically
/// independent, so consecutive indices are safe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngKey {
    pub seed: u64,
    pub stream: u64,
}

impl RngKey {
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Result of one waiting-time draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleOutcome {
    /// A photon is detected after delay `dt`.
    Count { channel: Channel, dt: f64 },
    /// No photon ever arrives: the amplitude fell into a dark superposition.
    Trapped,
}

/// Convergence threshold on |survival - u| for the inversion.
const INVERT_TOLERANCE: f64 = 1e-12;
/// Relative bracket width at which the inversion stops refining.
const INVERT_WIDTH: f64 = 1e-15;
const INVERT_MAX_ITERS: usize = 200;
/// Log-spaced survival grid: span and resolution (points per decade).
const GRID_DECADES_BELOW: f64 = -6.0;
const GRID_DECADES_ABOVE: f64 = 6.0;
const GRID_PER_DECADE: usize = 8;
/// Bracket growth attempts past the precomputed grid.
const BRACKET_EXTENSIONS: usize = 64;

/// Inverse-CDF sampler for the delay until the next click from a fixed
/// lower level. Construction precomputes the survival curve on a log-spaced
/// grid so that each draw only needs a local bracketed Newton refinement.
#[derive(Debug, Clone)]
pub struct WaitingSampler {
    curve: SurvivalCurve,
    /// (t, survival(t)) with t ascending, survival nonincreasing.
    grid: Vec<(f64, f64)>,
    trapped: f64,
    gamma1: f64,
    gamma: f64,
}

impl WaitingSampler {
    pub fn new(p: &SystemParams, from: Level) -> Result<Self, CoreError> {
        let prop = AnalyticPropagator::new(p)?;
        Ok(Self::from_propagator(p, &prop, from))
    }

    /// Build from an existing propagator so both levels share the root work.
    pub fn from_propagator(p: &SystemParams, prop: &AnalyticPropagator, from: Level) -> Self {
        let curve = SurvivalCurve::from_propagator(p, prop, from);
        let scale = p.scale();
        let n = ((GRID_DECADES_ABOVE - GRID_DECADES_BELOW) * GRID_PER_DECADE as f64) as usize + 1;
        let mut grid = Vec::with_capacity(n);
        let mut floor = 1.0f64;
        for j in 0..n {
            let exponent = GRID_DECADES_BELOW + j as f64 / GRID_PER_DECADE as f64;
            let t = 10f64.powf(exponent) / scale;
            // Clamp away sub-rounding wiggles so the grid stays monotone.
            floor = floor.min(curve.survival(t));
            grid.push((t, floor));
        }
        let trapped = curve.trapped_mass();
        WaitingSampler {
            curve,
            grid,
            trapped,
            gamma1: p.gamma1(),
            gamma: p.gamma_total(),
        }
    }

    pub fn curve(&self) -> &SurvivalCurve {
        &self.curve
    }

    /// Probability that a draw returns `Trapped`.
    pub fn trapped_mass(&self) -> f64 {
        self.trapped
    }

    /// Draw the next outcome. Consumes one uniform for a trapped outcome and
    /// two (delay, then channel) for a count.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<SampleOutcome, CoreError> {
        let u: f64 = rng.gen();
        if u < self.trapped {
            return Ok(SampleOutcome::Trapped);
        }
        let dt = self.invert(u)?;
        let v: f64 = rng.gen();
        let channel = if v * self.gamma < self.gamma1 {
            Channel::Blue
        } else {
            Channel::Red
        };
        Ok(SampleOutcome::Count { channel, dt })
    }

    /// Solve survival(t) = u for u in [trapped, 1). Safeguarded Newton
    /// within a bracket taken from the precomputed grid, growing the bracket
    /// geometrically for draws deep in the slow tail.
    pub fn invert(&self, u: f64) -> Result<f64, CoreError> {
        let (mut lo, mut hi);
        let idx = self.grid.partition_point(|&(_, s)| s > u);
        if idx == 0 {
            lo = 0.0;
            hi = self.grid[0].0;
        } else if idx < self.grid.len() {
            lo = self.grid[idx - 1].0;
            hi = self.grid[idx].0;
        } else {
            // The whole grid still sits above u: walk outward.
            lo = self.grid[self.grid.len() - 1].0;
            hi = lo;
            let mut bracketed = false;
            for _ in 0..BRACKET_EXTENSIONS {
                hi *= 10.0;
                if self.curve.survival(hi) <= u {
                    bracketed = true;
                    break;
                }
                lo = hi;
            }
            if !bracketed {
                return Err(CoreError::RootSolveFailure {
                    context: "waiting-time tail could not be bracketed",
                });
            }
        }

        let mut t = 0.5 * (lo + hi);
        for _ in 0..INVERT_MAX_ITERS {
            let f = self.curve.survival(t) - u;
            if f.abs() <= INVERT_TOLERANCE {
                return Ok(t.max(f64::MIN_POSITIVE));
            }
            if f > 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            if hi - lo <= INVERT_WIDTH * hi.max(1.0) {
                return Ok(t.max(f64::MIN_POSITIVE));
            }
            // survival' = -pdf, so the Newton step moves along +f/pdf.
            let slope = self.curve.waiting_pdf(t);
            let newton = t + f / slope;
            t = if slope > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        Err(CoreError::RootSolveFailure {
            context: "waiting-time inversion did not converge",
        })
    }
}

/// One-off draw of the next click delay and channel. Builds the sampler
/// internally; construct a [`WaitingSampler`] once when drawing in a loop.
pub fn sample_waiting<R: Rng>(
    p: &SystemParams,
    from: Level,
    rng: &mut R,
) -> Result<SampleOutcome, CoreError> {
    WaitingSampler::new(p, from)?.sample(rng)
}

/// A single detected photon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountEvent {
    pub time: f64,
    pub channel: Channel,
}

/// A full photon-count record on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub initial: Level,
    pub horizon: f64,
    pub events: Vec<CountEvent>,
    /// The trajectory ended in a dark superposition before the horizon; no
    /// further events can ever occur.
    pub trapped: bool,
}

fn check_horizon(horizon: f64) -> Result<(), CoreError> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(CoreError::InvalidParams {
            field: "horizon",
            reason: "must be positive and finite",
        });
    }
    Ok(())
}

/// Run one trajectory, reporting each retained event to `on_event` as
/// (absolute time, gap to previous event, level before the gap, channel).
/// Returns whether the trajectory ended trapped. A draw that lands past the
/// horizon is censored: it is not reported.
fn drive_trajectory<R: Rng>(
    samplers: &[WaitingSampler; 2],
    initial: Level,
    horizon: f64,
    rng: &mut R,
    mut on_event: impl FnMut(f64, f64, Level, Channel),
) -> Result<bool, CoreError> {
    let mut t = 0.0f64;
    let mut state = initial;
    loop {
        match samplers[state.index() - 1].sample(rng)? {
            SampleOutcome::Trapped => return Ok(true),
            SampleOutcome::Count { channel, dt } => {
                let next = t + dt;
                if next > horizon {
                    return Ok(false);
                }
                // Report the on-record gap (difference of rounded times) so
                // that stored records and streamed statistics agree exactly.
                on_event(next, next - t, state, channel);
                t = next;
                state = channel.reset_level();
            }
        }
    }
}

/// Simulate one photon-count record.
pub fn simulate_trajectory(
    p: &SystemParams,
    initial: Level,
    horizon: f64,
    key: RngKey,
) -> Result<CountRecord, CoreError> {
    check_horizon(horizon)?;
    let prop = AnalyticPropagator::new(p)?;
    let samplers = [
        WaitingSampler::from_propagator(p, &prop, Level::One),
        WaitingSampler::from_propagator(p, &prop, Level::Two),
    ];
    let mut rng = key.rng();
    let mut events = Vec::new();
    let trapped = drive_trajectory(
        &samplers,
        initial,
        horizon,
        &mut rng,
        |time, _, _, channel| {
            events.push(CountEvent { time, channel });
        },
    )?;
    Ok(CountRecord {
        initial,
        horizon,
        events,
        trapped,
    })
}

/// Simulate `n` records with per-trajectory RNG streams `0..n` in parallel.
/// Record `i` is identical to `simulate_trajectory` with stream `i`.
pub fn ensemble_records(
    p: &SystemParams,
    initial: Level,
    horizon: f64,
    n: u64,
    seed: u64,
) -> Result<Vec<CountRecord>, CoreError> {
    check_horizon(horizon)?;
    let prop = AnalyticPropagator::new(p)?;
    let samplers = [
        WaitingSampler::from_propagator(p, &prop, Level::One),
        WaitingSampler::from_propagator(p, &prop, Level::Two),
    ];
    (0..n)
        .into_par_iter()
        .map(|stream| {
            let mut rng = RngKey { seed, stream }.rng();
            let mut events = Vec::new();
            let trapped = drive_trajectory(
                &samplers,
                initial,
                horizon,
                &mut rng,
                |time, _, _, channel| {
                    events.push(CountEvent { time, channel });
                },
            )?;
            Ok(CountRecord {
                initial,
                horizon,
                events,
                trapped,
            })
        })
        .collect()
}

/// Accumulated gap statistics keyed by the level occupied during the gap.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct GapStats {
    pub n_gaps: u64,
    pub n_long: u64,
    pub sum_all: f64,
    pub sum_short: f64,
    pub sum_long: f64,
    pub sum_sq_short: f64,
    pub sum_sq_long: f64,
}

impl GapStats {
    fn absorb(&mut self, other: &GapStats) {
        self.n_gaps += other.n_gaps;
        self.n_long += other.n_long;
        self.sum_all += other.sum_all;
        self.sum_short += other.sum_short;
        self.sum_long += other.sum_long;
        self.sum_sq_short += other.sum_sq_short;
        self.sum_sq_long += other.sum_sq_long;
    }
}

/// Deterministic summary of a simulated ensemble.
///
/// Gaps include the delay from t = 0 to the first event; the censored
/// stretch after the last event is excluded. Long/short classification and
/// bright/dark period counting only happen when a threshold is supplied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub n_trajectories: u64,
    pub initial: Level,
    pub horizon: f64,
    /// Classification threshold used for long/short accounting, if any.
    pub theta: Option<f64>,
    pub n_events: u64,
    pub n_blue: u64,
    pub n_red: u64,
    /// Trajectories that ended in a dark superposition.
    pub n_trapped: u64,
    /// Trajectories whose very first draw was already trapped.
    pub n_trapped_immediately: u64,
    pub bright_periods: u64,
    pub dark_periods: u64,
    pub gaps_from_one: GapStats,
    pub gaps_from_two: GapStats,
}

impl EnsembleStats {
    pub fn events_per_trajectory(&self) -> f64 {
        if self.n_trajectories == 0 {
            return 0.0;
        }
        self.n_events as f64 / self.n_trajectories as f64
    }

    pub fn gaps_from(&self, level: Level) -> &GapStats {
        match level {
            Level::One => &self.gaps_from_one,
            Level::Two => &self.gaps_from_two,
        }
    }

    /// Fraction of gaps started from `level` that were classified long.
    pub fn long_fraction_from(&self, level: Level) -> Option<f64> {
        let g = self.gaps_from(level);
        (g.n_gaps > 0).then(|| g.n_long as f64 / g.n_gaps as f64)
    }

    pub fn mean_long_gap(&self) -> Option<f64> {
        let n = self.gaps_from_one.n_long + self.gaps_from_two.n_long;
        let s = self.gaps_from_one.sum_long + self.gaps_from_two.sum_long;
        (n > 0).then(|| s / n as f64)
    }

    pub fn mean_short_gap(&self) -> Option<f64> {
        let n_long = self.gaps_from_one.n_long + self.gaps_from_two.n_long;
        let n = self.gaps_from_one.n_gaps + self.gaps_from_two.n_gaps - n_long;
        let s = self.gaps_from_one.sum_short + self.gaps_from_two.sum_short;
        (n > 0).then(|| s / n as f64)
    }

    pub fn mean_gap(&self) -> Option<f64> {
        let n = self.gaps_from_one.n_gaps + self.gaps_from_two.n_gaps;
        let s = self.gaps_from_one.sum_all + self.gaps_from_two.sum_all;
        (n > 0).then(|| s / n as f64)
    }
}

#[derive(Default)]
struct Partial {
    events: u64,
    blue: u64,
    red: u64,
    trapped: u64,
    trapped_immediately: u64,
    bright: u64,
    dark: u64,
    gaps_one: GapStats,
    gaps_two: GapStats,
}

/// Simulate `n` trajectories and stream them into an [`EnsembleStats`]
/// without retaining the events. Trajectory `i` uses RNG stream `i`, and the
/// per-trajectory partial sums are merged in index order, so the result is
/// bitwise independent of the number of worker threads.
pub fn ensemble_run(
    p: &SystemParams,
    initial: Level,
    horizon: f64,
    n: u64,
    seed: u64,
    theta: Option<f64>,
) -> Result<EnsembleStats, CoreError> {
    check_horizon(horizon)?;
    let prop = AnalyticPropagator::new(p)?;
    let samplers = [
        WaitingSampler::from_propagator(p, &prop, Level::One),
        WaitingSampler::from_propagator(p, &prop, Level::Two),
    ];

    let partials: Result<Vec<Partial>, CoreError> = (0..n)
        .into_par_iter()
        .map(|stream| {
            let mut rng = RngKey { seed, stream }.rng();
            let mut part = Partial::default();
            let mut in_bright_run = false;
            let trapped = drive_trajectory(
                &samplers,
                initial,
                horizon,
                &mut rng,
                |_, gap, from, channel| {
                    part.events += 1;
                    match channel {
                        Channel::Blue => part.blue += 1,
                        Channel::Red => part.red += 1,
                    }
                    let stats = match from {
                        Level::One => &mut part.gaps_one,
                        Level::Two => &mut part.gaps_two,
                    };
                    stats.n_gaps += 1;
                    stats.sum_all += gap;
                    if let Some(th) = theta {
                        if gap > th {
                            stats.n_long += 1;
                            stats.sum_long += gap;
                            stats.sum_sq_long += gap * gap;
                            part.dark += 1;
                            if in_bright_run {
                                part.bright += 1;
                                in_bright_run = false;
                            }
                        } else {
                            stats.sum_short += gap;
                            stats.sum_sq_short += gap * gap;
                            in_bright_run = true;
                        }
                    }
                },
            )?;
            if trapped {
                part.trapped += 1;
                if part.events == 0 {
                    part.trapped_immediately += 1;
                }
            }
            if in_bright_run {
                part.bright += 1;
            }
            Ok(part)
        })
        .collect();

    let mut out = EnsembleStats {
        n_trajectories: n,
        initial,
        horizon,
        theta,
        n_events: 0,
        n_blue: 0,
        n_red: 0,
        n_trapped: 0,
        n_trapped_immediately: 0,
        bright_periods: 0,
        dark_periods: 0,
        gaps_from_one: GapStats::default(),
        gaps_from_two: GapStats::default(),
    };
    for part in &partials? {
        out.n_events += part.events;
        out.n_blue += part.blue;
        out.n_red += part.red;
        out.n_trapped += part.trapped;
        out.n_trapped_immediately += part.trapped_immediately;
        out.bright_periods += part.bright;
        out.dark_periods += part.dark;
        out.gaps_from_one.absorb(&part.gaps_one);
        out.gaps_from_two.absorb(&part.gaps_two);
    }
    Ok(out)
}

/// Interval classification of one record against a threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IntervalClasses {
    /// Gaps of duration <= theta.
    pub short_gaps: usize,
    /// Gaps of duration > theta.
    pub long_gaps: usize,
    /// Maximal runs of consecutive short gaps.
    pub bright_periods: usize,
    /// One per long gap.
    pub dark_periods: usize,
}

/// Classify the inter-event gaps of a record. The gap from t = 0 to the
/// first event counts; the censored stretch after the last event does not.
pub fn classify_intervals(record: &CountRecord, theta: f64) -> IntervalClasses {
    let mut out = IntervalClasses::default();
    let mut prev = 0.0f64;
    let mut in_bright_run = false;
    for event in &record.events {
        let gap = event.time - prev;
        prev = event.time;
        if gap > theta {
            out.long_gaps += 1;
            out.dark_periods += 1;
            if in_bright_run {
                out.bright_periods += 1;
                in_bright_run = false;
            }
        } else {
            out.short_gaps += 1;
            in_bright_run = true;
        }
    }
    if in_bright_run {
        out.bright_periods += 1;
    }
    out
}

/// Fixed-width histogram of waiting times on [0, t_max).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub t_max: f64,
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaitingHistogram {
    pub t_max: f64,
    pub counts: Vec<u64>,
    /// Samples at or beyond t_max.
    pub overflow: u64,
}

impl WaitingHistogram {
    pub fn new(spec: HistogramSpec) -> Result<Self, CoreError> {
        if !(spec.t_max > 0.0 && spec.t_max.is_finite()) {
            return Err(CoreError::InvalidParams {
                field: "t_max",
                reason: "must be positive and finite",
            });
        }
        if spec.bins == 0 {
            return Err(CoreError::InvalidParams {
                field: "bins",
                reason: "must be at least 1",
            });
        }
        Ok(WaitingHistogram {
            t_max: spec.t_max,
            counts: vec![0; spec.bins],
            overflow: 0,
        })
    }

    pub fn bin_width(&self) -> f64 {
        self.t_max / self.counts.len() as f64
    }

    pub fn record(&mut self, dt: f64) {
        if dt >= self.t_max || !dt.is_finite() {
            self.overflow += 1;
            return;
        }
        let bins = self.counts.len();
        let idx = ((dt / self.t_max) * bins as f64) as usize;
        self.counts[idx.min(bins - 1)] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.overflow
    }

    pub fn merge(&mut self, other: &WaitingHistogram) -> Result<(), CoreError> {
        if self.t_max != other.t_max || self.counts.len() != other.counts.len() {
            return Err(CoreError::InvalidParams {
                field: "histogram",
                reason: "merge requires identical bin layout",
            });
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.overflow += other.overflow;
        Ok(())
    }
}

/// Probability density of a complete record: the product of channel rates
/// and squared excited amplitudes at each click, times the no-count weight
/// of every silent stretch including the censored tail.
///
/// Uses the closed-form propagator when the roots are well separated and
/// adaptive integration otherwise. The value underflows to zero for records
/// with very many events; it is intended for short diagnostic records.
pub fn trajectory_density(p: &SystemParams, record: &CountRecord) -> Result<f64, CoreError> {
    check_horizon(record.horizon)?;
    let mut prev = 0.0f64;
    for (index, event) in record.events.iter().enumerate() {
        if !event.time.is_finite() {
            return Err(CoreError::UnsortedRecord {
                index,
                reason: "event time is not finite",
            });
        }
        if event.time <= prev {
            return Err(CoreError::UnsortedRecord {
                index,
                reason: "event times must be positive and strictly increasing",
            });
        }
        if event.time > record.horizon {
            return Err(CoreError::UnsortedRecord {
                index,
                reason: "event time exceeds the horizon",
            });
        }
        prev = event.time;
    }

    let closed = match AnalyticPropagator::new(p) {
        Ok(prop) => Some(prop),
        Err(CoreError::DegenerateRoots { .. }) => None,
        Err(e) => return Err(e),
    };
    let evolve = |a: &Amplitudes, dt: f64| -> Result<Amplitudes, CoreError> {
        match &closed {
            Some(prop) => Ok(prop.apply(a, dt)),
            None => evolve_ode(p, a, dt, ODE_DEFAULT_TOL),
        }
    };

    let mut a = Amplitudes::basis(record.initial);
    let mut density = 1.0f64;
    let mut t = 0.0f64;
    for event in &record.events {
        a = evolve(&a, event.time - t)?;
        let amp0 = a.as_array()[0];
        density *= p.gamma_of(event.channel) * amp0.norm_sqr();
        // The jump projects onto the reset level; the surviving global phase
        // cannot affect any later |amplitude|^2 factor.
        a = Amplitudes::basis(event.channel.reset_level());
        t = event.time;
    }
    a = evolve(&a, record.horizon - t)?;
    density *= a.norm_sqr();
    Ok(density)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statistics::{short_long_split, waiting_density};

    fn generic() -> SystemParams {
        SystemParams::new(1.0, 0.05, 0.0, 0.2, 1.0, 1e-3).unwrap()
    }

    fn reference() -> SystemParams {
        SystemParams::new(0.5, 5e-3, 0.0, 0.05, 1.0, 1e-4).unwrap()
    }

    #[test]
    fn inversion_hits_the_survival_curve() {
        let sampler = WaitingSampler::new(&generic(), Level::One).unwrap();
        let mut rng = RngKey {
            seed: 11,
            stream: 0,
        }
        .rng();
        for _ in 0..500 {
            let u: f64 = rng.gen();
            let t = sampler.invert(u).unwrap();
            assert!(t > 0.0);
            let s = sampler.curve().survival(t);
            assert!((s - u).abs() < 1e-10, "P({t}) = {s} vs u = {u}");
        }
        // Extremes: a draw just below one maps to a tiny but positive delay.
        let t = sampler.invert(1.0 - 1e-15).unwrap();
        assert!(t > 0.0 && t < 1e-2);
    }

    #[test]
    fn inversion_extends_past_the_grid_for_deep_tails() {
        let sampler = WaitingSampler::new(&reference(), Level::One).unwrap();
        let u = 1e-8;
        let t = sampler.invert(u).unwrap();
        assert!(t > 1e6, "tail draw {t} should exceed the grid span");
        assert!((sampler.curve().survival(t) - u).abs() < 1e-10);
    }

    #[test]
    fn draws_follow_the_analytic_distribution() {
        // Kolmogorov-Smirnov bound at the 1% level for m draws.
        let p = generic();
        let sampler = WaitingSampler::new(&p, Level::One).unwrap();
        let mut rng = RngKey { seed: 5, stream: 9 }.rng();
        let m = 4000usize;
        let mut waits = Vec::with_capacity(m);
        while waits.len() < m {
            match sampler.sample(&mut rng).unwrap() {
                SampleOutcome::Count { dt, .. } => waits.push(dt),
                SampleOutcome::Trapped => panic!("no trapping without a dark state"),
            }
        }
        waits.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut ks = 0.0f64;
        for (i, &t) in waits.iter().enumerate() {
            let cdf = sampler.curve().cumulative(t);
            ks = ks.max((cdf - i as f64 / m as f64).abs());
            ks = ks.max((cdf - (i + 1) as f64 / m as f64).abs());
        }
        let bound = 1.63 / (m as f64).sqrt();
        assert!(ks < bound, "KS statistic {ks} exceeds {bound}");
    }

    #[test]
    fn channel_frequencies_follow_the_rates() {
        let p = SystemParams::new(1.0, 0.4, 0.0, 0.3, 1.0, 0.5).unwrap();
        let sampler = WaitingSampler::new(&p, Level::One).unwrap();
        let mut rng = RngKey { seed: 3, stream: 1 }.rng();
        let m = 6000;
        let mut blue = 0u64;
        for _ in 0..m {
            match sampler.sample(&mut rng).unwrap() {
                SampleOutcome::Count {
                    channel: Channel::Blue,
                    ..
                } => blue += 1,
                SampleOutcome::Count { .. } => {}
                SampleOutcome::Trapped => panic!("unexpected trapping"),
            }
        }
        let expect = 1.0 / 1.5;
        let sigma = (expect * (1.0 - expect) / m as f64).sqrt();
        let freq = blue as f64 / m as f64;
        assert!(
            (freq - expect).abs() < 4.0 * sigma,
            "blue fraction {freq} vs {expect}"
        );
    }

    #[test]
    fn trapped_branch_frequency_matches_dark_weight() {
        // Equal detunings, couplings 0.6 / 0.8: dark weight 0.64 from level
        // one.
        let p = SystemParams::new(0.6, 0.8, 0.0, 0.0, 1.0, 0.2).unwrap();
        let sampler = WaitingSampler::new(&p, Level::One).unwrap();
        assert!((sampler.trapped_mass() - 0.64).abs() < 1e-15);
        let mut rng = RngKey { seed: 8, stream: 0 }.rng();
        let m = 2000;
        let mut trapped = 0u64;
        for _ in 0..m {
            if matches!(sampler.sample(&mut rng).unwrap(), SampleOutcome::Trapped) {
                trapped += 1;
            }
        }
        let sigma = (0.64f64 * 0.36 / m as f64).sqrt();
        let freq = trapped as f64 / m as f64;
        assert!((freq - 0.64).abs() < 4.0 * sigma, "trapped fraction {freq}");
    }

    #[test]
    fn sampling_is_reproducible_per_key() {
        let p = generic();
        let sampler = WaitingSampler::new(&p, Level::One).unwrap();
        let key = RngKey {
            seed: 77,
            stream: 4,
        };
        let mut a = key.rng();
        let mut b = key.rng();
        for _ in 0..50 {
            assert_eq!(
                sampler.sample(&mut a).unwrap(),
                sampler.sample(&mut b).unwrap()
            );
        }
        // A different stream decorrelates immediately.
        let mut c = RngKey {
            seed: 77,
            stream: 5,
        }
        .rng();
        let first_a = sampler.sample(&mut key.rng()).unwrap();
        let first_c = sampler.sample(&mut c).unwrap();
        assert_ne!(first_a, first_c);
    }

    #[test]
    fn sampler_rejects_degenerate_roots() {
        let p = SystemParams::new(0.6, 0.8, 0.0, 0.0, 2.0, 0.0).unwrap();
        assert!(matches!(
            WaitingSampler::new(&p, Level::One),
            Err(CoreError::DegenerateRoots { .. })
        ));
    }

    #[test]
    fn trajectories_respect_the_horizon() {
        let p = generic();
        let record =
            simulate_trajectory(&p, Level::One, 300.0, RngKey { seed: 1, stream: 0 }).unwrap();
        assert_eq!(record.initial, Level::One);
        assert_eq!(record.horizon, 300.0);
        assert!(!record.trapped);
        assert!(!record.events.is_empty());
        let mut prev = 0.0;
        for e in &record.events {
            assert!(e.time > prev && e.time <= 300.0);
            prev = e.time;
        }
    }

    #[test]
    fn ensemble_records_match_individual_runs() {
        let p = generic();
        let records = ensemble_records(&p, Level::One, 150.0, 6, 42).unwrap();
        assert_eq!(records.len(), 6);
        for (i, record) in records.iter().enumerate() {
            let single = simulate_trajectory(
                &p,
                Level::One,
                150.0,
                RngKey {
                    seed: 42,
                    stream: i as u64,
                },
            )
            .unwrap();
            assert_eq!(*record, single);
        }
    }

    #[test]
    fn ensemble_stats_are_identical_across_thread_counts() {
        let p = generic();
        let theta = Some(short_long_split(&p, Level::One).unwrap().theta);
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| ensemble_run(&p, Level::One, 500.0, 64, 9, theta).unwrap())
        };
        let serial = run(1);
        let parallel = run(4);
        assert_eq!(serial, parallel);
        assert!(serial.n_events > 0);
    }

    #[test]
    fn streamed_stats_agree_with_stored_records() {
        let p = generic();
        let theta = short_long_split(&p, Level::One).unwrap().theta;
        let n = 24u64;
        let horizon = 400.0;
        let seed = 13;
        let stats = ensemble_run(&p, Level::One, horizon, n, seed, Some(theta)).unwrap();
        let records = ensemble_records(&p, Level::One, horizon, n, seed).unwrap();

        let mut events = 0u64;
        let mut blue = 0u64;
        let mut classes = IntervalClasses::default();
        for record in &records {
            events += record.events.len() as u64;
            blue += record
                .events
                .iter()
                .filter(|e| e.channel == Channel::Blue)
                .count() as u64;
            let c = classify_intervals(record, theta);
            classes.short_gaps += c.short_gaps;
            classes.long_gaps += c.long_gaps;
            classes.bright_periods += c.bright_periods;
            classes.dark_periods += c.dark_periods;
        }
        assert_eq!(stats.n_events, events);
        assert_eq!(stats.n_blue, blue);
        assert_eq!(stats.dark_periods, classes.dark_periods as u64);
        assert_eq!(stats.bright_periods, classes.bright_periods as u64);
        assert_eq!(
            stats.gaps_from_one.n_long + stats.gaps_from_two.n_long,
            classes.long_gaps as u64
        );
    }

    #[test]
    fn classification_counts_runs_and_long_gaps() {
        let record = CountRecord {
            initial: Level::One,
            horizon: 60.0,
            events: vec![
                CountEvent {
                    time: 0.1,
                    channel: Channel::Blue,
                },
                CountEvent {
                    time: 0.3,
                    channel: Channel::Blue,
                },
                CountEvent {
                    time: 50.3,
                    channel: Channel::Red,
                },
                CountEvent {
                    time: 50.4,
                    channel: Channel::Blue,
                },
            ],
            trapped: false,
        };
        let classes = classify_intervals(&record, 5.0);
        assert_eq!(classes.short_gaps, 3);
        assert_eq!(classes.long_gaps, 1);
        assert_eq!(classes.bright_periods, 2);
        assert_eq!(classes.dark_periods, 1);
        // A threshold below every gap leaves only dark periods.
        let all_long = classify_intervals(&record, 0.05);
        assert_eq!(all_long.short_gaps, 0);
        assert_eq!(all_long.bright_periods, 0);
        assert_eq!(all_long.dark_periods, 4);
    }

    #[test]
    fn histogram_conserves_mass_and_merges() {
        let spec = HistogramSpec {
            t_max: 50.0,
            bins: 25,
        };
        let p = generic();
        let sampler = WaitingSampler::new(&p, Level::One).unwrap();
        let mut rng = RngKey {
            seed: 21,
            stream: 2,
        }
        .rng();
        let mut whole = WaitingHistogram::new(spec).unwrap();
        let mut first = WaitingHistogram::new(spec).unwrap();
        let mut second = WaitingHistogram::new(spec).unwrap();
        for i in 0..1000 {
            let SampleOutcome::Count { dt, .. } = sampler.sample(&mut rng).unwrap() else {
                panic!("unexpected trapping");
            };
            whole.record(dt);
            if i < 500 {
                first.record(dt)
            } else {
                second.record(dt)
            }
        }
        assert_eq!(whole.total(), 1000);
        first.merge(&second).unwrap();
        assert_eq!(first, whole);
        let other = WaitingHistogram::new(HistogramSpec {
            t_max: 10.0,
            bins: 25,
        })
        .unwrap();
        assert!(first.merge(&other).is_err());
    }

    #[test]
    fn density_factorizes_into_waiting_terms() {
        let p = generic();
        let record = CountRecord {
            initial: Level::One,
            horizon: 12.0,
            events: vec![
                CountEvent {
                    time: 1.7,
                    channel: Channel::Blue,
                },
                CountEvent {
                    time: 4.1,
                    channel: Channel::Red,
                },
            ],
            trapped: false,
        };
        let density = trajectory_density(&p, &record).unwrap();

        let (d1, _) = waiting_density(&p, Level::One, Channel::Blue, 1.7).unwrap();
        let (d2, _) = waiting_density(&p, Level::One, Channel::Red, 4.1 - 1.7).unwrap();
        let tail = SurvivalCurve::new(&p, Level::Two)
            .unwrap()
            .survival(12.0 - 4.1);
        let expected = d1 * d2 * tail;
        assert!(
            (density / expected - 1.0).abs() < 1e-12,
            "density {density} vs factorized {expected}"
        );
    }

    #[test]
    fn density_rejects_malformed_records() {
        let p = generic();
        let mut record = CountRecord {
            initial: Level::One,
            horizon: 10.0,
            events: vec![
                CountEvent {
                    time: 2.0,
                    channel: Channel::Blue,
                },
                CountEvent {
                    time: 1.0,
                    channel: Channel::Blue,
                },
            ],
            trapped: false,
        };
        match trajectory_density(&p, &record) {
            Err(CoreError::UnsortedRecord { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected UnsortedRecord, got {other:?}"),
        }
        record.events[1].time = 11.0;
        assert!(matches!(
            trajectory_density(&p, &record),
            Err(CoreError::UnsortedRecord { index: 1, .. })
        ));
        record.events[1].time = f64::NAN;
        assert!(matches!(
            trajectory_density(&p, &record),
            Err(CoreError::UnsortedRecord { index: 1, .. })
        ));
    }

    #[test]
    fn density_of_an_empty_record_is_the_survival_weight() {
        let p = generic();
        let record = CountRecord {
            initial: Level::One,
            horizon: 7.0,
            events: vec![],
            trapped: false,
        };
        let density = trajectory_density(&p, &record).unwrap();
        let survival = SurvivalCurve::new(&p, Level::One).unwrap().survival(7.0);
        assert!((density - survival).abs() < 1e-13);
    }

    #[test]
    fn density_handles_degenerate_roots_by_integration() {
        let p = SystemParams::new(0.6, 0.8, 0.0, 0.0, 2.0, 0.0).unwrap();
        let record = CountRecord {
            initial: Level::One,
            horizon: 5.0,
            events: vec![CountEvent {
                time: 0.9,
                channel: Channel::Blue,
            }],
            trapped: false,
        };
        let density = trajectory_density(&p, &record).unwrap();
        assert!(density.is_finite() && density > 0.0);
    }

    #[test]
    fn equal_detuning_ensembles_trap() {
        let p = SystemParams::new(0.6, 0.8, 0.0, 0.0, 1.0, 0.2).unwrap();
        let stats = ensemble_run(&p, Level::One, 5000.0, 400, 17, None).unwrap();
        assert!(stats.n_trapped >= stats.n_trapped_immediately);
        let freq = stats.n_trapped_immediately as f64 / 400.0;
        let sigma = (0.64f64 * 0.36 / 400.0).sqrt();
        assert!(
            (freq - 0.64).abs() < 4.0 * sigma,
            "first-draw trap rate {freq}"
        );
        // With the horizon far beyond every decay scale, each trajectory is
        // eventually trapped.
        assert_eq!(stats.n_trapped, 400);
    }
}
