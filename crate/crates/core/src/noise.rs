//! Hierarchically seeded, counter-based randomness.
//!
//! Every random quantity is addressed by `(root seed, replication, entity,
//! channel, step, draw)`. The first five coordinates are hashed into a 64-bit
//! key and the draw index is a counter, so any value can be regenerated
//! without replaying a sequential stream. Replications and particles can run
//! in any order on any number of workers and still produce identical output.
//!
//! Entities are particle or copy indices. Multi-population runs use
//! `population << 32 | index` (see [`entity`]), so population 0 maps to the
//! plain single-population indices.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::model::{Atom, NuSpec};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Keyed counter generator: draw `i` is `mix64(key ^ mix64(i + φ))`.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(key: u64) -> Self {
        Self { key: mix64(key ^ 0xD1B5_4A32_D192_ED03), counter: 0 }
    }

    /// Jumps to draw index `counter`.
    pub fn at(mut self, counter: u64) -> Self {
        self.counter = counter;
        self
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(self)
    }
}

impl RngCore for CounterRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        let c = self.counter;
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key ^ mix64(c.wrapping_add(GOLDEN)))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Initial,
    Brownian,
    PoissonEvents,
    PoissonMarks,
    CommonW,
    IdioW,
}

impl Channel {
    fn tag(self) -> u64 {
        match self {
            Channel::Initial => 1,
            Channel::Brownian => 2,
            Channel::PoissonEvents => 3,
            Channel::PoissonMarks => 4,
            Channel::CommonW => 5,
            Channel::IdioW => 6,
        }
    }
}

/// Entity id of particle `index` in population `population`.
#[inline]
pub fn entity(population: usize, index: usize) -> u64 {
    ((population as u64) << 32) | index as u64
}

/// Entity id of the idiosyncratic noise that population `sender` drives into
/// copy `index` of population `receiver`.
#[inline]
pub fn idio_entity(sender: usize, receiver: usize, index: usize) -> u64 {
    ((sender as u64) << 48) | ((receiver as u64) << 32) | index as u64
}

/// Derives an independent root seed from `root` for a sub-experiment.
pub fn derive_seed(root: u64, tag: &str, index: u64) -> u64 {
    let mut h = mix64(root ^ 0x51_7C_C1_B7_27_22_0A_95);
    for b in tag.bytes() {
        h = mix64(h ^ b as u64);
    }
    mix64(h ^ index.wrapping_mul(GOLDEN))
}

/// Coordinates of one noise source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseStream {
    pub root_seed: u64,
    pub replication: u64,
    pub entity: u64,
    pub channel: Channel,
}

impl NoiseStream {
    pub fn new(root_seed: u64, replication: u64, entity: u64, channel: Channel) -> Self {
        Self { root_seed, replication, entity, channel }
    }

    pub fn key(&self, step: u64) -> u64 {
        let mut h = mix64(self.root_seed.wrapping_add(GOLDEN));
        h = mix64(h ^ self.replication.wrapping_mul(0xA24B_AED4_963E_E407));
        h = mix64(h ^ self.entity.wrapping_mul(0x9FB2_1C65_1E98_DF25));
        h = mix64(h ^ self.channel.tag().wrapping_mul(0xC2B2_AE3D_27D4_EB4F));
        mix64(h ^ step.wrapping_mul(0x1656_67B1_9E37_79F9))
    }

    /// Generator for the draws of one step (or event, or block).
    pub fn rng(&self, step: u64) -> CounterRng {
        CounterRng::new(self.key(step))
    }
}

/// `Normal(0, dt)` increment for `(stream, step)`.
pub fn gaussian_increment(stream: &NoiseStream, step: u64, dt: f64) -> f64 {
    dt.sqrt() * stream.rng(step).standard_normal()
}

/// A candidate event of a bounding homogeneous Poisson process together with
/// the uniform used to thin it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonEvent {
    pub time: f64,
    pub thin_u: f64,
}

impl PoissonEvent {
    /// Thinning: keep the event with probability `rate / bound`.
    #[inline]
    pub fn accepted(&self, rate: f64, bound: f64) -> bool {
        self.thin_u * bound < rate
    }
}

/// Event times of a homogeneous Poisson process at `rate` on `(t0, t1]`.
pub fn poisson_events(stream: &NoiseStream, rate: f64, t0: f64, t1: f64) -> Vec<PoissonEvent> {
    let mut out = Vec::new();
    if !(rate > 0.0) || !(t1 > t0) {
        return out;
    }
    let mut rng = stream.rng(0);
    let mut t = t0;
    loop {
        let gap: f64 = Exp1.sample(&mut rng);
        t += gap / rate;
        if t > t1 {
            return out;
        }
        let thin_u: f64 = rng.random();
        out.push(PoissonEvent { time: t, thin_u });
    }
}

/// Marks consumed by one jump event: one for the sender, one per receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct EventMarks {
    pub sender: f64,
    pub receivers: Vec<f64>,
}

/// `1 + n_receivers` i.i.d. draws from `law` for event `event` of `stream`.
pub fn draw_marks(stream: &NoiseStream, event: u64, n_receivers: usize, law: &NuSpec) -> EventMarks {
    let mut rng = stream.rng(event);
    let sender = law.sample(&mut rng);
    let receivers = (0..n_receivers).map(|_| law.sample(&mut rng)).collect();
    EventMarks { sender, receivers }
}

/// Discretized white noise on `[0, 1] × ν₁` over one time step:
/// `bins × atoms` independent Gaussians, entry `(j, a)` with variance
/// `dt · (1/bins) · weight(a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteNoisePanel {
    pub bins: usize,
    pub atoms: Vec<Atom>,
    pub increments: Vec<f64>,
}

impl WhiteNoisePanel {
    #[inline]
    pub fn get(&self, bin: usize, atom: usize) -> f64 {
        self.increments[bin * self.atoms.len() + atom]
    }

    pub fn row(&self, bin: usize) -> &[f64] {
        let v = self.atoms.len();
        &self.increments[bin * v..(bin + 1) * v]
    }

    pub fn total_variance(&self, dt: f64) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum::<f64>() * dt
    }
}

/// Panel for `(stream, step)`. The idiosyncratic noise uses a single atom of
/// weight one.
pub fn sample_panel(stream: &NoiseStream, step: u64, bins: usize, atoms: &[Atom], dt: f64) -> WhiteNoisePanel {
    let mut rng = stream.rng(step);
    let scale: Vec<f64> = atoms.iter().map(|a| (dt * a.weight / bins as f64).sqrt()).collect();
    let mut increments = Vec::with_capacity(bins * atoms.len());
    for _ in 0..bins {
        for s in &scale {
            increments.push(s * rng.standard_normal());
        }
    }
    WhiteNoisePanel { bins, atoms: atoms.to_vec(), increments }
}

/// The degenerate one-atom mark law of the idiosyncratic panels.
pub fn unit_atom() -> [Atom; 1] {
    [Atom { value: 0.0, weight: 1.0 }]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(ch: Channel, entity: u64) -> NoiseStream {
        NoiseStream::new(42, 0, entity, ch)
    }

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
    }

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let (ma, va) = mean_var(a);
        let (mb, vb) = mean_var(b);
        let c: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() as f64 - 1.0);
        c / (va * vb).sqrt()
    }

    #[test]
    fn gaussian_increments_mean_variance_and_determinism() {
        let dt = 0.01;
        let s = stream(Channel::Brownian, 3);
        let n = 1_000_000u64;
        let xs: Vec<f64> = (0..n).map(|k| gaussian_increment(&s, k, dt)).collect();
        let (m, v) = mean_var(&xs);
        assert!(m.abs() < 4.0 * (dt / n as f64).sqrt(), "mean {m}");
        assert!((v / dt - 1.0).abs() < 0.01, "var {v}");
        assert_eq!(gaussian_increment(&s, 17, dt), gaussian_increment(&s, 17, dt));
    }

    #[test]
    fn channels_are_uncorrelated() {
        let chans = [Channel::Brownian, Channel::CommonW, Channel::IdioW, Channel::Initial];
        let n = 100_000u64;
        let draws: Vec<Vec<f64>> = chans
            .iter()
            .map(|&c| (0..n).map(|k| stream(c, 0).rng(k).standard_normal()).collect())
            .collect();
        for i in 0..chans.len() {
            for j in i + 1..chans.len() {
                let r = corr(&draws[i], &draws[j]);
                assert!(r.abs() < 4.0 / (n as f64).sqrt(), "{:?}/{:?}: {r}", chans[i], chans[j]);
            }
        }
        // Neighbouring entities and replications too.
        let a: Vec<f64> = (0..n).map(|k| stream(Channel::Brownian, 0).rng(k).standard_normal()).collect();
        let b: Vec<f64> = (0..n).map(|k| stream(Channel::Brownian, 1).rng(k).standard_normal()).collect();
        let c: Vec<f64> = (0..n)
            .map(|k| NoiseStream::new(42, 1, 0, Channel::Brownian).rng(k).standard_normal())
            .collect();
        assert!(corr(&a, &b).abs() < 4.0 / (n as f64).sqrt());
        assert!(corr(&a, &c).abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn poisson_counts() {
        assert!(poisson_events(&stream(Channel::PoissonEvents, 0), 0.0, 0.0, 1.0).is_empty());
        let reps = 20_000u64;
        let rate = 3.0;
        let counts: Vec<f64> = (0..reps)
            .map(|r| {
                let s = NoiseStream::new(7, r, 0, Channel::PoissonEvents);
                let ev = poisson_events(&s, rate, 0.0, 1.0);
                assert!(ev.windows(2).all(|w| w[0].time < w[1].time));
                assert!(ev.iter().all(|e| e.time > 0.0 && e.time <= 1.0));
                ev.len() as f64
            })
            .collect();
        let (m, v) = mean_var(&counts);
        assert!((m - rate).abs() < 4.0 * rate.sqrt() / (reps as f64).sqrt(), "mean {m}");
        assert!((v / rate - 1.0).abs() < 0.05, "var {v}");
    }

    #[test]
    fn thinning_at_full_rate_keeps_everything() {
        let ev = poisson_events(&stream(Channel::PoissonEvents, 9), 50.0, 0.0, 2.0);
        assert!(!ev.is_empty());
        assert!(ev.iter().all(|e| e.accepted(50.0, 50.0)));
    }

    #[test]
    fn rademacher_marks() {
        let law = NuSpec::rademacher();
        let s = stream(Channel::PoissonMarks, 0);
        let n = 100_000u64;
        let senders: Vec<f64> = (0..n).map(|e| draw_marks(&s, e, 0, &law).sender).collect();
        assert!(draw_marks(&s, 0, 0, &law).receivers.is_empty());
        let (m, _) = mean_var(&senders);
        assert!(m.abs() < 0.013, "mean {m}");
        let next: Vec<f64> = senders[1..].to_vec();
        let r = corr(&senders[..senders.len() - 1], &next);
        assert!(r.abs() < 4.0 / (n as f64).sqrt(), "corr {r}");
        let marks = draw_marks(&s, 5, 10, &law);
        assert_eq!(marks.receivers.len(), 10);
        assert!(marks.receivers.iter().all(|&u| u == 1.0 || u == -1.0));
    }

    #[test]
    fn panel_total_variance() {
        let atoms = [Atom { value: -1.0, weight: 0.25 }, Atom { value: 2.0, weight: 0.75 }];
        let dt = 0.01;
        let s = stream(Channel::CommonW, 0);
        let n = 10_000u64;
        let total: f64 = (0..n)
            .map(|k| sample_panel(&s, k, 8, &atoms, dt).increments.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            / n as f64;
        assert!((total / dt - 1.0).abs() < 0.02, "{total}");
        let p = sample_panel(&s, 3, 8, &atoms, dt);
        assert_eq!(p, sample_panel(&s, 3, 8, &atoms, dt));
        assert!((p.total_variance(dt) - dt).abs() < 1e-15);
    }

    #[test]
    fn idiosyncratic_panels_of_distinct_copies_are_independent() {
        let one = unit_atom();
        let n = 20_000u64;
        let mut a = Vec::new();
        let mut b = Vec::new();
        for k in 0..n {
            a.extend(sample_panel(&stream(Channel::IdioW, 0), k, 4, &one, 1.0).increments);
            b.extend(sample_panel(&stream(Channel::IdioW, 1), k, 4, &one, 1.0).increments);
        }
        assert!(corr(&a, &b).abs() < 4.0 / (a.len() as f64).sqrt());
    }
}
