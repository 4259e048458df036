//! Constrained particle swarm over precoder sets.
//!
//! A particle's position is a full precoder set `{F_k}`; receive filters are
//! never searched, they are always the Wiener filters of the position. One
//! particle starts at the block-diagonalization design, the others at random
//! full-power points. Positions leaving the power ball are pulled back by
//! radial scaling, which is the exact Euclidean projection onto the ball.
//!
//! Iterations are synchronous: every particle moves against the leader fixed at
//! the end of the previous iteration, particles are evaluated in parallel, and
//! each particle draws its coefficients from its own `(particle, iteration)`
//! stream, so results do not depend on the number of worker threads.

use rayon::prelude::*;

use crate::bd::bd_design;
use crate::channel::{RngStream, StreamDomain, UniformSource};
use crate::error::{Error, Result};
use crate::link::{mmse_decoders, weighted_sum_rate};
use crate::numerics::real;
use crate::system::{total_power, ChannelSet, DecoderSet, PrecoderSet, SystemConfig, Velocity};

/// Iterations without a gbest gain above [`PLATEAU_TOL`] that end a run when
/// plateau stopping is enabled.
pub const PLATEAU_WINDOW: usize = 100;
pub const PLATEAU_TOL: f64 = 1e-9;

/// How the random coefficients of the velocity update are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RandomMode {
    /// One `(r1, r2)` pair per particle per iteration.
    #[default]
    ScalarPerParticle,
    /// An independent `(r1, r2)` pair for every complex entry.
    PerEntry,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsoParams {
    pub swarm_size: usize,
    pub max_iters: usize,
    /// Inertia weight.
    pub c0: f64,
    /// Cognitive weight.
    pub c1: f64,
    /// Social weight.
    pub c2: f64,
    pub r_mode: RandomMode,
    pub plateau_stop: bool,
}

impl Default for PsoParams {
    fn default() -> Self {
        Self {
            swarm_size: 100,
            max_iters: 300,
            c0: 0.7,
            c1: 1.494,
            c2: 1.494,
            r_mode: RandomMode::ScalarPerParticle,
            plateau_stop: false,
        }
    }
}

impl PsoParams {
    pub fn check(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.swarm_size == 0 {
            problems.push("swarm size must be at least 1".to_string());
        }
        if self.max_iters == 0 {
            problems.push("iteration count must be at least 1".to_string());
        }
        for (name, v) in [("c0", self.c0), ("c1", self.c1), ("c2", self.c2)] {
            if !(v >= 0.0 && v.is_finite()) {
                problems.push(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone)]
pub struct Particle {
    pub x: PrecoderSet,
    pub v: Velocity,
    pub pbest_x: PrecoderSet,
    pub pbest_value: f64,
}

/// Radial projection onto `{F : sum_k ||F_k||_F^2 <= p_max}`. Feasible inputs
/// are returned unchanged.
pub fn project_to_power_ball(f: &PrecoderSet, p_max: f64) -> PrecoderSet {
    let power = total_power(f);
    if power <= p_max {
        f.clone()
    } else {
        f.scaled((p_max / power).sqrt())
    }
}

/// `c0 v + c1 r1 (pbest - x) + c2 r2 (gbest - x)`.
pub fn update_velocity(
    particle: &Particle,
    gbest_x: &PrecoderSet,
    params: &PsoParams,
    draws: &mut impl UniformSource,
) -> Velocity {
    let Particle { x, v, pbest_x, .. } = particle;
    match params.r_mode {
        RandomMode::ScalarPerParticle => {
            let r1 = draws.uniform01();
            let r2 = draws.uniform01();
            v.scaled(params.c0)
                .add_scaled(params.c1 * r1, &pbest_x.sub(x))
                .add_scaled(params.c2 * r2, &gbest_x.sub(x))
        }
        RandomMode::PerEntry => {
            let mut out = v.scaled(params.c0);
            for (k, vk) in out.0.iter_mut().enumerate() {
                let (xk, pk, gk) = (&x.0[k], &pbest_x.0[k], &gbest_x.0[k]);
                for i in 0..vk.nrows() {
                    for j in 0..vk.ncols() {
                        let r1 = draws.uniform01();
                        let r2 = draws.uniform01();
                        vk[(i, j)] += real(params.c1 * r1) * (pk[(i, j)] - xk[(i, j)])
                            + real(params.c2 * r2) * (gk[(i, j)] - xk[(i, j)]);
                    }
                }
            }
            out
        }
    }
}

pub fn update_position(x: &PrecoderSet, v: &Velocity) -> PrecoderSet {
    x.add_scaled(1.0, v)
}

/// Weighted sum-rate of `f` under its Wiener decoders.
pub fn evaluate(cfg: &SystemConfig, h: &ChannelSet, f: &PrecoderSet) -> Result<(f64, DecoderSet)> {
    let w = mmse_decoders(cfg, h, f)?;
    let value = weighted_sum_rate(cfg, h, f, &w)?;
    Ok((value, w))
}

/// Random precoder set with i.i.d. CN(0, 1) entries, scaled to spend exactly
/// the power budget.
pub fn random_full_power(cfg: &SystemConfig, stream: &RngStream) -> PrecoderSet {
    let mut rng = stream.open();
    let f = PrecoderSet(
        (0..cfg.users)
            .map(|_| rng.complex_gaussian_matrix(cfg.tx_antennas, cfg.streams))
            .collect(),
    );
    let power = f.total_power();
    if power > 0.0 {
        f.scaled((cfg.p_max / power).sqrt())
    } else {
        f
    }
}

/// Swarm state between iterations.
#[derive(Debug, Clone)]
pub struct Swarm<'a> {
    cfg: &'a SystemConfig,
    h: &'a ChannelSet,
    params: PsoParams,
    stream: RngStream,
    pub particles: Vec<Particle>,
    pub gbest_index: usize,
    pub gbest_x: PrecoderSet,
    pub gbest_value: f64,
    pub iter: usize,
    /// `(iteration, gbest_value)`, starting with the initial swarm at 0.
    pub trace: Vec<(usize, f64)>,
}

impl<'a> Swarm<'a> {
    /// Builds the initial swarm. Particle 0 sits at `seed_x`, or at the BD
    /// design when no seed is given; the rest are random full-power points.
    /// Velocities start at zero and personal bests at the initial positions.
    pub fn new(
        cfg: &'a SystemConfig,
        h: &'a ChannelSet,
        params: PsoParams,
        stream: RngStream,
        seed_x: Option<PrecoderSet>,
    ) -> Result<Self> {
        cfg.check()?;
        h.check(cfg)?;
        params.check()?;
        let seed = match seed_x {
            Some(f) => {
                f.check(cfg)?;
                project_to_power_ball(&f, cfg.p_max)
            }
            None => bd_design(cfg, h)?.precoders,
        };

        let init = stream.domain(StreamDomain::SwarmInit);
        let positions: Vec<PrecoderSet> = std::iter::once(seed)
            .chain((1..params.swarm_size).map(|i| random_full_power(cfg, &init.particle(i as u64))))
            .collect();
        let values = positions
            .par_iter()
            .enumerate()
            .map(|(i, x)| evaluate(cfg, h, x).map(|(v, _)| v).map_err(|e| wrap(i, 0, e)))
            .collect::<Vec<_>>()
            .into_iter()
            .collect::<Result<Vec<f64>>>()?;

        let particles: Vec<Particle> = positions
            .into_iter()
            .zip(values)
            .map(|(x, value)| Particle {
                v: PrecoderSet::zeros(cfg),
                pbest_x: x.clone(),
                x,
                pbest_value: value,
            })
            .collect();
        let gbest_index = leader(&particles);
        let gbest_x = particles[gbest_index].pbest_x.clone();
        let gbest_value = particles[gbest_index].pbest_value;
        Ok(Self {
            cfg,
            h,
            params,
            stream,
            particles,
            gbest_index,
            gbest_x,
            gbest_value,
            iter: 0,
            trace: vec![(0, gbest_value)],
        })
    }

    /// One synchronous iteration: move, project, evaluate, update bests.
    pub fn step(&mut self) -> Result<()> {
        let iteration = self.iter + 1;
        let (cfg, h, params, gbest_x) = (self.cfg, self.h, &self.params, &self.gbest_x);
        let velocity = self.stream.domain(StreamDomain::Velocity).iteration(iteration as u64);

        let outcomes: Vec<Result<()>> = self
            .particles
            .par_iter_mut()
            .enumerate()
            .map(|(i, p)| {
                let mut draws = velocity.particle(i as u64).open();
                p.v = update_velocity(p, gbest_x, params, &mut draws);
                p.x = project_to_power_ball(&update_position(&p.x, &p.v), cfg.p_max);
                let (value, _) = evaluate(cfg, h, &p.x).map_err(|e| wrap(i, iteration, e))?;
                if value > p.pbest_value {
                    p.pbest_value = value;
                    p.pbest_x = p.x.clone();
                }
                Ok(())
            })
            .collect();
        outcomes.into_iter().collect::<Result<()>>()?;

        let best = leader(&self.particles);
        if self.particles[best].pbest_value > self.gbest_value {
            self.gbest_index = best;
            self.gbest_value = self.particles[best].pbest_value;
            self.gbest_x = self.particles[best].pbest_x.clone();
        }
        self.iter = iteration;
        self.trace.push((iteration, self.gbest_value));
        Ok(())
    }

    fn plateaued(&self) -> bool {
        if self.trace.len() <= PLATEAU_WINDOW {
            return false;
        }
        let then = self.trace[self.trace.len() - 1 - PLATEAU_WINDOW].1;
        self.gbest_value - then <= PLATEAU_TOL
    }

    pub fn run(mut self) -> Result<PsoOutcome> {
        while self.iter < self.params.max_iters {
            self.step()?;
            if self.params.plateau_stop && self.plateaued() {
                break;
            }
        }
        let decoders = mmse_decoders(self.cfg, self.h, &self.gbest_x)?;
        Ok(PsoOutcome {
            gbest_x: self.gbest_x,
            gbest_value: self.gbest_value,
            decoders,
            trace: self.trace,
        })
    }
}

// Highest personal best; ties go to the lowest index.
fn leader(particles: &[Particle]) -> usize {
    let mut best = 0;
    for (i, p) in particles.iter().enumerate().skip(1) {
        if p.pbest_value > particles[best].pbest_value {
            best = i;
        }
    }
    best
}

fn wrap(particle: usize, iteration: usize, source: Error) -> Error {
    Error::ParticleEvaluation { particle, iteration, source: Box::new(source) }
}

#[derive(Debug, Clone)]
pub struct PsoOutcome {
    pub gbest_x: PrecoderSet,
    pub gbest_value: f64,
    /// Wiener decoders of `gbest_x`.
    pub decoders: DecoderSet,
    pub trace: Vec<(usize, f64)>,
}

/// Runs the swarm for `params.max_iters` iterations (fewer with plateau
/// stopping) and returns the global best.
pub fn optimize(
    cfg: &SystemConfig,
    h: &ChannelSet,
    params: &PsoParams,
    stream: RngStream,
    seed_x: Option<PrecoderSet>,
) -> Result<PsoOutcome> {
    Swarm::new(cfg, h, params.clone(), stream, seed_x)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bd::bd_rate_closed_form;
    use crate::channel::{gen_channels, ConstantUniform};
    use crate::numerics::{c, frobenius, svd, CMatrix};
    use proptest::prelude::*;

    fn cfg(nt: usize, d: usize, p_max: f64) -> SystemConfig {
        SystemConfig {
            users: 3,
            tx_antennas: nt,
            rx_antennas: 2,
            streams: d,
            noise_power: 1.0,
            p_max,
            weights: vec![0.1, 0.2, 0.7],
        }
    }

    fn random_set(cfg: &SystemConfig, seed: u64, power: f64) -> PrecoderSet {
        random_full_power(&cfg.with_p_max(power), &RngStream::new(seed, StreamDomain::SwarmInit))
    }

    fn particle(x: PrecoderSet, v: Velocity, pbest: PrecoderSet) -> Particle {
        Particle { x, v, pbest_x: pbest, pbest_value: 0.0 }
    }

    fn set_distance(a: &PrecoderSet, b: &PrecoderSet) -> f64 {
        a.0.iter().zip(&b.0).map(|(x, y)| frobenius(&(x - y))).sum()
    }

    #[test]
    fn projection_keeps_feasible_points() {
        let cfg = cfg(6, 1, 10.0);
        let f = random_set(&cfg, 1, 7.0);
        assert_eq!(project_to_power_ball(&f, cfg.p_max), f);
    }

    #[test]
    fn projection_halves_at_four_times_budget() {
        let cfg = cfg(6, 2, 10.0);
        let f = random_set(&cfg, 2, 40.0);
        let g = project_to_power_ball(&f, cfg.p_max);
        assert!(set_distance(&g, &f.scaled(0.5)) < 1e-14);
        assert!((g.total_power() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn velocity_without_attraction() {
        let cfg = cfg(4, 1, 1.0);
        let x = random_set(&cfg, 3, 1.0);
        let v = random_set(&cfg, 4, 2.0);
        let p = particle(x.clone(), v.clone(), x.clone());
        let mut draws = RngStream::new(0, StreamDomain::Velocity).open();
        let params = PsoParams::default();
        let out = update_velocity(&p, &x, &params, &mut draws);
        assert!(set_distance(&out, &v.scaled(0.7)) < 1e-15);
    }

    #[test]
    fn velocity_pure_attraction() {
        let cfg = cfg(4, 2, 1.0);
        let x = random_set(&cfg, 5, 1.0);
        let pbest = random_set(&cfg, 6, 1.0);
        let gbest = random_set(&cfg, 7, 1.0);
        let v = random_set(&cfg, 8, 3.0);
        let params = PsoParams { c0: 0.0, ..PsoParams::default() };
        for mode in [RandomMode::ScalarPerParticle, RandomMode::PerEntry] {
            let params = PsoParams { r_mode: mode, ..params.clone() };
            let out = update_velocity(&particle(x.clone(), v.clone(), pbest.clone()), &gbest, &params, &mut ConstantUniform(1.0));
            let want = pbest.sub(&x).scaled(1.494).add_scaled(1.494, &gbest.sub(&x));
            assert!(set_distance(&out, &want) < 1e-14);
        }
    }

    #[test]
    fn velocity_repeatable_for_fixed_stream() {
        let cfg = cfg(6, 1, 1.0);
        let p = particle(random_set(&cfg, 1, 1.0), random_set(&cfg, 2, 1.0), random_set(&cfg, 3, 1.0));
        let g = random_set(&cfg, 4, 1.0);
        let stream = RngStream::new(11, StreamDomain::Velocity).particle(3).iteration(9);
        for mode in [RandomMode::ScalarPerParticle, RandomMode::PerEntry] {
            let params = PsoParams { r_mode: mode, ..PsoParams::default() };
            let a = update_velocity(&p, &g, &params, &mut stream.open());
            let b = update_velocity(&p, &g, &params, &mut stream.open());
            assert_eq!(a, b);
        }
    }

    #[test]
    fn position_update_contracts() {
        let cfg = cfg(6, 2, 1.0);
        let x = random_set(&cfg, 1, 1.0);
        let v1 = random_set(&cfg, 2, 1.0);
        let v2 = random_set(&cfg, 3, 1.0);
        assert_eq!(update_position(&x, &PrecoderSet::zeros(&cfg)), x);
        assert!(set_distance(&update_position(&PrecoderSet::zeros(&cfg), &v1), &v1) == 0.0);
        let joint = update_position(&x, &v1.add_scaled(1.0, &v2));
        let chained = update_position(&update_position(&x, &v1), &v2);
        assert!(set_distance(&joint, &chained) < 1e-14);
    }

    #[test]
    fn evaluate_zero_and_bd() {
        let cfg = cfg(6, 1, 10.0);
        let h = gen_channels(&cfg, &RngStream::channel(1, 0));
        assert_eq!(evaluate(&cfg, &h, &PrecoderSet::zeros(&cfg)).unwrap().0, 0.0);
        let bd = bd_design(&cfg, &h).unwrap();
        let closed = bd_rate_closed_form(&cfg, &bd.design).unwrap();
        let (value, _) = evaluate(&cfg, &h, &bd.precoders).unwrap();
        assert!((value - closed).abs() <= 1e-9);
    }

    #[test]
    fn evaluate_rotation_invariant() {
        let cfg = cfg(4, 2, 10.0);
        let h = gen_channels(&cfg, &RngStream::channel(2, 0));
        let f = random_set(&cfg, 9, 10.0);
        let rot = PrecoderSet(
            f.0.iter()
                .enumerate()
                .map(|(k, fk)| fk * svd(&CMatrix::from_fn(2, 2, |i, j| c((i + k) as f64, j as f64 - 0.5))).unwrap().u)
                .collect(),
        );
        let a = evaluate(&cfg, &h, &f).unwrap().0;
        let b = evaluate(&cfg, &h, &rot).unwrap().0;
        assert!((a - b).abs() <= 1e-9);
    }

    #[test]
    fn degenerate_swarm_stays_at_bd() {
        let cfg = cfg(6, 1, 10.0);
        let h = gen_channels(&cfg, &RngStream::channel(3, 0));
        let params = PsoParams { swarm_size: 1, max_iters: 20, c1: 0.0, c2: 0.0, ..PsoParams::default() };
        let out = optimize(&cfg, &h, &params, RngStream::new(3, StreamDomain::Velocity), None).unwrap();
        let bd = bd_design(&cfg, &h).unwrap();
        let bd_value = bd_rate_closed_form(&cfg, &bd.design).unwrap();
        assert_eq!(out.trace.len(), 21);
        for (_, v) in &out.trace {
            assert!((v - bd_value).abs() <= 1e-9);
        }
    }

    #[test]
    fn swarm_invariants_hold_each_iteration() {
        let cfg = cfg(4, 2, 31.6);
        let h = gen_channels(&cfg, &RngStream::channel(4, 0));
        let bd = bd_design(&cfg, &h).unwrap();
        let bd_value = weighted_sum_rate(&cfg, &h, &bd.precoders, &bd.decoders).unwrap();
        let params = PsoParams { swarm_size: 12, max_iters: 25, ..PsoParams::default() };
        let mut swarm = Swarm::new(&cfg, &h, params, RngStream::new(4, StreamDomain::Velocity), None).unwrap();
        while swarm.iter < 25 {
            swarm.step().unwrap();
            for p in &swarm.particles {
                assert!(p.x.total_power() <= cfg.p_max + 1e-9);
                let (v, _) = evaluate(&cfg, &h, &p.pbest_x).unwrap();
                assert!((v - p.pbest_value).abs() <= 1e-12);
                assert!(p.pbest_value <= swarm.gbest_value);
            }
            assert!(swarm.gbest_value >= bd_value - 1e-9);
        }
        assert!(swarm.trace.windows(2).all(|w| w[1].1 >= w[0].1));
    }

    #[test]
    fn plateau_stop_ends_early() {
        let cfg = cfg(6, 1, 10.0);
        let h = gen_channels(&cfg, &RngStream::channel(5, 0));
        let params = PsoParams { swarm_size: 1, max_iters: 500, c1: 0.0, c2: 0.0, plateau_stop: true, ..PsoParams::default() };
        let out = optimize(&cfg, &h, &params, RngStream::new(5, StreamDomain::Velocity), None).unwrap();
        assert_eq!(out.trace.len(), PLATEAU_WINDOW + 1);
    }

    #[test]
    fn explicit_seed_is_projected() {
        let cfg = cfg(6, 1, 10.0);
        let h = gen_channels(&cfg, &RngStream::channel(6, 0));
        let seed = random_set(&cfg, 6, 40.0);
        let swarm = Swarm::new(&cfg, &h, PsoParams { swarm_size: 3, ..PsoParams::default() }, RngStream::new(6, StreamDomain::Velocity), Some(seed)).unwrap();
        assert!((swarm.particles[0].x.total_power() - 10.0).abs() < 1e-9);
        for p in &swarm.particles[1..] {
            assert!((p.x.total_power() - 10.0).abs() < 1e-9);
            assert_eq!(frobenius(&p.v.0[0]), 0.0);
        }
    }

    #[test]
    fn rejects_bad_params() {
        assert!(PsoParams { swarm_size: 0, ..PsoParams::default() }.check().is_err());
        assert!(PsoParams { c1: -1.0, ..PsoParams::default() }.check().is_err());
        assert!(PsoParams::default().check().is_ok());
    }

    #[test]
    fn identical_across_thread_counts() {
        let cfg = cfg(4, 1, 10.0);
        let h = gen_channels(&cfg, &RngStream::channel(8, 0));
        let params = PsoParams { swarm_size: 16, max_iters: 15, ..PsoParams::default() };
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| optimize(&cfg, &h, &params, RngStream::new(8, StreamDomain::Velocity), None).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.gbest_x, b.gbest_x);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn projection_idempotent(seed in any::<u64>(), power in 0.1f64..100.0) {
            let cfg = cfg(6, 2, 10.0);
            let f = random_set(&cfg, seed, power);
            let once = project_to_power_ball(&f, cfg.p_max);
            let twice = project_to_power_ball(&once, cfg.p_max);
            prop_assert!(once.total_power() <= cfg.p_max * (1.0 + 1e-12));
            for (a, b) in once.0.iter().zip(&twice.0) {
                prop_assert!(a.iter().zip(b.iter()).all(|(x, y)| (x - y).norm() <= 1e-12));
            }
        }
    }
}
