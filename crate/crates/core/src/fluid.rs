//! Delay-differential fluid model of the aggregate ABC queueing delay:
//!
//! `x'(t) = A - (x(t - tau) - d_t)+ / delta`, with `x` clamped at zero.

use crate::abc_router::AbcParams;
use crate::types::{SimTime, MTU};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluidParams {
    pub eta: f64,
    pub delta: SimTime,
    pub d_t: SimTime,
    pub n: u32,
    pub mu_bps: f64,
    /// Feedback delay.
    pub tau: SimTime,
    /// Period of each sender's one-packet additive increase.
    pub l: SimTime,
}

impl FluidParams {
    pub fn from_abc(p: &AbcParams, n: u32, mu_bps: f64, tau: SimTime, l: SimTime) -> Self {
        FluidParams {
            eta: p.eta,
            delta: p.delta,
            d_t: p.delay_threshold,
            n,
            mu_bps,
            tau,
            l,
        }
    }

    /// Senders that add one packet per RTT have `l = tau + x*`, and `x*`
    /// depends on `l` through `A`. `x - x*(tau + x)` is increasing in `x`, so
    /// bisect for its root; where `x*` jumps (at `A = 0`) the root sits on
    /// the jump.
    pub fn with_rtt_ai_period(p: &AbcParams, n: u32, mu_bps: f64, tau: SimTime) -> Self {
        let mut fp = FluidParams::from_abc(p, n, mu_bps, tau, tau);
        let residual = |fp: &mut FluidParams, x: f64| {
            fp.l = SimTime::from_secs_f64(tau.as_secs_f64() + x);
            x - fp.fixed_point_delay_secs()
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        if residual(&mut fp, lo) >= 0.0 {
            fp.l = tau;
            return fp;
        }
        while residual(&mut fp, hi) < 0.0 {
            hi *= 2.0;
        }
        while hi - lo > 1e-7 {
            let mid = 0.5 * (lo + hi);
            if residual(&mut fp, mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        fp.l = SimTime::from_secs_f64(tau.as_secs_f64() + hi);
        fp
    }

    pub fn mu_pkts(&self) -> f64 {
        self.mu_bps / (MTU as f64 * 8.0)
    }

    pub fn a(&self) -> f64 {
        (self.eta - 1.0) + self.n as f64 / (self.mu_pkts() * self.l.as_secs_f64())
    }

    pub fn fixed_point_delay_secs(&self) -> f64 {
        let a = self.a();
        if a > 0.0 {
            a * self.delta.as_secs_f64() + self.d_t.as_secs_f64()
        } else {
            0.0
        }
    }

    /// `delta > 2 tau / 3`.
    pub fn satisfies_stability_criterion(&self) -> bool {
        3 * self.delta.as_micros() > 2 * self.tau.as_micros()
    }

    fn rhs(&self, delayed_x: f64) -> f64 {
        self.a() - (delayed_x - self.d_t.as_secs_f64()).max(0.0) / self.delta.as_secs_f64()
    }
}

/// Enqueue rate at the fixed point.
pub fn fixed_point_rate(p: &FluidParams) -> f64 {
    let a = p.a();
    if a < 0.0 {
        (1.0 + a) * p.mu_bps
    } else {
        p.mu_bps
    }
}

/// Queueing delay `x` in seconds, sampled every `step` from t = 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub step: f64,
    pub x: Vec<f64>,
    /// Enqueue rate `mu (1 + x')` at each sample, from the unclamped slope.
    pub rate: Vec<f64>,
}

impl Trajectory {
    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.step
    }

    pub fn last(&self) -> f64 {
        *self.x.last().expect("non-empty trajectory")
    }
}

/// Forward Euler with a dense history buffer. `history(t)` supplies `x` for
/// `t` in `[-tau, 0]`; the delayed term uses the nearest earlier sample.
pub fn integrate(p: &FluidParams, history: impl Fn(f64) -> f64, horizon: SimTime, step: SimTime) -> Trajectory {
    assert!(step > SimTime::ZERO && step <= p.tau, "step must be in (0, tau]");
    let h = step.as_secs_f64();
    let lag = (p.tau.as_micros() as f64 / step.as_micros() as f64).round() as usize;
    let n = (horizon.as_micros() / step.as_micros()) as usize;
    let mut x = Vec::with_capacity(n + 1);
    let mut rate = Vec::with_capacity(n + 1);
    x.push(history(0.0).max(0.0));
    for k in 0..n {
        let delayed = if k >= lag {
            x[k - lag]
        } else {
            history((k as f64 - lag as f64) * h).max(0.0)
        };
        let slope = p.rhs(delayed);
        rate.push(p.mu_bps * (1.0 + slope));
        x.push((x[k] + h * slope).max(0.0));
    }
    let last_delayed = if n >= lag {
        x[n - lag]
    } else {
        history((n as f64 - lag as f64) * h)
    };
    rate.push(p.mu_bps * (1.0 + p.rhs(last_delayed)));
    Trajectory { step: h, x, rate }
}

/// Mean service rate over the final `window` seconds: the link runs at `mu`
/// while the queue is non-empty and passes the enqueue rate through otherwise.
pub fn delivered_rate(p: &FluidParams, t: &Trajectory, window: f64) -> f64 {
    let from = t.x.len().saturating_sub((window / t.step).round() as usize + 1);
    let served = t.x[from..]
        .iter()
        .zip(&t.rate[from..])
        .map(|(&x, &r)| if x > 0.0 { p.mu_bps } else { r.min(p.mu_bps) });
    served.sum::<f64>() / (t.x.len() - from) as f64
}

/// Default step: a hundredth of the feedback delay.
pub fn default_step(p: &FluidParams) -> SimTime {
    SimTime::from_micros((p.tau.as_micros() / 100).max(1))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Verdict {
    /// Within the band over the whole final window; `settling_time` is when
    /// the trajectory entered the band for good.
    Converged {
        settling_time: f64,
    },
    Oscillating,
}

/// Checks whether the final `window` seconds stay within `tol` of `target`.
pub fn verdict(t: &Trajectory, target: f64, tol: f64, window: f64) -> Verdict {
    let inside = |v: f64| (v - target).abs() <= tol;
    let from = t.x.len().saturating_sub((window / t.step).round() as usize + 1);
    if !t.x[from..].iter().all(|&v| inside(v)) {
        return Verdict::Oscillating;
    }
    let last_out = t.x.iter().rposition(|&v| !inside(v));
    Verdict::Converged {
        settling_time: last_out.map_or(0.0, |i| t.time(i + 1)),
    }
}

/// Within 1% of `x*` over the final `10 tau`. An empty-queue fixed point
/// has no relative scale, so 1% of `d_t` stands in.
pub fn settles(p: &FluidParams, t: &Trajectory) -> Verdict {
    let target = p.fixed_point_delay_secs();
    let scale = if target > 0.0 { target } else { p.d_t.as_secs_f64() };
    verdict(t, target, 0.01 * scale, 10.0 * p.tau.as_secs_f64())
}
