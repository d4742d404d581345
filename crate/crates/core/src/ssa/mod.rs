//! Exact event-driven simulation of the scaled jump Markov process.
//!
//! State is kept exactly: integer molecule counts `X_j` per site (the
//! concentration is the derived `u_j = X_j/μ`) and integer counts per
//! macrosite. Six channel kinds drive the dynamics — fast onsite reactions,
//! fast mixed reactions, left/right diffusion hops, and the two slow
//! macrosite channels — all indexed in one Fenwick tree keyed by channel id.
//!
//! Channel layout: sites first, each contributing a contiguous block
//! `[fast_c.., fast_mixed.., diff_left, diff_right]`, then macrosites, each
//! contributing `[slow_mixed.., slow_d..]`.

mod index;

pub use index::PropensityIndex;

use rand::Rng;
use thiserror::Error;

use crate::lattice::{macro_weights, Field, Grid, WeightKind};
use crate::network::{NetworkError, RatePolynomial, ReactionNetwork, TruncationSpec};
use crate::rng::exp_variate;
use crate::traj::{JumpKind, JumpRecord, Snapshot, Trajectory, TruncationReason};

#[derive(Debug, Error, PartialEq)]
pub enum SsaError {
    #[error("total propensity is zero: state is absorbed")]
    ExtinctTotal,
    #[error("event would drive {kind} index {index} negative")]
    NegativityBreach { kind: &'static str, index: usize },
    #[error("initial profile is negative at site {j} (value {value})")]
    NegativeInitial { j: usize, value: f64 },
    #[error(transparent)]
    Rate(#[from] NetworkError),
}

/// Exact scaled lattice state of the jump process.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroState {
    pub t: f64,
    grid: Grid,
    mu: f64,
    x: Vec<i64>,
    u_d: Vec<i64>,
}

impl MicroState {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Molecule counts per site.
    pub fn x(&self) -> &[i64] {
        &self.x
    }

    pub fn u_d(&self) -> &[i64] {
        &self.u_d
    }

    #[inline]
    pub fn u(&self, j0: usize) -> f64 {
        self.x[j0] as f64 / self.mu
    }

    pub fn total_molecules(&self) -> i64 {
        self.x.iter().sum()
    }

    pub fn u_c_field(&self) -> Field {
        Field::new(
            self.grid,
            self.x.iter().map(|&x| x as f64 / self.mu).collect(),
        )
    }

    pub fn snapshot(&self, t: f64) -> Snapshot {
        Snapshot {
            t,
            u_c: self.x.iter().map(|&x| x as f64 / self.mu).collect(),
            u_d: self.u_d.clone(),
        }
    }

    /// Rebuild the exact integer state from a recorded snapshot (the stored
    /// concentrations are exact multiples of 1/μ).
    pub fn from_snapshot(grid: Grid, mu: f64, snap: &Snapshot) -> Self {
        Self {
            t: snap.t,
            grid,
            mu,
            x: snap.u_c.iter().map(|&u| (u * mu).round() as i64).collect(),
            u_d: snap.u_d.clone(),
        }
    }
}

/// Round the projected profile to the molecule lattice:
/// `X_j = round(μ (P_N f0)_j)`, so `‖u_C(0) − P_N f0‖_∞ ≤ 1/(2μ)`.
pub fn init_state(f0: &Field, d0: &[i64], mu: f64) -> Result<MicroState, SsaError> {
    assert!(mu > 0.0);
    let grid = f0.grid();
    assert_eq!(d0.len(), grid.n_macro());
    let mut x = Vec::with_capacity(grid.n_sites());
    for (j, &v) in f0.values().iter().enumerate() {
        if v < 0.0 {
            return Err(SsaError::NegativeInitial { j: j + 1, value: v });
        }
        x.push((mu * v).round() as i64);
    }
    if let Some(j) = d0.iter().position(|&d| d < 0) {
        return Err(SsaError::NegativeInitial {
            j: j + 1,
            value: d0[j] as f64,
        });
    }
    Ok(MicroState {
        t: 0.0,
        grid,
        mu,
        x,
        u_d: d0.to_vec(),
    })
}

/// An applied transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    /// Fast continuous-only reaction at site `j` (0-based), table index `r`.
    FastOnsite { j: usize, r: usize },
    FastMixed { j: usize, r: usize },
    /// Slow macrosite reaction at macrosite `l` (0-based), table index `r`.
    SlowMixed { l: usize, r: usize },
    SlowPure { l: usize, r: usize },
    DiffLeft { j: usize },
    DiffRight { j: usize },
}

struct FastChannel {
    id: usize,
    gamma_c: i64,
    rate: RatePolynomial,
}

struct SlowMixedChannel {
    id: usize,
    gamma_d: i64,
    rate: RatePolynomial,
    /// `a_{j,N} = ∫_{I_j} a` for every site.
    a_site: Vec<f64>,
    /// Deposited molecules per site, `round(γ_C b_{j,N})`. The idealized
    /// jump adds the un-rounded `γ_C b_{j,N}/μ` to the concentration;
    /// rounding keeps the state integer at an O(1/μ) cost, the size of the
    /// term itself.
    quanta: Vec<i64>,
    any_negative_quanta: bool,
}

struct SlowPureChannel {
    id: usize,
    gamma_d: i64,
    rate: RatePolynomial,
}

/// Number of events between exact cache rebuilds.
const REBUILD_PERIOD: u64 = 1 << 20;

/// The event engine: compiled channel tables, the propensity index, and the
/// current state. One engine per replicate; nothing is shared.
pub struct SsaEngine {
    grid: Grid,
    mu: f64,
    inv_mu: f64,
    n2: f64,
    fast_c: Vec<FastChannel>,
    fast_mixed: Vec<FastChannel>,
    slow_mixed: Vec<SlowMixedChannel>,
    slow_d: Vec<SlowPureChannel>,
    trunc: Option<TruncationSpec>,
    guard_enabled: bool,
    site_stride: usize,
    slow_offset: usize,
    macro_stride: usize,
    index: PropensityIndex,
    /// Cached `Σ_{j∈J_ℓ} a_{j,N} u_j` per (macrosite, slow-mixed channel).
    macro_avgs: Vec<f64>,
    state: MicroState,
    events_since_rebuild: u64,
}

impl SsaEngine {
    pub fn new(
        net: &ReactionNetwork,
        state: MicroState,
        guard_enabled: bool,
    ) -> Result<Self, SsaError> {
        let grid = state.grid;
        let n = grid.n_sites();
        let k = grid.n_macro();
        let mu = state.mu;

        let fast_c: Vec<FastChannel> = net
            .fast_c
            .iter()
            .map(|(id, r)| FastChannel {
                id: *id,
                gamma_c: r.gamma_c as i64,
                rate: r.rate.clone(),
            })
            .collect();
        let fast_mixed: Vec<FastChannel> = net
            .fast_mixed
            .iter()
            .map(|(id, r)| FastChannel {
                id: *id,
                gamma_c: r.gamma_c as i64,
                rate: r.rate.clone(),
            })
            .collect();
        let mut slow_mixed = Vec::with_capacity(net.slow_mixed.len());
        for (id, r) in &net.slow_mixed {
            let a = r.a_weight.as_ref().expect("validated slow_mixed has a_weight");
            let b = r.b_weight.as_ref().expect("validated slow_mixed has b_weight");
            let mut a_site = Vec::with_capacity(n);
            let mut b_site = Vec::with_capacity(n);
            for l in 1..=k {
                a_site.extend(macro_weights(&a.coeffs, grid, l, WeightKind::A).unwrap());
                b_site.extend(macro_weights(&b.coeffs, grid, l, WeightKind::B).unwrap());
            }
            let quanta: Vec<i64> = b_site
                .iter()
                .map(|&bj| (r.gamma_c as f64 * bj).round() as i64)
                .collect();
            slow_mixed.push(SlowMixedChannel {
                id: *id,
                gamma_d: r.gamma_d as i64,
                rate: r.rate.clone(),
                a_site,
                any_negative_quanta: quanta.iter().any(|&q| q < 0),
                quanta,
            });
        }
        let slow_d: Vec<SlowPureChannel> = net
            .slow_d
            .iter()
            .map(|(id, r)| SlowPureChannel {
                id: *id,
                gamma_d: r.gamma_d as i64,
                rate: r.rate.clone(),
            })
            .collect();

        let site_stride = fast_c.len() + fast_mixed.len() + 2;
        let macro_stride = slow_mixed.len() + slow_d.len();
        let slow_offset = n * site_stride;
        let channels = slow_offset + k * macro_stride;

        let mut engine = Self {
            grid,
            mu,
            inv_mu: 1.0 / mu,
            n2: (n as f64) * (n as f64),
            fast_c,
            fast_mixed,
            slow_mixed,
            slow_d,
            trunc: net.truncation,
            guard_enabled,
            site_stride,
            slow_offset,
            macro_stride,
            index: PropensityIndex::new(channels.max(1)),
            macro_avgs: vec![0.0; k * net.slow_mixed.len().max(1)],
            state,
            events_since_rebuild: 0,
        };
        engine.rebuild_caches()?;
        Ok(engine)
    }

    pub fn state(&self) -> &MicroState {
        &self.state
    }

    pub fn t(&self) -> f64 {
        self.state.t
    }

    /// Cached total rate over all channels.
    pub fn total_propensity(&self) -> f64 {
        self.index.total()
    }

    pub fn index(&self) -> &PropensityIndex {
        &self.index
    }

    pub fn macro_avg(&self, l0: usize, ri: usize) -> f64 {
        self.macro_avgs[l0 * self.slow_mixed.len() + ri]
    }

    /// Replace the state (same grid and scale) and rebuild every cache, so
    /// the indexed rates are exactly the generator rates at that state.
    pub fn set_state(&mut self, state: MicroState) -> Result<(), SsaError> {
        assert_eq!(state.grid, self.grid);
        assert_eq!(state.mu, self.mu);
        self.state = state;
        self.rebuild_caches()
    }

    /// The transition a channel id stands for, without applying it.
    pub fn decode(&self, ch: usize) -> Event {
        if ch < self.slow_offset {
            let j = ch / self.site_stride;
            let slot = ch % self.site_stride;
            let nfc = self.fast_c.len();
            let nfm = self.fast_mixed.len();
            if slot < nfc {
                return Event::FastOnsite { j, r: slot };
            }
            if slot < nfc + nfm {
                return Event::FastMixed { j, r: slot - nfc };
            }
            if slot == nfc + nfm {
                return Event::DiffLeft { j };
            }
            return Event::DiffRight { j };
        }
        let rel = ch - self.slow_offset;
        let l = rel / self.macro_stride;
        let slot = rel % self.macro_stride;
        if slot < self.slow_mixed.len() {
            Event::SlowMixed { l, r: slot }
        } else {
            Event::SlowPure {
                l,
                r: slot - self.slow_mixed.len(),
            }
        }
    }

    pub fn fast_c_gamma(&self, r: usize) -> i64 {
        self.fast_c[r].gamma_c
    }

    pub fn fast_mixed_gamma(&self, r: usize) -> i64 {
        self.fast_mixed[r].gamma_c
    }

    pub fn slow_mixed_gamma_d(&self, r: usize) -> i64 {
        self.slow_mixed[r].gamma_d
    }

    /// Quantized per-site deposit of a slow mixed channel.
    pub fn slow_mixed_quanta(&self, r: usize) -> &[i64] {
        &self.slow_mixed[r].quanta
    }

    pub fn slow_d_gamma_d(&self, r: usize) -> i64 {
        self.slow_d[r].gamma_d
    }

    /// Positivity multiplier for a slow mixed channel: 1 when the deposit
    /// keeps every site of the macrosite nonnegative, else 0.
    pub fn positivity_guard(&self, l0: usize, ri: usize) -> f64 {
        let ch = &self.slow_mixed[ri];
        if !ch.any_negative_quanta {
            return 1.0;
        }
        for j in self.grid.macro_sites0(l0) {
            if self.state.x[j] + ch.quanta[j] < 0 {
                return 0.0;
            }
        }
        1.0
    }

    #[inline]
    fn eval(&self, id: usize, poly: &RatePolynomial, y1: f64, y2: f64) -> Result<f64, SsaError> {
        let mut v = poly.eval(y1, y2);
        if v < 0.0 {
            if v >= -1e-9 {
                v = 0.0;
            } else {
                return Err(NetworkError::NegativeRateAtRuntime { id, y1, y2, value: v }.into());
            }
        }
        if let Some(t) = &self.trunc {
            let eta = t.eta_n(y1, y2);
            if eta < 1.0 {
                v *= eta;
            }
        }
        Ok(v)
    }

    #[inline]
    fn refresh_site(&mut self, j0: usize) -> Result<(), SsaError> {
        let u = self.state.x[j0] as f64 * self.inv_mu;
        let d = self.state.u_d[self.grid.macro_of0(j0)] as f64;
        let mut ch = j0 * self.site_stride;
        for fi in 0..self.fast_c.len() {
            let r = self.mu * self.eval(self.fast_c[fi].id, &self.fast_c[fi].rate, u, 0.0)?;
            self.index.set(ch, r);
            ch += 1;
        }
        for fi in 0..self.fast_mixed.len() {
            let r = self.mu * self.eval(self.fast_mixed[fi].id, &self.fast_mixed[fi].rate, u, d)?;
            self.index.set(ch, r);
            ch += 1;
        }
        let hop = self.n2 * self.state.x[j0] as f64;
        self.index.set(ch, hop);
        self.index.set(ch + 1, hop);
        Ok(())
    }

    fn refresh_slow_mixed(&mut self, l0: usize, ri: usize) -> Result<(), SsaError> {
        let avg = self.macro_avgs[l0 * self.slow_mixed.len() + ri];
        let d = self.state.u_d[l0] as f64;
        let ch = &self.slow_mixed[ri];
        let mut rate = self.eval(ch.id, &ch.rate, avg, d)?;
        if self.guard_enabled && rate > 0.0 && self.positivity_guard(l0, ri) == 0.0 {
            rate = 0.0;
        }
        self.index
            .set(self.slow_offset + l0 * self.macro_stride + ri, rate);
        Ok(())
    }

    fn refresh_slow_d(&mut self, l0: usize, ri: usize) -> Result<(), SsaError> {
        let d = self.state.u_d[l0] as f64;
        let ch = &self.slow_d[ri];
        let rate = self.eval(ch.id, &ch.rate, 0.0, d)?;
        self.index.set(
            self.slow_offset + l0 * self.macro_stride + self.slow_mixed.len() + ri,
            rate,
        );
        Ok(())
    }

    fn refresh_macro_block(&mut self, l0: usize) -> Result<(), SsaError> {
        for ri in 0..self.slow_mixed.len() {
            self.refresh_slow_mixed(l0, ri)?;
        }
        for ri in 0..self.slow_d.len() {
            self.refresh_slow_d(l0, ri)?;
        }
        Ok(())
    }

    /// Recompute every cache — macro averages, all channel rates, the tree —
    /// exactly from the current state.
    pub fn rebuild_caches(&mut self) -> Result<(), SsaError> {
        let k = self.grid.n_macro();
        let nsm = self.slow_mixed.len();
        for l0 in 0..k {
            for ri in 0..nsm {
                let ch = &self.slow_mixed[ri];
                let mut acc = 0.0;
                for j in self.grid.macro_sites0(l0) {
                    acc += ch.a_site[j] * (self.state.x[j] as f64 / self.mu);
                }
                self.macro_avgs[l0 * nsm + ri] = acc;
            }
        }
        for j0 in 0..self.grid.n_sites() {
            self.refresh_site(j0)?;
        }
        for l0 in 0..k {
            self.refresh_macro_block(l0)?;
        }
        self.index.rebuild();
        self.events_since_rebuild = 0;
        Ok(())
    }

    /// From-scratch channel rate vector, the test oracle for the incremental
    /// index.
    pub fn recompute_rates(&self) -> Result<Vec<f64>, SsaError> {
        let mut out = vec![0.0; self.index.len()];
        for j0 in 0..self.grid.n_sites() {
            let u = self.state.x[j0] as f64 / self.mu;
            let d = self.state.u_d[self.grid.macro_of0(j0)] as f64;
            let mut ch = j0 * self.site_stride;
            for f in &self.fast_c {
                out[ch] = self.mu * self.eval(f.id, &f.rate, u, 0.0)?;
                ch += 1;
            }
            for f in &self.fast_mixed {
                out[ch] = self.mu * self.eval(f.id, &f.rate, u, d)?;
                ch += 1;
            }
            out[ch] = self.n2 * self.state.x[j0] as f64;
            out[ch + 1] = out[ch];
        }
        for l0 in 0..self.grid.n_macro() {
            let d = self.state.u_d[l0] as f64;
            for (ri, ch) in self.slow_mixed.iter().enumerate() {
                let mut acc = 0.0;
                for j in self.grid.macro_sites0(l0) {
                    acc += ch.a_site[j] * (self.state.x[j] as f64 / self.mu);
                }
                let mut rate = self.eval(ch.id, &ch.rate, acc, d)?;
                if self.guard_enabled && rate > 0.0 && self.positivity_guard(l0, ri) == 0.0 {
                    rate = 0.0;
                }
                out[self.slow_offset + l0 * self.macro_stride + ri] = rate;
            }
            for (ri, ch) in self.slow_d.iter().enumerate() {
                out[self.slow_offset + l0 * self.macro_stride + self.slow_mixed.len() + ri] =
                    self.eval(ch.id, &ch.rate, 0.0, d)?;
            }
        }
        Ok(out)
    }

    /// Draw the waiting time and the channel for the next event without
    /// applying it.
    #[inline]
    fn sample<R: Rng>(&self, rng: &mut R) -> Result<(f64, usize), SsaError> {
        let total = self.index.total();
        if total <= 0.0 {
            return Err(SsaError::ExtinctTotal);
        }
        let tau = exp_variate(rng, total);
        let target: f64 = rng.gen::<f64>() * total;
        Ok((tau, self.index.select(target)))
    }

    #[inline(always)]
    fn apply_x_delta(&mut self, j0: usize, delta: i64) -> Result<(), SsaError> {
        let nx = self.state.x[j0] + delta;
        if nx < 0 {
            return Err(SsaError::NegativityBreach {
                kind: "site",
                index: j0 + 1,
            });
        }
        self.state.x[j0] = nx;
        self.refresh_site(j0)?;
        let l0 = self.grid.macro_of0(j0);
        let nsm = self.slow_mixed.len();
        for ri in 0..nsm {
            self.macro_avgs[l0 * nsm + ri] +=
                self.slow_mixed[ri].a_site[j0] * delta as f64 * self.inv_mu;
            self.refresh_slow_mixed(l0, ri)?;
        }
        Ok(())
    }

    fn bump_macro(&mut self, l0: usize, gamma_d: i64) -> Result<(), SsaError> {
        let nd = self.state.u_d[l0] + gamma_d;
        if nd < 0 {
            return Err(SsaError::NegativityBreach {
                kind: "macrosite",
                index: l0 + 1,
            });
        }
        self.state.u_d[l0] = nd;
        Ok(())
    }

    /// Apply the event behind channel `ch`.
    fn apply_channel(&mut self, ch: usize) -> Result<Event, SsaError> {
        self.events_since_rebuild += 1;
        if self.events_since_rebuild >= REBUILD_PERIOD {
            self.rebuild_caches()?;
        }
        if ch < self.slow_offset {
            let j0 = ch / self.site_stride;
            let slot = ch % self.site_stride;
            let nfc = self.fast_c.len();
            let nfm = self.fast_mixed.len();
            if slot < nfc {
                self.apply_x_delta(j0, self.fast_c[slot].gamma_c)?;
                return Ok(Event::FastOnsite { j: j0, r: slot });
            }
            if slot < nfc + nfm {
                let r = slot - nfc;
                self.apply_x_delta(j0, self.fast_mixed[r].gamma_c)?;
                return Ok(Event::FastMixed { j: j0, r });
            }
            let n = self.grid.n_sites();
            if slot == nfc + nfm {
                let dst = (j0 + n - 1) % n;
                self.apply_x_delta(j0, -1)?;
                self.apply_x_delta(dst, 1)?;
                return Ok(Event::DiffLeft { j: j0 });
            }
            let dst = (j0 + 1) % n;
            self.apply_x_delta(j0, -1)?;
            self.apply_x_delta(dst, 1)?;
            return Ok(Event::DiffRight { j: j0 });
        }

        let rel = ch - self.slow_offset;
        let l0 = rel / self.macro_stride;
        let slot = rel % self.macro_stride;
        if slot < self.slow_mixed.len() {
            // Deposit the quantized site amounts, then move the count.
            let block = self.grid.macro_sites0(l0);
            let nsm = self.slow_mixed.len();
            for j in block {
                let q = self.slow_mixed[slot].quanta[j];
                if q == 0 {
                    continue;
                }
                let nx = self.state.x[j] + q;
                if nx < 0 {
                    return Err(SsaError::NegativityBreach {
                        kind: "site",
                        index: j + 1,
                    });
                }
                self.state.x[j] = nx;
                for ri in 0..nsm {
                    self.macro_avgs[l0 * nsm + ri] +=
                        self.slow_mixed[ri].a_site[j] * q as f64 * self.inv_mu;
                }
            }
            self.bump_macro(l0, self.slow_mixed[slot].gamma_d)?;
            for j in self.grid.macro_sites0(l0) {
                self.refresh_site(j)?;
            }
            self.refresh_macro_block(l0)?;
            return Ok(Event::SlowMixed { l: l0, r: slot });
        }
        let r = slot - self.slow_mixed.len();
        self.bump_macro(l0, self.slow_d[r].gamma_d)?;
        for j in self.grid.macro_sites0(l0) {
            self.refresh_site(j)?;
        }
        self.refresh_macro_block(l0)?;
        Ok(Event::SlowPure { l: l0, r })
    }

    /// One exact step: waiting time, channel selection, application.
    /// The clock advances by the waiting time before the event applies.
    pub fn step<R: Rng>(&mut self, rng: &mut R) -> Result<(f64, Event), SsaError> {
        let (tau, ch) = self.sample(rng)?;
        self.state.t += tau;
        let ev = self.apply_channel(ch)?;
        Ok((tau, ev))
    }

    fn slow_event_record(&self, ev: &Event, t: f64, before: Option<Vec<i64>>) -> Option<JumpRecord> {
        match *ev {
            Event::SlowMixed { l, r } => Some(JumpRecord {
                t,
                kind: JumpKind::SlowMixed,
                l: l + 1,
                r: self.slow_mixed[r].id,
                gamma_d: self.slow_mixed[r].gamma_d as i32,
                nu_before: before,
                nu_after: None,
            }),
            Event::SlowPure { l, r } => Some(JumpRecord {
                t,
                kind: JumpKind::SlowD,
                l: l + 1,
                r: self.slow_d[r].id,
                gamma_d: self.slow_d[r].gamma_d as i32,
                nu_before: before,
                nu_after: None,
            }),
            _ => None,
        }
    }
}

/// What `simulate` records and when it stops.
#[derive(Debug, Clone)]
pub struct RecorderSpec {
    pub dt_out: f64,
    /// Log discrete-component jumps (slow events) to the jump log.
    pub log_jumps: bool,
    pub max_events: u64,
    pub wall_limit: Option<std::time::Duration>,
}

impl RecorderSpec {
    pub fn new(dt_out: f64) -> Self {
        Self {
            dt_out,
            log_jumps: true,
            max_events: 10_000_000_000,
            wall_limit: None,
        }
    }
}

/// Observe the holding intervals of a run; used for path functionals that
/// need the exact event sequence rather than snapshots.
pub trait Observer {
    /// Called once per holding interval with the engine holding that state
    /// and the interval length, including the final partial interval at the
    /// horizon.
    fn on_hold(&mut self, engine: &SsaEngine, hold: f64);
}

/// The throwaway observer; optimizes out.
pub struct NoObserver;

impl Observer for NoObserver {
    #[inline]
    fn on_hold(&mut self, _: &SsaEngine, _: f64) {}
}

/// Drive the engine to the horizon, recording snapshots on the uniform
/// output grid (left limits) and, optionally, every discrete jump.
pub fn simulate<R: Rng>(
    engine: &mut SsaEngine,
    horizon: f64,
    rec: &RecorderSpec,
    rng: &mut R,
) -> Result<Trajectory, SsaError> {
    simulate_observed(engine, horizon, rec, rng, &mut NoObserver)
}

pub fn simulate_observed<R: Rng, O: Observer>(
    engine: &mut SsaEngine,
    horizon: f64,
    rec: &RecorderSpec,
    rng: &mut R,
    obs: &mut O,
) -> Result<Trajectory, SsaError> {
    assert!(horizon > 0.0 && rec.dt_out > 0.0);
    let times = Trajectory::output_times(horizon, rec.dt_out);
    let mut snapshots: Vec<Snapshot> = Vec::with_capacity(times.len());
    let mut jumps = Vec::new();
    let mut truncated = None;
    let mut si = 0usize;
    let mut events: u64 = 0;
    let started = std::time::Instant::now();

    'outer: loop {
        match engine.sample(rng) {
            Err(SsaError::ExtinctTotal) => {
                // Absorbed: the state is frozen for the rest of the horizon.
                obs.on_hold(engine, horizon - engine.state.t);
                while si < times.len() {
                    snapshots.push(engine.state.snapshot(times[si]));
                    si += 1;
                }
                engine.state.t = horizon;
                break;
            }
            Err(e) => return Err(e),
            Ok((tau, ch)) => {
                let t_next = engine.state.t + tau;
                while si < times.len() && times[si] <= t_next {
                    snapshots.push(engine.state.snapshot(times[si]));
                    si += 1;
                }
                if si >= times.len() {
                    obs.on_hold(engine, horizon - engine.state.t);
                    engine.state.t = horizon;
                    break;
                }
                obs.on_hold(engine, tau);
                let before = if rec.log_jumps && ch >= engine.slow_offset {
                    Some(engine.state.u_d.clone())
                } else {
                    None
                };
                engine.state.t = t_next;
                let ev = engine.apply_channel(ch)?;
                if rec.log_jumps {
                    if let Some(mut j) = engine.slow_event_record(&ev, t_next, before) {
                        j.nu_after = Some(engine.state.u_d.clone());
                        jumps.push(j);
                    }
                }
                events += 1;
                if events >= rec.max_events {
                    truncated = Some(TruncationReason::EventBudget);
                    break 'outer;
                }
                if let Some(limit) = rec.wall_limit {
                    if events % (1 << 16) == 0 && started.elapsed() > limit {
                        truncated = Some(TruncationReason::WallClock);
                        break 'outer;
                    }
                }
            }
        }
    }

    Ok(Trajectory {
        grid: engine.grid,
        mu: Some(engine.mu),
        snapshots,
        jumps,
        truncated,
        warnings: Vec::new(),
    })
}
