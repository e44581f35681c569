//! Projected gradient ascent over hybrid precoders, unrolled into a
//! fixed-depth network with learnable per-iteration step sizes.
//!
//! The objective is the downlink sum-rate
//! `R = log₂ det(I_U + (1/(Uσ²))·G·Gᴴ)` with effective channel `G = Hᵀ·W`
//! and hybrid precoder `W = Wa·Wd`, where `Wa` (A×L) carries unit-modulus
//! phase shifters and `Wd` (L×U) is the digital stage under a total power
//! budget. Each unrolled iteration takes one ascent step for both factors
//! and re-projects: `Wa` entrywise onto the unit circle, `Wd` by rescaling
//! into the power ball. The K×2 table of step sizes is the only trainable
//! state; it is optimized through its logarithm so steps stay positive.
//!
//! Conventions: optimization and losses are in nats; reported rates are in
//! bits. The ascent gradients are conjugate-Wirtinger (`∂R/∂W̄`), so a step
//! is `W ← W + μ·∇`. Backpropagation runs through the entire unroll —
//! including the in-graph ascent gradients, which the tape differentiates
//! like any other arithmetic — while the SVD-based initialization is held
//! constant (stop-gradient).

use std::f64::consts::LN_2;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grad::{NodeId, ParamSet, Tape, Tensor};
use crate::numerics::{self, CMat, RMat};
use crate::rng::{self, derive_seed};

/// Stream tag for precoder initialization draws.
pub const INIT_STREAM: u64 = 0x7067_6169; // "pgai"

/// Default unroll depth.
pub const DEFAULT_DEPTH: usize = 10;

/// Shared constant the step sizes start from before training.
pub const DEFAULT_STEP_SIZE: f64 = 1e-2;

// ─── Trainable state ─────────────────────────────────────────────────────────

/// Per-iteration ascent step sizes: row `k` holds `(μ_a, μ_d)` for the
/// analog and digital updates of unrolled iteration `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PgaParams {
    /// K×2 table, all entries positive.
    pub mu: RMat,
}

impl PgaParams {
    /// All `depth` iterations share one starting step for both factors.
    pub fn constant(depth: usize, step: f64) -> Self {
        PgaParams { mu: RMat::from_fn(depth, 2, |_, _| step) }
    }

    /// Number of unrolled iterations.
    pub fn depth(&self) -> usize {
        self.mu.rows()
    }

    /// Two step sizes per iteration.
    pub fn trainable_parameter_count(&self) -> usize {
        2 * self.depth()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu.cols() != 2 || self.mu.rows() == 0 {
            return Err(Error::Config(format!(
                "step-size table must be K x 2 with K >= 1, got {}x{}",
                self.mu.rows(),
                self.mu.cols()
            )));
        }
        if !self.mu.data().iter().all(|x| x.is_finite() && *x > 0.0) {
            return Err(Error::Config("step sizes must be positive and finite".into()));
        }
        Ok(())
    }

    /// Expose `ln μ` as the trainable tensor (name `mu_log`), so any real
    /// value an optimizer reaches maps back to a positive step.
    pub fn to_param_set(&self) -> Result<ParamSet> {
        self.validate()?;
        let logs = RMat::from_fn(self.mu.rows(), 2, |i, j| self.mu[(i, j)].ln());
        let mut set = ParamSet::new();
        set.insert("mu_log", Tensor::R(logs));
        Ok(set)
    }

    /// Overwrite the table from its log-parameterization.
    pub fn set_from_log(&mut self, mu_log: &RMat) -> Result<()> {
        if (mu_log.rows(), mu_log.cols()) != (self.mu.rows(), 2) {
            return Err(Error::Dim(format!(
                "log step-size table is {}x{}, expected {}x2",
                mu_log.rows(),
                mu_log.cols(),
                self.mu.rows()
            )));
        }
        self.mu = RMat::from_fn(mu_log.rows(), 2, |i, j| mu_log[(i, j)].exp());
        self.validate()
    }
}

/// Write the step-size table as a JSON array of `[μ_a, μ_d]` pairs.
pub fn save_pga(params: &PgaParams, path: &Path) -> Result<()> {
    params.validate()?;
    let rows: Vec<[f64; 2]> =
        (0..params.depth()).map(|k| [params.mu[(k, 0)], params.mu[(k, 1)]]).collect();
    let mut json = serde_json::to_string_pretty(&rows)
        .map_err(|e| Error::Format(format!("step-size encoding failed: {e}")))?;
    json.push('\n');
    std::fs::write(path, json)?;
    Ok(())
}

/// Read a step-size table written by [`save_pga`].
pub fn load_pga(path: &Path) -> Result<PgaParams> {
    let text = std::fs::read_to_string(path)?;
    let rows: Vec<[f64; 2]> = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("bad step-size checkpoint: {e}")))?;
    let params = PgaParams { mu: RMat::from_fn(rows.len(), 2, |i, j| rows[i][j]) };
    params.validate()?;
    Ok(params)
}

// ─── Precoders ───────────────────────────────────────────────────────────────

/// Two-stage precoder: phase-shifter stage `wa` (A×L, unit-modulus entries)
/// followed by digital stage `wd` (L×U), with `‖wa·wd‖²_F ≤ p_total`.
#[derive(Debug, Clone)]
pub struct HybridPrecoder {
    pub wa: CMat,
    pub wd: CMat,
    pub p_total: f64,
}

impl HybridPrecoder {
    /// The combined precoder `W = wa·wd`.
    pub fn combined(&self) -> Result<CMat> {
        numerics::matmul(&self.wa, &self.wd)
    }

    /// Check both feasibility constraints: every analog entry on the unit
    /// circle within 1e-12, and transmit power within `p_total + 1e-9`.
    pub fn validate(&self) -> Result<()> {
        if self.wa.cols() != self.wd.rows() {
            return Err(Error::Dim(format!(
                "analog {}x{} does not chain with digital {}x{}",
                self.wa.rows(),
                self.wa.cols(),
                self.wd.rows(),
                self.wd.cols()
            )));
        }
        if !(self.p_total > 0.0) {
            return Err(Error::Config("power budget must be positive".into()));
        }
        if !self.wa.is_finite() || !self.wd.is_finite() {
            return Err(Error::Numeric("non-finite precoder entries".into()));
        }
        for z in self.wa.data() {
            if (z.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::Numeric(format!(
                    "analog entry {z} is off the unit circle"
                )));
            }
        }
        let used = self.combined()?.frob_norm_sq();
        if used > self.p_total + 1e-9 {
            return Err(Error::Numeric(format!(
                "transmit power {used} exceeds the budget {}",
                self.p_total
            )));
        }
        Ok(())
    }
}

/// One run of the unrolled ascent: the sum-rate after initialization and
/// after each of the K iterations (length K+1, in bits), plus the final
/// feasible precoder.
#[derive(Debug, Clone)]
pub struct PgaTrace {
    pub rates_bits: Vec<f64>,
    pub precoder: HybridPrecoder,
}

/// Entrywise projection onto the unit circle; zero entries map to 1 (the
/// deterministic rule for that measure-zero case).
pub fn project_unit_modulus(wa: &CMat) -> CMat {
    CMat::from_fn(wa.rows(), wa.cols(), |i, j| numerics::unit_modulus(wa[(i, j)]))
}

/// Rescale the digital stage so the combined precoder fits the power
/// budget: `wd · min(1, √(p_total/‖wa·wd‖²_F))`. A feasible or zero input
/// comes back unchanged.
pub fn project_power(wa: &CMat, wd: &CMat, p_total: f64) -> Result<CMat> {
    if !(p_total > 0.0) {
        return Err(Error::Config("power budget must be positive".into()));
    }
    let used = numerics::matmul(wa, wd)?.frob_norm_sq();
    if used <= p_total {
        return Ok(wd.clone());
    }
    Ok(wd.scale_re((p_total / used).sqrt()))
}

/// Spectral initialization for the ascent, deterministic per seed.
///
/// The analog stage starts from the antenna-side (left) singular vectors of
/// the channel estimate: each of the leading `min(L, rank)` vectors is
/// rotated so its largest-modulus entry is real positive (ties broken at
/// the lowest row) — fixing the arbitrary global phase — and then projected
/// entrywise onto the unit circle. Columns beyond the numerical rank
/// (σ ≤ σ_max·1e-12) are filled with uniformly random phases. The digital
/// stage is drawn entrywise `CN(0,1)` and power-projected. Draw order:
/// padding phases first (column by column), then the digital entries in
/// column-major order.
pub fn init_precoders(h_hat: &CMat, l: usize, p_total: f64, seed: u64) -> Result<HybridPrecoder> {
    let a = h_hat.rows();
    let users = h_hat.cols();
    if l == 0 || l > a {
        return Err(Error::Config(format!("spatial width {l} must lie in 1..={a}")));
    }
    if !(p_total > 0.0) {
        return Err(Error::Config("power budget must be positive".into()));
    }
    if !h_hat.is_finite() {
        return Err(Error::Numeric("non-finite channel estimate".into()));
    }
    let svd = numerics::svd(h_hat)?;
    let smax = svd.s.first().copied().unwrap_or(0.0);
    let rank = svd.s.iter().filter(|&&s| s > smax * 1e-12).count();
    let from_svd = rank.min(l);
    let mut wa = CMat::zeros(a, l);
    for j in 0..from_svd {
        let col = svd.u.col(j);
        let mut lead = 0usize;
        for (i, z) in col.iter().enumerate() {
            if z.norm() > col[lead].norm() {
                lead = i;
            }
        }
        let rot = numerics::unit_modulus(col[lead]).conj();
        for (i, z) in col.iter().enumerate() {
            wa[(i, j)] = numerics::unit_modulus(z * rot);
        }
    }
    let mut r = rng::rng(derive_seed(seed, &[INIT_STREAM]));
    for j in from_svd..l {
        for i in 0..a {
            wa[(i, j)] = Complex64::from_polar(1.0, rng::uniform_phase(&mut r));
        }
    }
    let wd_raw = CMat::from_fn(l, users, |_, _| rng::complex_gaussian(&mut r, 1.0));
    let wd = project_power(&wa, &wd_raw, p_total)?;
    Ok(HybridPrecoder { wa, wd, p_total })
}

// ─── Sum-rate objective (value level) ────────────────────────────────────────

fn check_rate_inputs(h: &CMat, prec: &HybridPrecoder, sigma2: f64) -> Result<()> {
    if h.rows() != prec.wa.rows()
        || prec.wa.cols() != prec.wd.rows()
        || prec.wd.cols() != h.cols()
    {
        return Err(Error::Dim(format!(
            "channel {}x{} against precoder {}x{} . {}x{}",
            h.rows(),
            h.cols(),
            prec.wa.rows(),
            prec.wa.cols(),
            prec.wd.rows(),
            prec.wd.cols()
        )));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::Config("noise power must be positive".into()));
    }
    if !h.is_finite() || !prec.wa.is_finite() || !prec.wd.is_finite() {
        return Err(Error::Numeric("non-finite sum-rate inputs".into()));
    }
    Ok(())
}

fn gram_matrix(h: &CMat, prec: &HybridPrecoder, sigma2: f64) -> Result<(CMat, CMat, f64)> {
    let u = h.cols();
    let c = 1.0 / (u as f64 * sigma2);
    let w = prec.combined()?;
    let g = numerics::matmul(&h.transpose(), &w)?;
    let s = CMat::identity(u).add(&numerics::matmul(&g, &g.adjoint())?.scale_re(c));
    Ok((s, g, c))
}

/// Downlink sum-rate in nats: `ln det(I_U + (1/(Uσ²))·G·Gᴴ)`, `G = Hᵀ·wa·wd`.
pub fn sum_rate_nats(h: &CMat, prec: &HybridPrecoder, sigma2: f64) -> Result<f64> {
    check_rate_inputs(h, prec, sigma2)?;
    let (s, _, _) = gram_matrix(h, prec, sigma2)?;
    numerics::logdet_psd(&s)
}

/// Downlink sum-rate in bits per channel use.
pub fn sum_rate(h: &CMat, prec: &HybridPrecoder, sigma2: f64) -> Result<f64> {
    Ok(sum_rate_nats(h, prec, sigma2)? / LN_2)
}

/// Conjugate-Wirtinger ascent gradients `(∂R/∂w̄a, ∂R/∂w̄d)` of the
/// natural-log sum-rate, both evaluated at the same precoder.
///
/// With `B = Hᵀ` and `S = I + c·G·Gᴴ`, the combined-precoder gradient is
/// `∇_W̄ = c·Bᴴ·S⁻¹·G = c·conj(H)·S⁻¹·G`, and the chain rule through
/// `W = wa·wd` gives `∇wa = ∇_W̄·wdᴴ` and `∇wd = waᴴ·∇_W̄`.
pub fn sum_rate_grad(h: &CMat, prec: &HybridPrecoder, sigma2: f64) -> Result<(CMat, CMat)> {
    check_rate_inputs(h, prec, sigma2)?;
    let (s, g, c) = gram_matrix(h, prec, sigma2)?;
    let x = numerics::solve_hpd(&s, &g)?;
    let gw = numerics::matmul(&h.conj(), &x)?.scale_re(c);
    let ga = numerics::matmul(&gw, &prec.wd.adjoint())?;
    let gd = numerics::matmul(&prec.wa.adjoint(), &gw)?;
    Ok((ga, gd))
}

// ─── Unrolled ascent on the gradient tape ────────────────────────────────────

struct RatePieces {
    rate: NodeId,
    s: NodeId,
    g: NodeId,
}

fn rate_pieces(
    tape: &mut Tape,
    bt: NodeId,
    eye: NodeId,
    c: f64,
    wa: NodeId,
    wd: NodeId,
) -> Result<RatePieces> {
    let w = tape.matmul(wa, wd);
    let g = tape.matmul(bt, w);
    let gh = tape.adjoint(g);
    let ggh = tape.matmul(g, gh);
    let scaled = tape.scale_const(ggh, c);
    let s = tape.add(eye, scaled);
    let rate = tape.logdet_psd(s)?;
    Ok(RatePieces { rate, s, g })
}

/// Sum-rate in nats as a tape node, for a channel node and precoder nodes
/// already on the tape. Gradients flow into all three inputs.
pub fn rate_nats_node(
    tape: &mut Tape,
    h: NodeId,
    wa: NodeId,
    wd: NodeId,
    sigma2: f64,
) -> Result<NodeId> {
    if !(sigma2 > 0.0) {
        return Err(Error::Config("noise power must be positive".into()));
    }
    let u = tape.value_c(h).cols();
    let c = 1.0 / (u as f64 * sigma2);
    let bt = tape.transpose(h);
    let eye = tape.const_c(CMat::identity(u));
    Ok(rate_pieces(tape, bt, eye, c, wa, wd)?.rate)
}

/// Node handles produced by one unrolled ascent.
pub struct PgaUnroll {
    /// `(wa, wd)` after 0..=K iterations; index 0 is the initialization.
    pub iterates: Vec<(NodeId, NodeId)>,
    /// Sum-rate in nats at each iterate, evaluated on the ascent channel.
    pub rates_nats: Vec<NodeId>,
}

/// Unroll K projected-ascent iterations on the tape.
///
/// `h_opt` is the channel the ascent "sees" — a constant node for plain
/// precoding, or an estimator output node for end-to-end training, in which
/// case gradients flow through every iteration back into the estimate. The
/// initialization enters as constants. Each iteration evaluates both ascent
/// gradients at the current iterate, steps, and re-projects (`wa` onto the
/// unit circle, then `wd` into the power ball of the *updated* `wa`).
pub fn pga_unroll(
    tape: &mut Tape,
    h_opt: NodeId,
    mu: NodeId,
    init: &HybridPrecoder,
    sigma2: f64,
) -> Result<PgaUnroll> {
    let (a, users) = {
        let h = tape.value_c(h_opt);
        (h.rows(), h.cols())
    };
    if init.wa.rows() != a || init.wd.cols() != users || init.wa.cols() != init.wd.rows() {
        return Err(Error::Dim(format!(
            "initial precoder {}x{} . {}x{} does not match a {}x{} channel",
            init.wa.rows(),
            init.wa.cols(),
            init.wd.rows(),
            init.wd.cols(),
            a,
            users
        )));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::Config("noise power must be positive".into()));
    }
    if !(init.p_total > 0.0) {
        return Err(Error::Config("power budget must be positive".into()));
    }
    let depth = {
        let m = tape.value_r(mu);
        if m.cols() != 2 || m.rows() == 0 {
            return Err(Error::Config(format!(
                "step-size node must be K x 2 with K >= 1, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        m.rows()
    };
    let c = 1.0 / (users as f64 * sigma2);
    let bt = tape.transpose(h_opt);
    let hconj = tape.conj(h_opt);
    let eye = tape.const_c(CMat::identity(users));
    let p_node = tape.scalar_r(init.p_total);
    let mut wa = tape.const_c(init.wa.clone());
    let mut wd = tape.const_c(init.wd.clone());
    let mut iterates = vec![(wa, wd)];
    let mut rates_nats = Vec::with_capacity(depth + 1);
    for k in 0..depth {
        let pieces = rate_pieces(tape, bt, eye, c, wa, wd)?;
        rates_nats.push(pieces.rate);
        // Ascent directions at the current iterate, built in-graph so that
        // training differentiates through them.
        let x = tape.solve_hpd(pieces.s, pieces.g)?;
        let hx = tape.matmul(hconj, x);
        let gw = tape.scale_const(hx, c);
        let wd_h = tape.adjoint(wd);
        let ga = tape.matmul(gw, wd_h);
        let wa_h = tape.adjoint(wa);
        let gd = tape.matmul(wa_h, gw);
        let mu_a = tape.elem_r(mu, k, 0);
        let mu_d = tape.elem_r(mu, k, 1);
        let step_a = tape.scale_re(ga, mu_a);
        let wa_free = tape.add(wa, step_a);
        wa = tape.unit_modulus(wa_free);
        let step_d = tape.scale_re(gd, mu_d);
        let wd_free = tape.add(wd, step_d);
        let w_next = tape.matmul(wa, wd_free);
        let used = tape.frob_sq(w_next);
        // An exactly-zero product needs no rescaling and would put 0/0 into
        // the backward pass; every other case goes through min(1, √(P/f)).
        wd = if tape.value_scalar(used) == 0.0 {
            wd_free
        } else {
            let ratio = tape.div_r(p_node, used);
            let root = tape.sqrt_r(ratio);
            let scale = tape.min_const_r(root, 1.0);
            tape.scale_re(wd_free, scale)
        };
        iterates.push((wa, wd));
    }
    let last = rate_pieces(tape, bt, eye, c, wa, wd)?;
    rates_nats.push(last.rate);
    Ok(PgaUnroll { iterates, rates_nats })
}

/// Which iterates the training loss scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateLossMode {
    /// Negative rate of the final iterate only (the default).
    FinalIterate,
    /// Negative mean rate over the K post-update iterates, a curriculum-style
    /// variant; the initialization is excluded because no step size touches it.
    MeanOverIterations,
}

/// Negative sum-rate (nats) of an unrolled ascent as a scalar loss node.
///
/// The ascent runs on `h_opt`; the loss rate is evaluated on `h_loss`. Pass
/// the true channel as `h_loss` for supervised training, or the same node
/// as `h_opt` for the unsupervised objective (the loss then scores — and
/// differentiates through — the estimate itself).
pub fn pga_loss_graph(
    tape: &mut Tape,
    h_opt: NodeId,
    h_loss: NodeId,
    mu: NodeId,
    init: &HybridPrecoder,
    sigma2: f64,
    mode: RateLossMode,
) -> Result<NodeId> {
    {
        let opt = tape.value_c(h_opt);
        let loss = tape.value_c(h_loss);
        if (opt.rows(), opt.cols()) != (loss.rows(), loss.cols()) {
            return Err(Error::Dim(format!(
                "ascent channel {}x{} against loss channel {}x{}",
                opt.rows(),
                opt.cols(),
                loss.rows(),
                loss.cols()
            )));
        }
    }
    let unroll = pga_unroll(tape, h_opt, mu, init, sigma2)?;
    let shared = h_loss == h_opt;
    match mode {
        RateLossMode::FinalIterate => {
            let rate = if shared {
                *unroll.rates_nats.last().expect("unroll has K+1 rates")
            } else {
                let &(wa, wd) = unroll.iterates.last().expect("unroll has K+1 iterates");
                rate_nats_node(tape, h_loss, wa, wd, sigma2)?
            };
            Ok(tape.scale_const_r(rate, -1.0))
        }
        RateLossMode::MeanOverIterations => {
            let depth = unroll.iterates.len() - 1;
            let mut rates = Vec::with_capacity(depth);
            for k in 1..=depth {
                if shared {
                    rates.push(unroll.rates_nats[k]);
                } else {
                    let (wa, wd) = unroll.iterates[k];
                    rates.push(rate_nats_node(tape, h_loss, wa, wd, sigma2)?);
                }
            }
            let mut acc = rates[0];
            for &r in &rates[1..] {
                acc = tape.add_r(acc, r);
            }
            Ok(tape.scale_const_r(acc, -1.0 / depth as f64))
        }
    }
}

/// Run the unrolled ascent with fixed step sizes and return its trace.
///
/// Initialization is seeded from `seed`; the rates are evaluated on
/// `h_input` itself (estimate in, estimate-based trace out).
pub fn pga_forward(
    h_input: &CMat,
    params: &PgaParams,
    l: usize,
    p_total: f64,
    sigma2: f64,
    seed: u64,
) -> Result<PgaTrace> {
    let init = init_precoders(h_input, l, p_total, seed)?;
    let mut tape = Tape::new();
    let h_node = tape.const_c(h_input.clone());
    let mu_node = tape.const_r(params.mu.clone());
    let unroll = pga_unroll(&mut tape, h_node, mu_node, &init, sigma2)?;
    let rates_bits: Vec<f64> =
        unroll.rates_nats.iter().map(|&r| tape.value_scalar(r) / LN_2).collect();
    if !rates_bits.iter().all(|x| x.is_finite()) {
        return Err(Error::Numeric("non-finite rate along the ascent".into()));
    }
    let &(wa, wd) = unroll.iterates.last().expect("unroll has K+1 iterates");
    let precoder = HybridPrecoder {
        wa: tape.value_c(wa).clone(),
        wd: tape.value_c(wd).clone(),
        p_total,
    };
    precoder.validate()?;
    Ok(PgaTrace { rates_bits, precoder })
}

/// Run the ascent on `h_input` but rate every iterate on `h_score`.
///
/// This is the realized-performance view: when the ascent input is a channel
/// estimate, the rate that matters is the one the produced precoders achieve
/// on the channel that is actually there. With `h_score == h_input` this
/// reduces to [`pga_forward`].
pub fn pga_forward_scored(
    h_input: &CMat,
    h_score: &CMat,
    params: &PgaParams,
    l: usize,
    p_total: f64,
    sigma2: f64,
    seed: u64,
) -> Result<PgaTrace> {
    if h_score.rows() != h_input.rows() || h_score.cols() != h_input.cols() {
        return Err(Error::Dim(format!(
            "scoring channel {}x{} does not match ascent input {}x{}",
            h_score.rows(),
            h_score.cols(),
            h_input.rows(),
            h_input.cols()
        )));
    }
    let init = init_precoders(h_input, l, p_total, seed)?;
    let mut tape = Tape::new();
    let h_node = tape.const_c(h_input.clone());
    let mu_node = tape.const_r(params.mu.clone());
    let unroll = pga_unroll(&mut tape, h_node, mu_node, &init, sigma2)?;
    let iterate = |&(wa, wd): &(NodeId, NodeId)| HybridPrecoder {
        wa: tape.value_c(wa).clone(),
        wd: tape.value_c(wd).clone(),
        p_total,
    };
    let rates_bits = unroll
        .iterates
        .iter()
        .map(|ids| sum_rate(h_score, &iterate(ids), sigma2))
        .collect::<Result<Vec<f64>>>()?;
    if !rates_bits.iter().all(|x| x.is_finite()) {
        return Err(Error::Numeric("non-finite rate along the ascent".into()));
    }
    let precoder = iterate(unroll.iterates.last().expect("unroll has K+1 iterates"));
    precoder.validate()?;
    Ok(PgaTrace { rates_bits, precoder })
}

/// Negative sum-rate (nats) of the traced precoder on the **true** channel.
pub fn loss_sumrate_supervised(h_true: &CMat, trace: &PgaTrace, sigma2: f64) -> Result<f64> {
    Ok(-sum_rate_nats(h_true, &trace.precoder, sigma2)?)
}

/// Negative sum-rate (nats) of the traced precoder on the channel
/// **estimate** the ascent ran on — no ground truth involved.
pub fn loss_sumrate_unsupervised(h_hat: &CMat, trace: &PgaTrace, sigma2: f64) -> Result<f64> {
    Ok(-sum_rate_nats(h_hat, &trace.precoder, sigma2)?)
}
