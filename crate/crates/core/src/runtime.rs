//! Cloud and edge control sessions and the deterministic episode driver.
//!
//! Each control period the edge applies one input, measures the plant, and
//! reports the `(u, y)` pair it actually actuated; the cloud folds the pair
//! into its sliding data window, refits the predictor, and sends back a
//! timestamped predictive control sequence. The edge converts the measured
//! delay into whole periods and actuates the matching entry of the freshest
//! sequence, walking the stored sequence forward across lost periods.
//!
//! Simulation runs single-threaded on one logical clock in exact period
//! increments; datagrams arriving mid-period are processed at the next period
//! edge. Within a period the cloud phase runs before the edge phase, so a
//! zero-delay channel yields a one-period measurement-to-actuation loop with
//! delay unit zero.

use std::io;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::compensator::{delay_units, Compensator};
use crate::pid::Pid;
use crate::plant::{self, PlantState, Simulator};
use crate::predictor::{
    fit_predictor, make_hankel_set, optimal_control, ControlSequence, DataWindow,
    PredictorCoefficients, PredictorError,
};
use crate::transport::wire::EncodeError;
use crate::transport::{
    decode, encode, BindState, ChannelModel, Endpoint, MessageKind, NetworkTuple, SimChannel,
    WireMessage,
};

/// Consecutive fit failures tolerated before an episode is declared failed.
const MAX_FIT_FALLBACKS: u32 = 5;

/// Simulated addressing of the two parties.
pub const CLOUD_TUPLE: NetworkTuple = NetworkTuple {
    host: std::net::Ipv4Addr::new(10, 0, 0, 1),
    port: 9000,
};
pub const EDGE_TUPLE: NetworkTuple = NetworkTuple {
    host: std::net::Ipv4Addr::new(192, 168, 0, 10),
    port: 40000,
};

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("predictor fit failed {0} periods in a row")]
    FitFailedRepeatedly(u32),
    #[error("wire encoding failed: {0}")]
    Encode(#[from] EncodeError),
    #[error("invalid episode configuration: {0}")]
    InvalidConfig(String),
    #[error("transport I/O: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlMode {
    Bootstrap,
    Ddpc,
}

impl std::fmt::Display for ControlMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ControlMode::Bootstrap => write!(f, "bootstrap"),
            ControlMode::Ddpc => write!(f, "ddpc"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub out_min: f64,
    pub out_max: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp: 9.0,
            ki: 3.0,
            kd: 7.5,
            out_min: -1.0,
            out_max: 1.0,
        }
    }
}

/// Everything a deterministic episode needs.
#[derive(Debug, Clone)]
pub struct EpisodeConfig {
    /// Sampling period, seconds.
    pub ts: f64,
    /// Predictor horizon N (block rows).
    pub horizon: usize,
    /// Hankel column count j.
    pub hankel_columns: usize,
    pub lambda: f64,
    pub ridge: f64,
    pub reference: f64,
    /// Target after the bootstrap-to-predictive switch, when different.
    pub reference_after_switch: Option<f64>,
    /// `false` keeps the PID in charge for the whole episode.
    pub switch_to_ddpc: bool,
    /// `false` disables delay compensation: the edge always actuates the head
    /// of the freshest sequence and holds the last input across losses.
    pub compensate: bool,
    pub pid: PidGains,
    /// Uniform dither amplitude added to the bootstrap command.
    pub dither_amplitude: f64,
    pub noise_std: f64,
    pub duration: f64,
    pub seed: u64,
    pub channel: ChannelModel,
    pub plant: Simulator,
    pub initial_state: PlantState,
    pub bind_lifetime_secs: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            ts: 0.02,
            horizon: 15,
            hankel_columns: 40,
            lambda: 0.05,
            ridge: 1e-8,
            reference: 0.2,
            reference_after_switch: None,
            switch_to_ddpc: true,
            compensate: true,
            pid: PidGains::default(),
            dither_amplitude: 0.1,
            noise_std: 0.0,
            duration: 30.0,
            seed: 0,
            channel: ChannelModel::default(),
            plant: Simulator::default(),
            initial_state: PlantState::default(),
            bind_lifetime_secs: crate::transport::BIND_LIFETIME_SECS,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<(), RuntimeError> {
        let mut problems = Vec::new();
        if !(self.ts > 0.0) {
            problems.push("ts must be positive".to_string());
        }
        if self.horizon < 1 {
            problems.push("horizon must be at least 1".to_string());
        }
        if self.hankel_columns < 1 {
            problems.push("hankel column count must be at least 1".to_string());
        }
        if !(self.lambda > 0.0) {
            problems.push("lambda must be positive".to_string());
        }
        if !(self.ridge >= 0.0) {
            problems.push("ridge must be nonnegative".to_string());
        }
        if !(self.duration >= 0.0) {
            problems.push("duration must be nonnegative".to_string());
        }
        if !(self.noise_std >= 0.0) {
            problems.push("noise_std must be nonnegative".to_string());
        }
        if !(self.dither_amplitude >= 0.0) {
            problems.push("dither_amplitude must be nonnegative".to_string());
        }
        if !(self.pid.out_min < self.pid.out_max) {
            problems.push("pid output limits must be ordered".to_string());
        }
        let beam = self.plant.params.beam_length;
        for (name, r) in [("reference", Some(self.reference)), ("reference2", self.reference_after_switch)] {
            if let Some(r) = r {
                if !(r >= 0.0 && r <= beam) {
                    problems.push(format!("{name} = {r} lies outside the beam [0, {beam}]"));
                }
            }
        }
        if let Err(e) = self.plant.params.validate() {
            problems.push(e);
        }
        if let Err(e) = self.channel.validate() {
            problems.push(e);
        }
        if !(self.bind_lifetime_secs > 0.0) {
            problems.push("bind lifetime must be positive".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(RuntimeError::InvalidConfig(problems.join("; ")))
        }
    }

    pub fn ts_us(&self) -> u64 {
        (self.ts * 1e6).round() as u64
    }

    /// Sample count at which the controller switches to the predictive law.
    pub fn switch_sample_count(&self) -> u64 {
        (2 * self.horizon + self.hankel_columns) as u64
    }
}

/// Counters kept by both sessions for observability.
#[derive(Debug, Clone, Copy, Default)]
pub struct SessionCounters {
    pub malformed: u64,
    pub rejected: u64,
    pub stale: u64,
    pub accepted: u64,
}

// ---------------------------------------------------------------------------
// Cloud session
// ---------------------------------------------------------------------------

pub struct CloudSession {
    window: DataWindow,
    coeffs: Option<PredictorCoefficients>,
    mode: ControlMode,
    pid: Pid,
    lambda: f64,
    ridge: f64,
    horizon: usize,
    reference: f64,
    reference_after_switch: Option<f64>,
    switch_to_ddpc: bool,
    switch_sample_count: u64,
    samples: u64,
    dither_amplitude: f64,
    dither_rng: ChaCha8Rng,
    bind: BindState,
    local: NetworkTuple,
    seq_out: u64,
    highwater_in: Option<u64>,
    fit_fallback_streak: u32,
    fit_fallback_this_step: bool,
    pub counters: SessionCounters,
}

impl CloudSession {
    pub fn new(cfg: &EpisodeConfig, local: NetworkTuple) -> Self {
        let mut dither_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        dither_rng.set_stream(3);
        Self {
            window: DataWindow::new(cfg.horizon, cfg.hankel_columns),
            coeffs: None,
            mode: ControlMode::Bootstrap,
            pid: Pid::new(
                cfg.pid.kp,
                cfg.pid.ki,
                cfg.pid.kd,
                cfg.ts,
                cfg.pid.out_min,
                cfg.pid.out_max,
            ),
            lambda: cfg.lambda,
            ridge: cfg.ridge,
            horizon: cfg.horizon,
            reference: cfg.reference,
            reference_after_switch: cfg.reference_after_switch,
            switch_to_ddpc: cfg.switch_to_ddpc,
            switch_sample_count: cfg.switch_sample_count(),
            samples: 0,
            dither_amplitude: cfg.dither_amplitude,
            dither_rng,
            bind: BindState::new(cfg.bind_lifetime_secs),
            local,
            seq_out: 0,
            highwater_in: None,
            fit_fallback_streak: 0,
            fit_fallback_this_step: false,
            counters: SessionCounters::default(),
        }
    }

    pub fn mode(&self) -> ControlMode {
        self.mode
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    pub fn window(&self) -> &DataWindow {
        &self.window
    }

    pub fn coefficients(&self) -> Option<&PredictorCoefficients> {
        self.coeffs.as_ref()
    }

    pub fn peer(&self) -> Option<NetworkTuple> {
        self.bind.peer()
    }

    /// Clears and returns whether the latest control computation had to fall
    /// back to stale coefficients.
    pub fn take_fit_fallback_flag(&mut self) -> bool {
        std::mem::take(&mut self.fit_fallback_this_step)
    }

    fn current_reference(&self) -> f64 {
        match (self.mode, self.reference_after_switch) {
            (ControlMode::Ddpc, Some(r2)) => r2,
            _ => self.reference,
        }
    }

    fn next_seq(&mut self) -> u64 {
        self.seq_out += 1;
        self.seq_out
    }

    /// Full receive path: decode, verify, freshness-filter, dispatch.
    pub fn handle_datagram(
        &mut self,
        bytes: &[u8],
        observed: NetworkTuple,
        now_us: u64,
    ) -> Result<Option<WireMessage>, RuntimeError> {
        let msg = match decode(bytes) {
            Ok(m) => m,
            Err(_e) => {
                self.counters.malformed += 1;
                return Ok(None);
            }
        };
        if self.bind.verify_and_accept(&msg, observed, now_us).is_err() {
            self.counters.rejected += 1;
            return Ok(None);
        }
        if let Some(hw) = self.highwater_in {
            if msg.seq_no <= hw {
                self.counters.stale += 1;
                return Ok(None);
            }
        }
        match msg.kind {
            MessageKind::BindRequest => {
                if self.bind.handle_request(&msg, observed, now_us).is_err() {
                    self.counters.rejected += 1;
                    return Ok(None);
                }
                self.highwater_in = Some(msg.seq_no);
                self.counters.accepted += 1;
                let seq = self.next_seq();
                Ok(Some(WireMessage::bind_ack(
                    msg.session_id,
                    seq,
                    now_us,
                    self.local,
                )))
            }
            MessageKind::Measurement => {
                self.highwater_in = Some(msg.seq_no);
                self.counters.accepted += 1;
                let reply = self.on_measurement(msg.payload[0], msg.payload[1], now_us)?;
                Ok(Some(reply))
            }
            MessageKind::BindAck | MessageKind::ControlSeq => {
                self.counters.rejected += 1;
                Ok(None)
            }
        }
    }

    /// Ingests one applied/measured pair and produces the next control
    /// sequence message, stamped with the send time.
    pub fn on_measurement(
        &mut self,
        applied_input: f64,
        measured_output: f64,
        now_us: u64,
    ) -> Result<WireMessage, RuntimeError> {
        self.window.push(applied_input, measured_output);
        self.samples += 1;
        if self.switch_to_ddpc
            && self.mode == ControlMode::Bootstrap
            && self.samples >= self.switch_sample_count
        {
            self.mode = ControlMode::Ddpc;
        }

        let mut sequence = match self.mode {
            ControlMode::Bootstrap => self.bootstrap_sequence(measured_output),
            ControlMode::Ddpc => self.predictive_sequence(measured_output)?,
        };
        sequence.origin_time_us = now_us;
        sequence.step_index = self.samples;

        let session_id = self.bind.session_id().unwrap_or(0);
        let seq = self.next_seq();
        Ok(WireMessage::control_seq(
            session_id,
            seq,
            now_us,
            self.local,
            sequence.values,
        ))
    }

    /// Bootstrap control travels as a constant-valued sequence so the edge
    /// runs a single code path in both modes.
    fn bootstrap_sequence(&mut self, measured_output: f64) -> ControlSequence {
        let mut command = self.pid.step(self.current_reference(), measured_output);
        if self.dither_amplitude > 0.0 {
            command += self
                .dither_rng
                .random_range(-self.dither_amplitude..=self.dither_amplitude);
            command = command.clamp(self.pid.out_min, self.pid.out_max);
        }
        ControlSequence::new(vec![command; self.horizon])
    }

    fn predictive_sequence(&mut self, measured_output: f64) -> Result<ControlSequence, RuntimeError> {
        let fit = make_hankel_set(&self.window).and_then(|set| fit_predictor(&set, self.ridge));
        match fit {
            Ok(coeffs) => {
                self.coeffs = Some(coeffs);
                self.fit_fallback_streak = 0;
            }
            Err(_e) => {
                self.fit_fallback_streak += 1;
                self.fit_fallback_this_step = true;
                if self.fit_fallback_streak > MAX_FIT_FALLBACKS {
                    return Err(RuntimeError::FitFailedRepeatedly(self.fit_fallback_streak));
                }
            }
        }
        let Some(coeffs) = self.coeffs.as_ref() else {
            // No usable coefficients yet; keep bootstrapping this period.
            return Ok(self.bootstrap_sequence(measured_output));
        };
        let reference = DVector::from_element(self.horizon, self.current_reference());
        let past = self
            .window
            .past_vector()
            .map_err(|e| RuntimeError::InvalidConfig(e.to_string()))?;
        match optimal_control(coeffs, &past, &reference, self.lambda) {
            Ok(seq) => Ok(seq),
            Err(PredictorError::NonFinite(_)) => {
                self.fit_fallback_streak += 1;
                self.fit_fallback_this_step = true;
                if self.fit_fallback_streak > MAX_FIT_FALLBACKS {
                    return Err(RuntimeError::FitFailedRepeatedly(self.fit_fallback_streak));
                }
                Ok(self.bootstrap_sequence(measured_output))
            }
            Err(e) => Err(RuntimeError::InvalidConfig(e.to_string())),
        }
    }
}

// ---------------------------------------------------------------------------
// Edge session
// ---------------------------------------------------------------------------

/// One per-period log row.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    /// Period start time, seconds.
    pub t: f64,
    /// Output measured this period (after the plant step).
    pub y: f64,
    /// Input actually applied this period.
    pub u: f64,
    /// Delay units used for selection, when a sequence was received.
    pub tau: Option<usize>,
    /// Measured download delay, seconds, when a sequence was received.
    pub t_delay: Option<f64>,
    pub mode: ControlMode,
    pub bind_pending: bool,
    pub loss: bool,
    pub clamped: bool,
    pub fit_fallback: bool,
}

impl StepRecord {
    pub fn flags_string(&self) -> String {
        let mut s = String::new();
        if self.bind_pending {
            s.push('B');
        }
        if self.loss {
            s.push('L');
        }
        if self.clamped {
            s.push('C');
        }
        if self.fit_fallback {
            s.push('F');
        }
        s
    }
}

pub struct EdgeSession {
    comp: Compensator,
    plant: Simulator,
    state: PlantState,
    ts: f64,
    noise_std: f64,
    compensate: bool,
    bind: BindState,
    session_id: u64,
    local: NetworkTuple,
    cloud_addr: NetworkTuple,
    last_applied: f64,
    ever_received: bool,
    pending: Option<ControlSequence>,
    next_bind_attempt_us: u64,
    noise_rng: ChaCha8Rng,
    seq_out: u64,
    highwater_in: Option<u64>,
    pub counters: SessionCounters,
}

impl EdgeSession {
    pub fn new(cfg: &EpisodeConfig, local: NetworkTuple, cloud_addr: NetworkTuple) -> Self {
        let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        noise_rng.set_stream(2);
        let mut id_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        id_rng.set_stream(4);
        Self {
            comp: Compensator::new(),
            plant: cfg.plant,
            state: cfg.initial_state,
            ts: cfg.ts,
            noise_std: cfg.noise_std,
            compensate: cfg.compensate,
            bind: BindState::new(cfg.bind_lifetime_secs),
            session_id: id_rng.random(),
            local,
            cloud_addr,
            last_applied: 0.0,
            ever_received: false,
            pending: None,
            next_bind_attempt_us: 0,
            noise_rng,
            seq_out: 0,
            highwater_in: None,
            counters: SessionCounters::default(),
        }
    }

    pub fn plant_state(&self) -> &PlantState {
        &self.state
    }

    pub fn cloud_addr(&self) -> NetworkTuple {
        self.cloud_addr
    }

    pub fn is_bound(&self, now_us: u64) -> bool {
        self.bind.is_active(now_us)
    }

    pub fn clamp_events(&self) -> u64 {
        self.comp.clamp_events()
    }

    fn next_seq(&mut self) -> u64 {
        self.seq_out += 1;
        self.seq_out
    }

    /// Receive path. Control sequences are parked until the next tick; only
    /// the freshest one survives.
    pub fn handle_datagram(&mut self, bytes: &[u8], observed: NetworkTuple, now_us: u64) {
        let msg = match decode(bytes) {
            Ok(m) => m,
            Err(_e) => {
                self.counters.malformed += 1;
                return;
            }
        };
        if self.bind.verify_and_accept(&msg, observed, now_us).is_err() {
            self.counters.rejected += 1;
            return;
        }
        if let Some(hw) = self.highwater_in {
            if msg.seq_no <= hw {
                self.counters.stale += 1;
                return;
            }
        }
        match msg.kind {
            MessageKind::BindAck => {
                if self.bind.handle_ack(&msg, observed, now_us).is_ok() {
                    self.highwater_in = Some(msg.seq_no);
                    self.counters.accepted += 1;
                } else {
                    self.counters.rejected += 1;
                }
            }
            MessageKind::ControlSeq => {
                self.highwater_in = Some(msg.seq_no);
                self.counters.accepted += 1;
                let mut seq = ControlSequence::new(msg.payload);
                seq.origin_time_us = msg.timestamp_us;
                seq.step_index = msg.seq_no;
                self.pending = Some(seq);
            }
            MessageKind::BindRequest | MessageKind::Measurement => {
                self.counters.rejected += 1;
            }
        }
    }

    /// One control period: pick the input, drive the plant, measure, report.
    ///
    /// Always steps the plant; emits a measurement (plus any bind traffic)
    /// only while the bind is alive.
    pub fn tick(&mut self, step: u64, now_us: u64) -> (Vec<WireMessage>, StepRecord) {
        let mut outbound = Vec::new();

        // Bind upkeep: initial bind, retry while waiting for the ack,
        // keepalive refresh near expiry, rebuild after expiry. Requests are
        // rate-limited to one per second.
        if now_us >= self.next_bind_attempt_us {
            let seq = self.seq_out + 1;
            if let Some(req) =
                self.bind
                    .initiate(self.local, self.cloud_addr, self.session_id, seq, now_us)
            {
                self.seq_out = seq;
                self.next_bind_attempt_us = now_us + 1_000_000;
                outbound.push(req);
            }
        }
        let bound = self.bind.is_active(now_us);

        let mut tau = None;
        let mut t_delay = None;
        let mut clamped = false;
        let mut loss = false;
        let u = if bound {
            match self.pending.take() {
                Some(seq) => {
                    self.ever_received = true;
                    let delay_secs =
                        now_us.saturating_sub(seq.origin_time_us) as f64 / 1e6;
                    let units = if self.compensate {
                        delay_units(delay_secs, self.ts)
                    } else {
                        0
                    };
                    let sel = self.comp.select_input(seq, units);
                    tau = Some(units);
                    t_delay = Some(delay_secs);
                    clamped = sel.clamped;
                    sel.value
                }
                None => {
                    loss = self.ever_received;
                    if self.compensate {
                        match self.comp.on_loss() {
                            Some(sel) => {
                                clamped = sel.clamped;
                                sel.value
                            }
                            None => self.last_applied,
                        }
                    } else {
                        self.last_applied
                    }
                }
            }
        } else {
            self.pending = None;
            self.last_applied
        };

        self.state = self.plant.step(&self.state, u, self.ts);
        let y = plant::measure(&self.state, self.noise_std, &mut self.noise_rng);
        self.last_applied = u;

        if bound {
            let seq = self.next_seq();
            outbound.push(WireMessage::measurement(
                self.session_id,
                seq,
                now_us,
                self.local,
                u,
                y,
            ));
        }

        let record = StepRecord {
            step,
            t: now_us as f64 / 1e6,
            y,
            u,
            tau,
            t_delay,
            mode: ControlMode::Bootstrap, // driver fills the cloud mode
            bind_pending: !bound,
            loss,
            clamped,
            fit_fallback: false,
        };
        (outbound, record)
    }
}

// ---------------------------------------------------------------------------
// Episode log
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeLog {
    /// Sampling period, seconds.
    pub ts: f64,
    pub records: Vec<StepRecord>,
    /// Step at which the controller switched to the predictive law.
    pub switch_step: Option<u64>,
}

pub const EPISODE_CSV_HEADER: &str = "step,t,y,u,tau,t_delay,mode,flags";

impl EpisodeLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * 48 + 64);
        out.push_str(EPISODE_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let tau = r.tau.map(|v| v.to_string()).unwrap_or_default();
            let t_delay = r.t_delay.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.step,
                r.t,
                r.y,
                r.u,
                tau,
                t_delay,
                r.mode,
                r.flags_string()
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<EpisodeLog, String> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h == EPISODE_CSV_HEADER => {}
            other => return Err(format!("unexpected header {other:?}")),
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 8 {
                return Err(format!("row {i}: expected 8 fields, got {}", fields.len()));
            }
            let parse_f64 = |s: &str, what: &str| {
                s.parse::<f64>().map_err(|e| format!("row {i}: bad {what}: {e}"))
            };
            let tau = if fields[4].is_empty() {
                None
            } else {
                Some(
                    fields[4]
                        .parse::<usize>()
                        .map_err(|e| format!("row {i}: bad tau: {e}"))?,
                )
            };
            let t_delay = if fields[5].is_empty() {
                None
            } else {
                Some(parse_f64(fields[5], "t_delay")?)
            };
            let mode = match fields[6] {
                "bootstrap" => ControlMode::Bootstrap,
                "ddpc" => ControlMode::Ddpc,
                other => return Err(format!("row {i}: unknown mode {other}")),
            };
            records.push(StepRecord {
                step: fields[0]
                    .parse()
                    .map_err(|e| format!("row {i}: bad step: {e}"))?,
                t: parse_f64(fields[1], "t")?,
                y: parse_f64(fields[2], "y")?,
                u: parse_f64(fields[3], "u")?,
                tau,
                t_delay,
                mode,
                bind_pending: fields[7].contains('B'),
                loss: fields[7].contains('L'),
                clamped: fields[7].contains('C'),
                fit_fallback: fields[7].contains('F'),
            });
        }
        let ts = match records.len() {
            0 | 1 => 0.0,
            _ => records[1].t - records[0].t,
        };
        let switch_step = records
            .iter()
            .find(|r| r.mode == ControlMode::Ddpc)
            .map(|r| r.step);
        Ok(EpisodeLog {
            ts,
            records,
            switch_step,
        })
    }
}

// ---------------------------------------------------------------------------
// Deterministic episode driver
// ---------------------------------------------------------------------------

/// Co-simulates the cloud session, edge session, and channel on one logical
/// clock. Within each period the cloud processes arrivals first, then the
/// edge acts, so the pipeline matches the one-round-trip-per-period pattern.
pub fn run_episode(cfg: &EpisodeConfig) -> Result<EpisodeLog, RuntimeError> {
    cfg.validate()?;
    let ts_us = cfg.ts_us();
    let steps = (cfg.duration / cfg.ts).round() as u64;

    let chan = ChannelModel {
        seed: cfg.seed,
        ..cfg.channel
    };
    let mut uplink = SimChannel::with_stream(chan, 0);
    let mut downlink = SimChannel::with_stream(chan, 1);

    let mut cloud = CloudSession::new(cfg, CLOUD_TUPLE);
    let mut edge = EdgeSession::new(cfg, EDGE_TUPLE, CLOUD_TUPLE);

    let mut log = EpisodeLog {
        ts: cfg.ts,
        records: Vec::with_capacity(steps as usize),
        switch_step: None,
    };

    for step in 0..steps {
        let now = step * ts_us;

        let mode_before = cloud.mode();
        for delivery in uplink.poll(now) {
            if let Some(reply) = cloud.handle_datagram(&delivery.payload, EDGE_TUPLE, now)? {
                downlink.send(encode(&reply)?, now);
            }
        }
        if mode_before == ControlMode::Bootstrap
            && cloud.mode() == ControlMode::Ddpc
            && log.switch_step.is_none()
        {
            log.switch_step = Some(step);
        }

        for delivery in downlink.poll(now) {
            edge.handle_datagram(&delivery.payload, CLOUD_TUPLE, now);
        }
        let (outbound, mut record) = edge.tick(step, now);
        for msg in &outbound {
            uplink.send(encode(msg)?, now);
        }
        record.mode = cloud.mode();
        record.fit_fallback = cloud.take_fit_fallback_flag();
        log.records.push(record);
    }
    Ok(log)
}

// ---------------------------------------------------------------------------
// Endpoint drivers (shared by simulated and real transports)
// ---------------------------------------------------------------------------

/// Drains the cloud endpoint once, replying to whatever arrived.
pub fn pump_cloud<E: Endpoint>(
    session: &mut CloudSession,
    endpoint: &mut E,
    now_us: u64,
) -> Result<(), RuntimeError> {
    while let Some((source, bytes)) = endpoint.try_recv(now_us)? {
        if let Some(reply) = session.handle_datagram(&bytes, source, now_us)? {
            let dest = session.peer().unwrap_or(source);
            endpoint.send_to(dest, &encode(&reply)?, now_us)?;
        }
    }
    Ok(())
}

/// One edge control period over an arbitrary endpoint.
pub fn pump_edge_tick<E: Endpoint>(
    session: &mut EdgeSession,
    endpoint: &mut E,
    step: u64,
    now_us: u64,
) -> Result<StepRecord, RuntimeError> {
    while let Some((source, bytes)) = endpoint.try_recv(now_us)? {
        session.handle_datagram(&bytes, source, now_us);
    }
    let (outbound, record) = session.tick(step, now_us);
    let dest = session.cloud_addr();
    for msg in &outbound {
        endpoint.send_to(dest, &encode(msg)?, now_us)?;
    }
    Ok(record)
}
