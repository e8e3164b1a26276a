//! Single-threaded, deterministic interleaving of the acquisition, inference
//! and control tasks on a [`VirtualClock`].
//!
//! Within one base tick the order is fixed: acquire a frame, deliver replies
//! that are due (and integrate their chunks), dispatch a new request, then
//! run the control tick. Requests and replies really go through the wire
//! codec and a server session, only the transport is replaced by a delay.

use log::{debug, warn};
use rail_core::protocol::{decode, encode, InferenceRequest, Message, ServerSession};
use rail_core::runtime::{integrate_chunk, ActiveTrajectoryCell, ChunkReport, HandState, ObservationFrame};
use rail_core::Timestamp;
use rand_chacha::ChaCha8Rng;

use crate::clock::VirtualClock;
use crate::latency::Delay;
use crate::policy::{stream, SyntheticPolicy};
use crate::robot::SimulatedRobot;
use crate::scenario::{Scenario, ScenarioError};
use crate::trace::RunTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestOutcome {
    /// A chunk was delivered and handed to the linker.
    Chunk,
    /// The server answered with an error frame.
    Rejected,
    /// The reply did not arrive within the request timeout.
    TimedOut,
    /// Still in flight when the run ended.
    Pending,
}

/// One request/response exchange, in virtual seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestLog {
    pub request_id: u64,
    pub sent: f64,
    pub received: Option<f64>,
    /// Inference delay drawn for this request.
    pub sampled_infer: f64,
    /// Inference time the server put on the wire.
    pub reported_infer: Option<f64>,
    pub outcome: RequestOutcome,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: RunTrace,
    pub frames: Vec<ObservationFrame>,
    /// Robot joint state after every control tick.
    pub robot_log: Vec<(f64, Vec<f64>)>,
    pub requests: Vec<RequestLog>,
}

struct InFlight {
    log_index: usize,
    arrival: u64,
    deadline: u64,
    obs_time: f64,
    reply: Vec<u8>,
}

struct Delays {
    inference: (Delay, ChaCha8Rng),
    transport: (Delay, ChaCha8Rng),
    post: (Delay, ChaCha8Rng),
}

impl Delays {
    fn draw(d: &mut (Delay, ChaCha8Rng)) -> f64 {
        d.0.sample(&mut d.1)
    }
}

pub fn run_scenario(s: &Scenario) -> Result<RunOutput, ScenarioError> {
    s.validate()?;
    let cfg = &s.linker;
    let clock = VirtualClock::for_rates(&[cfg.f_ctrl, cfg.f_obs, cfg.f_infer])?;
    let ctrl_period = clock.period(cfg.f_ctrl);
    let obs_period = clock.period(cfg.f_obs);
    let infer_period = clock.period(cfg.f_infer);
    let last_tick = clock.tick_at(s.duration);
    let timeout_ticks = clock.delay_ticks(cfg.request_timeout);

    let mut policy =
        SyntheticPolicy::new(s.policy.clone(), cfg.discrete_channels.clone(), cfg.alpha(), s.latency.sensor, s.seed);
    let mut delays = Delays {
        inference: (s.latency.inference, stream(s.seed, 3)),
        transport: (s.latency.transport, stream(s.seed, 4)),
        post: (s.latency.post, stream(s.seed, 5)),
    };
    let initial = s.initial_position();
    let mut robot = SimulatedRobot::new(s.robot, initial.clone());
    let cell = ActiveTrajectoryCell::new(Timestamp::ZERO);
    let mut hand = HandState::new(initial);
    let mut session = ServerSession::new();

    let mut out = RunOutput {
        trace: RunTrace::new(s.policy.dims, Some(cfg.strategy)),
        frames: Vec::new(),
        robot_log: Vec::new(),
        requests: Vec::new(),
    };
    let mut latest: Option<ObservationFrame> = None;
    let mut in_flight: Option<InFlight> = None;
    let mut next_dispatch = 0u64;
    let mut next_id = 1u64;
    let mut failures = 0u32;
    let mut inference_enabled = true;
    let mut pending_events: Vec<ChunkReport> = Vec::new();

    for n in 0..=last_tick {
        let t = clock.seconds(n);

        if n % obs_period == 0 {
            let frame = ObservationFrame::new(Timestamp::from_secs(t), robot.state().to_vec())
                .with_instruction(s.instruction.clone());
            out.frames.push(frame.clone());
            latest = Some(frame);
        }

        if let Some(flight) = in_flight.take() {
            if flight.arrival <= n && flight.arrival <= flight.deadline {
                let log = &mut out.requests[flight.log_index];
                log.received = Some(t);
                let ok = deliver(&flight.reply, log, flight.obs_time);
                match ok {
                    Some(chunk) => {
                        failures = 0;
                        pending_events.push(integrate_chunk(&chunk, Timestamp::from_secs(t), &cell, cfg));
                    }
                    None => failures += 1,
                }
            } else if flight.deadline <= n {
                out.requests[flight.log_index].outcome = RequestOutcome::TimedOut;
                warn!("request {} timed out at t={t}", out.requests[flight.log_index].request_id);
                failures += 1;
            } else {
                in_flight = Some(flight);
            }
            if failures > cfg.max_retries && inference_enabled {
                warn!("inference abandoned after {failures} consecutive failures at t={t}");
                inference_enabled = false;
            }
        }

        if inference_enabled && in_flight.is_none() && n >= next_dispatch {
            if let Some(obs) = &latest {
                let request_id = next_id;
                next_id += 1;
                let wire = encode(&Message::Request(InferenceRequest { request_id, obs: obs.clone() }));
                let up = Delays::draw(&mut delays.transport);
                let infer = Delays::draw(&mut delays.inference);
                let down = Delays::draw(&mut delays.transport);
                let post = Delays::draw(&mut delays.post);
                let reply = match session.accept(&wire) {
                    Ok(req) => session.complete(policy.infer(&req.obs), infer),
                    Err(reply) => reply,
                };
                let arrival = n + clock.delay_ticks(up + infer + down + post);
                debug!("request {request_id} at t={t}, due t={}", clock.seconds(arrival));
                out.requests.push(RequestLog {
                    request_id,
                    sent: t,
                    received: None,
                    sampled_infer: infer,
                    reported_infer: None,
                    outcome: RequestOutcome::Pending,
                });
                in_flight = Some(InFlight {
                    log_index: out.requests.len() - 1,
                    arrival,
                    deadline: n + timeout_ticks,
                    obs_time: obs.timestamp.secs(),
                    reply,
                });
                next_dispatch = n + infer_period;
            }
        }

        if n % ctrl_period == 0 {
            let mut record = hand.tick(Timestamp::from_secs(t), &cell, cfg);
            record.events.append(&mut pending_events);
            if record.is_command() {
                robot.apply(&record.position, 1.0 / cfg.f_ctrl);
            }
            out.robot_log.push((t, robot.state().to_vec()));
            out.trace.rows.push(record);
        }
    }
    Ok(out)
}

/// Client side of one reply: decode, check the echo, convert.
fn deliver(reply: &[u8], log: &mut RequestLog, obs_time: f64) -> Option<rail_core::ActionChunk> {
    match decode(reply) {
        Ok(Message::Response(r)) if r.request_id == log.request_id && r.obs_time == obs_time => {
            log.reported_infer = Some(r.server_infer_seconds);
            match r.to_chunk() {
                Ok(chunk) => {
                    log.outcome = RequestOutcome::Chunk;
                    Some(chunk)
                }
                Err(e) => {
                    warn!("request {}: invalid chunk: {e}", log.request_id);
                    log.outcome = RequestOutcome::Rejected;
                    None
                }
            }
        }
        Ok(Message::Error(e)) => {
            debug!("request {} rejected: {} {}", log.request_id, e.reason, e.message);
            log.outcome = RequestOutcome::Rejected;
            None
        }
        other => {
            warn!("request {}: protocol violation: {other:?}", log.request_id);
            log.outcome = RequestOutcome::Rejected;
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rail_core::runtime::Strategy;

    fn quiet(duration: f64) -> Scenario {
        let mut s = Scenario { duration, ..Default::default() };
        s.policy.noise = vec![0.0];
        s
    }

    #[test]
    fn tick_counts() {
        let out = run_scenario(&quiet(1.0)).unwrap();
        assert_eq!(out.trace.rows.len(), 101);
        let out = run_scenario(&quiet(2.0)).unwrap();
        assert_eq!(out.frames.len(), 61);
        assert_eq!(out.frames.iter().filter(|f| f.timestamp.secs() < 2.0).count(), 60);
    }

    #[test]
    fn frames_report_robot_state() {
        let out = run_scenario(&quiet(2.0)).unwrap();
        for f in &out.frames {
            let t = f.timestamp.secs();
            // the last control tick at or before t
            let (_, state) = out.robot_log.iter().rev().find(|(tc, _)| *tc < t).cloned().unwrap_or((0.0, vec![0.0]));
            assert_eq!(f.joint_positions, state, "t={t}");
        }
    }

    #[test]
    fn request_rate_is_capped_and_serial() {
        let mut s = quiet(3.0);
        s.latency.inference = Delay::Constant(0.05);
        let out = run_scenario(&s).unwrap();
        for w in out.requests.windows(2) {
            assert!(w[1].sent - w[0].sent >= 0.2 - 1e-12);
            assert!(w[1].sent >= w[0].received.unwrap());
        }
        for r in out.requests.iter().filter(|r| r.outcome == RequestOutcome::Chunk) {
            let reported = r.reported_infer.unwrap();
            assert!((reported - r.sampled_infer).abs() <= 1.0 / 3000.0);
        }
    }

    #[test]
    fn zero_latency_reply_within_one_tick() {
        let mut s = quiet(1.0);
        s.latency.inference = Delay::Constant(0.0);
        let out = run_scenario(&s).unwrap();
        let r = &out.requests[0];
        assert_eq!(r.received.unwrap() - r.sent, 1.0 / 3000.0);
    }

    #[test]
    fn fixed_latency_round_trip() {
        let mut s = quiet(1.0);
        s.latency.inference = Delay::Constant(0.15);
        let out = run_scenario(&s).unwrap();
        assert!(out.requests.iter().filter_map(|r| r.received.map(|x| x - r.sent)).all(|rt| rt >= 0.15 - 1e-12));
    }

    #[test]
    fn timeouts_abandon_inference() {
        let mut s = quiet(6.0);
        s.latency.inference = Delay::Constant(2.0);
        s.linker.request_timeout = 0.5;
        s.linker.max_retries = 2;
        let out = run_scenario(&s).unwrap();
        assert_eq!(out.requests.len(), 3);
        assert!(out.requests.iter().all(|r| r.outcome == RequestOutcome::TimedOut));
        assert!(out.trace.commands().next().is_none());
    }

    #[test]
    fn constant_reference_gives_constant_commands() {
        for strategy in Strategy::ALL {
            let mut s = quiet(3.0).with_strategy(strategy);
            s.policy.waves[0].amplitude = 0.0;
            s.policy.waves[0].offset = 0.7;
            let out = run_scenario(&s).unwrap();
            assert!(out.trace.commands().count() > 250);
            for r in out.trace.commands() {
                assert!((r.position[0] - 0.7).abs() < 1e-12, "{strategy}: {r:?}");
            }
        }
    }
}
