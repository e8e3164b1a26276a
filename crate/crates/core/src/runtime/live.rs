//! Threaded executive: an acquisition thread, an inference thread and a
//! control thread sharing one [`ActiveTrajectoryCell`].

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use log::{info, warn};

use super::cell::ActiveTrajectoryCell;
use super::config::LinkerConfig;
use super::frame::ObservationFrame;
use super::linker::{integrate_chunk, ChunkReport, HandState, TickRecord};
use crate::trajectory::{ActionChunk, Timestamp};

/// The actuated side: joint readout plus command sink.
pub trait Robot: Send {
    fn joint_positions(&mut self) -> Vec<f64>;
    fn apply(&mut self, record: &TickRecord);
}

/// Anything that turns an observation into an action chunk (usually a
/// remote policy behind the wire protocol).
pub trait ChunkSource: Send {
    fn infer(&mut self, frame: &ObservationFrame) -> Result<ActionChunk, String>;
}

/// Monotonic seconds since construction.
#[derive(Debug, Clone, Copy)]
pub struct MonotonicClock {
    origin: Instant,
}

impl MonotonicClock {
    pub fn start() -> Self {
        Self { origin: Instant::now() }
    }

    pub fn now(&self) -> Timestamp {
        Timestamp::from_secs(self.origin.elapsed().as_secs_f64())
    }

    fn sleep_until(&self, t: f64) {
        let now = self.origin.elapsed().as_secs_f64();
        if t > now {
            thread::sleep(Duration::from_secs_f64(t - now));
        }
    }
}

/// Everything the control thread dispatched, with chunk reports attached to
/// the tick at which they were integrated.
#[derive(Debug, Default)]
pub struct LiveOutcome {
    pub records: Vec<TickRecord>,
    /// Set when inference was abandoned after repeated failures.
    pub inference_error: Option<String>,
}

/// Runs all three threads for `duration` seconds of wall time.
pub fn run_live<R, S>(cfg: &LinkerConfig, robot: R, source: S, instruction: &str, duration: f64) -> LiveOutcome
where
    R: Robot + 'static,
    S: ChunkSource + 'static,
{
    let clock = MonotonicClock::start();
    let cell = Arc::new(ActiveTrajectoryCell::new(Timestamp::ZERO));
    let robot = Arc::new(Mutex::new(robot));
    let latest: Arc<Mutex<Option<ObservationFrame>>> = Arc::new(Mutex::new(None));
    let stop = Arc::new(AtomicBool::new(false));
    let (report_tx, report_rx) = mpsc::channel::<ChunkReport>();

    let eye = {
        let (robot, latest, stop) = (robot.clone(), latest.clone(), stop.clone());
        let period = 1.0 / cfg.f_obs;
        let instruction = instruction.to_owned();
        thread::spawn(move || {
            let mut k = 0u64;
            while !stop.load(Ordering::Relaxed) {
                let joints = lock(&robot).joint_positions();
                let frame = ObservationFrame::new(clock.now(), joints).with_instruction(instruction.clone());
                *lock(&latest) = Some(frame);
                k += 1;
                clock.sleep_until(k as f64 * period);
            }
        })
    };

    let brain = {
        let (cell, latest, stop, cfg) = (cell.clone(), latest.clone(), stop.clone(), cfg.clone());
        let mut source = source;
        thread::spawn(move || -> Option<String> {
            let min_gap = 1.0 / cfg.f_infer;
            let mut failures = 0u32;
            while !stop.load(Ordering::Relaxed) {
                let started = clock.now().secs();
                let frame = lock(&latest).clone();
                let Some(frame) = frame else {
                    thread::sleep(Duration::from_millis(1));
                    continue;
                };
                match source.infer(&frame) {
                    Ok(chunk) => {
                        failures = 0;
                        let report = integrate_chunk(&chunk, clock.now(), &cell, &cfg);
                        if report_tx.send(report).is_err() {
                            return None;
                        }
                    }
                    Err(e) => {
                        failures += 1;
                        warn!("inference failed ({failures}/{}): {e}", cfg.max_retries);
                        if failures > cfg.max_retries {
                            return Some(e);
                        }
                    }
                }
                clock.sleep_until(started + min_gap);
            }
            None
        })
    };

    let mut hand = HandState::new(lock(&robot).joint_positions());
    let mut records = Vec::new();
    let period = 1.0 / cfg.f_ctrl;
    let mut k = 0u64;
    loop {
        let t = k as f64 * period;
        if t > duration {
            break;
        }
        clock.sleep_until(t);
        let mut record = hand.tick(clock.now(), &cell, cfg);
        record.events.extend(report_rx.try_iter());
        lock(&robot).apply(&record);
        records.push(record);
        k += 1;
    }
    stop.store(true, Ordering::Relaxed);
    let _ = eye.join();
    let inference_error = brain.join().unwrap_or_else(|_| Some("inference thread panicked".into()));
    if let Some(last) = records.last_mut() {
        last.events.extend(report_rx.try_iter());
    }
    info!("live run finished: {} ticks", records.len());
    LiveOutcome { records, inference_error }
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}
