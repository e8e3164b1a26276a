//! Acceptance suite: runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line each. Exits non-zero if any criterion fails.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rail_core::fuser::{align_offset, solve_quintic_pair, BoundaryState};
use rail_core::protocol::{decode, encode, ErrorMessage, ErrorReason, InferenceRequest, InferenceResponse, Message};
use rail_core::runtime::{ChunkOutcome, LinkerConfig, ObservationFrame, Strategy, TickState};
use rail_core::smoother::{solve_least_squares, VandermondeSystem};
use rail_core::trajectory::{Evaluate, Order, PolynomialTrajectory};
use rail_core::Timestamp;
use rail_sim::latency::Delay;
use rail_sim::metrics::{smoothness_report_with, DerivativeSource};
use rail_sim::{control_gaps, run_scenario, RunTrace, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Name, runtime budget, check.
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("quintic boundary fidelity", Duration::from_secs(1), quintic_boundaries),
        ("composite C2 continuity", Duration::from_secs(5), composite_continuity),
        ("least-squares oracle equivalence", Duration::from_secs(60), least_squares_oracle),
        ("smoothness ordering", Duration::from_secs(60), smoothness_ordering),
        ("non-blocking control", Duration::from_secs(60), non_blocking),
        ("acceleration law", Duration::from_secs(30), acceleration_law),
        ("alignment recovery", Duration::from_secs(10), alignment_recovery),
        ("protocol soundness", Duration::from_secs(10), protocol_soundness),
        ("determinism", Duration::from_secs(10), determinism),
    ];
    let mut failed = 0;
    for (n, (name, budget, run)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let elapsed = start.elapsed();
        let pass = o.pass && elapsed <= budget;
        failed += usize::from(!pass);
        println!(
            "criterion {}: {} {name} ({:.2} s of {} s) {}",
            n + 1,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs(),
            o.detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

fn quintic_boundaries() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = [0.0f64; 3];
    for _ in 0..1000 {
        let dims = rng.random_range(1..=7);
        let state = |rng: &mut ChaCha8Rng| BoundaryState {
            position: uniform_vec(rng, dims, 10.0),
            velocity: uniform_vec(rng, dims, 10.0),
            acceleration: uniform_vec(rng, dims, 10.0),
        };
        let (s, e) = (state(&mut rng), state(&mut rng));
        let t_q = rng.random_range(0.02..2.0);
        let (l, r) = solve_quintic_pair(&s, &e, t_q).unwrap();
        let h = t_q / 2.0;
        for (k, order) in Order::ALL.into_iter().enumerate() {
            let pick = |b: &BoundaryState| [&b.position, &b.velocity, &b.acceleration][k].clone();
            let (sv, ev) = (pick(&s), pick(&e));
            for i in 0..dims {
                let mid = if k == 2 { 0.0 } else { (sv[i] + ev[i]) / 2.0 };
                let at = |q: &rail_core::trajectory::QuinticSegment, t: f64| q.evaluate(t, order).unwrap()[i];
                for d in [at(&l, 0.0) - sv[i], at(&l, h) - mid, at(&r, 0.0) - mid, at(&r, h) - ev[i]] {
                    worst[k] = worst[k].max(d.abs());
                }
            }
        }
    }
    let pass = worst[0] <= 1e-9 && worst[1] <= 1e-8 && worst[2] <= 1e-6;
    outcome(pass, format!("worst pos {:.1e} vel {:.1e} acc {:.1e}", worst[0], worst[1], worst[2]))
}

fn composite_continuity() -> Outcome {
    let out = run_scenario(&Scenario::default()).unwrap();
    let mut worst = [0.0f64; 3];
    let mut fused = 0;
    for (_, r) in out.trace.reports() {
        if let ChunkOutcome::Fused { knots, .. } = &r.outcome {
            fused += 1;
            worst[0] = worst[0].max(knots.position);
            worst[1] = worst[1].max(knots.velocity);
            worst[2] = worst[2].max(knots.acceleration);
        }
    }
    let pass = fused > 0 && worst[0] <= 1e-8 && worst[1] <= 1e-6 && worst[2] <= 1e-4;
    outcome(pass, format!("{fused} fusions; worst pos {:.1e} vel {:.1e} acc {:.1e}", worst[0], worst[1], worst[2]))
}

fn least_squares_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut coeff_err, mut grad) = (0.0f64, 0.0f64);
    for _ in 0..500 {
        let mut times: Vec<f64> = (0..14).map(|_| rng.random_range(0.0..1.0)).collect();
        times.extend([0.0, 1.0]);
        times.sort_by(f64::total_cmp);
        let y = uniform_vec(&mut rng, 16, 1.0);
        let c = solve_least_squares(&VandermondeSystem::new(&times, 3, y.clone()).unwrap()).unwrap();
        let v = DMatrix::from_fn(16, 4, |r, k| times[r].powi(k as i32));
        let yv = DVector::from_column_slice(&y);
        let expect = v.clone().svd(true, true).solve(&yv, 1e-14).unwrap();
        coeff_err = c.iter().zip(expect.iter()).fold(coeff_err, |m, (a, b)| m.max((a - b).abs()));
        let r = &v * DVector::from_column_slice(&c) - &yv;
        grad = grad.max((v.transpose() * r * 2.0).amax());
    }
    let times: Vec<f64> = (0..16).map(|k| k as f64 / 15.0).collect();
    let sys = VandermondeSystem::new(&times, 3, times.iter().map(|t| t.sin()).collect()).unwrap();
    let single = (0..50)
        .map(|_| {
            let start = Instant::now();
            std::hint::black_box(solve_least_squares(std::hint::black_box(&sys)).unwrap());
            start.elapsed()
        })
        .min()
        .unwrap();
    let pass = coeff_err <= 1e-7 && grad <= 1e-8 && single < Duration::from_millis(1);
    outcome(pass, format!("coeff err {coeff_err:.1e}, residual gradient {grad:.1e}, single fit {single:?}"))
}

fn mean_acc(trace: &RunTrace, source: DerivativeSource) -> f64 {
    smoothness_report_with(trace, source).unwrap().mean_acceleration_std
}

/// Acceleration std from finite differences of the commanded positions for
/// every strategy, so a hard switch shows up as the impulse it is.
fn smoothness_ordering() -> Outcome {
    let mut ordered = 0;
    let mut worst_reduction = f64::INFINITY;
    let (mut fd, mut analytic) = ([0.0; 3], [0.0; 3]);
    for seed in 0..20 {
        let runs: Vec<RunTrace> = Strategy::ALL
            .iter()
            .map(|&st| run_scenario(&Scenario::default().with_seed(seed).with_strategy(st)).unwrap().trace)
            .collect();
        let [raw, naive, rail] = [0, 1, 2].map(|k| mean_acc(&runs[k], DerivativeSource::FiniteDifference));
        for k in 0..3 {
            fd[k] += [raw, naive, rail][k] / 20.0;
            analytic[k] += mean_acc(&runs[k], DerivativeSource::for_strategy(runs[k].strategy)) / 20.0;
        }
        let reduction = 1.0 - rail / raw;
        worst_reduction = worst_reduction.min(reduction);
        if rail < naive && naive < raw && reduction >= 0.5 {
            ordered += 1;
        }
    }
    outcome(
        ordered == 20,
        format!(
            "{ordered}/20 seeds ordered; mean acc std raw {:.2} naive {:.2} rail {:.2}; worst reduction {:.0}% \
             (trace-column derivatives: raw {:.2} naive {:.2} rail {:.2})",
            fd[0],
            fd[1],
            fd[2],
            100.0 * worst_reduction,
            analytic[0],
            analytic[1],
            analytic[2]
        ),
    )
}

fn non_blocking() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for latency in [0.05, 0.1, 0.2, 0.4, 0.8] {
        let mut s = Scenario::default();
        // chunks long enough that rows remain after an 0.8 s delay
        s.policy.horizon = 60;
        s.linker.request_timeout = 2.0;
        s.latency.inference = Delay::Constant(latency);
        let out = run_scenario(&s).unwrap();
        let gaps = control_gaps(&out.trace, s.linker.f_ctrl);
        let ticks = out.trace.rows.len();
        let commands = out.trace.commands().count();
        let integrated = out.trace.reports().filter(|(_, r)| !matches!(r.outcome, ChunkOutcome::Discarded(_))).count();
        pass &= gaps.is_empty() && ticks == 2001 && commands > 1500 && integrated > 10;
        details.push(format!("{latency}s: {} gaps/{commands} cmds", gaps.len()));
    }
    outcome(pass, details.join(", "))
}

fn completion_time(alpha: f64) -> f64 {
    let mut s = Scenario { duration: 15.0, ..Default::default() };
    s.policy.motion_duration = Some(10.0);
    s.linker.f_ctrl = 120.0;
    s.linker.f_interp = 120.0 / alpha;
    let out = run_scenario(&s).unwrap();
    out.trace.rows.iter().rfind(|r| matches!(r.state, TickState::Active(_))).unwrap().time
}

fn acceleration_law() -> Outcome {
    let (t1, t2) = (completion_time(1.0), completion_time(2.0));
    let ratio = t2 / t1;
    outcome((ratio - 0.5).abs() <= 0.05 * 0.5, format!("alpha=1 {t1:.3} s, alpha=2 {t2:.3} s, ratio {ratio:.4}"))
}

fn alignment_recovery() -> Outcome {
    let cfg = LinkerConfig::default();
    let policy = Scenario::default().policy;
    let (t_w, grid) = (cfg.alignment_window(policy.horizon, policy.f_act), cfg.grid_step());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut misses = Vec::new();
    for _ in 0..100 {
        let dims = rng.random_range(1..=6);
        let coeffs: Vec<Vec<f64>> = (0..dims)
            .map(|_| {
                let s = rng.random_range(0.2..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                vec![rng.random_range(-1.0..1.0), s, 0.0, 0.05 * s]
            })
            .collect();
        let current = PolynomialTrajectory::with_scale(coeffs, 0.0, 1.0, 0.0, 3.0).unwrap();
        let delta = loop {
            let d = rng.random_range(0.0..t_w);
            if d > 0.0 {
                break d;
            }
        };
        let t_s = 1.2;
        let incoming = current.clip_domain(t_s - delta, 3.0).unwrap();
        let got = align_offset(&current, &incoming, t_s, t_w, grid).unwrap();
        if (got - delta).abs() > grid + 1e-12 {
            misses.push(format!("{delta:.4}->{got:.2}"));
        }
    }
    outcome(
        misses.is_empty(),
        format!("t_w {t_w}, grid {grid}; {} of 100 shifts missed {}", misses.len(), misses.join(" ")),
    )
}

fn finite(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let x = f64::from_bits(rng.random());
        if x.is_finite() {
            return x;
        }
    }
}

fn text(rng: &mut ChaCha8Rng, max: usize) -> String {
    let n = rng.random_range(0..=max);
    (0..n).map(|_| rng.random::<char>()).collect()
}

fn random_message(rng: &mut ChaCha8Rng) -> Message {
    match rng.random_range(0..3) {
        0 => {
            let m = rng.random_range(0..=32);
            let visual = (0..rng.random_range(0..64)).map(|_| rng.random()).collect();
            Message::Request(InferenceRequest {
                request_id: rng.random(),
                obs: ObservationFrame {
                    timestamp: Timestamp::from_secs(finite(rng)),
                    joint_positions: (0..m).map(|_| finite(rng)).collect(),
                    instruction: text(rng, 40),
                    visual,
                },
            })
        }
        1 => {
            let (horizon, dims) = (rng.random_range(0..=100u16), rng.random_range(0..=8u16));
            Message::Response(InferenceResponse {
                request_id: rng.random(),
                obs_time: finite(rng),
                horizon,
                dims,
                sample_rate: finite(rng),
                actions: (0..horizon as usize * dims as usize).map(|_| finite(rng)).collect(),
                server_infer_seconds: finite(rng),
            })
        }
        _ => Message::Error(ErrorMessage {
            request_id: rng.random(),
            reason: ErrorReason(rng.random()),
            message: text(rng, 60),
        }),
    }
}

fn protocol_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut identities, mut truncations, mut bad) = (0, 0, Vec::new());
    for n in 0..10_000 {
        let m = random_message(&mut rng);
        let bytes = encode(&m);
        match decode(&bytes) {
            Ok(d) if d == m && encode(&d) == bytes => identities += 1,
            other => bad.push(format!("message {n}: {other:?}")),
        }
        if n < 1000 {
            for cut in 0..bytes.len() {
                truncations += 1;
                if decode(&bytes[..cut]).is_ok() {
                    bad.push(format!("message {n} cut at {cut} decoded"));
                }
                // same cut with a length prefix that agrees with it
                if cut >= 4 {
                    let mut patched = bytes[..cut].to_vec();
                    patched[..4].copy_from_slice(&((cut - 4) as u32).to_be_bytes());
                    truncations += 1;
                    if decode(&patched).is_ok() {
                        bad.push(format!("message {n} re-framed at {cut} decoded"));
                    }
                }
            }
        }
    }
    bad.truncate(3);
    outcome(
        identities == 10_000 && bad.is_empty(),
        format!("{identities}/10000 round trips exact, {truncations} truncated frames rejected {}", bad.join("; ")),
    )
}

fn scenario_files() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "scn"))
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut checked = 0;
    let mut differing = Vec::new();
    for file in scenario_files() {
        let s = Scenario::load(&file).unwrap();
        for st in Strategy::ALL {
            let s = s.clone().with_strategy(st);
            let paths = ["a.csv", "b.csv"].map(|n| dir.path().join(n));
            for p in &paths {
                run_scenario(&s).unwrap().trace.export(p).unwrap();
            }
            checked += 1;
            if std::fs::read(&paths[0]).unwrap() != std::fs::read(&paths[1]).unwrap() {
                differing.push(format!("{}:{st}", file.file_name().unwrap().to_string_lossy()));
            }
        }
    }
    outcome(
        checked >= 12 && differing.is_empty(),
        format!("{checked} scenario/strategy pairs exported twice, {} differ {}", differing.len(), differing.join(" ")),
    )
}
