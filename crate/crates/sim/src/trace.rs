//! Run traces and their CSV form.
//!
//! Columns: `t`, then `chN_pos,chN_vel,chN_acc` per channel, then `segment`
//! and `event`. Floats carry 9 significant digits. Each chunk handled during
//! a tick adds one space-separated token to `event`:
//!
//! ```text
//! recv:k*=12;ta=0.04|fuse:at=3.1;dp=0;dv=1.2e-13;da=3e-11;jump=0
//! recv:k*=20;ta=-|switch:jump=0.013
//! recv:k*=-;ta=-|discard:skew
//! ```

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rail_core::runtime::{ChunkOutcome, ChunkReport, DiscardReason, Strategy, TickRecord, TickState};
use rail_core::trajectory::{KnotMismatch, SegmentKind};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: {reason}")]
    Format { row: usize, reason: String },
}

/// One record per control tick of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub dims: usize,
    /// Known for simulated runs; guessed from segment kinds on import.
    pub strategy: Option<Strategy>,
    pub rows: Vec<TickRecord>,
}

impl RunTrace {
    pub fn new(dims: usize, strategy: Option<Strategy>) -> Self {
        Self { dims, strategy, rows: Vec::new() }
    }

    /// Rows at which a command was dispatched.
    pub fn commands(&self) -> impl Iterator<Item = &TickRecord> {
        self.rows.iter().filter(|r| r.is_command())
    }

    pub fn reports(&self) -> impl Iterator<Item = (f64, &ChunkReport)> {
        self.rows.iter().flat_map(|r| r.events.iter().map(move |e| (r.time, e)))
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_owned()];
        for i in 0..self.dims {
            h.extend(["pos", "vel", "acc"].map(|c| format!("ch{i}_{c}")));
        }
        h.extend(["segment".to_owned(), "event".to_owned()]);
        h
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), TraceError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        for r in &self.rows {
            let mut rec = vec![fmt_g9(r.time)];
            for i in 0..self.dims {
                rec.extend([r.position[i], r.velocity[i], r.acceleration[i]].map(fmt_g9));
            }
            rec.push(segment_name(r.state).to_owned());
            rec.push(r.events.iter().map(encode_report).collect::<Vec<_>>().join(" "));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|source| TraceError::Io { path: "<writer>".into(), source })?;
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        buf
    }

    pub fn export(&self, path: &Path) -> Result<(), TraceError> {
        let io = |source| TraceError::Io { path: path.display().to_string(), source };
        let mut file = File::create(path).map_err(io)?;
        file.write_all(&self.to_csv_bytes()).map_err(io)?;
        file.sync_all().map_err(io)
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, TraceError> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
        let ncols = header.len();
        if ncols < 3 || !(ncols - 3).is_multiple_of(3) {
            return Err(TraceError::Format {
                row: 0,
                reason: format!("{ncols} columns do not match t,ch*,segment,event"),
            });
        }
        let mut trace = RunTrace::new((ncols - 3) / 3, None);
        if header != trace.header() {
            return Err(TraceError::Format { row: 0, reason: format!("unexpected header {header:?}") });
        }
        for (i, rec) in r.records().enumerate() {
            let row = i + 1;
            let rec = rec?;
            let bad = |reason: String| TraceError::Format { row, reason };
            let num =
                |j: usize| rec[j].parse::<f64>().map_err(|_| bad(format!("column {} is not a number", header[j])));
            let d = trace.dims;
            let mut record = TickRecord {
                time: num(0)?,
                position: Vec::with_capacity(d),
                velocity: Vec::with_capacity(d),
                acceleration: Vec::with_capacity(d),
                state: parse_segment(&rec[ncols - 2])
                    .ok_or_else(|| bad(format!("unknown segment {:?}", &rec[ncols - 2])))?,
                events: Vec::new(),
            };
            for c in 0..d {
                record.position.push(num(1 + 3 * c)?);
                record.velocity.push(num(2 + 3 * c)?);
                record.acceleration.push(num(3 + 3 * c)?);
            }
            for token in rec[ncols - 1].split_whitespace() {
                record.events.push(decode_report(token).map_err(bad)?);
            }
            trace.rows.push(record);
        }
        trace.strategy = guess_strategy(&trace);
        Ok(trace)
    }

    pub fn import(path: &Path) -> Result<Self, TraceError> {
        let file = File::open(path).map_err(|source| TraceError::Io { path: path.display().to_string(), source })?;
        Self::read_csv(file)
    }
}

fn guess_strategy(trace: &RunTrace) -> Option<Strategy> {
    let kinds = || {
        trace.rows.iter().filter_map(|r| match r.state {
            TickState::Active(k) => Some(k),
            _ => None,
        })
    };
    let fused = trace.reports().any(|(_, e)| matches!(e.outcome, ChunkOutcome::Fused { .. }));
    if kinds().any(|k| k == SegmentKind::Linear) {
        Some(Strategy::Raw)
    } else if fused || kinds().any(|k| matches!(k, SegmentKind::BlendLeft | SegmentKind::BlendRight)) {
        Some(Strategy::Rail)
    } else if trace.reports().any(|(_, e)| matches!(e.outcome, ChunkOutcome::Switched { .. })) {
        Some(Strategy::Naive)
    } else {
        None
    }
}

pub fn segment_name(state: TickState) -> &'static str {
    match state {
        TickState::Idle => "idle",
        TickState::Hold => "hold",
        TickState::Active(kind) => kind.as_str(),
    }
}

fn parse_segment(s: &str) -> Option<TickState> {
    match s {
        "idle" => Some(TickState::Idle),
        "hold" => Some(TickState::Hold),
        other => SegmentKind::from_str(other).ok().map(TickState::Active),
    }
}

/// `%.9g`-style formatting: 9 significant digits, trailing zeros trimmed.
pub fn fmt_g9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..9).contains(&exp) {
        let m = trim_zeros(mantissa);
        return format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_owned()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn encode_list(values: &[f64]) -> String {
    values.iter().map(|v| fmt_g9(*v)).collect::<Vec<_>>().join("/")
}

pub fn encode_report(r: &ChunkReport) -> String {
    let k = r.stale_index.map_or("-".to_owned(), |k| k.to_string());
    let ta = r.t_a.map_or("-".to_owned(), fmt_g9);
    let outcome = match &r.outcome {
        ChunkOutcome::Installed => "install".to_owned(),
        ChunkOutcome::Fused { knots, jump } => format!(
            "fuse:at={};dp={};dv={};da={};jump={}",
            fmt_g9(knots.time),
            fmt_g9(knots.position),
            fmt_g9(knots.velocity),
            fmt_g9(knots.acceleration),
            encode_list(jump)
        ),
        ChunkOutcome::Switched { jump } => format!("switch:jump={}", encode_list(jump)),
        ChunkOutcome::Discarded(reason) => format!("discard:{}", reason.as_str()),
    };
    format!("recv:k*={k};ta={ta}|{outcome}")
}

pub fn decode_report(token: &str) -> Result<ChunkReport, String> {
    let bad = || format!("malformed event {token:?}");
    let (recv, outcome) = token.split_once('|').ok_or_else(bad)?;
    let recv = recv.strip_prefix("recv:").ok_or_else(bad)?;
    let (k, ta) = recv.split_once(';').ok_or_else(bad)?;
    let k = k.strip_prefix("k*=").ok_or_else(bad)?;
    let ta = ta.strip_prefix("ta=").ok_or_else(bad)?;
    let stale_index = if k == "-" { None } else { Some(k.parse().map_err(|_| bad())?) };
    let t_a = if ta == "-" { None } else { Some(ta.parse().map_err(|_| bad())?) };
    let list = |s: &str| -> Result<Vec<f64>, String> { s.split('/').map(|v| v.parse().map_err(|_| bad())).collect() };
    let field = |s: &str, name: &str| -> Result<String, String> {
        s.split(';').find_map(|kv| kv.strip_prefix(name)?.strip_prefix('=').map(str::to_owned)).ok_or_else(bad)
    };
    let outcome = match outcome.split_once(':') {
        None if outcome == "install" => ChunkOutcome::Installed,
        Some(("fuse", rest)) => {
            let num = |name: &str| field(rest, name)?.parse::<f64>().map_err(|_| bad());
            ChunkOutcome::Fused {
                knots: KnotMismatch {
                    time: num("at")?,
                    position: num("dp")?,
                    velocity: num("dv")?,
                    acceleration: num("da")?,
                },
                jump: list(&field(rest, "jump")?)?,
            }
        }
        Some(("switch", rest)) => ChunkOutcome::Switched { jump: list(&field(rest, "jump")?)? },
        Some(("discard", reason)) => ChunkOutcome::Discarded(match reason {
            "stale" => DiscardReason::Stale,
            "short" => DiscardReason::TooShort,
            "skew" => DiscardReason::ClockSkew,
            "fault" => DiscardReason::Fault(String::new()),
            _ => return Err(bad()),
        }),
        _ => return Err(bad()),
    };
    Ok(ChunkReport { stale_index, t_a, outcome })
}
