//! Sensor traces: one row per simulated step plus a metadata header.
//!
//! File layout is the trajectory CSV (`t,x,y,heading,clearance,motor_l,
//! motor_r,s0..s9`) preceded by `# key=value` comment lines.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::StepRecord;
use crate::world::{TerrainKind, SENSOR_COUNT};

/// Channels compared by the discrepancy measure, in column order.
pub const CHANNELS: usize = 6 + SENSOR_COUNT;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace is empty")]
    Empty,
    #[error("trace line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub controller_id: String,
    pub world_seed: u64,
    pub terrain: TerrainKind,
    pub obstacles: usize,
    pub start: [f64; 3],
    pub trial_seed: u64,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub clearance: f64,
    pub motor_l: f64,
    pub motor_r: f64,
    pub s: [f64; SENSOR_COUNT],
}

impl TraceRow {
    pub fn from_record(r: &StepRecord) -> TraceRow {
        TraceRow {
            t: r.t,
            x: r.state.x,
            y: r.state.y,
            heading: r.state.heading,
            clearance: r.state.clearance,
            motor_l: r.outputs.0,
            motor_r: r.outputs.1,
            s: r.seen,
        }
    }

    /// Every compared channel: pose, clearance, motor outputs, sensors.
    pub fn channels(&self) -> [f64; CHANNELS] {
        let mut out = [0.0; CHANNELS];
        out[..6].copy_from_slice(&[self.x, self.y, self.heading, self.clearance, self.motor_l, self.motor_r]);
        out[6..].copy_from_slice(&self.s);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorTrace {
    pub meta: TraceMeta,
    pub rows: Vec<TraceRow>,
}

pub fn header() -> Vec<String> {
    let mut h: Vec<String> = ["t", "x", "y", "heading", "clearance", "motor_l", "motor_r"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((0..SENSOR_COUNT).map(|k| format!("s{k}")));
    h
}

impl SensorTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write(&self, out: impl Write) -> Result<(), TraceError> {
        let mut out = out;
        let m = &self.meta;
        writeln!(out, "# controller_id={}", m.controller_id)?;
        writeln!(out, "# world_seed={}", m.world_seed)?;
        writeln!(out, "# terrain={}", m.terrain.name())?;
        writeln!(out, "# obstacles={}", m.obstacles)?;
        writeln!(out, "# start={},{},{}", m.start[0], m.start[1], m.start[2])?;
        writeln!(out, "# trial_seed={}", m.trial_seed)?;
        writeln!(out, "# dt={}", m.dt)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(header())?;
        for r in &self.rows {
            let mut rec = vec![r.t.to_string()];
            rec.extend(r.channels().iter().map(f64::to_string));
            w.write_record(rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(input: impl BufRead) -> Result<SensorTrace, TraceError> {
        let mut meta_lines = Vec::new();
        let mut body = String::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            match line.strip_prefix('#') {
                Some(rest) => meta_lines.push((i + 1, rest.trim().to_string())),
                None => {
                    body.push_str(&line);
                    body.push('\n');
                }
            }
        }
        let meta = parse_meta(&meta_lines)?;
        let first_row_line = meta_lines.len() + 2;
        let mut reader = csv::Reader::from_reader(body.as_bytes());
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let line = first_row_line + i;
            if rec.len() != 1 + CHANNELS {
                return Err(TraceError::Parse {
                    line,
                    message: format!("expected {} columns, found {}", 1 + CHANNELS, rec.len()),
                });
            }
            let v: Vec<f64> = rec
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| TraceError::Parse {
                    line,
                    message: e.to_string(),
                })?;
            let mut s = [0.0; SENSOR_COUNT];
            s.copy_from_slice(&v[7..]);
            rows.push(TraceRow {
                t: v[0],
                x: v[1],
                y: v[2],
                heading: v[3],
                clearance: v[4],
                motor_l: v[5],
                motor_r: v[6],
                s,
            });
        }
        if rows.is_empty() {
            return Err(TraceError::Empty);
        }
        Ok(SensorTrace { meta, rows })
    }

    pub fn save(&self, path: &Path) -> Result<(), TraceError> {
        self.write(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<SensorTrace, TraceError> {
        SensorTrace::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn parse_meta(lines: &[(usize, String)]) -> Result<TraceMeta, TraceError> {
    let get = |key: &str| -> Result<(usize, &str), TraceError> {
        lines
            .iter()
            .find_map(|(n, l)| {
                let (k, v) = l.split_once('=')?;
                (k.trim() == key).then_some((*n, v.trim()))
            })
            .ok_or_else(|| TraceError::Parse {
                line: 1,
                message: format!("missing header key `{key}`"),
            })
    };
    fn num<T: std::str::FromStr>(line: usize, v: &str) -> Result<T, TraceError>
    where
        T::Err: std::fmt::Display,
    {
        v.parse().map_err(|e: T::Err| TraceError::Parse {
            line,
            message: e.to_string(),
        })
    }
    let (n, terrain) = get("terrain")?;
    let terrain = num::<TerrainKind>(n, terrain)?;
    let (n, start) = get("start")?;
    let parts: Vec<f64> = start.split(',').map(|p| num(n, p.trim())).collect::<Result<_, _>>()?;
    if parts.len() != 3 {
        return Err(TraceError::Parse {
            line: n,
            message: "start needs x,y,heading".into(),
        });
    }
    let (n1, seed) = get("world_seed")?;
    let (n2, obstacles) = get("obstacles")?;
    let (n3, trial_seed) = get("trial_seed")?;
    let (n4, dt) = get("dt")?;
    Ok(TraceMeta {
        controller_id: get("controller_id")?.1.to_string(),
        world_seed: num(n1, seed)?,
        terrain,
        obstacles: num(n2, obstacles)?,
        start: [parts[0], parts[1], parts[2]],
        trial_seed: num(n3, trial_seed)?,
        dt: num(n4, dt)?,
    })
}
