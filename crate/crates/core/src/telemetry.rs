//! Per-tick simulation log and its CSV form.
//!
//! CSV layout, one row per physics tick, columns in this order (`i` runs
//! over joints, `j` over muscles):
//!
//! ```text
//! tick, t,
//! theta_i..., omega_i..., payload,
//! l_motor_j..., l_ref_cmd_j..., l_ref_eff_j...,
//! f_j..., df_j..., offset_j...,
//! limit_force_i..., saturated_j..., slack_j...,
//! reflex_tick, feedback_tick, impulses, fired
//! ```
//!
//! Booleans are `0`/`1`; `fired` lists the muscles whose reflex fired on
//! that tick separated by `;`. Floats use the shortest representation that
//! parses back to the same value, so a log read from CSV reproduces every
//! metric bit for bit.

use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::reflex::ReflexEvent;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord<T> {
    pub tick: u64,
    pub t: T,
    pub theta: Vec<T>,
    pub omega: Vec<T>,
    pub payload: T,
    pub l_motor: Vec<T>,
    pub l_ref_cmd: Vec<T>,
    pub l_ref_eff: Vec<T>,
    pub f: Vec<T>,
    /// Tension change over the last control tick, held between ticks.
    pub df: Vec<T>,
    pub offset: Vec<T>,
    pub limit_force: Vec<T>,
    pub saturated: Vec<bool>,
    pub slack: Vec<bool>,
    pub reflex_tick: bool,
    pub feedback_tick: bool,
    /// Scripted impulses applied on this tick.
    pub impulses: u32,
    pub fired: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryLog<T> {
    pub n_joints: usize,
    pub n_muscles: usize,
    pub dt: T,
    pub rows: Vec<TickRecord<T>>,
    pub events: Vec<ReflexEvent<T>>,
}

impl<T: Real> TelemetryLog<T> {
    pub fn new(n_joints: usize, n_muscles: usize, dt: T) -> Self {
        Self {
            n_joints,
            n_muscles,
            dt,
            rows: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn start_time(&self) -> Option<T> {
        self.rows.first().map(|r| r.t)
    }

    pub fn end_time(&self) -> Option<T> {
        self.rows.last().map(|r| r.t)
    }

    pub fn theta(&self, joint: usize) -> impl Iterator<Item = (T, T)> + '_ {
        self.rows.iter().map(move |r| (r.t, r.theta[joint]))
    }

    /// Times of ticks on which scripted impulses were applied.
    pub fn impulse_times(&self) -> Vec<T> {
        self.rows.iter().filter(|r| r.impulses > 0).map(|r| r.t).collect()
    }

    /// Times at which the payload mass changed.
    pub fn payload_change_times(&self) -> Vec<T> {
        self.rows
            .windows(2)
            .filter(|w| w[1].payload != w[0].payload)
            .map(|w| w[1].t)
            .collect()
    }

    /// Times of disturbances: impulses and payload changes, sorted.
    pub fn disturbance_times(&self) -> Vec<T> {
        let mut times = self.impulse_times();
        for t in self.payload_change_times() {
            if !times.contains(&t) {
                times.push(t);
            }
        }
        times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
        times
    }

    pub fn header(&self) -> Vec<String> {
        let (n, m) = (self.n_joints, self.n_muscles);
        let mut h = vec!["tick".to_string(), "t".to_string()];
        let per = |h: &mut Vec<String>, name: &str, count: usize| {
            h.extend((0..count).map(|i| format!("{name}_{i}")));
        };
        per(&mut h, "theta", n);
        per(&mut h, "omega", n);
        h.push("payload".into());
        for name in ["l_motor", "l_ref_cmd", "l_ref_eff", "f", "df", "offset"] {
            per(&mut h, name, m);
        }
        per(&mut h, "limit_force", n);
        per(&mut h, "saturated", m);
        per(&mut h, "slack", m);
        h.extend(["reflex_tick", "feedback_tick", "impulses", "fired"].map(String::from));
        h
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        let mut fields: Vec<String> = Vec::new();
        for r in &self.rows {
            fields.clear();
            fields.push(r.tick.to_string());
            fields.push(r.t.to_string());
            for v in [&r.theta, &r.omega] {
                fields.extend(v.iter().map(T::to_string));
            }
            fields.push(r.payload.to_string());
            for v in [&r.l_motor, &r.l_ref_cmd, &r.l_ref_eff, &r.f, &r.df, &r.offset, &r.limit_force] {
                fields.extend(v.iter().map(T::to_string));
            }
            for v in [&r.saturated, &r.slack] {
                fields.extend(v.iter().map(|&b| u8::from(b).to_string()));
            }
            fields.push(u8::from(r.reflex_tick).to_string());
            fields.push(u8::from(r.feedback_tick).to_string());
            fields.push(r.impulses.to_string());
            fields.push(
                r.fired
                    .iter()
                    .map(usize::to_string)
                    .collect::<Vec<_>>()
                    .join(";"),
            );
            w.write_record(&fields)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(buf)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

impl<T: Real + FromStr> TelemetryLog<T> {
    /// Parses a log written by [`write_csv`](Self::write_csv). Reflex
    /// events are rebuilt from the `fired` column.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
        let count = |prefix: &str| {
            header
                .iter()
                .filter(|h| {
                    h.strip_prefix(prefix)
                        .and_then(|rest| rest.strip_prefix('_'))
                        .is_some_and(|idx| idx.parse::<usize>().is_ok())
                })
                .count()
        };
        let (n, m) = (count("theta"), count("l_motor"));
        let mut log = Self::new(n, m, T::zero());
        if log.header() != header {
            return Err(Error::Parse {
                path: "<csv>".into(),
                message: format!("unexpected header for {n} joints and {m} muscles"),
            });
        }

        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |col: usize| Error::Parse {
                path: "<csv>".into(),
                message: format!("row {}: bad value in column {}", line + 1, header[col]),
            };
            let mut col = 0usize;
            let float = |col: &mut usize| -> Result<T> {
                let v = rec[*col].parse::<T>().map_err(|_| bad(*col))?;
                *col += 1;
                Ok(v)
            };
            let tick = rec[col].parse::<u64>().map_err(|_| bad(col))?;
            col += 1;
            let t = float(&mut col)?;
            let vec = |col: &mut usize, k: usize| -> Result<Vec<T>> { (0..k).map(|_| float(col)).collect() };
            let theta = vec(&mut col, n)?;
            let omega = vec(&mut col, n)?;
            let payload = vec(&mut col, 1)?[0];
            let l_motor = vec(&mut col, m)?;
            let l_ref_cmd = vec(&mut col, m)?;
            let l_ref_eff = vec(&mut col, m)?;
            let f = vec(&mut col, m)?;
            let df = vec(&mut col, m)?;
            let offset = vec(&mut col, m)?;
            let limit_force = vec(&mut col, n)?;
            let flag = |col: &mut usize| -> Result<bool> {
                let v = match &rec[*col] {
                    "0" => false,
                    "1" => true,
                    _ => return Err(bad(*col)),
                };
                *col += 1;
                Ok(v)
            };
            let saturated = (0..m).map(|_| flag(&mut col)).collect::<Result<Vec<_>>>()?;
            let slack = (0..m).map(|_| flag(&mut col)).collect::<Result<Vec<_>>>()?;
            let reflex_tick = flag(&mut col)?;
            let feedback_tick = flag(&mut col)?;
            let impulses = rec[col].parse::<u32>().map_err(|_| bad(col))?;
            col += 1;
            let fired = if rec[col].is_empty() {
                Vec::new()
            } else {
                rec[col]
                    .split(';')
                    .map(|s| s.parse::<usize>().map_err(|_| bad(col)))
                    .collect::<Result<Vec<_>>>()?
            };
            log.events
                .extend(fired.iter().map(|&muscle| ReflexEvent { muscle, t }));
            log.rows.push(TickRecord {
                tick,
                t,
                theta,
                omega,
                payload,
                l_motor,
                l_ref_cmd,
                l_ref_eff,
                f,
                df,
                offset,
                limit_force,
                saturated,
                slack,
                reflex_tick,
                feedback_tick,
                impulses,
                fired,
            });
        }
        if log.rows.len() >= 2 {
            log.dt = log.rows[1].t - log.rows[0].t;
        }
        Ok(log)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_csv(std::io::BufReader::new(file)).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// A log with only time and one joint angle filled in.
    pub(crate) fn synthetic(dt: f64, theta: impl IntoIterator<Item = f64>) -> TelemetryLog<f64> {
        let mut log = TelemetryLog::new(1, 1, dt);
        for (k, q) in theta.into_iter().enumerate() {
            log.rows.push(TickRecord {
                tick: k as u64,
                t: k as f64 * dt,
                theta: vec![q],
                omega: vec![0.0],
                payload: 0.0,
                l_motor: vec![100.0],
                l_ref_cmd: vec![100.0],
                l_ref_eff: vec![100.0],
                f: vec![1.0],
                df: vec![0.0],
                offset: vec![0.0],
                limit_force: vec![0.0],
                saturated: vec![false],
                slack: vec![false],
                reflex_tick: k % 10 == 0,
                feedback_tick: false,
                impulses: 0,
                fired: vec![],
            });
        }
        log
    }

    #[test]
    fn header_layout() {
        let log = TelemetryLog::<f64>::new(2, 1, 0.001);
        let h = log.header().join(",");
        assert_eq!(
            h,
            "tick,t,theta_0,theta_1,omega_0,omega_1,payload,l_motor_0,l_ref_cmd_0,\
             l_ref_eff_0,f_0,df_0,offset_0,limit_force_0,limit_force_1,saturated_0,\
             slack_0,reflex_tick,feedback_tick,impulses,fired"
        );
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut log = synthetic(0.001, (0..50).map(|k| -1.57 + (k as f64 * 0.37).sin() / 3.0));
        log.rows[7].fired = vec![0];
        log.rows[7].impulses = 2;
        log.rows[9].saturated[0] = true;
        log.events.push(ReflexEvent { muscle: 0, t: log.rows[7].t });
        let bytes = log.to_csv_bytes().unwrap();
        let back = TelemetryLog::<f64>::read_csv(&bytes[..]).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn rejects_foreign_header() {
        let err = TelemetryLog::<f64>::read_csv(&b"a,b\n1,2\n"[..]).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }
}
