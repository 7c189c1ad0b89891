use std::io::{BufRead, Write};

use crate::env::HybridAction;
use crate::error::{Error, Result};
use crate::quantum::BathChoice;

pub const LOG_HEADER: [&str; 8] = ["step", "u", "d", "reward", "p_avg", "lq_avg", "lpi_avg", "eps"];

/// Telemetry of one environment step. Loss averages are zero until the
/// first update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRecord {
    pub step: u64,
    pub action: HybridAction,
    pub reward: f64,
    pub p_avg: f64,
    pub lq_avg: f64,
    pub lpi_avg: f64,
    pub eps: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
}

impl TrainLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&LogRecord> {
        self.records.last()
    }

    /// Final running average of the power.
    pub fn final_power(&self) -> Option<f64> {
        self.last().map(|r| r.p_avg)
    }

    pub fn write_csv<W: Write>(&self, mut w: W, provenance: &[String]) -> Result<()> {
        for line in provenance {
            for l in line.lines() {
                writeln!(w, "# {l}")?;
            }
        }
        let mut out = csv::Writer::from_writer(w);
        out.write_record(LOG_HEADER).map_err(csv_err)?;
        for r in &self.records {
            out.write_record([
                r.step.to_string(),
                r.action.u.to_string(),
                r.action.d.label().to_string(),
                r.reward.to_string(),
                r.p_avg.to_string(),
                r.lq_avg.to_string(),
                r.lpi_avg.to_string(),
                r.eps.to_string(),
            ])
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut records = Vec::new();
        let mut header_seen = false;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = t.split(',').map(str::trim).collect();
            if !header_seen {
                if fields != LOG_HEADER {
                    return Err(Error::Format(format!("line {lineno}: expected header '{}'", LOG_HEADER.join(","))));
                }
                header_seen = true;
                continue;
            }
            if fields.len() != LOG_HEADER.len() {
                return Err(Error::Format(format!(
                    "line {lineno}: expected {} fields, found {}",
                    LOG_HEADER.len(),
                    fields.len()
                )));
            }
            let num = |k: usize| -> Result<f64> {
                fields[k]
                    .parse()
                    .map_err(|_| Error::Format(format!("line {lineno}: bad {} '{}'", LOG_HEADER[k], fields[k])))
            };
            let step = fields[0]
                .parse()
                .map_err(|_| Error::Format(format!("line {lineno}: bad step '{}'", fields[0])))?;
            let d = BathChoice::from_label(fields[2])
                .ok_or_else(|| Error::Format(format!("line {lineno}: bad bath choice '{}'", fields[2])))?;
            records.push(LogRecord {
                step,
                action: HybridAction::new(num(1)?, d),
                reward: num(3)?,
                p_avg: num(4)?,
                lq_avg: num(5)?,
                lpi_avg: num(6)?,
                eps: num(7)?,
            });
        }
        if !header_seen {
            return Err(Error::Format("missing header line".into()));
        }
        Ok(Self { records })
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}
