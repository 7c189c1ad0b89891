use std::io::{BufRead, Write};

use super::{ActionSpace, HybridAction};
use crate::error::{Error, Result};
use crate::quantum::BathChoice;

/// A stretch of consecutive steps at constant `(u, d)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub steps: usize,
    pub u: f64,
    pub d: BathChoice,
}

/// Piecewise-constant periodic schedule of controls, in units of the
/// environment time step.
///
/// On disk a protocol is one comma-separated record per step with columns
/// `step,u,d,reward`, preceded by `#` comment lines carrying provenance. The
/// reward column may be empty.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct CycleProtocol {
    pub segments: Vec<Segment>,
}

pub const PROTOCOL_HEADER: [&str; 4] = ["step", "u", "d", "reward"];

impl CycleProtocol {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidParameter("cycle protocol has no segments".into()));
        }
        if let Some(s) = segments.iter().find(|s| s.steps == 0) {
            return Err(Error::InvalidParameter(format!("segment at u = {} has zero duration", s.u)));
        }
        Ok(Self { segments })
    }

    /// Groups a per-step action list into maximal constant segments.
    pub fn from_actions(actions: &[HybridAction]) -> Result<Self> {
        let mut segments: Vec<Segment> = Vec::new();
        for a in actions {
            match segments.last_mut() {
                Some(last) if last.u == a.u && last.d == a.d => last.steps += 1,
                _ => segments.push(Segment { steps: 1, u: a.u, d: a.d }),
            }
        }
        Self::new(segments)
    }

    pub fn period(&self) -> usize {
        self.segments.iter().map(|s| s.steps).sum()
    }

    /// One action per step over a single period.
    pub fn actions(&self) -> Vec<HybridAction> {
        self.segments
            .iter()
            .flat_map(|s| std::iter::repeat_n(HybridAction::new(s.u, s.d), s.steps))
            .collect()
    }

    pub fn check(&self, space: &ActionSpace) -> Result<()> {
        for s in &self.segments {
            space.check(&HybridAction::new(s.u, s.d))?;
        }
        Ok(())
    }

    /// Writes the per-step table. `provenance` lines are emitted as `# ` comments.
    pub fn write_csv<W: Write>(&self, out: W, provenance: &[String], rewards: Option<&[f64]>) -> Result<()> {
        let mut out = out;
        for line in provenance {
            for l in line.lines() {
                writeln!(out, "# {l}")?;
            }
        }
        let actions = self.actions();
        if let Some(r) = rewards {
            if r.len() != actions.len() {
                return Err(Error::ShapeMismatch {
                    context: "protocol rewards",
                    expected: actions.len(),
                    actual: r.len(),
                });
            }
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(PROTOCOL_HEADER).map_err(csv_err)?;
        for (i, a) in actions.iter().enumerate() {
            let reward = rewards.map(|r| r[i].to_string()).unwrap_or_default();
            w.write_record([i.to_string(), a.u.to_string(), a.d.label().to_string(), reward])
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a table written by [`CycleProtocol::write_csv`], returning the
    /// protocol and the rewards column when it is fully populated.
    pub fn read_csv<R: BufRead>(input: R) -> Result<(Self, Option<Vec<f64>>)> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(input);
        let headers = reader.headers().map_err(csv_err)?.clone();
        if headers.iter().collect::<Vec<_>>() != PROTOCOL_HEADER {
            return Err(Error::Format(format!(
                "expected header '{}', found '{}'",
                PROTOCOL_HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut actions = Vec::new();
        let mut rewards = Vec::new();
        let mut complete = true;
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(csv_err)?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let bad = |what: &str| Error::Format(format!("line {line}: {what}"));
            let step: usize = record[0].parse().map_err(|_| bad("step is not an integer"))?;
            if step != row {
                return Err(bad(&format!("expected step {row}, found {step}")));
            }
            let u: f64 = record[1].parse().map_err(|_| bad("u is not a number"))?;
            let d = BathChoice::from_label(&record[2]).ok_or_else(|| bad("unknown bath choice"))?;
            actions.push(HybridAction::new(u, d));
            if record[3].is_empty() {
                complete = false;
            } else {
                rewards.push(record[3].parse::<f64>().map_err(|_| bad("reward is not a number"))?);
            }
        }
        if actions.is_empty() {
            return Err(Error::Format("protocol file has no steps".into()));
        }
        let rewards = (complete && rewards.len() == actions.len()).then_some(rewards);
        Ok((Self::from_actions(&actions)?, rewards))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> CycleProtocol {
        CycleProtocol::new(vec![
            Segment { steps: 1, u: 1.0, d: BathChoice::Hot },
            Segment { steps: 2, u: 0.3, d: BathChoice::Cold },
        ])
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let p = square();
        let rewards = [0.1, -1.0 / 3.0, 2.5e-7];
        let mut buf = Vec::new();
        p.write_csv(&mut buf, &["model = two_level\nseed = 3".into()], Some(&rewards)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# model = two_level\n# seed = 3\nstep,u,d,reward\n"));
        let (q, r) = CycleProtocol::read_csv(&buf[..]).unwrap();
        assert_eq!(p, q);
        assert_eq!(r.unwrap(), rewards);
    }

    #[test]
    fn missing_rewards_are_optional() {
        let mut buf = Vec::new();
        square().write_csv(&mut buf, &[], None).unwrap();
        let (_, r) = CycleProtocol::read_csv(&buf[..]).unwrap();
        assert!(r.is_none());
    }

    #[test]
    fn rejects_bad_rows() {
        let text = "step,u,d,reward\n0,1.0,warm,\n";
        let err = CycleProtocol::read_csv(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(CycleProtocol::new(vec![Segment { steps: 0, u: 1.0, d: BathChoice::Hot }]).is_err());
    }

    #[test]
    fn grouping_merges_equal_steps() {
        let p = square();
        assert_eq!(p.period(), 3);
        assert_eq!(CycleProtocol::from_actions(&p.actions()).unwrap(), p);
    }
}
