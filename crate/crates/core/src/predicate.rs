//! Threshold clauses over measure coordinates: the event grammar of the
//! rare-event estimators and the constraint grammar of the optimizer.
//!
//! Grammar: `M(k)>=x`, `M(k)<=x`, joined by `&`. `L` is accepted as a synonym
//! for `M`; clauses always address the degree marginal.

use crate::generator::EventLog;
use crate::measures::{DegreeMeasure, PairMeasure};
use crate::{Error, Result};

/// Which empirical statistic of a history an event predicate addresses.
///
/// The two objects have different limits: the attachment measure (parent
/// in-degrees at attachment time) converges to the tail sequence of `π_f`,
/// the final-state vertex histogram to `π_f` itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventStatistic {
    AttachmentMeasure,
    FinalHistogram,
}

impl EventStatistic {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "attachment" => Ok(Self::AttachmentMeasure),
            "histogram" => Ok(Self::FinalHistogram),
            other => Err(Error::Parse(format!(
                "unknown statistic {other:?}; use attachment or histogram"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Ge,
    Le,
}

/// One clause `coordinate op threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clause {
    pub coord: usize,
    pub op: Op,
    pub threshold: f64,
}

impl Clause {
    pub fn holds(&self, value: f64) -> bool {
        match self.op {
            Op::Ge => value >= self.threshold,
            Op::Le => value <= self.threshold,
        }
    }
}

/// A conjunction of threshold clauses.
#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    pub clauses: Vec<Clause>,
}

impl Predicate {
    /// Parses e.g. `"M(0)>=0.75 & M(2)<=0.1"`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut clauses = Vec::new();
        for raw in text.split('&') {
            let part = raw.trim();
            if part.is_empty() {
                continue;
            }
            let rest = part
                .strip_prefix('M')
                .or_else(|| part.strip_prefix('L'))
                .ok_or_else(|| Error::Parse(format!("clause {part:?} must start with M or L")))?;
            let rest = rest.trim_start();
            let rest = rest
                .strip_prefix('(')
                .ok_or_else(|| Error::Parse(format!("clause {part:?}: expected '('")))?;
            let close = rest
                .find(')')
                .ok_or_else(|| Error::Parse(format!("clause {part:?}: expected ')'")))?;
            let coord: usize = rest[..close]
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("clause {part:?}: bad coordinate")))?;
            let rest = rest[close + 1..].trim_start();
            let (op, rest) = if let Some(r) = rest.strip_prefix(">=") {
                (Op::Ge, r)
            } else if let Some(r) = rest.strip_prefix("<=") {
                (Op::Le, r)
            } else {
                return Err(Error::Parse(format!("clause {part:?}: expected >= or <=")));
            };
            let threshold: f64 = rest
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("clause {part:?}: bad threshold")))?;
            clauses.push(Clause { coord, op, threshold });
        }
        if clauses.is_empty() {
            return Err(Error::Parse("empty predicate".into()));
        }
        Ok(Self { clauses })
    }

    pub fn eval_degree(&self, m: &DegreeMeasure) -> bool {
        self.clauses.iter().all(|c| c.holds(m.prob(c.coord)))
    }

    /// Evaluates against the degree marginal of a pair measure.
    pub fn eval_pair(&self, m: &PairMeasure) -> bool {
        let marginal = m.degree_marginal();
        self.eval_degree(&marginal)
    }

    /// Evaluates against the chosen empirical statistic of a history.
    pub fn eval_log(&self, log: &EventLog, statistic: EventStatistic) -> bool {
        match statistic {
            EventStatistic::AttachmentMeasure => {
                self.eval_pair(&crate::empirics::attachment_measure(log))
            }
            EventStatistic::FinalHistogram => {
                self.eval_degree(&crate::empirics::final_histogram(log))
            }
        }
    }
}
