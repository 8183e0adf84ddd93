use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

const MAX_GRID_POINTS: usize = 100_000;

/// Inclusive arithmetic sequence `from, from + step, ..., to`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub from: f64,
    pub to: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridItem {
    Value(f64),
    Range(Range),
}

/// Value grid: a number, a range, or a list mixing both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Value(f64),
    Range(Range),
    List(Vec<GridItem>),
}

// 12 decimals removes the drift of `from + i * step` without touching real grid values
fn tidy(x: f64) -> f64 {
    let t = (x * 1e12).round() / 1e12;
    if t == 0.0 {
        0.0
    } else {
        t
    }
}

impl Range {
    fn expand_into(&self, out: &mut Vec<f64>) -> Result<()> {
        let Range { from, to, step } = *self;
        if !(from.is_finite() && to.is_finite() && step.is_finite()) || step <= 0.0 || to < from {
            return Err(Error::Config(format!("invalid range from {from} to {to} step {step}")));
        }
        let count = ((to - from) / step + 1e-9).floor() as usize + 1;
        if out.len() + count > MAX_GRID_POINTS {
            return Err(Error::Config(format!("grid exceeds {MAX_GRID_POINTS} points")));
        }
        out.extend((0..count).map(|i| tidy(from + i as f64 * step)));
        Ok(())
    }
}

impl Grid {
    /// Values in declaration order. Fails on an empty grid, non-finite values
    /// or duplicates.
    pub fn values(&self) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        let push_item = |item: &GridItem, out: &mut Vec<f64>| match item {
            GridItem::Value(v) => {
                out.push(*v);
                Ok(())
            }
            GridItem::Range(r) => r.expand_into(out),
        };
        match self {
            Grid::Value(v) => out.push(*v),
            Grid::Range(r) => r.expand_into(&mut out)?,
            Grid::List(items) => {
                for item in items {
                    push_item(item, &mut out)?;
                }
            }
        }
        if out.is_empty() {
            return Err(Error::Config("value grid is empty".into()));
        }
        if let Some(v) = out.iter().find(|v| !v.is_finite()) {
            return Err(Error::Config(format!("grid value {v} is not finite")));
        }
        let mut sorted = out.clone();
        sorted.sort_by(f64::total_cmp);
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("grid value {} appears twice", w[0])));
        }
        Ok(out)
    }
}
