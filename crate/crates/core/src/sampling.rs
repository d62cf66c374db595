//! Lebesgue (send-on-threshold) sampling of a fine-grid signal.
//!
//! Thresholds sit at integer multiples of `h`. A value `z` belongs to the band
//! `[η, η + h)` with `η = h * floor(z / h)`; a value exactly on a threshold is
//! assigned to the band above it. Events are band changes on the sensing grid
//! of period `Δ`, time-stamped at the grid instant where the new band is first
//! observed.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Band index `m` such that `m*h <= z < (m+1)*h`.
pub fn quantize_level(z: f64, h: f64) -> i64 {
    let mut m = (z / h).floor();
    // floor(z/h) can be off by one after rounding of the division
    if m * h > z {
        m -= 1.0;
    } else if (m + 1.0) * h <= z {
        m += 1.0;
    }
    m as i64
}

/// Lower band edge `η` of the band containing `z`.
pub fn quantize(z: f64, h: f64) -> f64 {
    quantize_level(z, h) as f64 * h
}

/// Threshold crossing: at time `t` the signal crossed threshold `level * h`.
/// The first event of a record carries the initial band index instead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    #[serde(rename = "m")]
    pub level: i64,
}

/// Interval data `[lower_i, lower_i + width)` for each output sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Bands {
    pub lower: Vec<f64>,
    pub width: f64,
}

impl Bands {
    pub fn new(lower: Vec<f64>, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::invalid(format!("band width must be positive, got {width}")));
        }
        Ok(Self { lower, width })
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn upper(&self, i: usize) -> f64 {
        self.lower[i] + self.width
    }

    pub fn midpoints(&self) -> Vec<f64> {
        let half = 0.5 * self.width;
        self.lower.iter().map(|&l| l + half).collect()
    }

    pub fn contains(&self, i: usize, z: f64) -> bool {
        self.lower[i] <= z && z < self.upper(i)
    }
}

/// Lebesgue-sampled record: per-step bands `[η_i, η_i + h)` for `i = 1..=N`
/// plus the event stream they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct LebesgueDataset {
    h: f64,
    delta: f64,
    initial_level: i64,
    levels: Vec<i64>,
    events: Vec<Event>,
}

impl LebesgueDataset {
    /// Threshold spacing.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Sensing grid period.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Number of bands `N` (index 0 excluded).
    pub fn n(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[i64] {
        &self.levels
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Lower edges `η_1..η_N`.
    pub fn eta(&self) -> Vec<f64> {
        self.levels.iter().map(|&m| m as f64 * self.h).collect()
    }

    pub fn bands(&self) -> Bands {
        Bands {
            lower: self.eta(),
            width: self.h,
        }
    }

    pub fn midpoints(&self) -> Vec<f64> {
        midpoints(self)
    }

    /// Rebuilds the band index sequence `0..=N` from the event stream alone.
    pub fn reconstruct_levels(&self) -> Vec<i64> {
        levels_from_events(&self.events, self.delta, self.levels.len() + 1)
    }

    /// Builds a dataset from an event stream, assuming the record spans
    /// `n + 1` grid samples.
    pub fn from_events(events: Vec<Event>, h: f64, delta: f64, n: usize) -> Result<Self> {
        validate_grid(h, delta)?;
        if events.is_empty() {
            return Err(Error::Empty("event stream"));
        }
        let all = levels_from_events(&events, delta, n + 1);
        Ok(Self {
            h,
            delta,
            initial_level: all[0],
            levels: all[1..].to_vec(),
            events,
        })
    }
}

fn validate_grid(h: f64, delta: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("threshold spacing must be positive, got {h}")));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid(format!("grid period must be positive, got {delta}")));
    }
    Ok(())
}

fn levels_from_events(events: &[Event], delta: f64, len: usize) -> Vec<i64> {
    let mut out = Vec::with_capacity(len);
    let mut current = events.first().map_or(0, |e| e.level);
    let mut next = 1;
    for i in 0..len {
        while next < events.len() && grid_index(events[next].t, delta) <= i {
            let m = events[next].level;
            // upward crossing of threshold m lands in band m, downward in band m - 1
            current = if m > current { m } else { m - 1 };
            next += 1;
        }
        out.push(current);
    }
    out
}

fn grid_index(t: f64, delta: f64) -> usize {
    (t / delta).round() as usize
}

/// Quantizes a fine-grid record `z(iΔ)`, `i = 0..len`. Sample 0 only seeds the
/// event stream; the bands cover `i = 1..len`.
pub fn sample_events(z_fine: &[f64], h: f64, delta: f64) -> Result<LebesgueDataset> {
    validate_grid(h, delta)?;
    if z_fine.is_empty() {
        return Err(Error::Empty("fine-grid signal"));
    }
    let all: Vec<i64> = z_fine.iter().map(|&z| quantize_level(z, h)).collect();
    let mut events = vec![Event {
        t: 0.0,
        level: all[0],
    }];
    for i in 1..all.len() {
        let (prev, cur) = (all[i - 1], all[i]);
        if cur != prev {
            // last threshold crossed on the way from prev to cur
            let m = if cur > prev { cur } else { cur + 1 };
            events.push(Event {
                t: i as f64 * delta,
                level: m,
            });
        }
    }
    Ok(LebesgueDataset {
        h,
        delta,
        initial_level: all[0],
        levels: all[1..].to_vec(),
        events,
    })
}

/// Band midpoints `η_i + h/2`.
pub fn midpoints(ds: &LebesgueDataset) -> Vec<f64> {
    ds.bands().midpoints()
}

#[derive(Serialize, Deserialize)]
struct BandRow {
    i: usize,
    t: f64,
    eta: f64,
}

/// Writes `i,t,eta` rows for `i = 1..=N`.
pub fn write_bands_csv<W: Write>(ds: &LebesgueDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (k, eta) in ds.eta().into_iter().enumerate() {
        let i = k + 1;
        w.serialize(BandRow {
            i,
            t: i as f64 * ds.delta,
            eta,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `t,m` event rows.
pub fn write_events_csv<W: Write>(ds: &LebesgueDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for e in &ds.events {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_events_csv<R: Read>(reader: R) -> Result<Vec<Event>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Reads a bands file. The event stream is rebuilt from the band sequence,
/// with the first band standing in for the discarded sample 0.
pub fn read_bands_csv<R: Read>(reader: R, h: f64) -> Result<LebesgueDataset> {
    let mut r = csv::Reader::from_reader(reader);
    let rows: Vec<BandRow> = r.deserialize().collect::<std::result::Result<_, _>>()?;
    if rows.len() < 2 {
        return Err(Error::Empty("bands file needs at least two rows"));
    }
    let delta = rows[1].t - rows[0].t;
    let z: Vec<f64> = std::iter::once(rows[0].eta)
        .chain(rows.iter().map(|r| r.eta))
        .collect();
    sample_events(&z, h, delta)
}

pub fn write_dataset_files(ds: &LebesgueDataset, bands: &Path, events: &Path) -> Result<()> {
    write_bands_csv(ds, std::fs::File::create(bands)?)?;
    write_events_csv(ds, std::fs::File::create(events)?)?;
    Ok(())
}
