//! Append-only simulation records and their CSV form.
//!
//! Three files per run: `positions.csv`, `links.csv` and `events.csv`.
//! Rows are sorted by step then agent (cancellations carry agent `-1`),
//! and floats are written with six decimals.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::comms::{LinkClass, LinkSample};
use crate::grid::Cell;
use crate::routing::{AgentId, CancelReason};

pub const POSITIONS_FILE: &str = "positions.csv";
pub const LINKS_FILE: &str = "links.csv";
pub const EVENTS_FILE: &str = "events.csv";

pub const POSITIONS_HEADER: &str = "step,agent,cell_x,cell_y";
pub const LINKS_HEADER: &str = "step,agent,station,path_loss_db,class";
pub const EVENTS_HEADER: &str = "step,kind,agent,origin_x,origin_y,dest_x,dest_y,hold,reason";

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{file} line {line}: {message}")]
    Parse {
        file: &'static str,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PositionRecord {
    pub step: u64,
    pub agent: AgentId,
    pub cell: Cell,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LaunchEvent {
    pub step: u64,
    pub agent: AgentId,
    pub origin: Cell,
    pub dest: Cell,
    pub hold: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LandingEvent {
    pub step: u64,
    pub agent: AgentId,
    pub origin: Cell,
    pub dest: Cell,
    pub hold: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CancelEvent {
    pub step: u64,
    pub origin: Cell,
    pub dest: Cell,
    /// Reason text; one of the [`CancelReason`] strings when produced by the engine.
    pub reason: String,
}

impl CancelEvent {
    pub fn new(step: u64, origin: Cell, dest: Cell, reason: CancelReason) -> Self {
        Self {
            step,
            origin,
            dest,
            reason: reason.as_str().to_string(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimulationLog {
    pub launches: Vec<LaunchEvent>,
    pub cancellations: Vec<CancelEvent>,
    pub landings: Vec<LandingEvent>,
    pub positions: Vec<PositionRecord>,
    pub links: Vec<LinkSample>,
}

enum EventRow<'a> {
    Launch(&'a LaunchEvent),
    Land(&'a LandingEvent),
    Cancel(&'a CancelEvent),
}

impl EventRow<'_> {
    fn key(&self) -> (u64, i64) {
        match self {
            Self::Launch(e) => (e.step, i64::from(e.agent)),
            Self::Land(e) => (e.step, i64::from(e.agent)),
            Self::Cancel(e) => (e.step, -1),
        }
    }
}

impl SimulationLog {
    pub fn is_empty(&self) -> bool {
        self.launches.is_empty()
            && self.cancellations.is_empty()
            && self.landings.is_empty()
            && self.positions.is_empty()
            && self.links.is_empty()
    }

    pub fn positions_csv(&self) -> String {
        let mut rows: Vec<&PositionRecord> = self.positions.iter().collect();
        rows.sort_by_key(|r| (r.step, r.agent));
        let mut out = String::from(POSITIONS_HEADER);
        out.push('\n');
        for r in rows {
            let _ = writeln!(out, "{},{},{},{}", r.step, r.agent, r.cell.x, r.cell.y);
        }
        out
    }

    pub fn links_csv(&self) -> String {
        let mut rows: Vec<&LinkSample> = self.links.iter().collect();
        rows.sort_by_key(|r| (r.step, r.agent));
        let mut out = String::from(LINKS_HEADER);
        out.push('\n');
        for r in rows {
            let station = r.station.map_or(-1, i64::from);
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{}",
                r.step, r.agent, station, r.path_loss_db, r.class
            );
        }
        out
    }

    pub fn events_csv(&self) -> String {
        let mut rows: Vec<EventRow<'_>> = self
            .launches
            .iter()
            .map(EventRow::Launch)
            .chain(self.cancellations.iter().map(EventRow::Cancel))
            .chain(self.landings.iter().map(EventRow::Land))
            .collect();
        rows.sort_by_key(EventRow::key);
        let mut out = String::from(EVENTS_HEADER);
        out.push('\n');
        for row in rows {
            let _ = match row {
                EventRow::Launch(e) => writeln!(
                    out,
                    "{},launch,{},{},{},{},{},{},",
                    e.step, e.agent, e.origin.x, e.origin.y, e.dest.x, e.dest.y, e.hold
                ),
                EventRow::Land(e) => writeln!(
                    out,
                    "{},land,{},{},{},{},{},{},",
                    e.step, e.agent, e.origin.x, e.origin.y, e.dest.x, e.dest.y, e.hold
                ),
                EventRow::Cancel(e) => writeln!(
                    out,
                    "{},cancel,-1,{},{},{},{},0,{}",
                    e.step, e.origin.x, e.origin.y, e.dest.x, e.dest.y, e.reason
                ),
            };
        }
        out
    }

    /// Write the three CSV files into `dir`, which must exist.
    pub fn write_dir(&self, dir: &Path) -> Result<(), LogError> {
        write_file(&dir.join(POSITIONS_FILE), &self.positions_csv())?;
        write_file(&dir.join(LINKS_FILE), &self.links_csv())?;
        write_file(&dir.join(EVENTS_FILE), &self.events_csv())
    }

    /// Read a log previously written by [`SimulationLog::write_dir`].
    pub fn read_dir(dir: &Path) -> Result<Self, LogError> {
        let mut log = SimulationLog::default();
        for (i, fields) in rows(dir, POSITIONS_FILE, POSITIONS_HEADER, 4)? {
            let p = FieldParser::new(POSITIONS_FILE, i, &fields);
            log.positions.push(PositionRecord {
                step: p.num(0)?,
                agent: p.num(1)?,
                cell: Cell::new(p.num(2)?, p.num(3)?),
            });
        }
        for (i, fields) in rows(dir, LINKS_FILE, LINKS_HEADER, 5)? {
            let p = FieldParser::new(LINKS_FILE, i, &fields);
            let station: i64 = p.num(2)?;
            log.links.push(LinkSample {
                step: p.num(0)?,
                agent: p.num(1)?,
                station: u32::try_from(station).ok(),
                path_loss_db: p.num(3)?,
                class: LinkClass::parse(&fields[4]).ok_or_else(|| p.error("bad link class"))?,
            });
        }
        for (i, fields) in rows(dir, EVENTS_FILE, EVENTS_HEADER, 9)? {
            let p = FieldParser::new(EVENTS_FILE, i, &fields);
            let step = p.num(0)?;
            let origin = Cell::new(p.num(3)?, p.num(4)?);
            let dest = Cell::new(p.num(5)?, p.num(6)?);
            match fields[1].as_str() {
                "launch" => log.launches.push(LaunchEvent {
                    step,
                    agent: p.num(2)?,
                    origin,
                    dest,
                    hold: p.num(7)?,
                }),
                "land" => log.landings.push(LandingEvent {
                    step,
                    agent: p.num(2)?,
                    origin,
                    dest,
                    hold: p.num(7)?,
                }),
                "cancel" => log.cancellations.push(CancelEvent {
                    step,
                    origin,
                    dest,
                    reason: fields[8].clone(),
                }),
                other => return Err(p.error(&format!("unknown event kind {other:?}"))),
            }
        }
        Ok(log)
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), LogError> {
    fs::write(path, contents).map_err(|source| LogError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn rows(dir: &Path, file: &'static str, header: &str, width: usize) -> Result<Vec<(usize, Vec<String>)>, LogError> {
    let path = dir.join(file);
    let text = fs::read_to_string(&path).map_err(|source| LogError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == header => {}
        _ => {
            return Err(LogError::Parse {
                file,
                line: 1,
                message: format!("expected header {header:?}"),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let fields: Vec<String> = l.split(',').map(str::to_string).collect();
            if fields.len() == width {
                Ok((i + 1, fields))
            } else {
                Err(LogError::Parse {
                    file,
                    line: i + 1,
                    message: format!("expected {width} fields, found {}", fields.len()),
                })
            }
        })
        .collect()
}

struct FieldParser<'a> {
    file: &'static str,
    line: usize,
    fields: &'a [String],
}

impl<'a> FieldParser<'a> {
    fn new(file: &'static str, line: usize, fields: &'a [String]) -> Self {
        Self { file, line, fields }
    }

    fn num<T: std::str::FromStr>(&self, i: usize) -> Result<T, LogError> {
        self.fields[i]
            .parse()
            .map_err(|_| self.error(&format!("bad value {:?} in column {}", self.fields[i], i + 1)))
    }

    fn error(&self, message: &str) -> LogError {
        LogError::Parse {
            file: self.file,
            line: self.line,
            message: message.to_string(),
        }
    }
}
