//! CSV dumps of trajectories, box paths, jump paths and rate tables.
//!
//! Files whose name ends in `.gz` are gzip-compressed. Every writer accepts an optional
//! [`Provenance`], emitted as a leading `# ...` comment line; readers skip such lines.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::diffusion::{BoxPath, TrajectoryGrid};
use crate::walks::{JumpEvent, JumpPath, Rates};
use crate::{Error, Result};

/// Config hash and seed embedded in every output file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    fn comment(&self) -> String {
        format!("# config_hash={} seed={}", self.config_hash, self.seed)
    }
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

pub fn create(path: &Path) -> Result<Box<dyn Write>> {
    let file = BufWriter::new(File::create(path)?);
    Ok(if is_gz(path) {
        Box::new(GzEncoder::new(file, Compression::default()))
    } else {
        Box::new(file)
    })
}

pub fn open(path: &Path) -> Result<Box<dyn BufRead>> {
    let file = File::open(path)?;
    let inner: Box<dyn Read> = if is_gz(path) {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    Ok(Box::new(BufReader::new(inner)))
}

fn header(out: &mut dyn Write, prov: Option<&Provenance>, columns: &str) -> Result<()> {
    if let Some(p) = prov {
        writeln!(out, "{}", p.comment())?;
    }
    writeln!(out, "{columns}")?;
    Ok(())
}

/// `t,x1,...,xN`, one row per grid point.
pub fn write_trajectory(path: &Path, traj: &TrajectoryGrid, prov: Option<&Provenance>) -> Result<()> {
    let mut out = create(path)?;
    let cols: Vec<String> = (1..=traj.n_particles()).map(|i| format!("x{i}")).collect();
    header(&mut out, prov, &format!("t,{}", cols.join(",")))?;
    for k in 0..traj.len() {
        write!(out, "{}", traj.time(k))?;
        for x in traj.row(k) {
            write!(out, ",{x}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// `t,particle,new_box`. Particles are numbered from 1.
pub fn write_box_path(path: &Path, boxes: &BoxPath, prov: Option<&Provenance>) -> Result<()> {
    let mut out = create(path)?;
    header(&mut out, prov, "t,particle,new_box")?;
    for (i, b) in boxes.initial.iter().enumerate() {
        writeln!(out, "{},{},{}", boxes.start_time, i + 1, b)?;
    }
    for e in &boxes.events {
        writeln!(out, "{},{},{}", e.time, e.particle + 1, e.value)?;
    }
    out.flush()?;
    Ok(())
}

/// `t,particle,delta`. The initial configuration, which the CSV columns cannot carry,
/// is written as a `# initial=y1 y2 ...` comment line ahead of the header.
pub fn write_jump_path(path: &Path, jp: &JumpPath, prov: Option<&Provenance>) -> Result<()> {
    let mut out = create(path)?;
    if let Some(p) = prov {
        writeln!(out, "{}", p.comment())?;
    }
    let init: Vec<String> = jp.initial.iter().map(|y| y.to_string()).collect();
    writeln!(out, "# initial={}", init.join(" "))?;
    header(&mut out, None, "t,particle,delta")?;
    for e in &jp.events {
        writeln!(out, "{},{},{}", e.time, e.particle + 1, e.delta)?;
    }
    out.flush()?;
    Ok(())
}

/// `config,particle,direction,rate` for a list of labelled rate vectors.
pub fn write_rate_table(
    path: &Path,
    rows: &[(String, Rates)],
    prov: Option<&Provenance>,
) -> Result<()> {
    let mut out = create(path)?;
    header(&mut out, prov, "config,particle,direction,rate")?;
    for (label, rates) in rows {
        for i in 0..rates.right.len() {
            writeln!(out, "{label},{},right,{}", i + 1, rates.right[i])?;
            writeln!(out, "{label},{},left,{}", i + 1, rates.left[i])?;
        }
    }
    out.flush()?;
    Ok(())
}

fn data_lines(path: &Path) -> Result<Vec<String>> {
    let mut lines = Vec::new();
    for line in open(path)?.lines() {
        let line = line?;
        if !line.starts_with('#') && !line.trim().is_empty() {
            lines.push(line);
        }
    }
    Ok(lines)
}

fn parse<T: std::str::FromStr>(field: &str) -> Result<T> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("cannot parse CSV field {field:?}")))
}

/// Reads a trajectory written by [`write_trajectory`]. The seed is not stored in the
/// CSV and is set to 0.
pub fn read_trajectory(path: &Path) -> Result<TrajectoryGrid> {
    let lines = data_lines(path)?;
    let n = lines
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty trajectory file".into()))?
        .split(',')
        .count()
        - 1;
    let mut times = Vec::new();
    let mut positions = Vec::new();
    for line in &lines[1..] {
        let mut fields = line.split(',');
        times.push(parse::<f64>(fields.next().unwrap_or(""))?);
        for f in fields {
            positions.push(parse::<f64>(f)?);
        }
    }
    let dt = if times.len() > 1 { times[1] - times[0] } else { 1.0 };
    TrajectoryGrid::new(dt, times.first().copied().unwrap_or(0.0), n, positions, 0)
}

/// Reads a jump path written by [`write_jump_path`]; `horizon` is not stored in the
/// file and must be supplied.
pub fn read_jump_path(path: &Path, horizon: f64) -> Result<JumpPath> {
    let mut initial = None;
    let mut events = Vec::new();
    let mut seen_header = false;
    for line in open(path)?.lines() {
        let line = line?;
        if let Some(rest) = line.strip_prefix("# initial=") {
            initial = Some(
                rest.split_whitespace()
                    .map(parse::<i64>)
                    .collect::<Result<Vec<_>>>()?,
            );
            continue;
        }
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !seen_header {
            seen_header = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(Error::InvalidParameter(format!("bad jump row {line:?}")));
        }
        let particle: usize = parse(f[1])?;
        events.push(JumpEvent {
            time: parse(f[0])?,
            particle: particle
                .checked_sub(1)
                .ok_or_else(|| Error::InvalidParameter("particles are numbered from 1".into()))?,
            delta: parse(f[2])?,
        });
    }
    let initial =
        initial.ok_or_else(|| Error::InvalidParameter("missing '# initial=' line".into()))?;
    JumpPath::new(initial, events, horizon)
}
