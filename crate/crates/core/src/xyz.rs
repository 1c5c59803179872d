//! Extended-XYZ text serialization.
//!
//! Layout: line 1 is the atom count, line 2 carries `key=value` metadata
//! (at least `box="Lx Ly Lz"` and `system=<lj|sw|csh>`), then one
//! `<species> <x> <y> <z>` line per atom. Floats are written in Rust's
//! shortest round-trip form, so read(write(c)) reproduces coordinates
//! exactly. Positions are wrapped into the primary cell on write.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::potentials::System;
use crate::system::{Configuration, SimulationBox};

fn species_names(system: System) -> &'static [&'static str] {
    match system {
        System::Lj => &["A", "B"],
        System::Sw => &["Si"],
        System::Csh => &["CSH"],
    }
}

pub fn write_config(config: &Configuration, system: System, path: &Path) -> Result<()> {
    std::fs::write(path, format_config(config, system))?;
    Ok(())
}

pub fn format_config(config: &Configuration, system: System) -> String {
    let wrapped = config.wrap();
    let names = species_names(system);
    let mut out = String::new();
    let l = wrapped.box_.lengths;
    writeln!(out, "{}", wrapped.n_atoms()).unwrap();
    writeln!(
        out,
        "box=\"{} {} {}\" system={}",
        l[0],
        l[1],
        l[2],
        system.tag()
    )
    .unwrap();
    for (p, &s) in wrapped.positions.iter().zip(&wrapped.species) {
        writeln!(out, "{} {} {} {}", names[s as usize], p[0], p[1], p[2]).unwrap();
    }
    out
}

pub fn read_config(path: &Path) -> Result<(Configuration, System)> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<(Configuration, System)> {
    let mut lines = text.lines();
    let n: usize = lines
        .next()
        .ok_or_else(|| Error::MalformedFile("empty file".into()))?
        .trim()
        .parse()
        .map_err(|_| Error::MalformedFile("first line must be the atom count".into()))?;

    let meta_line = lines
        .next()
        .ok_or_else(|| Error::MalformedFile("missing metadata line".into()))?;
    let meta = parse_metadata(meta_line)?;

    let box_str = meta
        .iter()
        .find(|(k, _)| k == "box")
        .ok_or_else(|| Error::MalformedFile("metadata missing box=\"Lx Ly Lz\"".into()))?
        .1
        .clone();
    let sys_str = meta
        .iter()
        .find(|(k, _)| k == "system")
        .ok_or_else(|| Error::MalformedFile("metadata missing system=<lj|sw|csh>".into()))?
        .1
        .clone();
    let system = System::from_tag(&sys_str)?;

    let lengths: Vec<f64> = box_str
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::MalformedFile(format!("bad box length `{t}`")))
        })
        .collect::<Result<_>>()?;
    if lengths.len() != 3 {
        return Err(Error::MalformedFile(format!(
            "box must have 3 lengths, got {}",
            lengths.len()
        )));
    }
    let box_ = SimulationBox::new([lengths[0], lengths[1], lengths[2]], [true; 3])
        .map_err(|e| Error::MalformedFile(e.to_string()))?;

    let names = species_names(system);
    let mut positions = Vec::with_capacity(n);
    let mut species = Vec::with_capacity(n);
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut tok = line.split_whitespace();
        let name = tok
            .next()
            .ok_or_else(|| Error::MalformedFile("empty atom line".into()))?;
        let sid = names
            .iter()
            .position(|&s| s == name)
            .ok_or_else(|| Error::UnknownSpecies(name.to_string()))? as u8;
        let mut coord = [0.0; 3];
        for c in coord.iter_mut() {
            let t = tok
                .next()
                .ok_or_else(|| Error::MalformedFile("atom line needs 3 coordinates".into()))?;
            *c = t
                .parse()
                .map_err(|_| Error::MalformedFile(format!("bad coordinate `{t}`")))?;
        }
        positions.push(coord);
        species.push(sid);
    }
    if positions.len() != n {
        return Err(Error::MalformedFile(format!(
            "header says {n} atoms but file has {}",
            positions.len()
        )));
    }
    let config = Configuration::new(positions, species, box_)
        .map_err(|e| Error::MalformedFile(e.to_string()))?;
    Ok((config, system))
}

/// Split `key=value` pairs, honoring double quotes around values.
fn parse_metadata(line: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    let mut rest = line.trim();
    while !rest.is_empty() {
        let eq = rest
            .find('=')
            .ok_or_else(|| Error::MalformedFile(format!("bad metadata near `{rest}`")))?;
        let key = rest[..eq].trim().to_string();
        rest = &rest[eq + 1..];
        let value;
        if let Some(stripped) = rest.strip_prefix('"') {
            let close = stripped
                .find('"')
                .ok_or_else(|| Error::MalformedFile("unterminated quote in metadata".into()))?;
            value = stripped[..close].to_string();
            rest = stripped[close + 1..].trim_start();
        } else {
            let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
            value = rest[..end].to_string();
            rest = rest[end..].trim_start();
        }
        pairs.push((key, value));
    }
    Ok(pairs)
}
