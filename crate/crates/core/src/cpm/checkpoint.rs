//! Line-delimited JSON chain checkpoints.
//!
//! The first line is a header; after it come `draw` records, one per
//! retained draw, and `state` records holding everything needed to resume.
//! Only the last `state` record matters when reading. Floats round-trip
//! exactly.
//!
//! ```text
//! {"record":"header","format":"soc-chain","version":1,"chain":0,"seed":..,"param_names":[..],"config":{..}}
//! {"record":"draw","iteration":120,"theta":[..],"log_likelihood":..,"log_prior":..,"increments":[..]}
//! {"record":"state","iteration":200,"theta":[..],"rng":{..},"stream":{..},..}
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::sampler::ChainState;
use super::{Draw, SamplerConfig};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT: &str = "soc-chain";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub chain: usize,
    pub seed: u64,
    pub param_names: Vec<String>,
    pub config: SamplerConfig,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Header(CheckpointHeader),
    Draw(Draw),
    State(Box<ChainState>),
}

pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub draws: Vec<Draw>,
    pub state: ChainState,
}

pub struct CheckpointWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl CheckpointWriter {
    pub fn create(path: &Path, chain: usize, seed: u64, param_names: &[String], config: &SamplerConfig) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = CheckpointWriter { path: path.to_path_buf(), out: BufWriter::new(file) };
        w.write(&Record::Header(CheckpointHeader {
            format: FORMAT.into(),
            version: CHECKPOINT_VERSION,
            chain,
            seed,
            param_names: param_names.to_vec(),
            config: config.clone(),
        }))?;
        Ok(w)
    }

    /// Rewrites `path` from a checkpoint read back from it, ready to
    /// continue the chain. Stale draws past the saved state are gone.
    pub fn resume(path: &Path, ck: &Checkpoint) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = CheckpointWriter { path: path.to_path_buf(), out: BufWriter::new(file) };
        w.write(&Record::Header(ck.header.clone()))?;
        for d in &ck.draws {
            w.write_draw(d)?;
        }
        w.write_state(&ck.state)?;
        Ok(w)
    }

    fn write(&mut self, rec: &Record) -> Result<()> {
        let line = serde_json::to_string(rec).map_err(|e| Error::data(format!("cannot encode checkpoint: {e}")))?;
        writeln!(self.out, "{line}").map_err(|e| Error::io(&self.path, e))
    }

    pub fn write_draw(&mut self, draw: &Draw) -> Result<()> {
        self.write(&Record::Draw(draw.clone()))
    }

    pub fn write_state(&mut self, state: &ChainState) -> Result<()> {
        self.write(&Record::State(Box::new(state.clone())))?;
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Reads a checkpoint. Returns `None` when the file holds no state record
/// yet. Draws recorded after the last state are dropped, since the resumed
/// chain will produce them again.
pub fn read_checkpoint(path: &Path) -> Result<Option<Checkpoint>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut header = None;
    let mut draws = Vec::new();
    let mut state: Option<ChainState> = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line)
            .map_err(|e| Error::data_at(i + 1, format!("bad checkpoint record in {}: {e}", path.display())))?;
        match rec {
            Record::Header(h) => {
                if h.format != FORMAT || h.version != CHECKPOINT_VERSION {
                    return Err(Error::data(format!(
                        "{} is format {} v{}, expected {FORMAT} v{CHECKPOINT_VERSION}",
                        path.display(),
                        h.format,
                        h.version
                    )));
                }
                header = Some(h);
            }
            Record::Draw(d) => draws.push(d),
            Record::State(s) => state = Some(*s),
        }
    }
    let header = header.ok_or_else(|| Error::data(format!("{} has no header", path.display())))?;
    let Some(state) = state else { return Ok(None) };
    draws.retain(|d| d.iteration < state.iteration);
    Ok(Some(Checkpoint { header, draws, state }))
}
