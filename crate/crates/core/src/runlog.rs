//! JSONL run logs: a header line followed by one line per iteration (and one
//! per injection event). Vectors are stored at 32-bit precision; utilities
//! and weights keep full precision.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::SwarmConfig;
use crate::engine::{RecordSink, RunRecord, SwarmState};
use crate::error::{Result, SwarmError};
use crate::modularity::{apply_injection, InjectionEvent};

pub(crate) mod f32_vec {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::vector::ParamVector;

    pub fn serialize<S: Serializer>(v: &ParamVector, s: S) -> Result<S::Ok, S::Error> {
        let narrow: Vec<f32> = v.iter().map(|&x| x as f32).collect();
        narrow.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ParamVector, D::Error> {
        let narrow = Vec::<f32>::deserialize(d)?;
        ParamVector::new(narrow.into_iter().map(f64::from).collect()).map_err(serde::de::Error::custom)
    }
}

pub(crate) mod opt_f32_vec {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::vector::ParamVector;

    pub fn serialize<S: Serializer>(v: &Option<ParamVector>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref()
            .map(|v| v.iter().map(|&x| x as f32).collect::<Vec<f32>>())
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<ParamVector>, D::Error> {
        Option::<Vec<f32>>::deserialize(d)?
            .map(|narrow| ParamVector::new(narrow.into_iter().map(f64::from).collect()))
            .transpose()
            .map_err(serde::de::Error::custom)
    }
}

pub const LOG_FORMAT: &str = "model-swarms-log";
pub const LOG_VERSION: u32 = 1;

/// First line of every log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    /// Whether the seed was drawn from entropy rather than configured.
    #[serde(default)]
    pub seed_from_entropy: bool,
    pub config: SwarmConfig,
    pub dim: usize,
    pub experts: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Free-form description of the utility, enough for a later resume.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility: Option<serde_json::Value>,
}

impl RunHeader {
    pub fn new(config: &SwarmConfig, dim: usize, experts: usize) -> Self {
        Self {
            format: LOG_FORMAT.to_string(),
            version: LOG_VERSION,
            seed: config.seed,
            seed_from_entropy: false,
            config: config.clone(),
            dim,
            experts,
            label: None,
            utility: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LogLine {
    Header(RunHeader),
    Iteration(RunRecord),
    Injection(InjectionEvent),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub header: RunHeader,
    pub records: Vec<RunRecord>,
    /// Each event with the number of iteration records written before it.
    pub injections: Vec<(usize, InjectionEvent)>,
}

impl RunLog {
    /// The swarm as of the end of the log: the last iteration's state plus
    /// any experts injected after it. Vectors carry the log's 32-bit precision.
    pub fn final_state(&self) -> Result<SwarmState> {
        let last = self
            .records
            .last()
            .ok_or_else(|| SwarmError::Parse("log has no iteration records".into()))?;
        let mut state = last.to_state();
        for (_, event) in self.injections.iter().filter(|(at, _)| *at == self.records.len()) {
            state = apply_injection(&state, event)?;
        }
        Ok(state)
    }

    /// Injections performed before the current end of the log.
    pub fn injection_count(&self) -> usize {
        self.injections.len()
    }
}

/// Streams a log to a file, one JSON object per line.
pub struct JsonlSink {
    path: PathBuf,
    out: BufWriter<File>,
}

impl JsonlSink {
    /// Open an existing log for appending further lines.
    pub fn append(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = std::fs::OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(|e| SwarmError::io(&path, e))?;
        Ok(Self {
            path,
            out: BufWriter::new(file),
        })
    }

    pub fn create(path: impl AsRef<Path>, header: &RunHeader) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|e| SwarmError::io(&path, e))?;
        let mut sink = Self {
            path,
            out: BufWriter::new(file),
        };
        sink.write_line(&LogLine::Header(header.clone()))?;
        Ok(sink)
    }

    pub fn write_line(&mut self, line: &LogLine) -> Result<()> {
        let text = serde_json::to_string(line)?;
        writeln!(self.out, "{text}").map_err(|e| SwarmError::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| SwarmError::io(&self.path, e))
    }
}

impl RecordSink for JsonlSink {
    fn record(&mut self, record: &RunRecord) -> Result<()> {
        self.write_line(&LogLine::Iteration(record.clone()))
    }
}

/// Serialize a whole log to a string (same bytes [`JsonlSink`] would write).
pub fn to_jsonl(header: &RunHeader, records: &[RunRecord]) -> Result<String> {
    let mut out = serde_json::to_string(&LogLine::Header(header.clone()))?;
    out.push('\n');
    for r in records {
        out.push_str(&serde_json::to_string(&LogLine::Iteration(r.clone()))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_log(text: &str) -> Result<RunLog> {
    let mut header = None;
    let mut records = Vec::new();
    let mut injections = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let parsed: LogLine = serde_json::from_str(line)
            .map_err(|e| SwarmError::Parse(format!("log line {}: {e}", n + 1)))?;
        match parsed {
            LogLine::Header(h) if header.is_none() => header = Some(h),
            LogLine::Header(_) => return Err(SwarmError::Parse(format!("log line {}: second header", n + 1))),
            LogLine::Iteration(r) => records.push(r),
            LogLine::Injection(e) => injections.push((records.len(), e)),
        }
    }
    let header = header.ok_or_else(|| SwarmError::Parse("log has no header line".into()))?;
    if header.format != LOG_FORMAT || header.version != LOG_VERSION {
        return Err(SwarmError::Parse(format!(
            "unsupported log format {} v{}",
            header.format, header.version
        )));
    }
    Ok(RunLog {
        header,
        records,
        injections,
    })
}

pub fn read_log(path: impl AsRef<Path>) -> Result<RunLog> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| SwarmError::io(path, e))?;
    let mut text = String::new();
    for line in BufReader::new(file).lines() {
        text.push_str(&line.map_err(|e| SwarmError::io(path, e))?);
        text.push('\n');
    }
    parse_log(&text)
}
