//! Panel data model: per-agent time series of a low-dimensional state `x`,
//! a high-dimensional covariate vector `q`, and a discrete decision.
//!
//! Panels are immutable after construction and safe to share across threads.
//! The canonical file format is headered CSV with columns
//! `agent,period,x,d,q1,...,qD` (integer agent/period/x/d, real q's).

use std::collections::BTreeMap;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One row of panel data.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub agent_id: u64,
    /// 1-based period index; consecutive within each agent.
    pub period: u32,
    /// Low-dimensional observed state (e.g. a mileage bucket).
    pub x: i64,
    /// High-dimensional covariates, length `n_dims` for every row of a panel.
    pub q: Vec<f64>,
    /// Choice index in `0..n_choices`.
    pub decision: u16,
}

/// Panel-level metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PanelMeta {
    /// Dimension of the covariate vector `q`.
    pub n_dims: usize,
    /// Number of choice alternatives.
    pub n_choices: u16,
    /// Declared inclusive range of the low-dimensional state.
    pub x_min: i64,
    pub x_max: i64,
}

impl PanelMeta {
    /// Size of the declared X-range, `x_max - x_min + 1`.
    pub fn x_span(&self) -> usize {
        (self.x_max - self.x_min + 1) as usize
    }
}

#[derive(Debug, Clone)]
struct AgentBlock {
    agent_id: u64,
    first_period: u32,
    /// Row range into the columnar arrays.
    start: usize,
    end: usize,
}

/// Immutable panel: observations grouped by agent and sorted by period.
///
/// Storage is columnar; `q` is row-major with stride `n_dims`.
#[derive(Debug, Clone)]
pub struct Panel {
    meta: PanelMeta,
    agents: Vec<AgentBlock>,
    x: Vec<i64>,
    decision: Vec<u16>,
    q: Vec<f64>,
}

impl Panel {
    /// Builds a panel from unordered observations, inferring `n_choices` and the
    /// X-range from the data.
    pub fn from_observations(observations: Vec<Observation>) -> Result<Self> {
        Self::build(observations, None)
    }

    /// Builds a panel with a declared choice count and X-range. Observations
    /// outside the declared domain are rejected.
    pub fn from_observations_with_meta(
        observations: Vec<Observation>,
        meta: PanelMeta,
    ) -> Result<Self> {
        Self::build(observations, Some(meta))
    }

    fn build(mut observations: Vec<Observation>, declared: Option<PanelMeta>) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::Validation("panel has no observations".into()));
        }
        observations.sort_by(|a, b| (a.agent_id, a.period).cmp(&(b.agent_id, b.period)));

        let n_dims = observations[0].q.len();
        let meta = match declared {
            Some(m) => {
                if m.n_dims != n_dims {
                    return Err(Error::DimensionMismatch {
                        expected: m.n_dims,
                        got: n_dims,
                    });
                }
                m
            }
            None => PanelMeta {
                n_dims,
                n_choices: observations.iter().map(|o| o.decision).max().unwrap() + 1,
                x_min: observations.iter().map(|o| o.x).min().unwrap(),
                x_max: observations.iter().map(|o| o.x).max().unwrap(),
            },
        };

        let n = observations.len();
        let mut x = Vec::with_capacity(n);
        let mut decision = Vec::with_capacity(n);
        let mut q = Vec::with_capacity(n * n_dims);
        let mut agents: Vec<AgentBlock> = Vec::new();

        for (row, obs) in observations.into_iter().enumerate() {
            if obs.q.len() != n_dims {
                return Err(Error::DimensionMismatch {
                    expected: n_dims,
                    got: obs.q.len(),
                });
            }
            if obs.q.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "agent {} period {}: non-finite covariate value",
                    obs.agent_id, obs.period
                )));
            }
            if obs.decision >= meta.n_choices {
                return Err(Error::Validation(format!(
                    "agent {} period {}: decision {} outside 0..{}",
                    obs.agent_id, obs.period, obs.decision, meta.n_choices
                )));
            }
            if obs.x < meta.x_min || obs.x > meta.x_max {
                return Err(Error::Validation(format!(
                    "agent {} period {}: x={} outside declared range {}..={}",
                    obs.agent_id, obs.period, obs.x, meta.x_min, meta.x_max
                )));
            }
            match agents.last_mut() {
                Some(block) if block.agent_id == obs.agent_id => {
                    let expected = block.first_period + (block.end - block.start) as u32;
                    if obs.period == expected.wrapping_sub(1) {
                        return Err(Error::Validation(format!(
                            "agent {}: duplicate period {}",
                            obs.agent_id, obs.period
                        )));
                    }
                    if obs.period != expected {
                        return Err(Error::Validation(format!(
                            "agent {}: periods are not consecutive (expected {}, found {})",
                            obs.agent_id, expected, obs.period
                        )));
                    }
                    block.end = row + 1;
                }
                _ => agents.push(AgentBlock {
                    agent_id: obs.agent_id,
                    first_period: obs.period,
                    start: row,
                    end: row + 1,
                }),
            }
            x.push(obs.x);
            decision.push(obs.decision);
            q.extend_from_slice(&obs.q);
        }

        Ok(Panel {
            meta,
            agents,
            x,
            decision,
            q,
        })
    }

    pub fn meta(&self) -> PanelMeta {
        self.meta
    }

    pub fn n_obs(&self) -> usize {
        self.x.len()
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn n_dims(&self) -> usize {
        self.meta.n_dims
    }

    pub fn n_choices(&self) -> u16 {
        self.meta.n_choices
    }

    pub fn x(&self, row: usize) -> i64 {
        self.x[row]
    }

    pub fn decision(&self, row: usize) -> u16 {
        self.decision[row]
    }

    /// Covariate vector of one row.
    pub fn q_row(&self, row: usize) -> &[f64] {
        let d = self.meta.n_dims;
        &self.q[row * d..(row + 1) * d]
    }

    pub fn q_value(&self, row: usize, dim: usize) -> f64 {
        self.q[row * self.meta.n_dims + dim]
    }

    pub fn agent_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.agents.iter().map(|a| a.agent_id)
    }

    /// Row ranges per agent, in (agent, period) order.
    pub fn agent_ranges(&self) -> impl Iterator<Item = (u64, std::ops::Range<usize>)> + '_ {
        self.agents.iter().map(|a| (a.agent_id, a.start..a.end))
    }

    pub fn observation(&self, row: usize) -> Observation {
        let block = self
            .agents
            .iter()
            .find(|a| row >= a.start && row < a.end)
            .expect("row within panel");
        Observation {
            agent_id: block.agent_id,
            period: block.first_period + (row - block.start) as u32,
            x: self.x[row],
            q: self.q_row(row).to_vec(),
            decision: self.decision[row],
        }
    }

    /// Within-agent transitions as `(origin_row, destination_row)` pairs.
    pub fn transitions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.agents
            .iter()
            .flat_map(|a| (a.start..a.end.saturating_sub(1)).map(|r| (r, r + 1)))
    }

    pub fn n_transitions(&self) -> usize {
        self.agents.iter().map(|a| a.end - a.start - 1).sum()
    }

    /// New panel restricted to the given agent block indices (not agent ids).
    fn subset(&self, block_indices: &[usize]) -> Panel {
        let mut sorted = block_indices.to_vec();
        sorted.sort_unstable();
        let d = self.meta.n_dims;
        let mut agents = Vec::with_capacity(sorted.len());
        let mut x = Vec::new();
        let mut decision = Vec::new();
        let mut q = Vec::new();
        for &bi in &sorted {
            let b = &self.agents[bi];
            let start = x.len();
            x.extend_from_slice(&self.x[b.start..b.end]);
            decision.extend_from_slice(&self.decision[b.start..b.end]);
            q.extend_from_slice(&self.q[b.start * d..b.end * d]);
            agents.push(AgentBlock {
                agent_id: b.agent_id,
                first_period: b.first_period,
                start,
                end: x.len(),
            });
        }
        Panel {
            meta: self.meta,
            agents,
            x,
            decision,
            q,
        }
    }
}

/// Column mapping for panel files. Covariate columns are `{q_prefix}1..{q_prefix}D`.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub agent: String,
    pub period: String,
    pub x: String,
    pub decision: String,
    pub q_prefix: String,
    /// Optional declared metadata; inferred from the data when absent.
    pub declared: Option<DeclaredMeta>,
}

#[derive(Debug, Clone, Copy)]
pub struct DeclaredMeta {
    pub n_choices: u16,
    pub x_min: i64,
    pub x_max: i64,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            agent: "agent".into(),
            period: "period".into(),
            x: "x".into(),
            decision: "d".into(),
            q_prefix: "q".into(),
            declared: None,
        }
    }
}

/// Loads a panel from a delimited text file.
///
/// Rows are re-sorted into (agent, period) order; period gaps and duplicate
/// (agent, period) pairs are rejected.
pub fn load_panel(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Panel> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())
        .map_err(|e| Error::Schema(format!("cannot open panel file: {e}")))?;

    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("cannot read header: {e}")))?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    };
    let agent_col = col(&schema.agent)?;
    let period_col = col(&schema.period)?;
    let x_col = col(&schema.x)?;
    let d_col = col(&schema.decision)?;

    // Covariate columns must be exactly {prefix}1..{prefix}D.
    let mut q_cols: Vec<(usize, usize)> = Vec::new();
    for (idx, h) in headers.iter().enumerate() {
        if let Some(rest) = h.strip_prefix(schema.q_prefix.as_str()) {
            if !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()) {
                q_cols.push((rest.parse::<usize>().unwrap(), idx));
            }
        }
    }
    q_cols.sort_unstable();
    if q_cols.is_empty() {
        return Err(Error::Schema(format!(
            "no covariate columns with prefix `{}`",
            schema.q_prefix
        )));
    }
    for (i, (num, _)) in q_cols.iter().enumerate() {
        if *num != i + 1 {
            return Err(Error::Schema(format!(
                "covariate columns must be {p}1..{p}D without gaps; found `{p}{num}`",
                p = schema.q_prefix
            )));
        }
    }

    let mut observations = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2; // header is line 1
        let record = record.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let field = |c: usize| -> &str { record.get(c).unwrap_or("") };
        let parse_int = |c: usize, what: &str| -> Result<i64> {
            field(c).trim().parse::<i64>().map_err(|_| Error::Parse {
                line,
                message: format!("column `{what}`: `{}` is not an integer", field(c)),
            })
        };
        let q = q_cols
            .iter()
            .map(|&(_, c)| {
                field(c).trim().parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("covariate column: `{}` is not numeric", field(c)),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        observations.push(Observation {
            agent_id: parse_int(agent_col, &schema.agent)? as u64,
            period: parse_int(period_col, &schema.period)? as u32,
            x: parse_int(x_col, &schema.x)?,
            q,
            decision: parse_int(d_col, &schema.decision)? as u16,
        });
    }

    match schema.declared {
        Some(d) => Panel::from_observations_with_meta(
            observations,
            PanelMeta {
                n_dims: q_cols.len(),
                n_choices: d.n_choices,
                x_min: d.x_min,
                x_max: d.x_max,
            },
        ),
        None => Panel::from_observations(observations),
    }
}

/// Writes a panel in the canonical `agent,period,x,d,q1,...,qD` schema.
///
/// Float covariates are written in shortest round-trip form, so saving the
/// same panel twice produces byte-identical files.
pub fn save_panel(panel: &Panel, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    write!(w, "agent,period,x,d")?;
    for d in 1..=panel.n_dims() {
        write!(w, ",q{d}")?;
    }
    writeln!(w)?;
    for block in &panel.agents {
        for (offset, row) in (block.start..block.end).enumerate() {
            write!(
                w,
                "{},{},{},{}",
                block.agent_id,
                block.first_period + offset as u32,
                panel.x(row),
                panel.decision(row)
            )?;
            for v in panel.q_row(row) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Splits a panel into (train, validation) by assigning whole agents to one
/// side. Deterministic given the seed; the union of the two sides is the input.
pub fn split_train_validation(
    panel: &Panel,
    validation_fraction: f64,
    seed: u64,
) -> Result<(Panel, Panel)> {
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "validation_fraction must lie in (0,1), got {validation_fraction}"
        )));
    }
    let n = panel.n_agents();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "panel must contain at least 2 agents to split".into(),
        ));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let n_val = ((validation_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let (val_idx, train_idx) = indices.split_at(n_val);
    Ok((panel.subset(train_idx), panel.subset(val_idx)))
}

/// Groups rows by agent id; used by tests that need per-agent views.
pub fn rows_by_agent(panel: &Panel) -> BTreeMap<u64, Vec<usize>> {
    let mut map = BTreeMap::new();
    for (agent, range) in panel.agent_ranges() {
        map.insert(agent, range.collect());
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(agent: u64, period: u32, x: i64, q: Vec<f64>, d: u16) -> Observation {
        Observation {
            agent_id: agent,
            period,
            x,
            q,
            decision: d,
        }
    }

    fn small_panel() -> Panel {
        let mut rows = Vec::new();
        for agent in 1..=2u64 {
            for t in 1..=3u32 {
                rows.push(obs(
                    agent,
                    t,
                    t as i64,
                    vec![agent as f64, t as f64],
                    (t % 2) as u16,
                ));
            }
        }
        Panel::from_observations(rows).unwrap()
    }

    #[test]
    fn builds_and_sorts() {
        let panel = small_panel();
        assert_eq!(panel.n_obs(), 6);
        assert_eq!(panel.n_agents(), 2);
        assert_eq!(panel.n_dims(), 2);
        assert_eq!(panel.n_transitions(), 4);
    }

    #[test]
    fn rejects_period_gap() {
        let rows = vec![
            obs(7, 1, 1, vec![0.0], 0),
            obs(7, 3, 2, vec![0.0], 0),
            obs(8, 1, 1, vec![0.0], 0),
        ];
        let err = Panel::from_observations(rows).unwrap_err();
        assert!(err.to_string().contains("agent 7"), "{err}");
    }

    #[test]
    fn rejects_duplicate_period() {
        let rows = vec![obs(3, 1, 1, vec![0.0], 0), obs(3, 1, 2, vec![0.0], 0)];
        let err = Panel::from_observations(rows).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn csv_round_trip() {
        let panel = small_panel();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("panel.csv");
        save_panel(&panel, &path).unwrap();
        let loaded = load_panel(&path, &CsvSchema::default()).unwrap();
        assert_eq!(loaded.n_obs(), 6);
        assert_eq!(loaded.n_dims(), 2);
        for row in 0..panel.n_obs() {
            assert_eq!(panel.observation(row), loaded.observation(row));
        }
    }

    #[test]
    fn load_reports_missing_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "agent,period,x,q1\n1,1,1,0.5\n").unwrap();
        let err = load_panel(&path, &CsvSchema::default()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)), "{err}");
    }

    #[test]
    fn load_reports_bad_cell_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "agent,period,x,d,q1\n1,1,1,0,0.5\n1,2,oops,0,0.5\n").unwrap();
        let err = load_panel(&path, &CsvSchema::default()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn split_is_by_agent_and_deterministic() {
        let mut rows = Vec::new();
        for agent in 1..=10u64 {
            for t in 1..=2u32 {
                rows.push(obs(agent, t, 1, vec![0.0], 0));
            }
        }
        let panel = Panel::from_observations(rows).unwrap();
        let (train, val) = split_train_validation(&panel, 0.2, 1).unwrap();
        assert_eq!(train.n_agents(), 8);
        assert_eq!(val.n_agents(), 2);
        assert_eq!(train.n_obs() + val.n_obs(), panel.n_obs());

        let (train2, val2) = split_train_validation(&panel, 0.2, 1).unwrap();
        let ids = |p: &Panel| p.agent_ids().collect::<Vec<_>>();
        assert_eq!(ids(&train), ids(&train2));
        assert_eq!(ids(&val), ids(&val2));
    }

    #[test]
    fn split_varies_with_seed() {
        let mut rows = Vec::new();
        for agent in 1..=100u64 {
            for t in 1..=2u32 {
                rows.push(obs(agent, t, 1, vec![0.0], 0));
            }
        }
        let panel = Panel::from_observations(rows).unwrap();
        let (_, val_a) = split_train_validation(&panel, 0.25, 1).unwrap();
        let (_, val_b) = split_train_validation(&panel, 0.25, 2).unwrap();
        let a: Vec<_> = val_a.agent_ids().collect();
        let b: Vec<_> = val_b.agent_ids().collect();
        assert_ne!(a, b);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let panel = small_panel();
        assert!(split_train_validation(&panel, 0.0, 1).is_err());
        assert!(split_train_validation(&panel, 1.0, 1).is_err());
    }
}
