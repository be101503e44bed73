//! Scenario runner and rejection tables.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::basis::SimBasis;
use super::sampler::{sample_scores, synthesize_surfaces, Distribution};
use super::sigma::{assemble_sigma, OffDiagonal};
use super::vmatrix::{build_v, Variant};
use crate::bootstrap::BootstrapConfig;
use crate::datagrid::MultiwayDataset;
use crate::error::{Error, Result};
use crate::weaksep_test::{run_test, Method, PkRule, TestOptions};

/// Name recorded in table metadata for the trial generator.
pub const GENERATOR: &str = "ChaCha8";
pub const DEFAULT_SEED: u64 = 20_190_101;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestMethod {
    Chi2,
    Bootstrap,
}

/// `(P_n, K_n)` rule of one table column: `"FVE"` or `[P, K]` in JSON.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PkRepr", into = "PkRepr")]
pub enum PkChoice {
    Fve,
    Fixed(usize, usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PkRepr {
    Name(String),
    Pair([usize; 2]),
}

impl TryFrom<PkRepr> for PkChoice {
    type Error = String;

    fn try_from(r: PkRepr) -> std::result::Result<Self, String> {
        match r {
            PkRepr::Name(s) if s.eq_ignore_ascii_case("fve") => Ok(PkChoice::Fve),
            PkRepr::Name(s) => Err(format!("unknown (P, K) rule {s:?}")),
            PkRepr::Pair([p, k]) if p * k >= 2 => Ok(PkChoice::Fixed(p, k)),
            PkRepr::Pair([p, k]) => Err(format!("(P, K) = ({p}, {k}) leaves nothing to test")),
        }
    }
}

impl From<PkChoice> for PkRepr {
    fn from(c: PkChoice) -> Self {
        match c {
            PkChoice::Fve => PkRepr::Name("FVE".into()),
            PkChoice::Fixed(p, k) => PkRepr::Pair([p, k]),
        }
    }
}

impl PkChoice {
    pub fn label(&self) -> String {
        match self {
            PkChoice::Fve => "FVE".into(),
            PkChoice::Fixed(p, k) => format!("{p}x{k}"),
        }
    }

    pub fn rule(&self) -> PkRule {
        match *self {
            PkChoice::Fve => PkRule::Fve,
            PkChoice::Fixed(p, k) => PkRule::Fixed(p, k),
        }
    }

    fn parse_label(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("fve") {
            return Ok(PkChoice::Fve);
        }
        let bad = || Error::InvalidInput(format!("bad column label {s:?}"));
        let (p, k) = s.split_once('x').ok_or_else(bad)?;
        Ok(PkChoice::Fixed(p.parse().map_err(|_| bad())?, k.parse().map_err(|_| bad())?))
    }
}

/// The four standard columns.
pub fn standard_pk_rules() -> Vec<PkChoice> {
    vec![
        PkChoice::Fve,
        PkChoice::Fixed(2, 2),
        PkChoice::Fixed(3, 3),
        PkChoice::Fixed(4, 4),
    ]
}

/// Data-generating part of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub variant: Variant,
    pub distribution: Distribution,
    pub n: usize,
    pub off_diagonal: OffDiagonal,
}

fn default_reps() -> usize {
    1000
}

fn default_alpha() -> f64 {
    0.05
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_method() -> TestMethod {
    TestMethod::Chi2
}

/// One table cell: a data-generating row under a single `(P, K)` rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationScenario {
    #[serde(flatten)]
    pub row: ScenarioRow,
    pub pk: PkChoice,
    pub trials: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_method")]
    pub method: TestMethod,
    #[serde(default = "default_reps")]
    pub bootstrap_reps: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

/// A full table: rows times `(P, K)` columns sharing trials, seed and test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySpec {
    pub rows: Vec<ScenarioRow>,
    #[serde(default = "standard_pk_rules")]
    pub pk_rules: Vec<PkChoice>,
    pub trials: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_method")]
    pub method: TestMethod,
    #[serde(default = "default_reps")]
    pub bootstrap_reps: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

impl StudySpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: StudySpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() || self.pk_rules.is_empty() {
            return Err(Error::InvalidInput("a study needs at least one row and one (P, K) rule".into()));
        }
        for row in &self.rows {
            validate_common(row.n, self.trials, self.method, self.bootstrap_reps, self.alpha)?;
        }
        Ok(())
    }
}

fn validate_common(n: usize, trials: usize, method: TestMethod, reps: usize, alpha: f64) -> Result<()> {
    if n < 3 {
        return Err(Error::InvalidInput(format!("n must be at least 3, got {n}")));
    }
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be at least 1".into()));
    }
    if method == TestMethod::Bootstrap && reps == 0 {
        return Err(Error::InvalidInput("bootstrap_reps must be at least 1".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Rejection count of one cell, or the error that aborted it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub rejections: usize,
    pub trials: usize,
    pub error: Option<String>,
}

impl CellResult {
    pub fn rate(&self) -> Option<f64> {
        if self.error.is_some() || self.trials == 0 {
            None
        } else {
            Some(self.rejections as f64 / self.trials as f64)
        }
    }
}

/// Shared settings of every cell in a row.
#[derive(Debug, Clone, Copy)]
pub struct RunSettings {
    pub trials: usize,
    pub seed: u64,
    pub method: TestMethod,
    pub bootstrap_reps: usize,
    pub alpha: f64,
}

/// RNG of one trial: stream `trial` of the seeded generator.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Simulated sample of one trial and the seed handed to its bootstrap.
pub fn trial_data(row: &ScenarioRow, basis: &SimBasis, sigma: &nalgebra::DMatrix<f64>, seed: u64, trial: usize) -> Result<(MultiwayDataset, u64)> {
    let mut rng = trial_rng(seed, trial);
    let scores = sample_scores(sigma, row.distribution, row.n, &mut rng)?;
    let data = synthesize_surfaces(&scores, basis)?;
    Ok((data, rng.random()))
}

/// Run every `(P, K)` column of one row. Each trial's sample is shared by
/// all columns; trials run in parallel and are reduced in index order.
pub fn run_row(row: &ScenarioRow, pk_rules: &[PkChoice], settings: &RunSettings) -> Result<Vec<CellResult>> {
    validate_common(row.n, settings.trials, settings.method, settings.bootstrap_reps, settings.alpha)?;
    let basis = SimBasis::new()?;
    let v = build_v(row.variant)?;
    let sigma = assemble_sigma(&v, &row.off_diagonal)?;
    let outcomes: Vec<Vec<std::result::Result<bool, String>>> = (0..settings.trials)
        .into_par_iter()
        .map(|trial| match trial_data(row, &basis, &sigma, settings.seed, trial) {
            Err(e) => vec![Err(format!("trial {trial}: {e}")); pk_rules.len()],
            Ok((data, boot_seed)) => pk_rules
                .iter()
                .map(|pk| {
                    let method = match settings.method {
                        TestMethod::Chi2 => Method::Chi2,
                        TestMethod::Bootstrap => Method::Bootstrap(BootstrapConfig {
                            replicates: settings.bootstrap_reps,
                            seed: boot_seed,
                        }),
                    };
                    let opts = TestOptions {
                        method,
                        pk: pk.rule(),
                        ..Default::default()
                    };
                    run_test(&data, &opts)
                        .map(|r| r.p_value < settings.alpha)
                        .map_err(|e| format!("trial {trial}: {e}"))
                })
                .collect(),
        })
        .collect();
    let cells = (0..pk_rules.len())
        .map(|c| {
            let mut cell = CellResult {
                rejections: 0,
                trials: settings.trials,
                error: None,
            };
            for trial in &outcomes {
                match &trial[c] {
                    Ok(true) => cell.rejections += 1,
                    Ok(false) => {}
                    Err(e) => {
                        cell.error = Some(e.clone());
                        break;
                    }
                }
            }
            cell
        })
        .collect();
    Ok(cells)
}

/// Rejection rate of a single cell.
pub fn run_scenario(scenario: &SimulationScenario) -> Result<CellResult> {
    let settings = RunSettings {
        trials: scenario.trials,
        seed: scenario.seed,
        method: scenario.method,
        bootstrap_reps: scenario.bootstrap_reps,
        alpha: scenario.alpha,
    };
    let mut cells = run_row(&scenario.row, &[scenario.pk], &settings)?;
    Ok(cells.remove(0))
}

/// Every row of a study. Rows share the seed, so rows with equal `n`
/// use common random numbers.
pub fn run_study(spec: &StudySpec) -> Result<RejectionTable> {
    spec.validate()?;
    let settings = RunSettings {
        trials: spec.trials,
        seed: spec.seed,
        method: spec.method,
        bootstrap_reps: spec.bootstrap_reps,
        alpha: spec.alpha,
    };
    let mut rows = Vec::with_capacity(spec.rows.len());
    for row in &spec.rows {
        let cells = run_row(row, &spec.pk_rules, &settings)?;
        rows.push(TableRow {
            variant: row.variant.to_string(),
            distribution: row.distribution.to_string(),
            n: row.n,
            off_diagonal: row.off_diagonal.label(),
            trials: spec.trials,
            rates: cells.iter().map(CellResult::rate).collect(),
            errors: cells.into_iter().map(|c| c.error).collect(),
        });
    }
    Ok(RejectionTable {
        generator: GENERATOR.into(),
        seed: spec.seed,
        columns: spec.pk_rules.iter().map(PkChoice::label).collect(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub variant: String,
    pub distribution: String,
    pub n: usize,
    pub off_diagonal: String,
    pub trials: usize,
    /// One rate per column; `None` where the cell failed.
    pub rates: Vec<Option<f64>>,
    /// Failure messages; not written to CSV.
    pub errors: Vec<Option<String>>,
}

/// Rows are scenarios, columns are `(P, K)` rules.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectionTable {
    pub generator: String,
    pub seed: u64,
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

const FIXED_COLUMNS: [&str; 5] = ["variant", "distribution", "n", "off_diagonal", "trials"];

impl RejectionTable {
    /// CSV with a leading `# generator=… seed=…` comment line. Failed
    /// cells are written as `NA`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# generator={} seed={}", self.generator, self.seed)?;
        let mut out = csv::Writer::from_writer(w);
        let header: Vec<&str> = FIXED_COLUMNS.iter().copied().chain(self.columns.iter().map(String::as_str)).collect();
        out.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.variant.clone(),
                r.distribution.clone(),
                r.n.to_string(),
                r.off_diagonal.clone(),
                r.trials.to_string(),
            ];
            rec.extend(r.rates.iter().map(|x| x.map_or_else(|| "NA".to_string(), |v| v.to_string())));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(mut r: R) -> Result<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        let mut generator = String::new();
        let mut seed = 0;
        for line in text.lines().filter(|l| l.starts_with('#')) {
            for field in line.trim_start_matches('#').split_whitespace() {
                match field.split_once('=') {
                    Some(("generator", g)) => generator = g.to_string(),
                    Some(("seed", s)) => {
                        seed = s.parse().map_err(|_| Error::parse("table metadata", format!("bad seed {s:?}")))?
                    }
                    _ => {}
                }
            }
        }
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let header = rdr.headers()?.clone();
        if header.len() < FIXED_COLUMNS.len() || header.iter().zip(FIXED_COLUMNS).any(|(a, b)| a != b) {
            return Err(Error::parse("line 1", "unexpected rejection-table header"));
        }
        let columns: Vec<String> = header.iter().skip(FIXED_COLUMNS.len()).map(String::from).collect();
        for c in &columns {
            PkChoice::parse_label(c)?;
        }
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let loc = format!("row {}", line + 1);
            let num = |i: usize| -> Result<usize> {
                rec[i].parse().map_err(|_| Error::parse(loc.clone(), format!("bad integer {:?}", &rec[i])))
            };
            let rates = (FIXED_COLUMNS.len()..rec.len())
                .map(|i| match &rec[i] {
                    "NA" => Ok(None),
                    s => s
                        .parse::<f64>()
                        .map(Some)
                        .map_err(|_| Error::parse(loc.clone(), format!("bad rate {s:?}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(TableRow {
                variant: rec[0].to_string(),
                distribution: rec[1].to_string(),
                n: num(2)?,
                off_diagonal: rec[3].to_string(),
                trials: num(4)?,
                errors: vec![None; rates.len()],
                rates,
            });
        }
        Ok(Self {
            generator,
            seed,
            columns,
            rows,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_json() {
        let text = r#"{"variant":"V2","distribution":"t6","n":50,"off_diagonal":{"single":0.055},"pk":[2,2],"trials":3}"#;
        let s: SimulationScenario = serde_json::from_str(text).unwrap();
        assert_eq!(s.pk, PkChoice::Fixed(2, 2));
        assert_eq!(s.row.off_diagonal, OffDiagonal::Single(0.055));
        assert_eq!(s.alpha, 0.05);
        assert_eq!(s.bootstrap_reps, 1000);
        let back: SimulationScenario = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<PkChoice>("[1,1]").is_err());
        assert_eq!(serde_json::from_str::<PkChoice>("\"FVE\"").unwrap(), PkChoice::Fve);
    }

    #[test]
    fn small_run_is_deterministic() {
        let spec = StudySpec {
            rows: vec![ScenarioRow {
                variant: Variant::V1,
                distribution: Distribution::Normal,
                n: 20,
                off_diagonal: OffDiagonal::H0,
            }],
            pk_rules: vec![PkChoice::Fve, PkChoice::Fixed(2, 2)],
            trials: 4,
            seed: 11,
            method: TestMethod::Chi2,
            bootstrap_reps: 10,
            alpha: 0.05,
        };
        let a = run_study(&spec).unwrap();
        let b = run_study(&spec).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# generator=ChaCha8 seed=11\nvariant,distribution,n,off_diagonal,trials,FVE,2x2\n"));
        let back = RejectionTable::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, a);
        for r in a.rows[0].rates.iter().flatten() {
            assert_eq!((r * 4.0).fract(), 0.0);
        }
    }

    #[test]
    fn failed_cell_is_na() {
        let table = RejectionTable {
            generator: GENERATOR.into(),
            seed: 1,
            columns: vec!["FVE".into()],
            rows: vec![TableRow {
                variant: "V1".into(),
                distribution: "normal".into(),
                n: 5,
                off_diagonal: "H0".into(),
                trials: 2,
                rates: vec![None],
                errors: vec![None],
            }],
        };
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().ends_with(",NA\n"));
        assert_eq!(RejectionTable::read_csv(&buf[..]).unwrap(), table);
    }

    #[test]
    fn invalid_scenarios() {
        let row = ScenarioRow {
            variant: Variant::V1,
            distribution: Distribution::Normal,
            n: 2,
            off_diagonal: OffDiagonal::H0,
        };
        let settings = RunSettings {
            trials: 1,
            seed: 0,
            method: TestMethod::Chi2,
            bootstrap_reps: 1,
            alpha: 0.05,
        };
        assert!(run_row(&row, &[PkChoice::Fve], &settings).is_err());
        let row = ScenarioRow { n: 10, off_diagonal: OffDiagonal::Single(5.0), ..row };
        assert!(matches!(run_row(&row, &[PkChoice::Fve], &settings), Err(Error::NotPositiveDefinite)));
    }
}
