//! Artifact persistence: JSON with 17-significant-digit floats (exact f64
//! round trips and byte-identical rewrites), atomic file writes, CSV export,
//! and validated parse entry points for every on-disk format.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::estimators::TabulatedEstimator;
use crate::experiment::{Dataset, ExperimentDesign};
use crate::lfp::{DiscretePrior, LfpConfig, LfpResult};
use crate::qstate::BlochState;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("validation: {0}")]
    Validation(String),
}

/// serde_json formatter printing every float with 17 significant digits,
/// enough to round-trip any f64 exactly.
#[derive(Default)]
struct SigDigitFormatter;

impl serde_json::ser::Formatter for SigDigitFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serialize to the canonical JSON text.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String, IoError> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigDigitFormatter);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("serde_json emits utf-8"))
}

/// Write bytes to `path` atomically (temp file in the same directory, then
/// rename).
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let tmp = path.with_extension(match path.extension() {
        Some(e) => format!("{}.tmp", e.to_string_lossy()),
        None => "tmp".to_string(),
    });
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = to_json_string(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let bytes = fs::read(path)?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Extended-real fields in JSON: finite values are numbers, infinities are
/// the strings "infinity" / "-infinity" (plain JSON has no Inf literal).
pub mod ext_real {
    use super::*;

    pub fn serialize<S: Serializer>(value: &f64, serializer: S) -> Result<S::Ok, S::Error> {
        if value.is_finite() {
            serializer.serialize_f64(*value)
        } else if *value > 0.0 {
            serializer.serialize_str("infinity")
        } else {
            serializer.serialize_str("-infinity")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(s) => match s.as_str() {
                "infinity" => Ok(f64::INFINITY),
                "-infinity" => Ok(f64::NEG_INFINITY),
                other => Err(D::Error::custom(format!("not an extended real: {other}"))),
            },
        }
    }
}

// ---------------------------------------------------------------------------
// Estimator table format.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct TableRepr {
    design: ExperimentDesign,
    provenance: String,
    allow_unphysical: bool,
    entries: Vec<Vec<f64>>,
}

impl Serialize for TabulatedEstimator {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let dim = self.design().kind().dim();
        TableRepr {
            design: self.design().clone(),
            provenance: self.provenance().to_string(),
            allow_unphysical: self.allow_unphysical(),
            entries: self
                .raw_entries()
                .iter()
                .map(|r| r[..dim].to_vec())
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TabulatedEstimator {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = TableRepr::deserialize(deserializer)?;
        let dim = repr.design.kind().dim();
        let mut entries = Vec::with_capacity(repr.entries.len());
        for (i, e) in repr.entries.iter().enumerate() {
            if e.len() != dim {
                return Err(D::Error::custom(format!(
                    "entry {i} has {} components, expected {dim}",
                    e.len()
                )));
            }
            if !e.iter().all(|x| x.is_finite()) {
                return Err(D::Error::custom(format!("entry {i} is not finite")));
            }
            let mut r = [0.0f64; 3];
            r[..dim].copy_from_slice(e);
            entries.push(r);
        }
        TabulatedEstimator::from_raw_entries(
            repr.design,
            entries,
            repr.allow_unphysical,
            repr.provenance,
        )
        .map_err(D::Error::custom)
    }
}

/// CSV export of a table: dataset counts then Bloch components per row.
pub fn estimator_to_csv(estimator: &TabulatedEstimator) -> String {
    let design = estimator.design();
    let dim = design.kind().dim();
    let mut out = String::new();
    for b in 0..design.num_bases() {
        out.push_str(&format!("n_{b},"));
    }
    out.push_str(match dim {
        2 => "r_x,r_y\n",
        _ => "r_x,r_y,r_z\n",
    });
    for idx in 0..estimator.len() {
        let ds = design.dataset_at(idx);
        for &n in &ds.counts {
            out.push_str(&format!("{n},"));
        }
        let r = estimator.entry(idx).bloch();
        let fields: Vec<String> = (0..dim).map(|i| format!("{:.16e}", r[i])).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// LFP result format.
// ---------------------------------------------------------------------------

/// Estimator payload of a stored LFP result: inline table or a sibling file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EstimatorRef {
    Path { path: String },
    Inline(Box<TabulatedEstimator>),
}

/// On-disk form of an LFP run: prior, certificate, config (with seed), and
/// the estimator (embedded or referenced).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LfpResultFile {
    pub algorithm: String,
    pub converged: bool,
    pub av_risk: f64,
    pub max_risk: f64,
    pub gap: f64,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub config: LfpConfig,
    pub prior: DiscretePrior,
    pub estimator: EstimatorRef,
}

impl LfpResultFile {
    pub fn new(result: &LfpResult, config: &LfpConfig, estimator: EstimatorRef) -> Self {
        Self {
            algorithm: result.algorithm.clone(),
            converged: result.converged,
            av_risk: result.av_risk,
            max_risk: result.max_risk,
            gap: result.gap,
            iterations: result.iterations,
            wall_time_s: result.wall_time_s,
            config: config.clone(),
            prior: result.prior.clone(),
            estimator,
        }
    }

    pub fn validate(&self) -> Result<(), IoError> {
        if self.av_risk > self.max_risk + 1e-9 {
            return Err(IoError::Validation(format!(
                "certificate inverted: av_risk {} > max_risk {}",
                self.av_risk, self.max_risk
            )));
        }
        if let EstimatorRef::Inline(table) = &self.estimator {
            if table.design().kind() != self.prior.kind() {
                return Err(IoError::Validation(
                    "estimator kind does not match prior kind".to_string(),
                ));
            }
        }
        Ok(())
    }

    /// Load the estimator table, resolving a path reference relative to
    /// `base_dir`.
    pub fn load_estimator(&self, base_dir: &Path) -> Result<TabulatedEstimator, IoError> {
        match &self.estimator {
            EstimatorRef::Inline(t) => Ok((**t).clone()),
            EstimatorRef::Path { path } => {
                let p = base_dir.join(path);
                let bytes = fs::read(&p)?;
                parse_estimator_table(&bytes)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Validated parse entry points (also the fuzzing surface).
// ---------------------------------------------------------------------------

/// Parse a Bloch state from JSON bytes, enforcing physicality.
pub fn parse_state(bytes: &[u8]) -> Result<BlochState, IoError> {
    Ok(serde_json::from_slice(bytes)?)
}

/// Parse a measurement design, enforcing unit axes, positive shot counts,
/// and the dataset-count cap.
pub fn parse_design(bytes: &[u8]) -> Result<ExperimentDesign, IoError> {
    Ok(serde_json::from_slice(bytes)?)
}

/// Parse a dataset (bare integer array). Range/shape checks need a design:
/// see [`validate_dataset`].
pub fn parse_dataset(bytes: &[u8]) -> Result<Dataset, IoError> {
    Ok(serde_json::from_slice(bytes)?)
}

pub fn validate_dataset(design: &ExperimentDesign, dataset: &Dataset) -> Result<(), IoError> {
    design
        .check_dataset(dataset)
        .map_err(|e| IoError::Validation(e.to_string()))
}

/// Parse an estimator table, enforcing the design contract, entry shape,
/// finiteness, and physicality (unless flagged).
pub fn parse_estimator_table(bytes: &[u8]) -> Result<TabulatedEstimator, IoError> {
    Ok(serde_json::from_slice(bytes)?)
}

/// Parse a stored LFP result and check its internal consistency.
pub fn parse_lfp_result(bytes: &[u8]) -> Result<LfpResultFile, IoError> {
    let result: LfpResultFile = serde_json::from_slice(bytes)?;
    result.validate()?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::Kind;

    #[test]
    fn json_floats_round_trip_exactly() {
        let state = BlochState::rebit(0.1 + 0.2, -1.0 / 3.0).unwrap();
        let text = to_json_string(&state).unwrap();
        let back: BlochState = serde_json::from_str(&text).unwrap();
        assert_eq!(state, back);
        // Rewriting parsed artifacts is byte-identical.
        let again = to_json_string(&back).unwrap();
        assert_eq!(text, again);
        assert!(text.contains('e'), "floats use scientific notation: {text}");
    }

    #[test]
    fn estimator_table_round_trip() {
        let design = ExperimentDesign::rebit_default(2);
        let table = TabulatedEstimator::hml(&design, 0.04).unwrap();
        let text = to_json_string(&table).unwrap();
        let back = parse_estimator_table(text.as_bytes()).unwrap();
        assert_eq!(table, back);

        // Unphysical entries require the flag.
        let li = TabulatedEstimator::linear_inversion(&design).unwrap();
        let mut value: serde_json::Value =
            serde_json::from_str(&to_json_string(&li).unwrap()).unwrap();
        value["allow_unphysical"] = serde_json::Value::Bool(false);
        let text = serde_json::to_string(&value).unwrap();
        assert!(parse_estimator_table(text.as_bytes()).is_err());
    }

    #[test]
    fn malformed_inputs_are_rejected_not_panics() {
        for bytes in [
            &b"{"[..],
            &b"[1,2,3"[..],
            &b"{\"kind\":\"rebit\",\"r\":[2.0,0.0]}"[..],
            &b"{\"kind\":\"qubit\",\"r\":[0.1]}"[..],
            &b"{\"kind\":\"rebit\",\"M\":0,\"axes\":[[1.0,0.0]]}"[..],
            &b"{\"kind\":\"rebit\",\"M\":4096,\"axes\":[[1.0,0.0],[0.0,1.0],[0.7,0.714]]}"[..],
            &b"null"[..],
        ] {
            assert!(parse_state(bytes).is_err() || parse_design(bytes).is_err());
            let _ = parse_design(bytes);
            let _ = parse_estimator_table(bytes);
            let _ = parse_lfp_result(bytes);
        }
    }

    #[test]
    fn dataset_validation() {
        let design = ExperimentDesign::rebit_default(4);
        let ds = parse_dataset(b"[4, 0]").unwrap();
        assert!(validate_dataset(&design, &ds).is_ok());
        let bad = parse_dataset(b"[5, 0]").unwrap();
        assert!(validate_dataset(&design, &bad).is_err());
        let shape = parse_dataset(b"[1, 2, 3]").unwrap();
        assert!(validate_dataset(&design, &shape).is_err());
    }

    #[test]
    fn atomic_write_and_read_back() {
        let dir = std::env::temp_dir().join("tomomax_io_test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("state.json");
        let state = BlochState::qubit(0.1, 0.2, -0.3).unwrap();
        write_json_atomic(&path, &state).unwrap();
        let back: BlochState = read_json(&path).unwrap();
        assert_eq!(state, back);
        assert_eq!(back.kind(), Kind::Qubit);
        fs::remove_file(&path).unwrap();
    }

    #[test]
    fn csv_export_shape() {
        let design = ExperimentDesign::rebit_default(1);
        let table = TabulatedEstimator::linear_inversion(&design).unwrap();
        let csv = estimator_to_csv(&table);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], "n_0,n_1,r_x,r_y");
        assert!(lines[1].starts_with("0,0,"));
    }

    #[test]
    fn ext_real_round_trip() {
        #[derive(Serialize, Deserialize)]
        struct Wrapper {
            #[serde(with = "ext_real")]
            v: f64,
        }
        for v in [1.5, 0.0, f64::INFINITY, f64::NEG_INFINITY] {
            let text = to_json_string(&Wrapper { v }).unwrap();
            let back: Wrapper = serde_json::from_str(&text).unwrap();
            assert_eq!(back.v.is_finite(), v.is_finite());
            if v.is_finite() {
                assert_eq!(back.v, v);
            } else {
                assert_eq!(back.v, v);
            }
        }
    }
}
